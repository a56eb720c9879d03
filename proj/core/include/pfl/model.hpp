#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "pfl/autograd.hpp"
#include "pfl/memory.hpp"
#include "pfl/param_set.hpp"

namespace pfl {

enum class Intention : std::uint8_t {
  kLaneKeep = 0,
  kLeftLaneChange = 1,
  kRightLaneChange = 2,
};
inline constexpr std::size_t kNumClasses = 3;

std::string_view to_string(Intention i);

/// Architecture of the long short-term transformer.
struct ModelConfig {
  std::size_t feature_dim = 16;  // per camera block
  std::size_t blocks = kNumBlocks;
  std::size_t embed_dim = 32;
  std::size_t heads = 4;
  std::size_t latent_tokens = 8;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t ff_dim = 64;
  std::size_t classes = kNumClasses;
  std::size_t work_slots = 12;
  std::size_t long_slots = 48;

  std::size_t input_width() const { return blocks * feature_dim; }
  /// Throws ConfigError naming every violated constraint.
  void validate() const;

  /// Default architecture with slot counts taken from `memory`.
  static ModelConfig for_memory(const MemoryConfig& memory, std::size_t feature_dim = 16);
};

/// Encoder output plus the projected work-memory tokens. Both depend on the
/// encoder parameters only, so decoder-only training can reuse them.
struct EncodedContext {
  Tensor latents;      // latent_tokens x embed_dim
  Tensor work_tokens;  // valid work slots x embed_dim, newest first
  std::vector<std::size_t> work_slots;
};

struct Sample {
  MemorySnapshot memory;
  Intention label = Intention::kLaneKeep;
};

struct ContextSample {
  EncodedContext context;
  Intention label = Intention::kLaneKeep;
};

struct LossAndGrads {
  double loss = 0.0;
  GradMap grads;  // only parameters of the trained partition
};

/// Long short-term transformer.
///
/// The encoder (shared, encoder-tagged) projects long-memory frames,
/// cross-attends a fixed set of learned latent queries over them, and runs a
/// self-attention stack on the latents. The decoder (personal,
/// decoder-tagged) runs self-attention over work-memory tokens, cross-attends
/// them to the latents, and classifies from the newest work token. The frame
/// projection is part of the encoder and is applied to both memories.
class Lstr {
 public:
  explicit Lstr(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  /// Seeded Xavier-uniform init; layer norms start at gain 1, bias 0.
  ParamSet init(std::uint64_t seed) const;

  /// Latents (latent_tokens x embed_dim) for any long-memory occupancy.
  Tensor encode(const ParamSet& params, const MemoryView& long_view) const;
  /// Logits (1 x classes). Throws std::invalid_argument if no work slot is valid.
  Tensor decode(const ParamSet& params, const Tensor& latents,
                const MemoryView& work_view) const;
  Tensor forward(const ParamSet& params, const MemorySnapshot& memory) const;
  Tensor forward(const ParamSet& params, const MemoryState& memory) const;
  Intention predict(const ParamSet& params, const MemorySnapshot& memory) const;

  EncodedContext encode_context(const ParamSet& params, const MemorySnapshot& memory) const;

  /// Mean cross-entropy over `batch` and its gradient for `partition`.
  LossAndGrads loss_and_grads(const ParamSet& params, std::span<const Sample> batch,
                              PartitionSel partition) const;
  /// Decoder-partition loss on precomputed contexts. Identical bits to
  /// loss_and_grads(..., kDecoder) on the samples the contexts came from.
  LossAndGrads decoder_loss_and_grads(const ParamSet& params,
                                      std::span<const ContextSample> batch) const;

 private:
  ModelConfig config_;
};

/// Index of the largest logit, lowest index on ties.
Intention argmax(const Tensor& logits);

}  // namespace pfl
