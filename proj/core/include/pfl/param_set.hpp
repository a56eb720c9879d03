#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pfl/tensor.hpp"

namespace pfl {

/// Which half of the model a parameter belongs to. Encoder parameters form
/// the shared representation, decoder parameters the per-client one.
enum class Partition : std::uint8_t { kEncoder = 0, kDecoder = 1 };

/// Training target: one partition or the whole model.
enum class PartitionSel { kEncoder, kDecoder, kAll };

std::string_view to_string(Partition p);
std::string_view to_string(PartitionSel p);
bool selects(PartitionSel sel, Partition p);

struct Param {
  Tensor value;
  Partition partition = Partition::kEncoder;
};

using GradMap = std::map<std::string, Tensor>;

/// Named, partition-tagged parameters. Iteration order is by name, which is
/// also the order used for serialization and aggregation.
class ParamSet {
 public:
  void add(const std::string& name, Tensor value, Partition partition);
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  const Param& at(const std::string& name) const;
  Param& at(const std::string& name);
  const Tensor& tensor(const std::string& name) const { return at(name).value; }

  std::size_t size() const { return params_.size(); }
  std::size_t count_values() const;
  std::size_t count_values(Partition p) const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  /// Parameters tagged with `p` only.
  ParamSet subset(Partition p) const;
  /// Replaces (or inserts) every parameter of `other`, keeping its tags.
  void overwrite(const ParamSet& other);

  /// Same names, tags, shapes and bit patterns.
  bool bit_equal(const ParamSet& other) const;
  bool same_layout(const ParamSet& other) const;

 private:
  std::map<std::string, Param> params_;
};

/// Concatenates a shared encoder subset and a per-client decoder subset.
/// Throws std::invalid_argument if a name appears in both or a tag is wrong.
ParamSet merge(const ParamSet& encoder, const ParamSet& decoder);

/// p <- p - lr * g for every parameter in `partition`; all other tensors are
/// copied unchanged. Missing gradients for a selected parameter are an error.
ParamSet sgd_step(const ParamSet& params, const GradMap& grads, double lr,
                  PartitionSel partition);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary checkpoint, little-endian:
//   "PFLL" | u32 version=1 | u32 count |
//   count x { u16 name_len | name | u8 tag | u8 rank | u32 dims[rank] | f64 data[] }
std::vector<std::uint8_t> encode_checkpoint(const ParamSet& params);
ParamSet decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace pfl
