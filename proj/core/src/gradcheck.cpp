#include "pfl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfl/rng.hpp"

namespace pfl {

namespace {

double batch_loss(const Lstr& model, const ParamSet& params, std::span<const Sample> batch) {
  double total = 0.0;
  for (const auto& s : batch) {
    total += cross_entropy(model.forward(params, s.memory), static_cast<std::size_t>(s.label));
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace

GradCheckResult check_gradients(const Lstr& model, const ParamSet& params,
                                std::span<const Sample> batch,
                                const GradCheckOptions& options) {
  const auto analytic = model.loss_and_grads(params, batch, PartitionSel::kAll).grads;

  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const auto& [name, p] : params)
    for (std::size_t i = 0; i < p.value.size(); ++i) coords.emplace_back(name, i);
  if (options.max_coords > 0 && options.max_coords < coords.size()) {
    Rng rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng.engine());
    coords.resize(options.max_coords);
  }

  GradCheckResult result;
  ParamSet probe = params;
  for (const auto& [name, index] : coords) {
    double& slot = probe.at(name).value[index];
    const double original = slot;
    slot = original + options.step;
    const double up = batch_loss(model, probe, batch);
    slot = original - options.step;
    const double down = batch_loss(model, probe, batch);
    slot = original;

    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic.at(name)[index];
    if (std::abs(a) <= options.grad_floor) {
      ++result.skipped;
      continue;
    }
    ++result.checked;
    const double rel = std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_param = name;
      result.worst_index = index;
    }
  }
  return result;
}

ModelConfig toy_model_config() {
  ModelConfig c;
  c.feature_dim = 2;
  c.embed_dim = 8;
  c.heads = 2;
  c.latent_tokens = 2;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.ff_dim = 8;
  c.work_slots = 3;
  c.long_slots = 4;
  return c;
}

std::vector<Sample> random_samples(const ModelConfig& config, std::size_t count,
                                   std::uint64_t seed) {
  Rng rng(seed);
  MemoryConfig mem;
  mem.fps = 1;
  mem.work_seconds = static_cast<double>(config.work_slots);
  mem.long_seconds = static_cast<double>(config.long_slots);
  std::vector<Sample> out;
  out.reserve(count);
  const std::size_t max_frames = config.work_slots + config.long_slots;
  for (std::size_t n = 0; n < count; ++n) {
    MemoryState state(mem, config.input_width());
    const std::size_t frames = 1 + rng.below(max_frames + 2);
    for (std::size_t t = 0; t < frames; ++t) {
      FeatureFrame f{std::vector<double>(config.input_width()), t};
      for (auto& v : f.values) v = rng.normal(0.0, 1.0);
      state.push(std::move(f));
    }
    out.push_back(Sample{state.snapshot(), static_cast<Intention>(rng.below(kNumClasses))});
  }
  return out;
}

}  // namespace pfl
