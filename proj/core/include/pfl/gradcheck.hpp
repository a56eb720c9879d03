#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pfl/model.hpp"

namespace pfl {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;  // coordinates with |grad| above the floor
  std::size_t skipped = 0;  // coordinates below the floor
};

struct GradCheckOptions {
  double step = 1e-4;
  double grad_floor = 1e-8;
  /// 0 checks every coordinate; otherwise this many, drawn with `seed`.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

/// Compares Lstr::loss_and_grads against central finite differences of the
/// batch loss. Relative error is |a - n| / max(|a|, |n|).
GradCheckResult check_gradients(const Lstr& model, const ParamSet& params,
                                std::span<const Sample> batch,
                                const GradCheckOptions& options = {});

/// Small architecture (under 2k parameters) for gradient checks.
ModelConfig toy_model_config();

/// Random memory snapshots with mixed occupancy and random labels.
std::vector<Sample> random_samples(const ModelConfig& config, std::size_t count,
                                   std::uint64_t seed);

}  // namespace pfl
