#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pfl/memory.hpp"
#include "pfl/model.hpp"
#include "pfl/synth.hpp"

namespace pfl {

struct Prediction {
  Intention truth = Intention::kLaneKeep;
  Intention predicted = Intention::kLaneKeep;
  Scenario scenario = Scenario::kLaneKeepFop;
};

/// Per-sequence evaluation summary. Undefined ratios are nullopt, never 0.
struct MetricsReport {
  // rows: true class, columns: predicted class
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};
  std::array<std::optional<double>, kNumClasses> precision;
  /// Fraction of LK_with_SOP sequences predicted as a lane change.
  std::optional<double> false_positive_rate;
  /// Unweighted mean of the defined per-class precisions.
  std::optional<double> macro_precision;
  std::size_t samples = 0;

  std::size_t true_positives(Intention c) const;
  std::size_t predicted_count(Intention c) const;
};

MetricsReport tally(std::span<const Prediction> predictions);

using Predictor = std::function<Intention(const MemorySnapshot&)>;

/// Streams every sequence in `indices` through a fresh memory and predicts at
/// the final frame. Throws std::invalid_argument if `indices` is empty.
std::vector<Prediction> predict_sequences(const Predictor& predictor, const ClientDataset& ds,
                                          std::span<const std::size_t> indices,
                                          const MemoryConfig& memory);

/// Metrics of `predictor` on the test split of `ds`.
MetricsReport evaluate(const Predictor& predictor, const ClientDataset& ds,
                       const MemoryConfig& memory);
MetricsReport evaluate(const Lstr& model, const ParamSet& params, const ClientDataset& ds,
                       const MemoryConfig& memory);

}  // namespace pfl
