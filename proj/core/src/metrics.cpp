#include "pfl/metrics.hpp"

#include <stdexcept>

namespace pfl {

std::size_t MetricsReport::true_positives(Intention c) const {
  const auto i = static_cast<std::size_t>(c);
  return confusion[i][i];
}

std::size_t MetricsReport::predicted_count(Intention c) const {
  const auto j = static_cast<std::size_t>(c);
  std::size_t n = 0;
  for (const auto& row : confusion) n += row[j];
  return n;
}

MetricsReport tally(std::span<const Prediction> predictions) {
  MetricsReport r;
  std::size_t sop = 0, sop_flagged = 0;
  for (const auto& p : predictions) {
    ++r.confusion[static_cast<std::size_t>(p.truth)][static_cast<std::size_t>(p.predicted)];
    if (p.scenario == Scenario::kLaneKeepSop) {
      ++sop;
      if (p.predicted != Intention::kLaneKeep) ++sop_flagged;
    }
  }
  r.samples = predictions.size();

  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto cls = static_cast<Intention>(c);
    const std::size_t predicted = r.predicted_count(cls);
    if (predicted == 0) continue;
    r.precision[c] = static_cast<double>(r.true_positives(cls)) / static_cast<double>(predicted);
    sum += *r.precision[c];
    ++defined;
  }
  if (defined > 0) r.macro_precision = sum / static_cast<double>(defined);
  if (sop > 0) r.false_positive_rate = static_cast<double>(sop_flagged) / static_cast<double>(sop);
  return r;
}

std::vector<Prediction> predict_sequences(const Predictor& predictor, const ClientDataset& ds,
                                          std::span<const std::size_t> indices,
                                          const MemoryConfig& memory) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty test set");
  std::vector<Prediction> out;
  out.reserve(indices.size());
  MemoryState state(memory, ds.frame_width());
  for (auto i : indices) {
    const auto& seq = ds.sequences.at(i);
    state.reset();
    for (const auto& f : seq.frames) state.push(f);
    out.push_back({seq.label, predictor(state.snapshot()), seq.scenario});
  }
  return out;
}

MetricsReport evaluate(const Predictor& predictor, const ClientDataset& ds,
                       const MemoryConfig& memory) {
  const auto predictions = predict_sequences(predictor, ds, ds.test, memory);
  return tally(predictions);
}

MetricsReport evaluate(const Lstr& model, const ParamSet& params, const ClientDataset& ds,
                       const MemoryConfig& memory) {
  return evaluate([&](const MemorySnapshot& m) { return model.predict(params, m); }, ds, memory);
}

}  // namespace pfl
