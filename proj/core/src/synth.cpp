#include "pfl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pfl/errors.hpp"
#include "pfl/rng.hpp"

namespace pfl {

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::kLaneChangeSop: return "LC_with_SOP";
    case Scenario::kLaneKeepFop: return "LK_with_FOP";
    case Scenario::kLaneKeepSop: return "LK_with_SOP";
  }
  return "?";
}

std::optional<Scenario> parse_scenario(std::string_view s) {
  for (std::size_t i = 0; i < kNumScenarios; ++i) {
    const auto sc = static_cast<Scenario>(i);
    if (to_string(sc) == s) return sc;
  }
  return std::nullopt;
}

void ClientStyle::validate() const {
  std::string bad;
  if (!(gesture_amplitude > 0.0) || !std::isfinite(gesture_amplitude))
    bad += " [gesture_amplitude > 0]";
  if (!(false_positive_rate >= 0.0 && false_positive_rate <= 1.0))
    bad += " [0 <= false_positive_rate <= 1]";
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) bad += " [noise_sigma >= 0]";
  auto sorted = gesture_permutation;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != std::array<std::size_t, 3>{0, 1, 2}) bad += " [gesture_permutation is a permutation of 0,1,2]";
  if (!bad.empty()) throw ConfigError("invalid client style:" + bad);
}

ClientStyle ClientStyle::random(int client_id, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(client_id)}));
  ClientStyle s;
  s.client_id = client_id;
  s.style_seed = seed;
  s.false_positive_rate = rng.uniform(0.1, 0.5);
  s.gesture_amplitude = rng.uniform(0.8, 1.2);
  std::shuffle(s.gesture_permutation.begin(), s.gesture_permutation.end(), rng.engine());
  return s;
}

void ClientDataset::validate_split() const {
  std::vector<int> seen(sequences.size(), 0);
  for (const auto* part : {&train, &test}) {
    for (auto i : *part) {
      if (i >= sequences.size())
        throw std::invalid_argument("split index " + std::to_string(i) + " out of range");
      if (seen[i]++ > 0)
        throw std::invalid_argument("split index " + std::to_string(i) + " listed twice");
    }
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (seen[i] == 0)
      throw std::invalid_argument("sequence " + std::to_string(i) + " is in neither split");
}

std::size_t GeneratorConfig::frames_per_sequence() const {
  return sequence_length > 0 ? sequence_length : memory.work_slots() + memory.long_slots();
}

namespace {

// Noiseless frame for one episode.
std::vector<double> prototype_frame(std::size_t fd, Scenario scenario,
                                    std::optional<std::size_t> gesture, double amplitude) {
  std::vector<double> v(kNumBlocks * fd, 0.0);
  const std::size_t front = 0, rear = fd, cabin = 2 * fd;
  switch (scenario) {
    case Scenario::kLaneChangeSop:
      v[front + prototype::kFrontCloseLead] = 1.0;
      v[rear + prototype::kRearClear] = 1.0;
      break;
    case Scenario::kLaneKeepSop:
      v[front + prototype::kFrontCloseLead] = 1.0;
      v[rear + prototype::kRearOccupied] = 1.0;
      break;
    case Scenario::kLaneKeepFop:
      v[front + prototype::kFrontOpenRoad] = 1.0;
      v[rear + prototype::kRearEmpty] = 1.0;
      break;
  }
  if (gesture) v[cabin + *gesture] = amplitude;
  return v;
}

}  // namespace

Intention prototype_rule(const ClientStyle& style, const FeatureFrame& frame,
                         std::size_t feature_dim) {
  const auto rear = frame.block(Block::kRear, feature_dim);
  const auto cabin = frame.block(Block::kCabin, feature_dim);
  const auto g = static_cast<std::size_t>(
      std::max_element(cabin.begin(), cabin.end()) - cabin.begin());
  if (cabin[g] < 0.5 * style.gesture_amplitude) return Intention::kLaneKeep;
  if (rear[prototype::kRearOccupied] > rear[prototype::kRearClear]) return Intention::kLaneKeep;
  if (g == style.gesture_permutation[0]) return Intention::kLeftLaneChange;
  if (g == style.gesture_permutation[1]) return Intention::kRightLaneChange;
  return Intention::kLaneKeep;
}

ClientDataset generate_client_dataset(const ClientStyle& style, std::size_t n_sequences,
                                      std::uint64_t seed, const GeneratorConfig& config) {
  style.validate();
  if (n_sequences < 3) throw std::invalid_argument("generate_client_dataset: need at least 3 sequences");
  if (config.feature_dim < prototype::kMinFeatureDim)
    throw ConfigError("generate_client_dataset: [feature_dim >= 3]");
  config.memory.validate();
  const std::size_t frames = config.frames_per_sequence();
  if (frames < config.memory.work_slots())
    throw ConfigError("generate_client_dataset: [sequence_length >= work slots]");

  Rng rng(derive_seed(seed, {style.style_seed, static_cast<std::uint64_t>(style.client_id)}));

  std::vector<Intention> labels(n_sequences);
  for (std::size_t i = 0; i < n_sequences; ++i) labels[i] = static_cast<Intention>(i % kNumClasses);
  std::shuffle(labels.begin(), labels.end(), rng.engine());

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n_sequences; ++i)
    if (labels[i] == Intention::kLaneKeep) keep.push_back(i);
  const auto n_fp = static_cast<std::size_t>(
      std::llround(style.false_positive_rate * static_cast<double>(keep.size())));
  std::shuffle(keep.begin(), keep.end(), rng.engine());
  std::vector<bool> is_fp(n_sequences, false);
  for (std::size_t j = 0; j < n_fp; ++j) is_fp[keep[j]] = true;

  ClientDataset ds;
  ds.feature_dim = config.feature_dim;
  ds.fps = config.memory.fps;
  ds.sequences.reserve(n_sequences);
  const auto& perm = style.gesture_permutation;
  for (std::size_t i = 0; i < n_sequences; ++i) {
    LabeledSequence seq;
    seq.label = labels[i];
    std::optional<std::size_t> gesture;
    switch (labels[i]) {
      case Intention::kLeftLaneChange:
        seq.scenario = Scenario::kLaneChangeSop;
        gesture = perm[0];
        break;
      case Intention::kRightLaneChange:
        seq.scenario = Scenario::kLaneChangeSop;
        gesture = perm[1];
        break;
      case Intention::kLaneKeep:
        if (is_fp[i]) {
          seq.scenario = Scenario::kLaneKeepSop;
          gesture = perm[rng.below(2)];
        } else {
          seq.scenario = Scenario::kLaneKeepFop;
        }
        break;
    }
    const auto base = prototype_frame(ds.feature_dim, seq.scenario, gesture, style.gesture_amplitude);
    seq.frames.reserve(frames);
    for (std::size_t t = 0; t < frames; ++t) {
      FeatureFrame f{base, t};
      if (style.noise_sigma > 0.0)
        for (auto& x : f.values) x += rng.normal(0.0, style.noise_sigma);
      seq.frames.push_back(std::move(f));
    }
    ds.sequences.push_back(std::move(seq));
  }
  ds.train.resize(n_sequences);
  std::iota(ds.train.begin(), ds.train.end(), std::size_t{0});
  return ds;
}

ClientDataset ablate_rear_view(ClientDataset ds) {
  for (auto& seq : ds.sequences)
    for (auto& f : seq.frames) {
      auto rear = f.block(Block::kRear, ds.feature_dim);
      std::fill(rear.begin(), rear.end(), 0.0);
    }
  return ds;
}

ClientDataset split_train_test(ClientDataset ds, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("split_train_test: ratio must be in (0, 1)");
  Rng rng(seed);
  ds.train.clear();
  ds.test.clear();
  for (std::size_t s = 0; s < kNumScenarios; ++s) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.sequences.size(); ++i)
      if (ds.sequences[i].scenario == static_cast<Scenario>(s)) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    const auto n_train =
        static_cast<std::size_t>(std::llround(ratio * static_cast<double>(idx.size())));
    ds.train.insert(ds.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.test.insert(ds.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.test.begin(), ds.test.end());
  return ds;
}

std::uint64_t split_fingerprint(const ClientDataset& ds) {
  std::uint64_t h = mix64(ds.sequences.size());
  for (auto i : ds.train) h = mix64(h ^ (i * 2 + 0));
  h = mix64(h ^ 0xA5A5A5A5ULL);
  for (auto i : ds.test) h = mix64(h ^ (i * 2 + 1));
  return h;
}

}  // namespace pfl
