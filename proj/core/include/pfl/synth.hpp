#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pfl/memory.hpp"
#include "pfl/model.hpp"

namespace pfl {

/// Driving scenario behind a labeled sequence.
///   kLaneChangeSop  lane change preceded by surrounding observation
///   kLaneKeepFop    lane keep, driver watching the road ahead
///   kLaneKeepSop    lane keep with lane-change-like observation (false positive)
enum class Scenario : std::uint8_t { kLaneChangeSop = 0, kLaneKeepFop = 1, kLaneKeepSop = 2 };
inline constexpr std::size_t kNumScenarios = 3;

std::string_view to_string(Scenario s);  // "LC_with_SOP", "LK_with_FOP", "LK_with_SOP"
std::optional<Scenario> parse_scenario(std::string_view s);

/// Per-driver generative parameters. The permutation maps the two lane-change
/// directions onto cabin gesture prototypes: a left change shows gesture
/// `gesture_permutation[0]`, a right change `gesture_permutation[1]`.
/// Different permutations give clients conflicting label semantics.
struct ClientStyle {
  int client_id = 0;
  std::uint64_t style_seed = 0;
  double gesture_amplitude = 1.0;
  double false_positive_rate = 0.3;
  std::array<std::size_t, 3> gesture_permutation = {0, 1, 2};
  double noise_sigma = 0.1;

  /// Throws ConfigError on out-of-range values or an invalid permutation.
  void validate() const;

  /// Random style: false-positive rate in [0.1, 0.5], amplitude in
  /// [0.8, 1.2], uniformly random permutation.
  static ClientStyle random(int client_id, std::uint64_t seed);
};

struct LabeledSequence {
  std::vector<FeatureFrame> frames;
  Intention label = Intention::kLaneKeep;
  Scenario scenario = Scenario::kLaneKeepFop;
};

struct ClientDataset {
  std::size_t feature_dim = 16;
  int fps = 4;
  std::vector<LabeledSequence> sequences;
  std::vector<std::size_t> train;  // indices into sequences
  std::vector<std::size_t> test;

  std::size_t size() const { return sequences.size(); }
  std::size_t frame_width() const { return kNumBlocks * feature_dim; }
  /// Training sample count (the weight of this client in aggregation).
  std::size_t train_count() const { return train.size(); }
  /// Throws std::invalid_argument unless train/test are disjoint, in range,
  /// and together cover every sequence.
  void validate_split() const;
};

struct GeneratorConfig {
  std::size_t feature_dim = 16;
  MemoryConfig memory;
  /// 0 means work_slots + long_slots frames per sequence.
  std::size_t sequence_length = 0;

  std::size_t frames_per_sequence() const;
};

/// Noiseless block prototypes. Every prototype is a unit basis vector of the
/// block (or zero), so block means and nearest-prototype rules are analytic.
///   front: e0 close lead vehicle (observation scenarios), e1 open road (LK_with_FOP)
///   rear:  e0 adjacent lane clear (LC), e1 adjacent lane occupied (LK_with_SOP),
///          e2 no adjacent traffic (LK_with_FOP)
///   cabin: amplitude * e_g for gesture prototype g, zero when the driver looks ahead
namespace prototype {
inline constexpr std::size_t kFrontCloseLead = 0;
inline constexpr std::size_t kFrontOpenRoad = 1;
inline constexpr std::size_t kRearClear = 0;
inline constexpr std::size_t kRearOccupied = 1;
inline constexpr std::size_t kRearEmpty = 2;
inline constexpr std::size_t kMinFeatureDim = 3;
}  // namespace prototype

/// Decision rule of a client's noiseless generator, read off the newest
/// frame: no gesture or an occupied rear lane means lane keep, otherwise the
/// gesture picks the direction through the client's permutation. A gesture
/// the client never uses is read as lane keep.
Intention prototype_rule(const ClientStyle& style, const FeatureFrame& frame,
                         std::size_t feature_dim);

/// Deterministic dataset of `n_sequences` episodes (n >= 3). Labels cycle
/// through the three intentions before shuffling; exactly
/// round(false_positive_rate * #lane-keep) lane-keep episodes are false
/// positives. The returned split puts every sequence in `train`.
ClientDataset generate_client_dataset(const ClientStyle& style, std::size_t n_sequences,
                                      std::uint64_t seed, const GeneratorConfig& config = {});

/// Zeroes the rear block of every frame; labels and other blocks untouched.
ClientDataset ablate_rear_view(ClientDataset ds);

/// Seeded shuffle stratified by scenario: round(ratio * count) of each
/// scenario goes to train. Requires 0 < ratio < 1.
ClientDataset split_train_test(ClientDataset ds, double ratio, std::uint64_t seed);

/// Order-sensitive hash of the train/test indices.
std::uint64_t split_fingerprint(const ClientDataset& ds);

// Text format, one record per line:
//   pfl-dataset 1
//   feature_dim <int>
//   fps <int>
//   blocks front rear cabin
//   sequences <count>
//   sequence <scenario tag> <label int> <frame count>
//   <frame count lines of 3*feature_dim decimal values, %.17g>
//   ...
//   train <indices...>
//   test <indices...>
void write_dataset(const ClientDataset& ds, std::ostream& out);
ClientDataset read_dataset(std::istream& in);
void save_dataset(const ClientDataset& ds, const std::filesystem::path& path);
/// Throws ParseError carrying the offending line number.
ClientDataset load_dataset(const std::filesystem::path& path);

}  // namespace pfl
