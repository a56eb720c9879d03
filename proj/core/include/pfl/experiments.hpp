#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "pfl/federation.hpp"
#include "pfl/metrics.hpp"
#include "pfl/model.hpp"
#include "pfl/synth.hpp"

namespace pfl {

enum class Variant { kPflLstr, kFedAvg, kLocal, kPflLstr2Cams };

std::string_view to_string(Variant v);  // "pfl-lstr", "fedavg", "local", "pfl-lstr-2cams"
std::optional<Variant> parse_variant(std::string_view s);
inline constexpr std::array<Variant, 4> kAllVariants = {Variant::kPflLstr, Variant::kFedAvg,
                                                        Variant::kLocal, Variant::kPflLstr2Cams};

/// Everything that determines a comparison run besides the seed.
struct ExperimentConfig {
  ModelConfig model;
  MemoryConfig memory;
  FederationConfig federation;
  std::vector<ClientStyle> clients;
  std::vector<std::size_t> sequences;  // per client
  double train_ratio = 0.67;

  /// Throws ConfigError on inconsistent sizes or invalid parts.
  void validate() const;
};

/// Three drivers with permuted gesture prototypes on a compact model:
///   client 0: permutation (0 1 2), false-positive rate 0.2, 120 sequences
///   client 1: permutation (0 2 1), false-positive rate 0.5, 90 sequences
///   client 2: permutation (1 0 2), false-positive rate 0.3, 60 sequences
/// with the desk learning-rate schedule.
ExperimentConfig standard_benchmark();

/// Per-client datasets for `seed`, already split into train and test.
std::vector<ClientDataset> make_datasets(const ExperimentConfig& config, std::uint64_t seed);

/// Mean macro precision each client's noiseless decision rule reaches on the
/// other clients' noiseless data. Lower means more heterogeneous.
std::map<int, double> heterogeneity_scores(const ExperimentConfig& config);
/// Client with the lowest heterogeneity score (lowest id on ties).
int most_heterogeneous_client(const ExperimentConfig& config);

/// Trained parameters of one variant for every client plus its log.
struct VariantRun {
  Variant variant = Variant::kPflLstr;
  std::map<int, ParamSet> params;
  std::map<int, MetricsReport> reports;
  std::map<int, std::uint64_t> split_fingerprints;
  TrainingLog log;
};

/// Trains `variant` on `datasets` (ablating the rear view for the 2cams
/// variant) and evaluates every client on its test split.
VariantRun run_variant(const ExperimentConfig& config, Variant variant,
                       const std::vector<ClientDataset>& datasets, std::uint64_t seed);

struct ComparisonRow {
  Variant variant = Variant::kPflLstr;
  int client = 0;
  /// Seed of a per-seed row; "mean" and "stdev" for aggregate rows.
  std::string seed;
  std::optional<double> lk_precision;
  std::optional<double> llc_precision;
  std::optional<double> rlc_precision;
  std::optional<double> fp_rate;
  std::optional<double> macro_precision;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  /// (variant, seed, client) -> fingerprint of the train/test split used.
  std::map<std::tuple<Variant, std::uint64_t, int>, std::uint64_t> split_fingerprints;

  /// Per-seed rows for one variant and client.
  std::vector<const ComparisonRow*> seed_rows(Variant v, int client) const;
  const ComparisonRow* aggregate_row(Variant v, int client, std::string_view kind) const;
};

ComparisonRow row_from_report(Variant v, int client, std::string seed, const MetricsReport& r);

/// Trains and evaluates every variant for every seed on identical splits.
/// Rows are ordered by variant, then client, then seed, followed by the
/// "mean" and "stdev" rows (sample standard deviation, null below two
/// defined values). Throws std::invalid_argument without variants or seeds.
ComparisonTable compare(const ExperimentConfig& config, std::span<const Variant> variants,
                        std::span<const std::uint64_t> seeds);

enum class ReportFormat { kCsv, kJsonLines };

/// Header: variant,client,seed,lk_precision,llc_precision,rlc_precision,fp_rate,macro_precision
/// Numbers use %.17g; undefined values are empty fields (null in JSON).
void export_report(const ComparisonTable& table, std::ostream& out, ReportFormat format);
void export_report(const ComparisonTable& table, const std::filesystem::path& path,
                   ReportFormat format);
/// Inverse of export_report. Throws ParseError with the line number.
ComparisonTable import_report(std::istream& in, ReportFormat format);

}  // namespace pfl
