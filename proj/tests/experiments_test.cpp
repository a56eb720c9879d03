#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "pfl/config.hpp"
#include "pfl/errors.hpp"
#include "pfl/experiments.hpp"

namespace pfl {
namespace {

ExperimentConfig tiny_experiment() {
  ExperimentConfig c;
  c.memory.fps = 1;
  c.memory.work_seconds = 3;
  c.memory.long_seconds = 4;
  c.model.feature_dim = 3;
  c.model.embed_dim = 8;
  c.model.heads = 2;
  c.model.latent_tokens = 2;
  c.model.encoder_layers = 1;
  c.model.decoder_layers = 1;
  c.model.ff_dim = 8;
  c.model.work_slots = c.memory.work_slots();
  c.model.long_slots = c.memory.long_slots();
  c.federation = FederationConfig::desk();
  c.federation.rounds = 2;
  c.federation.decoder_epochs = 1;
  c.federation.local_epochs = 2;
  c.federation.batch_size = 4;
  const std::array<std::array<std::size_t, 3>, 3> perms = {{{0, 1, 2}, {0, 2, 1}, {1, 0, 2}}};
  for (int i = 0; i < 3; ++i) {
    ClientStyle s;
    s.client_id = i;
    s.style_seed = static_cast<std::uint64_t>(i);
    s.gesture_permutation = perms[static_cast<std::size_t>(i)];
    c.clients.push_back(s);
    c.sequences.push_back(12);
  }
  return c;
}

TEST(Variant, NamesRoundTrip) {
  for (auto v : kAllVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_FALSE(parse_variant("fedprox").has_value());
}

TEST(ExperimentConfig, StandardBenchmarkIsValid) {
  const auto c = standard_benchmark();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.clients.size(), 3u);
  EXPECT_DOUBLE_EQ(c.clients[1].false_positive_rate, 0.5);
}

TEST(ExperimentConfig, RejectsMismatchedSizes) {
  auto c = tiny_experiment();
  c.sequences.pop_back();
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_experiment();
  c.train_ratio = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_experiment();
  c.model.long_slots += 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Heterogeneity, StandardBenchmarkPicksPermutedClient) {
  const auto c = standard_benchmark();
  const auto scores = heterogeneity_scores(c);
  ASSERT_EQ(scores.size(), 3u);
  for (const auto& [id, s] : scores) {
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  EXPECT_EQ(most_heterogeneous_client(c), 2);
}

TEST(Heterogeneity, IdenticalStylesScoreOne) {
  auto c = tiny_experiment();
  for (auto& s : c.clients) s.gesture_permutation = {0, 1, 2};
  for (const auto& [id, s] : heterogeneity_scores(c)) EXPECT_DOUBLE_EQ(s, 1.0);
}

TEST(Compare, SingleVariantMatchesEvaluate) {
  const auto c = tiny_experiment();
  const std::array<Variant, 1> variants = {Variant::kLocal};
  const std::array<std::uint64_t, 1> seeds = {5};
  const auto table = compare(c, variants, seeds);

  const auto datasets = make_datasets(c, 5);
  const auto run = run_variant(c, Variant::kLocal, datasets, 5);
  const Lstr model(c.model);
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const int id = c.clients[i].client_id;
    const auto report = evaluate(model, run.params.at(id), datasets[i], c.memory);
    const auto rows = table.seed_rows(Variant::kLocal, id);
    ASSERT_EQ(rows.size(), 1u);
    const auto expected = row_from_report(Variant::kLocal, id, "5", report);
    EXPECT_EQ(rows[0]->seed, "5");
    EXPECT_EQ(rows[0]->lk_precision, expected.lk_precision);
    EXPECT_EQ(rows[0]->llc_precision, expected.llc_precision);
    EXPECT_EQ(rows[0]->rlc_precision, expected.rlc_precision);
    EXPECT_EQ(rows[0]->fp_rate, expected.fp_rate);
    EXPECT_EQ(rows[0]->macro_precision, expected.macro_precision);
    const auto* mean = table.aggregate_row(Variant::kLocal, id, "mean");
    ASSERT_NE(mean, nullptr);
    EXPECT_EQ(mean->macro_precision, expected.macro_precision);
    const auto* sd = table.aggregate_row(Variant::kLocal, id, "stdev");
    ASSERT_NE(sd, nullptr);
    EXPECT_FALSE(sd->macro_precision.has_value());
  }
}

TEST(Compare, TwoSeedsGiveStdevAndBoundedMean) {
  const auto c = tiny_experiment();
  const std::array<Variant, 2> variants = {Variant::kPflLstr, Variant::kFedAvg};
  const std::array<std::uint64_t, 2> seeds = {1, 2};
  const auto table = compare(c, variants, seeds);
  EXPECT_EQ(table.rows.size(), 2u * 3u * 4u);

  for (auto v : variants) {
    for (const auto& s : c.clients) {
      const auto rows = table.seed_rows(v, s.client_id);
      ASSERT_EQ(rows.size(), 2u);
      ASSERT_TRUE(rows[0]->macro_precision && rows[1]->macro_precision);
      const double a = *rows[0]->macro_precision;
      const double b = *rows[1]->macro_precision;
      const auto* mean = table.aggregate_row(v, s.client_id, "mean");
      const auto* sd = table.aggregate_row(v, s.client_id, "stdev");
      ASSERT_TRUE(mean && sd && mean->macro_precision && sd->macro_precision);
      EXPECT_GE(*mean->macro_precision, std::min(a, b) - 1e-15);
      EXPECT_LE(*mean->macro_precision, std::max(a, b) + 1e-15);
      EXPECT_NEAR(*sd->macro_precision, std::abs(a - b) / std::sqrt(2.0), 1e-12);
    }
  }
}

TEST(Compare, VariantsShareSplits) {
  const auto c = tiny_experiment();
  const std::array<Variant, 3> variants = {Variant::kPflLstr, Variant::kFedAvg, Variant::kLocal};
  const std::array<std::uint64_t, 1> seeds = {3};
  const auto table = compare(c, variants, seeds);
  for (const auto& s : c.clients) {
    const auto ref = table.split_fingerprints.at({Variant::kPflLstr, 3, s.client_id});
    for (auto v : variants)
      EXPECT_EQ(table.split_fingerprints.at({v, 3, s.client_id}), ref);
  }
}

TEST(Compare, Deterministic) {
  const auto c = tiny_experiment();
  const std::array<Variant, 1> variants = {Variant::kPflLstr};
  const std::array<std::uint64_t, 1> seeds = {9};
  std::ostringstream a, b;
  export_report(compare(c, variants, seeds), a, ReportFormat::kCsv);
  export_report(compare(c, variants, seeds), b, ReportFormat::kCsv);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Compare, RejectsEmptyInputs) {
  const auto c = tiny_experiment();
  const std::array<std::uint64_t, 1> seeds = {1};
  const std::array<Variant, 1> variants = {Variant::kLocal};
  EXPECT_THROW(compare(c, {}, seeds), std::invalid_argument);
  EXPECT_THROW(compare(c, variants, {}), std::invalid_argument);
}

ComparisonTable hand_table() {
  ComparisonTable t;
  t.rows.push_back({Variant::kPflLstr, 0, "1", 1.0, 0.5, std::nullopt, 0.25, 0.75});
  t.rows.push_back({Variant::kFedAvg, 2, "mean", 0.1, std::nullopt, 1.0 / 3.0, 0.0, 0.5});
  return t;
}

TEST(Report, CsvGolden) {
  std::ostringstream out;
  export_report(hand_table(), out, ReportFormat::kCsv);
  EXPECT_EQ(out.str(),
            "variant,client,seed,lk_precision,llc_precision,rlc_precision,fp_rate,macro_precision\n"
            "pfl-lstr,0,1,1,0.5,,0.25,0.75\n"
            "fedavg,2,mean,0.10000000000000001,,0.33333333333333331,0,0.5\n");
}

TEST(Report, JsonLinesGolden) {
  std::ostringstream out;
  export_report(hand_table(), out, ReportFormat::kJsonLines);
  const auto text = out.str();
  const auto first = text.substr(0, text.find('\n'));
  EXPECT_NE(first.find("\"variant\":\"pfl-lstr\""), std::string::npos);
  EXPECT_NE(first.find("\"rlc_precision\":null"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(Report, EmptyTableWritesHeaderOnly) {
  std::ostringstream out;
  export_report(ComparisonTable{}, out, ReportFormat::kCsv);
  EXPECT_EQ(out.str(),
            "variant,client,seed,lk_precision,llc_precision,rlc_precision,fp_rate,macro_precision\n");
  std::istringstream in(out.str());
  EXPECT_TRUE(import_report(in, ReportFormat::kCsv).rows.empty());
}

void expect_rows_equal(const ComparisonTable& a, const ComparisonTable& b) {
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& x = a.rows[i];
    const auto& y = b.rows[i];
    EXPECT_EQ(x.variant, y.variant);
    EXPECT_EQ(x.client, y.client);
    EXPECT_EQ(x.seed, y.seed);
    EXPECT_EQ(x.lk_precision, y.lk_precision);
    EXPECT_EQ(x.llc_precision, y.llc_precision);
    EXPECT_EQ(x.rlc_precision, y.rlc_precision);
    EXPECT_EQ(x.fp_rate, y.fp_rate);
    EXPECT_EQ(x.macro_precision, y.macro_precision);
  }
}

TEST(Report, RoundTripBothFormats) {
  for (auto format : {ReportFormat::kCsv, ReportFormat::kJsonLines}) {
    std::ostringstream out;
    export_report(hand_table(), out, format);
    std::istringstream in(out.str());
    expect_rows_equal(import_report(in, format), hand_table());
  }
}

TEST(Report, FileExport) {
  const auto path = std::filesystem::temp_directory_path() / "pfl_report_test.csv";
  export_report(hand_table(), path, ReportFormat::kCsv);
  std::ifstream in(path);
  expect_rows_equal(import_report(in, ReportFormat::kCsv), hand_table());
  std::filesystem::remove(path);
}

TEST(Report, MalformedInputNamesLine) {
  const std::string header =
      "variant,client,seed,lk_precision,llc_precision,rlc_precision,fp_rate,macro_precision\n";
  std::istringstream bad_variant(header + "pfl-lstr,0,1,1,1,1,0,1\nnope,0,1,1,1,1,0,1\n");
  try {
    import_report(bad_variant, ReportFormat::kCsv);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::istringstream short_row(header + "local,0,1,1\n");
  EXPECT_THROW(import_report(short_row, ReportFormat::kCsv), ParseError);
  std::istringstream bad_header("variant,client\n");
  EXPECT_THROW(import_report(bad_header, ReportFormat::kCsv), ParseError);
}

TEST(Config, ParsesKeysOverBase) {
  std::istringstream in(
      "# comment\n"
      "federation.rounds = 7   # trailing comment\n"
      "model.embed_dim = 24\n"
      "memory.fps = 1\n"
      "experiment.train_ratio = 0.5\n"
      "clients = 4\n"
      "client.3.permutation = 2 1 0\n"
      "client.3.false_positive_rate = 0.4\n"
      "client.3.sequences = 30\n"
      "client.0.noise_sigma = 0\n");
  const auto c = parse_experiment_config(in);
  EXPECT_EQ(c.federation.rounds, 7u);
  EXPECT_EQ(c.model.embed_dim, 24u);
  EXPECT_EQ(c.memory.fps, 1);
  EXPECT_EQ(c.model.work_slots, c.memory.work_slots());
  EXPECT_EQ(c.model.long_slots, c.memory.long_slots());
  EXPECT_DOUBLE_EQ(c.train_ratio, 0.5);
  ASSERT_EQ(c.clients.size(), 4u);
  EXPECT_EQ(c.clients[3].client_id, 3);
  EXPECT_EQ(c.clients[3].gesture_permutation, (std::array<std::size_t, 3>{2, 1, 0}));
  EXPECT_DOUBLE_EQ(c.clients[3].false_positive_rate, 0.4);
  EXPECT_EQ(c.sequences[3], 30u);
  EXPECT_DOUBLE_EQ(c.clients[0].noise_sigma, 0.0);
  EXPECT_EQ(c.sequences[0], standard_benchmark().sequences[0]);
}

TEST(Config, PresetAppliesBeforeExplicitKeys) {
  std::istringstream in("federation.decoder_lr = 0.2\nfederation.seed = 4\n"
                        "federation.preset = paper-rates\n");
  const auto c = parse_experiment_config(in);
  const auto paper = FederationConfig::paper_rates();
  EXPECT_DOUBLE_EQ(c.federation.decoder_lr, 0.2);
  EXPECT_DOUBLE_EQ(c.federation.encoder_lr, paper.encoder_lr);
  EXPECT_EQ(c.federation.rounds, paper.rounds);
  EXPECT_EQ(c.federation.seed, 4u);
}

void expect_config_error_at(const std::string& text, const std::string& needle) {
  std::istringstream in(text);
  try {
    parse_experiment_config(in);
    FAIL() << "expected ConfigError for: " << text;
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(Config, ErrorsNameTheLine) {
  expect_config_error_at("federation.rounds = 3\nbogus.key = 1\n", "line 2");
  expect_config_error_at("\n\njust words\n", "line 3");
  expect_config_error_at("model.heads = two\n", "line 1");
  expect_config_error_at("model.heads =\n", "line 1");
  expect_config_error_at("client.7.sequences = 10\n", "line 1");
  expect_config_error_at("client.0.permutation = 0 1\n", "line 1");
  expect_config_error_at("client.0.colour = red\n", "line 1");
  expect_config_error_at("federation.preset = fast\n", "line 1");
  expect_config_error_at("clients = 0\n", "line 1");
}

TEST(Config, InvalidCombinationThrows) {
  std::istringstream heads("model.heads = 5\n");
  EXPECT_THROW(parse_experiment_config(heads), ConfigError);
  std::istringstream perm("client.0.permutation = 0 0 1\n");
  EXPECT_THROW(parse_experiment_config(perm), ConfigError);
  std::istringstream fraction("federation.select_fraction = 0\n");
  EXPECT_THROW(parse_experiment_config(fraction), ConfigError);
}

TEST(Config, FormatRoundTrips) {
  auto c = tiny_experiment();
  c.clients[1].false_positive_rate = 0.1 + 0.2;
  c.federation.encoder_lr = 1e-7;
  const auto text = format_experiment_config(c);
  std::istringstream in(text);
  const auto back = parse_experiment_config(in);
  EXPECT_EQ(format_experiment_config(back), text);
  EXPECT_EQ(back.clients[1].false_positive_rate, c.clients[1].false_positive_rate);
  EXPECT_EQ(back.federation.encoder_lr, 1e-7);
}

TEST(Config, MissingFileThrows) {
  EXPECT_THROW(load_experiment_config("/nonexistent/pfl.cfg"), ConfigError);
}

}  // namespace
}  // namespace pfl
