#include <gtest/gtest.h>

#include "pfl/metrics.hpp"

namespace pfl {
namespace {

MemoryConfig tiny_memory() {
  MemoryConfig m;
  m.fps = 1;
  m.work_seconds = 2;
  m.long_seconds = 3;
  return m;
}

// feature_dim 1; the front value of every frame carries the label so stubs
// can read it back from the memory.
ClientDataset labelled_dataset(std::size_t per_class) {
  ClientDataset ds;
  ds.feature_dim = 1;
  ds.fps = 1;
  for (std::size_t i = 0; i < per_class * kNumClasses; ++i) {
    LabeledSequence s;
    s.label = static_cast<Intention>(i % kNumClasses);
    s.scenario = s.label != Intention::kLaneKeep ? Scenario::kLaneChangeSop
                 : (i / kNumClasses) % 2 == 0 ? Scenario::kLaneKeepSop
                                               : Scenario::kLaneKeepFop;
    for (std::size_t t = 0; t < 4; ++t)
      s.frames.push_back(FeatureFrame{{static_cast<double>(s.label), 0.0, 0.0}, t});
    ds.sequences.push_back(std::move(s));
    ds.test.push_back(i);
  }
  return ds;
}

Intention label_from_memory(const MemorySnapshot& m) {
  return static_cast<Intention>(static_cast<int>(m.work_view.slots.at(0, 0)));
}

TEST(Evaluate, OracleStubGivesIdentityConfusion) {
  const auto ds = labelled_dataset(5);
  const auto r = evaluate(label_from_memory, ds, tiny_memory());
  EXPECT_EQ(r.samples, 15u);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(r.confusion[i][j], i == j ? 5u : 0u);
  for (const auto& p : r.precision) EXPECT_EQ(p, 1.0);
  EXPECT_EQ(r.macro_precision, 1.0);
  EXPECT_EQ(r.false_positive_rate, 0.0);
}

TEST(Evaluate, AlwaysLaneKeepLeavesOtherClassesUndefined) {
  const auto ds = labelled_dataset(4);
  const auto r = evaluate([](const MemorySnapshot&) { return Intention::kLaneKeep; }, ds,
                          tiny_memory());
  EXPECT_DOUBLE_EQ(*r.precision[0], 1.0 / 3.0);
  EXPECT_FALSE(r.precision[1].has_value());
  EXPECT_FALSE(r.precision[2].has_value());
  EXPECT_DOUBLE_EQ(*r.macro_precision, 1.0 / 3.0);
  EXPECT_EQ(r.false_positive_rate, 0.0);
}

TEST(Evaluate, FalsePositiveRateCountsAnyLaneChange) {
  const auto ds = labelled_dataset(4);  // two LK_with_SOP sequences
  int calls = 0;
  const auto r = evaluate(
      [&](const MemorySnapshot&) {
        return (calls++ % 2) == 0 ? Intention::kRightLaneChange : Intention::kLeftLaneChange;
      },
      ds, tiny_memory());
  EXPECT_EQ(r.false_positive_rate, 1.0);
  EXPECT_FALSE(r.precision[0].has_value());
}

TEST(Evaluate, EmptyTestSetThrows) {
  auto ds = labelled_dataset(2);
  ds.test.clear();
  EXPECT_THROW(evaluate(label_from_memory, ds, tiny_memory()), std::invalid_argument);
}

TEST(Evaluate, ReportMatchesHandTallyOfLoggedPredictions) {
  ModelConfig cfg;
  cfg.feature_dim = 3;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.latent_tokens = 2;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.ff_dim = 8;
  MemoryConfig mem;
  mem.fps = 1;
  mem.work_seconds = 3;
  mem.long_seconds = 4;
  cfg.work_slots = 3;
  cfg.long_slots = 4;
  const Lstr model(cfg);

  GeneratorConfig g;
  g.feature_dim = 3;
  g.memory = mem;
  ClientStyle style;
  style.false_positive_rate = 0.5;
  auto ds = split_train_test(generate_client_dataset(style, 60, 7, g), 0.5, 7);

  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto params = model.init(seed);
    std::vector<Intention> logged;
    const Predictor logging = [&](const MemorySnapshot& m) {
      logged.push_back(model.predict(params, m));
      return logged.back();
    };
    const auto r = evaluate(logging, ds, mem);
    ASSERT_EQ(logged.size(), ds.test.size());

    std::size_t conf[3][3] = {};
    std::size_t sop = 0, sop_lc = 0;
    for (std::size_t k = 0; k < ds.test.size(); ++k) {
      const auto& s = ds.sequences[ds.test[k]];
      ++conf[static_cast<int>(s.label)][static_cast<int>(logged[k])];
      if (s.scenario == Scenario::kLaneKeepSop) {
        ++sop;
        sop_lc += logged[k] != Intention::kLaneKeep;
      }
    }
    std::size_t total = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        EXPECT_EQ(r.confusion[i][j], conf[i][j]);
        total += r.confusion[i][j];
      }
    EXPECT_EQ(total, r.samples);
    EXPECT_EQ(*r.false_positive_rate, static_cast<double>(sop_lc) / static_cast<double>(sop));

    const auto again = evaluate(model, params, ds, mem);
    EXPECT_EQ(again.confusion, r.confusion);

    for (std::size_t c = 0; c < 3; ++c) {
      const auto cls = static_cast<Intention>(c);
      const std::size_t predicted = conf[0][c] + conf[1][c] + conf[2][c];
      if (predicted == 0) {
        EXPECT_FALSE(r.precision[c].has_value());
        continue;
      }
      // precision * (TP + FP) == TP exactly
      EXPECT_EQ(*r.precision[c] * static_cast<double>(r.predicted_count(cls)),
                static_cast<double>(r.true_positives(cls)));
    }
  }
}

TEST(Tally, MacroAveragesDefinedClassesOnly) {
  const std::vector<Prediction> preds = {
      {Intention::kLaneKeep, Intention::kLaneKeep, Scenario::kLaneKeepFop},
      {Intention::kLeftLaneChange, Intention::kLaneKeep, Scenario::kLaneChangeSop},
      {Intention::kLeftLaneChange, Intention::kLeftLaneChange, Scenario::kLaneChangeSop},
  };
  const auto r = tally(preds);
  EXPECT_DOUBLE_EQ(*r.precision[0], 0.5);
  EXPECT_DOUBLE_EQ(*r.precision[1], 1.0);
  EXPECT_FALSE(r.precision[2].has_value());
  EXPECT_DOUBLE_EQ(*r.macro_precision, 0.75);
  EXPECT_FALSE(r.false_positive_rate.has_value());
}

}  // namespace
}  // namespace pfl
