#include <algorithm>

#include <gtest/gtest.h>

#include "pfl/memory.hpp"
#include "pfl/rng.hpp"

namespace pfl {
namespace {

// Frame whose single feature is its id, so queues can be compared by id.
FeatureFrame frame(double id) { return FeatureFrame{{id}, static_cast<std::size_t>(id)}; }

std::vector<double> ids(const std::deque<FeatureFrame>& q) {
  std::vector<double> out;
  for (const auto& f : q) out.push_back(f.values[0]);
  return out;
}

MemoryConfig slots(int work, int lng) {
  MemoryConfig c;
  c.fps = 1;
  c.work_seconds = work;
  c.long_seconds = lng;
  return c;
}

TEST(MemoryConfig, DefaultsGiveTwelveAndFortyEight) {
  const MemoryConfig c;
  EXPECT_EQ(c.work_slots(), 12u);
  EXPECT_EQ(c.long_slots(), 48u);
}

TEST(MemoryConfig, RejectsEmptyMemories) {
  MemoryConfig c;
  c.work_seconds = 0.1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = MemoryConfig{};
  c.fps = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(PushFrame, HandSimulatedTrace) {
  MemoryState s(slots(2, 3), 1);
  for (int i = 1; i <= 7; ++i) s = push_frame(s, frame(i));
  EXPECT_EQ(ids(s.work()), (std::vector<double>{6, 7}));
  EXPECT_EQ(ids(s.long_memory()), (std::vector<double>{3, 4, 5}));

  const MemorySnapshot snap = s.snapshot();
  EXPECT_EQ(snap.long_view.mask, (std::vector<bool>{true, true, true}));
  EXPECT_EQ(snap.work_view.mask, (std::vector<bool>{true, true}));
  // Newest first.
  EXPECT_EQ(snap.work_view.slots.values(), (std::vector<double>{7, 6}));
  EXPECT_EQ(snap.long_view.slots.values(), (std::vector<double>{5, 4, 3}));
}

TEST(PushFrame, FirstFrameGoesToWorkMemory) {
  MemoryState s(slots(2, 3), 1);
  s.push(frame(1));
  EXPECT_EQ(ids(s.work()), (std::vector<double>{1}));
  EXPECT_TRUE(s.long_memory().empty());
}

TEST(PushFrame, ExactlyFullWorkMemoryLeavesLongEmpty) {
  MemoryState s(slots(4, 3), 1);
  for (int i = 0; i < 4; ++i) s.push(frame(i));
  EXPECT_EQ(s.work().size(), 4u);
  EXPECT_TRUE(s.long_memory().empty());
}

TEST(PushFrame, WidthMismatchThrows) {
  MemoryState s(slots(2, 3), 2);
  EXPECT_THROW(s.push(frame(1)), ShapeError);
}

TEST(Snapshot, EmptyStateIsAllInvalid) {
  const MemoryState s(slots(2, 3), 4);
  const auto snap = s.snapshot();
  EXPECT_EQ(snap.work_view.valid_count(), 0u);
  EXPECT_EQ(snap.long_view.valid_count(), 0u);
  EXPECT_EQ(snap.long_view.slots.shape(), (std::vector<std::size_t>{3, 4}));
  for (double v : snap.long_view.slots.data()) EXPECT_EQ(v, 0.0);
}

TEST(Snapshot, IsPure) {
  MemoryState s(slots(2, 3), 1);
  for (int i = 0; i < 4; ++i) s.push(frame(i));
  const auto a = s.snapshot();
  const auto b = s.snapshot();
  EXPECT_TRUE(a.work_view.slots.bit_equal(b.work_view.slots));
  EXPECT_TRUE(a.long_view.slots.bit_equal(b.long_view.slots));
  EXPECT_EQ(a.work_view.mask, b.work_view.mask);
  EXPECT_EQ(a.long_view.mask, b.long_view.mask);
}

TEST(Reset, EmptiesBothQueues) {
  MemoryState s(slots(2, 3), 1);
  for (int i = 0; i < 6; ++i) s.push(frame(i));
  s = reset(s);
  EXPECT_EQ(s.snapshot().work_view.valid_count(), 0u);
  EXPECT_EQ(s.snapshot().long_view.valid_count(), 0u);
  s.reset();
  EXPECT_TRUE(s.work().empty() && s.long_memory().empty());

  MemoryState fresh(slots(2, 3), 1);
  s.push(frame(9));
  fresh.push(frame(9));
  EXPECT_EQ(ids(s.work()), ids(fresh.work()));
  EXPECT_EQ(ids(s.long_memory()), ids(fresh.long_memory()));
}

// Randomized comparison with a keep-everything reference.
TEST(MemoryState, MatchesKeepAllReference) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int ms = 1 + static_cast<int>(rng.below(5));
    const int ml = 1 + static_cast<int>(rng.below(8));
    const std::size_t total = rng.below(10 * (ms + ml) + 1);
    MemoryState s(slots(ms, ml), 1);
    std::vector<double> all;
    for (std::size_t t = 0; t < total; ++t) {
      s.push(frame(static_cast<double>(t)));
      all.push_back(static_cast<double>(t));
    }
    const std::size_t w = std::min<std::size_t>(total, ms);
    const std::size_t l = std::min<std::size_t>(total > static_cast<std::size_t>(ms) ? total - ms : 0, ml);
    const std::vector<double> want_work(all.end() - w, all.end());
    const std::vector<double> want_long(all.end() - w - l, all.end() - w);
    ASSERT_EQ(ids(s.work()), want_work);
    ASSERT_EQ(ids(s.long_memory()), want_long);
    if (!s.long_memory().empty()) ASSERT_EQ(s.work().size(), static_cast<std::size_t>(ms));
    // No frame in both queues.
    for (double id : ids(s.work())) {
      const auto lq = ids(s.long_memory());
      ASSERT_EQ(std::count(lq.begin(), lq.end(), id), 0);
    }
  }
}

}  // namespace
}  // namespace pfl
