#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "pfl/tensor.hpp"

namespace pfl {

/// Camera feature blocks, in on-frame order.
enum class Block : std::size_t { kFront = 0, kRear = 1, kCabin = 2 };
inline constexpr std::size_t kNumBlocks = 3;

/// One time step: front | rear | cabin feature blocks laid out contiguously.
struct FeatureFrame {
  std::vector<double> values;
  std::size_t timestamp = 0;

  std::span<const double> block(Block b, std::size_t feature_dim) const {
    return std::span<const double>(values).subspan(
        static_cast<std::size_t>(b) * feature_dim, feature_dim);
  }
  std::span<double> block(Block b, std::size_t feature_dim) {
    return std::span<double>(values).subspan(static_cast<std::size_t>(b) * feature_dim,
                                             feature_dim);
  }
};

/// Memory lengths are given in seconds; slot counts follow from the frame
/// rate (defaults: 12 work slots, 48 long slots).
struct MemoryConfig {
  int fps = 4;
  double work_seconds = 3.0;
  double long_seconds = 12.0;

  std::size_t work_slots() const;
  std::size_t long_slots() const;
  /// Throws std::invalid_argument when either memory would have no slots.
  void validate() const;
};

/// Fixed-size slot array handed to the model. Slot 0 holds the newest frame;
/// invalid slots are zero rows with mask == false.
struct MemoryView {
  Tensor slots;
  std::vector<bool> mask;

  std::size_t valid_count() const;
};

struct MemorySnapshot {
  MemoryView long_view;
  MemoryView work_view;
};

/// The two FIFO queues. New frames enter work memory; the oldest work frame
/// moves to long memory once work memory is full, and the oldest long frame
/// is dropped once long memory is full.
class MemoryState {
 public:
  MemoryState(MemoryConfig config, std::size_t frame_width);

  /// Throws ShapeError on a frame of the wrong width.
  void push(FeatureFrame frame);
  void reset();
  MemorySnapshot snapshot() const;

  // Oldest -> newest.
  const std::deque<FeatureFrame>& work() const { return work_; }
  const std::deque<FeatureFrame>& long_memory() const { return long_; }

  const MemoryConfig& config() const { return config_; }
  std::size_t frame_width() const { return frame_width_; }
  std::size_t work_capacity() const { return work_capacity_; }
  std::size_t long_capacity() const { return long_capacity_; }

 private:
  MemoryConfig config_;
  std::size_t frame_width_;
  std::size_t work_capacity_;
  std::size_t long_capacity_;
  std::deque<FeatureFrame> work_;
  std::deque<FeatureFrame> long_;
};

MemoryState push_frame(MemoryState state, FeatureFrame frame);
MemoryState reset(MemoryState state);

/// Streams `frames` through a fresh memory and returns the final snapshot.
MemorySnapshot stream_snapshot(const MemoryConfig& config, std::size_t frame_width,
                               std::span<const FeatureFrame> frames);

}  // namespace pfl
