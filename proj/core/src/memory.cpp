#include "pfl/memory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pfl {

namespace {

std::size_t slots_for(int fps, double seconds, const char* what) {
  const double n = static_cast<double>(fps) * seconds;
  if (!(n >= 1.0) || std::abs(n - std::round(n)) > 1e-9) {
    throw std::invalid_argument(std::string(what) +
                                " memory needs fps * seconds to be a positive integer, got " +
                                std::to_string(n));
  }
  return static_cast<std::size_t>(std::llround(n));
}

MemoryView make_view(const std::deque<FeatureFrame>& queue, std::size_t capacity,
                     std::size_t width) {
  MemoryView view{Tensor::zeros(capacity, width), std::vector<bool>(capacity, false)};
  // Newest frame goes to slot 0.
  std::size_t slot = 0;
  for (auto it = queue.rbegin(); it != queue.rend(); ++it, ++slot) {
    std::copy(it->values.begin(), it->values.end(),
              view.slots.data().begin() + static_cast<std::ptrdiff_t>(slot * width));
    view.mask[slot] = true;
  }
  return view;
}

}  // namespace

std::size_t MemoryConfig::work_slots() const { return slots_for(fps, work_seconds, "work"); }
std::size_t MemoryConfig::long_slots() const { return slots_for(fps, long_seconds, "long"); }

void MemoryConfig::validate() const {
  if (fps <= 0) throw std::invalid_argument("fps must be positive");
  (void)work_slots();
  (void)long_slots();
}

std::size_t MemoryView::valid_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

MemoryState::MemoryState(MemoryConfig config, std::size_t frame_width)
    : config_(config),
      frame_width_(frame_width),
      work_capacity_(config.work_slots()),
      long_capacity_(config.long_slots()) {
  config_.validate();
  if (frame_width == 0) throw std::invalid_argument("frame width must be positive");
}

void MemoryState::push(FeatureFrame frame) {
  if (frame.values.size() != frame_width_) {
    throw ShapeError("frame width " + std::to_string(frame.values.size()) +
                     " does not match memory width " + std::to_string(frame_width_));
  }
  work_.push_back(std::move(frame));
  if (work_.size() > work_capacity_) {
    long_.push_back(std::move(work_.front()));
    work_.pop_front();
    if (long_.size() > long_capacity_) long_.pop_front();
  }
}

void MemoryState::reset() {
  work_.clear();
  long_.clear();
}

MemorySnapshot MemoryState::snapshot() const {
  return MemorySnapshot{make_view(long_, long_capacity_, frame_width_),
                        make_view(work_, work_capacity_, frame_width_)};
}

MemoryState push_frame(MemoryState state, FeatureFrame frame) {
  state.push(std::move(frame));
  return state;
}

MemoryState reset(MemoryState state) {
  state.reset();
  return state;
}

MemorySnapshot stream_snapshot(const MemoryConfig& config, std::size_t frame_width,
                               std::span<const FeatureFrame> frames) {
  MemoryState state(config, frame_width);
  for (const auto& f : frames) state.push(f);
  return state.snapshot();
}

}  // namespace pfl
