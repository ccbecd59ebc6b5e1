// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fastgen/tensor.hpp"

namespace fastgen {

/// Per-layer queue of hidden states.
///
/// The queue starts full of zero states, which stand in for the causal
/// padding before the first step. On steps where the cache is ready (the
/// step index is a multiple of cache_every) the owning layer pops the oldest
/// state and pushes the newest, so a pop at step t returns the state pushed at
/// step t - capacity * cache_every. Call tick() once at the end of every
/// generation step.
template <typename Scalar>
class FifoCache {
 public:
  FifoCache(Index capacity, Index channels, Index cache_every, Index batch = 1)
      : capacity_(capacity), channels_(channels), cache_every_(cache_every), batch_(batch) {
    if (capacity < 1 || channels < 1 || cache_every < 1 || batch < 1) {
      throw InvalidParameter("fifo cache: capacity, channels, cache_every and batch must be positive");
    }
    slots_.assign(static_cast<std::size_t>(capacity_), Batch<Scalar>::Zero(channels_, batch_));
    size_ = capacity_;
  }

  Index capacity() const { return capacity_; }
  Index channels() const { return channels_; }
  Index batch() const { return batch_; }
  Index cache_every() const { return cache_every_; }
  Index phase() const { return phase_; }
  Index size() const { return size_; }
  bool ready() const { return phase_ == 0; }

  /// i-th oldest stored state.
  const Batch<Scalar>& peek(Index i) const {
    if (i < 0 || i >= size_) throw ScheduleViolation("fifo cache: peek past the stored states");
    return slots_[static_cast<std::size_t>((head_ + i) % capacity_)];
  }

  /// Removes the oldest state and swaps it into out.
  void pop(Batch<Scalar>& out) {
    check_ready("pop");
    if (size_ == 0) throw ScheduleViolation("fifo cache: pop from an empty cache");
    out.swap(slots_[static_cast<std::size_t>(head_)]);
    head_ = (head_ + 1) % capacity_;
    --size_;
  }

  Batch<Scalar> pop() {
    Batch<Scalar> out;
    pop(out);
    return out;
  }

  void push(const Batch<Scalar>& state) {
    check_ready("push");
    if (state.rows() != channels_ || state.cols() != batch_) {
      throw ShapeError("fifo cache: pushed state is " + std::to_string(state.rows()) + "x" +
                       std::to_string(state.cols()) + ", expected " + std::to_string(channels_) + "x" +
                       std::to_string(batch_));
    }
    if (size_ == capacity_) throw ScheduleViolation("fifo cache: push into a full cache");
    auto& slot = slots_[static_cast<std::size_t>((head_ + size_) % capacity_)];
    slot.resize(channels_, batch_);
    slot = state;
    ++size_;
  }

  void tick() { phase_ = (phase_ + 1) % cache_every_; }

  /// Refill with zero states and restart the phase.
  void reset() {
    for (auto& s : slots_) s.setZero(channels_, batch_);
    head_ = 0;
    size_ = capacity_;
    phase_ = 0;
  }

  /// Scalars currently held.
  Index stored_values() const { return size_ * channels_ * batch_; }

 private:
  void check_ready(const char* op) const {
    if (!ready()) {
      throw ScheduleViolation(std::string("fifo cache: ") + op + " at phase " + std::to_string(phase_) +
                              " of cache_every " + std::to_string(cache_every_));
    }
  }

  Index capacity_;
  Index channels_;
  Index cache_every_;
  Index batch_;
  std::vector<Batch<Scalar>> slots_;
  Index head_ = 0;
  Index size_ = 0;
  Index phase_ = 0;
};

/// The last `height` complete rows of a 2D feature map. Rows start as zeros
/// (the top border). push_row drops the oldest row.
template <typename Scalar>
class RowCache {
 public:
  RowCache(Index height, Index width, Index channels, Index batch = 1)
      : height_(height), width_(width), channels_(channels), batch_(batch) {
    if (height < 1 || width < 1 || channels < 1 || batch < 1) {
      throw InvalidParameter("row cache: height, width, channels and batch must be positive");
    }
    rows_.assign(static_cast<std::size_t>(height_),
                 std::vector<Batch<Scalar>>(static_cast<std::size_t>(width_), Batch<Scalar>::Zero(channels_, batch_)));
    zero_ = Batch<Scalar>::Zero(channels_, batch_);
  }

  Index height() const { return height_; }
  Index width() const { return width_; }
  Index channels() const { return channels_; }
  Index rows_pushed() const { return rows_pushed_; }

  void push_row(std::span<const Batch<Scalar>> row) {
    if (static_cast<Index>(row.size()) != width_) {
      throw InvalidRow("row cache: pushed row has " + std::to_string(row.size()) + " columns, expected " +
                       std::to_string(width_));
    }
    for (const auto& s : row) {
      if (s.rows() != channels_ || s.cols() != batch_) throw ShapeError("row cache: pushed state has wrong shape");
    }
    auto& slot = rows_[static_cast<std::size_t>(oldest_)];
    std::copy(row.begin(), row.end(), slot.begin());
    oldest_ = (oldest_ + 1) % height_;
    ++rows_pushed_;
  }

  /// i-th oldest cached row, column c; zero outside [0, width).
  const Batch<Scalar>& at(Index i, Index c) const {
    if (c < 0 || c >= width_) return zero_;
    return rows_[static_cast<std::size_t>((oldest_ + i) % height_)][static_cast<std::size_t>(c)];
  }

  /// The height x kernel_width tap block whose right edge is column col_end,
  /// oldest row first and columns ascending. Columns outside the image read
  /// the zero state.
  void window(Index col_end, Index kernel_width, std::vector<const Batch<Scalar>*>& taps) const {
    if (kernel_width < 1 || kernel_width > width_) {
      throw InsufficientContext("row cache: kernel width " + std::to_string(kernel_width) + " exceeds image width " +
                                std::to_string(width_));
    }
    taps.clear();
    for (Index i = 0; i < height_; ++i) {
      for (Index j = 0; j < kernel_width; ++j) taps.push_back(&at(i, col_end - kernel_width + 1 + j));
    }
  }

  Index stored_values() const { return height_ * width_ * channels_ * batch_; }

 private:
  Index height_;
  Index width_;
  Index channels_;
  Index batch_;
  std::vector<std::vector<Batch<Scalar>>> rows_;
  Batch<Scalar> zero_;
  Index oldest_ = 0;
  Index rows_pushed_ = 0;
};

enum class LayerKind { dilated, down, up };

/// One layer's rate behaviour: dilation for dilated layers, stride for
/// down/up layers.
struct LayerRate {
  LayerKind kind = LayerKind::dilated;
  Index factor = 1;

  friend bool operator==(const LayerRate&, const LayerRate&) = default;
};

std::string to_string(const LayerRate& rate);
LayerRate parse_layer_rate(const std::string& text);

/// Firing schedule of a layer stack.
///
/// cache_every has one entry per stream level: entry 0 is the network input,
/// entry i+1 the output of layer i. A level-l node is produced once per
/// cache_every[l] steps on average. Layer i fires (computes new nodes) on
/// steps that are multiples of fire_every[i] and then produces emit_count[i]
/// nodes at once.
struct Schedule {
  std::vector<Index> cache_every;
  std::vector<Index> fire_every;
  std::vector<Index> emit_count;
  Index period = 1;

  Index layers() const { return static_cast<Index>(fire_every.size()); }
  bool fires(Index layer, Index t) const { return t % fire_every.at(static_cast<std::size_t>(layer)) == 0; }
};

/// Builds the schedule for a stack. Down layers multiply the running
/// cache_every by their stride and up layers divide it. Supported topologies:
/// dilated-only stacks, and balanced encoder/decoder stacks (all down layers
/// before all up layers, equal total factors).
Schedule schedule_build(std::span<const LayerRate> layers);

inline bool schedule_fires(const Schedule& schedule, Index layer, Index t) { return schedule.fires(layer, t); }

}  // namespace fastgen
