// SPDX-License-Identifier: Apache-2.0

// 1D stacks of causal dilated convolutions (dilation 2^i within each stack),
// tanh hidden layers and a linear 1x1 head, with two generators:
//
//  * DilatedNaive recomputes the whole dependency cone of the current output
//    at every step.
//  * DilatedIncremental keeps one FIFO per layer holding that layer's past
//    inputs; each step pops the oldest state, computes one node per layer and
//    pushes the new states.

#pragma once

#include <deque>
#include <span>
#include <vector>

#include "fastgen/cache.hpp"
#include "fastgen/conv.hpp"
#include "fastgen/generation.hpp"
#include "fastgen/network_spec.hpp"

namespace fastgen {

class DilatedNetwork {
 public:
  /// Draws all weights from spec.seed.
  explicit DilatedNetwork(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  Index layer_count() const { return static_cast<Index>(layers_.size()); }
  Index kernel() const { return spec_.kernel; }
  const std::vector<Index>& dilations() const { return dilations_; }
  Index dilation(Index layer) const { return dilations_[static_cast<std::size_t>(layer)]; }

  const ConvWeightsf& layer(Index i) const { return layers_[static_cast<std::size_t>(i)]; }
  ConvWeightsf& layer(Index i) { return layers_[static_cast<std::size_t>(i)]; }
  const ConvWeightsf& head() const { return head_; }
  ConvWeightsf& head() { return head_; }

  /// Input positions that can influence one output: 1 + sum (k-1) * dilation.
  Index receptive_field() const;

 private:
  NetworkSpec spec_;
  std::vector<Index> dilations_;
  std::vector<ConvWeightsf> layers_;
  ConvWeightsf head_;
};

/// Receptive field for the 1D families. Throws UnsupportedTopology for image2d.
Index receptive_field(const NetworkSpec& spec);

/// Teacher-forced forward pass over a whole sequence with conv1d_full.
std::vector<float> forward_sequence(const DilatedNetwork& net, std::span<const float> inputs, OpCounter& counter);

/// Nodes of each level that one output depends on, as lags behind the
/// current step. Level 0 is the network input, level i+1 the output of layer i.
struct ConeLevel {
  std::vector<Index> lags;
  /// For levels >= 1: k indices per node into the previous level's lags,
  /// oldest tap first.
  std::vector<Index> taps;
};

std::vector<ConeLevel> dependency_cone(const DilatedNetwork& net);

class DilatedNaive {
 public:
  explicit DilatedNaive(const DilatedNetwork& net, Index batch = 1);

  /// Feeds the step-t input (1 x batch) and returns the step-t output.
  const Batchf& step(const Batchf& input);

  const OpCounter& counter() const { return counter_; }
  Index t() const { return t_; }

 private:
  const DilatedNetwork* net_;
  Index batch_;
  std::vector<ConeLevel> cone_;
  Index history_len_;
  std::vector<Batchf> history_;
  std::vector<std::vector<Batchf>> values_;
  std::vector<std::vector<const Batchf*>> ptrs_;
  std::vector<const Batchf*> taps_;
  Batchf zero_input_;
  Batchf zero_hidden_;
  Batchf output_;
  OpCounter counter_;
  Index t_ = 0;
};

/// Everything that changes during one cached generation run.
struct GenState {
  std::vector<FifoCache<float>> caches;
  std::deque<Batchf> pending;
  Index t = 0;
  OpCounter counter;
  Batchf last_output;

  /// Scalars held by caches and the pending buffer.
  Index stored_values() const;
};

class DilatedIncremental {
 public:
  explicit DilatedIncremental(const DilatedNetwork& net, Index batch = 1);

  const Batchf& step(const Batchf& input);

  const GenState& state() const { return state_; }
  const OpCounter& counter() const { return state_.counter; }
  Index t() const { return state_.t; }

 private:
  const DilatedNetwork* net_;
  GenState state_;
  std::vector<Batchf> popped_;
  std::vector<Batchf> outputs_;
  std::vector<const Batchf*> taps_;
};

std::vector<float> naive_generate(const DilatedNetwork& net, std::span<const float> prime, Index n_steps,
                                  OpCounter* counter = nullptr);
std::vector<float> incremental_generate(const DilatedNetwork& net, std::span<const float> prime, Index n_steps,
                                        OpCounter* counter = nullptr);

/// Per-step cost of the cached engine (constant from step 0).
StepCost cached_step_cost(const DilatedNetwork& net);
/// Per-step cost of the naive engine once t >= receptive_field - 1.
StepCost naive_step_cost(const DilatedNetwork& net);
/// Scalars held by the cached engine's FIFOs for batch 1: sum (k-1) * dilation * in_channels.
Index cache_capacity_values(const DilatedNetwork& net);

}  // namespace fastgen
