// SPDX-License-Identifier: Apache-2.0

// Encoder/decoder stacks of strided (downsampling) and transposed
// (upsampling) 1D convolutions. Layers deeper in the encoder hold fewer states
// than there are inputs, so the cached generator follows the firing schedule:
// a down layer fires every cache_every steps of its output stream, an up layer
// fires together with its producer and emits several nodes at once. Surplus
// outputs wait in a pending buffer that is drained one per step.

#pragma once

#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fastgen/cache.hpp"
#include "fastgen/conv.hpp"
#include "fastgen/generation.hpp"
#include "fastgen/network_spec.hpp"

namespace fastgen {

struct StridedPlan {
  std::vector<LayerRate> layers;
  Schedule schedule;
  Index period = 1;  ///< total downsampling factor
};

StridedPlan make_plan(std::span<const LayerRate> layers);

class StridedNetwork {
 public:
  explicit StridedNetwork(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const StridedPlan& plan() const { return plan_; }
  Index layer_count() const { return static_cast<Index>(layers_.size()); }
  Index kernel() const { return spec_.kernel; }
  const LayerRate& rate(Index i) const { return plan_.layers[static_cast<std::size_t>(i)]; }
  const ConvWeightsf& layer(Index i) const { return layers_[static_cast<std::size_t>(i)]; }
  ConvWeightsf& layer(Index i) { return layers_[static_cast<std::size_t>(i)]; }
  /// The last layer is the linear output projection; all others use tanh.
  bool is_output_layer(Index i) const { return i == layer_count() - 1; }

 private:
  NetworkSpec spec_;
  StridedPlan plan_;
  std::vector<ConvWeightsf> layers_;
};

struct ReceptiveSpan {
  Index count = 0;  ///< input positions that influence one output (max over phases)
  Index back = 0;   ///< furthest lookback from the output position (max over phases)
};

ReceptiveSpan strided_receptive_span(const StridedPlan& plan, Index kernel);
Index strided_receptive_field(const NetworkSpec& spec);

/// Teacher-forced forward pass over a whole sequence; the input is
/// zero-padded to a multiple of the period and the first T outputs returned.
std::vector<float> strided_forward(const StridedNetwork& net, std::span<const float> inputs, OpCounter& counter);

/// Recomputes the whole stack over a period-aligned window covering the
/// receptive field of the current output.
class StridedNaive {
 public:
  explicit StridedNaive(const StridedNetwork& net, Index batch = 1);

  const Batchf& step(const Batchf& input);

  const OpCounter& counter() const { return counter_; }
  Index t() const { return t_; }

 private:
  const StridedNetwork* net_;
  Index batch_;
  ReceptiveSpan span_;
  Index history_len_;
  Batchf history_;  // history_len_ x batch ring
  Batchf output_;
  OpCounter counter_;
  Index t_ = 0;
};

class StridedIncremental {
 public:
  explicit StridedIncremental(const StridedNetwork& net, Index batch = 1);

  const Batchf& step(const Batchf& input);

  const OpCounter& counter() const { return counter_; }
  Index t() const { return t_; }
  /// Nodes each layer computed during the last step.
  const std::vector<Index>& last_nodes() const { return last_nodes_; }
  /// Whether the last emitted output was computed during the last step.
  bool last_fresh() const { return last_fresh_; }
  Index pending() const { return static_cast<Index>(pending_.size()); }
  Index stored_values() const;

 private:
  const StridedNetwork* net_;
  Index batch_;
  std::vector<std::optional<FifoCache<float>>> caches_;
  std::vector<std::vector<Batchf>> arrivals_;
  std::vector<Index> arrived_;
  std::vector<Index> consumed_;
  std::deque<Batchf> pending_;
  Batchf scratch_;
  Batchf output_;
  std::vector<const Batchf*> taps_;
  std::vector<Index> last_nodes_;
  bool last_fresh_ = false;
  OpCounter counter_;
  Index t_ = 0;
};

std::vector<float> strided_naive_generate(const StridedNetwork& net, Index n_steps, std::span<const float> prime = {},
                                          OpCounter* counter = nullptr);
std::vector<float> strided_incremental_generate(const StridedNetwork& net, Index n_steps,
                                                std::span<const float> prime = {}, OpCounter* counter = nullptr);

/// One step of the symbolic firing trace.
struct TraceStep {
  Index t = 0;
  std::vector<Index> nodes;     ///< nodes computed per layer
  Index outputs_buffered = 0;   ///< outputs added to the pending buffer
  Index outputs_emitted = 1;    ///< always one sample per step
  bool fresh = false;           ///< emitted output was computed this step

  friend bool operator==(const TraceStep&, const TraceStep&) = default;
};

/// Steps 0 .. t_max-1 derived from the schedule alone.
std::vector<TraceStep> firing_trace(const StridedPlan& plan, Index t_max);

/// Line-oriented dump, one line per (step, layer), layers numbered from 1:
///   t=2 layer=1 nodes=1 emit=buffered
std::string format_trace(std::span<const TraceStep> trace);

/// Amortised per-step cost of the cached engine (average over one period).
StepCost strided_cached_step_cost(const StridedNetwork& net);
/// Per-step cost of the naive engine in steady state (average over one period).
StepCost strided_naive_step_cost(const StridedNetwork& net);
/// Steps after which both engines are in steady state; a multiple of the period.
Index strided_warmup_steps(const StridedNetwork& net);

}  // namespace fastgen
