// SPDX-License-Identifier: Apache-2.0

#include "fastgen/strided.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace fastgen {

namespace {

void check_input(const Batchf& input, Index batch) {
  if (input.rows() != 1 || input.cols() != batch) {
    throw ShapeError("step input must be 1 x " + std::to_string(batch) + ", got " + std::to_string(input.rows()) + "x" +
                     std::to_string(input.cols()));
  }
}

Index floor_div(Index a, Index b) {
  const Index q = a / b;
  return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
}

Index cache_every_at(const StridedPlan& plan, Index level) {
  return plan.schedule.cache_every[static_cast<std::size_t>(level)];
}

}  // namespace

StridedPlan make_plan(std::span<const LayerRate> layers) {
  StridedPlan plan;
  plan.layers.assign(layers.begin(), layers.end());
  plan.schedule = schedule_build(layers);
  plan.period = plan.schedule.period;
  return plan;
}

StridedNetwork::StridedNetwork(NetworkSpec spec) : spec_(std::move(spec)) {
  if (spec_.family != Family::strided) throw InvalidParameter("StridedNetwork needs a strided spec");
  validate(spec_);
  plan_ = make_plan(spec_.strides);
  WeightSampler sampler(spec_.seed);
  const Index n = static_cast<Index>(plan_.layers.size());
  for (Index i = 0; i < n; ++i) {
    const Index in = i == 0 ? 1 : spec_.channels;
    const Index out = i == n - 1 ? 1 : spec_.channels;
    layers_.push_back(sampler.conv({out, in, spec_.kernel}));
  }
}

ReceptiveSpan strided_receptive_span(const StridedPlan& plan, Index kernel) {
  // Trace index sets backwards from an output far from the left border so
  // no position is clipped.
  const Index base = plan.period * (Index{1} << 20);
  ReceptiveSpan span;
  for (Index q = 0; q < plan.period; ++q) {
    const Index n = base + q;
    std::set<Index> cur{n};
    for (Index i = static_cast<Index>(plan.layers.size()) - 1; i >= 0; --i) {
      const LayerRate& rate = plan.layers[static_cast<std::size_t>(i)];
      const Index s = rate.factor;
      std::set<Index> below;
      for (Index p : cur) {
        if (rate.kind == LayerKind::down) {
          for (Index a = 0; a < kernel; ++a) below.insert(s * p - (kernel - 1) + a);
        } else {
          const Index m = floor_div(p, s);
          const Index r = p - m * s;
          for (Index j = 0; j < transposed_tap_count(kernel, s, r); ++j) below.insert(m - j);
        }
      }
      cur = std::move(below);
    }
    span.count = std::max(span.count, static_cast<Index>(cur.size()));
    if (!cur.empty()) span.back = std::max(span.back, n - *cur.begin());
  }
  return span;
}

Index strided_receptive_field(const NetworkSpec& spec) {
  validate(spec);
  if (spec.family != Family::strided) throw InvalidParameter("strided_receptive_field needs a strided spec");
  return strided_receptive_span(make_plan(spec.strides), spec.kernel).count;
}

namespace {

Tensorf run_stack(const StridedNetwork& net, Tensorf x, OpCounter& counter) {
  for (Index i = 0; i < net.layer_count(); ++i) {
    const LayerRate& rate = net.rate(i);
    x = rate.kind == LayerKind::down ? strided_conv1d(net.layer(i), x, rate.factor, counter)
                                     : strided_transposed_conv1d(net.layer(i), x, rate.factor, counter);
    if (!net.is_output_layer(i)) tanh_inplace(x.values());
  }
  return x;
}

}  // namespace

std::vector<float> strided_forward(const StridedNetwork& net, std::span<const float> inputs, OpCounter& counter) {
  if (inputs.empty()) throw EmptyInput("strided_forward: empty input");
  const Index len = static_cast<Index>(inputs.size());
  const Index period = net.plan().period;
  const Index padded = detail::ceil_div(len, period) * period;
  Tensorf x({1, padded});
  std::copy(inputs.begin(), inputs.end(), x.data());
  const Tensorf y = run_stack(net, std::move(x), counter);
  return {y.data(), y.data() + len};
}

StridedNaive::StridedNaive(const StridedNetwork& net, Index batch)
    : net_(&net), batch_(batch), span_(strided_receptive_span(net.plan(), net.kernel())) {
  if (batch < 1) throw InvalidParameter("batch must be >= 1");
  history_len_ = span_.back + net.plan().period;
  history_ = Batchf::Zero(history_len_, batch);
  output_ = Batchf::Zero(1, batch);
}

const Batchf& StridedNaive::step(const Batchf& input) {
  check_input(input, batch_);
  const Index period = net_->plan().period;
  history_.row(t_ % history_len_) = input.row(0);

  // Period-aligned window [start, end) that contains every input the current
  // output can see; positions after t are still unknown and read as zero.
  const Index start = std::max<Index>(0, floor_div(t_ - span_.back, period) * period);
  const Index end = (t_ / period + 1) * period;
  Tensorf x({1, end - start});
  for (Index b = 0; b < batch_; ++b) {
    x.values().setZero();
    for (Index p = start; p <= t_; ++p) x(0, p - start) = history_(p % history_len_, b);
    const Tensorf y = run_stack(*net_, x, counter_);
    output_(0, b) = y(0, t_ - start);
  }
  ++t_;
  return output_;
}

StridedIncremental::StridedIncremental(const StridedNetwork& net, Index batch) : net_(&net), batch_(batch) {
  if (batch < 1) throw InvalidParameter("batch must be >= 1");
  const auto& plan = net.plan();
  const Index n = net.layer_count();
  for (Index i = 0; i < n; ++i) {
    if (plan.layers[static_cast<std::size_t>(i)].kind == LayerKind::down) {
      caches_.emplace_back(std::in_place, net.kernel() - 1, net.layer(i).in_channels(), cache_every_at(plan, i), batch);
    } else {
      caches_.emplace_back(std::nullopt);
    }
  }
  arrivals_.resize(static_cast<std::size_t>(n + 1));
  arrived_.assign(static_cast<std::size_t>(n + 1), 0);
  consumed_.assign(static_cast<std::size_t>(n), 0);
  last_nodes_.assign(static_cast<std::size_t>(n), 0);
  output_ = Batchf::Zero(1, batch);
}

const Batchf& StridedIncremental::step(const Batchf& input) {
  check_input(input, batch_);
  const auto& plan = net_->plan();
  const Index n = net_->layer_count();
  const Index k = net_->kernel();

  auto slot = [this](Index level) -> Batchf& {
    auto& v = arrivals_[static_cast<std::size_t>(level)];
    auto& count = arrived_[static_cast<std::size_t>(level)];
    if (count == static_cast<Index>(v.size())) v.emplace_back();
    return v[static_cast<std::size_t>(count++)];
  };

  std::fill(arrived_.begin(), arrived_.end(), 0);
  slot(0) = input;

  for (Index i = 0; i < n; ++i) {
    const LayerRate& rate = plan.layers[static_cast<std::size_t>(i)];
    const ConvWeightsf& w = net_->layer(i);
    const Index arrived = arrived_[static_cast<std::size_t>(i)];
    const auto& inputs = arrivals_[static_cast<std::size_t>(i)];
    Index& nodes = last_nodes_[static_cast<std::size_t>(i)];
    nodes = 0;
    const bool fires = plan.schedule.fires(i, t_);

    if (rate.kind == LayerKind::down) {
      auto& cache = *caches_[static_cast<std::size_t>(i)];
      if (cache.ready() != (arrived == 1) || arrived > 1) {
        throw ScheduleViolation("strided: layer " + std::to_string(i + 1) + " got " + std::to_string(arrived) +
                                " inputs at phase " + std::to_string(cache.phase()));
      }
      if (arrived == 0) continue;
      const Batchf& node = inputs[0];
      const Index index = consumed_[static_cast<std::size_t>(i)]++;
      if (fires != (index % rate.factor == 0)) {
        throw ScheduleViolation("strided: layer " + std::to_string(i + 1) + " fired off schedule at t=" +
                                std::to_string(t_));
      }
      if (fires) {
        taps_.clear();
        for (Index j = 0; j < k - 1; ++j) taps_.push_back(&cache.peek(j));
        taps_.push_back(&node);
        Batchf& out = slot(i + 1);
        conv_point<float>(w, taps_, out, counter_);
        if (!net_->is_output_layer(i)) tanh_inplace(out);
        nodes = 1;
      }
      cache.pop(scratch_);
      cache.push(node);
    } else {
      if (fires != (arrived > 0)) {
        throw ScheduleViolation("strided: up layer " + std::to_string(i + 1) + " got " + std::to_string(arrived) +
                                " inputs at t=" + std::to_string(t_));
      }
      for (Index a = 0; a < arrived; ++a) {
        taps_.assign(1, &inputs[static_cast<std::size_t>(a)]);
        for (Index r = 0; r < rate.factor; ++r) {
          Batchf& out = slot(i + 1);
          if (r < k) {
            const Index kernel_tap[1] = {r};
            conv_point<float>(w, taps_, kernel_tap, out, counter_);
          } else {
            // No kernel tap lands on this residue: the node is its bias.
            out.resize(w.out_channels(), batch_);
            for (Index o = 0; o < w.out_channels(); ++o) out.row(o).setConstant(w.b(o));
            counter_.node_evals += static_cast<std::uint64_t>(batch_);
          }
          if (!net_->is_output_layer(i)) tanh_inplace(out);
          ++nodes;
        }
      }
    }
  }

  const Index fresh = arrived_[static_cast<std::size_t>(n)];
  for (Index a = 0; a < fresh; ++a) pending_.push_back(arrivals_[static_cast<std::size_t>(n)][static_cast<std::size_t>(a)]);
  if (pending_.empty()) throw ScheduleViolation("strided: no output available at t=" + std::to_string(t_));
  output_.swap(pending_.front());
  pending_.pop_front();
  last_fresh_ = fresh > 0;

  for (auto& c : caches_) {
    if (c) c->tick();
  }
  ++t_;
  return output_;
}

Index StridedIncremental::stored_values() const {
  Index total = 0;
  for (const auto& c : caches_) {
    if (c) total += c->stored_values();
  }
  for (const auto& p : pending_) total += p.size();
  return total;
}

std::vector<float> strided_naive_generate(const StridedNetwork& net, Index n_steps, std::span<const float> prime,
                                          OpCounter* counter) {
  StridedNaive engine(net, 1);
  const std::vector<std::vector<float>> primes{std::vector<float>(prime.begin(), prime.end())};
  auto out = rollout(engine, 1, primes, n_steps);
  if (counter) *counter = engine.counter();
  return std::move(out.front());
}

std::vector<float> strided_incremental_generate(const StridedNetwork& net, Index n_steps,
                                                std::span<const float> prime, OpCounter* counter) {
  StridedIncremental engine(net, 1);
  const std::vector<std::vector<float>> primes{std::vector<float>(prime.begin(), prime.end())};
  auto out = rollout(engine, 1, primes, n_steps);
  if (counter) *counter = engine.counter();
  return std::move(out.front());
}

std::vector<TraceStep> firing_trace(const StridedPlan& plan, Index t_max) {
  if (t_max < 1) throw InvalidParameter("firing_trace: t_max must be >= 1");
  const Index n = plan.schedule.layers();
  std::vector<TraceStep> trace;
  trace.reserve(static_cast<std::size_t>(t_max));
  for (Index t = 0; t < t_max; ++t) {
    TraceStep step;
    step.t = t;
    step.nodes.assign(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i) {
      if (plan.schedule.fires(i, t)) step.nodes[static_cast<std::size_t>(i)] = plan.schedule.emit_count[static_cast<std::size_t>(i)];
    }
    step.outputs_buffered = step.nodes.back();
    step.outputs_emitted = 1;
    step.fresh = step.outputs_buffered > 0;
    trace.push_back(std::move(step));
  }
  return trace;
}

std::string format_trace(std::span<const TraceStep> trace) {
  std::ostringstream os;
  for (const auto& step : trace) {
    for (std::size_t i = 0; i < step.nodes.size(); ++i) {
      os << "t=" << step.t << " layer=" << i + 1 << " nodes=" << step.nodes[i]
         << " emit=" << (step.fresh ? "fresh" : "buffered") << '\n';
    }
  }
  return os.str();
}

namespace {

/// MACs to produce every output of layer i that one input node triggers.
double macs_per_input(const StridedNetwork& net, Index i) {
  const ConvWeightsf& w = net.layer(i);
  const double per_tap = static_cast<double>(w.out_channels() * w.in_channels());
  const LayerRate& rate = net.rate(i);
  if (rate.kind == LayerKind::down) return per_tap * static_cast<double>(w.taps()) / static_cast<double>(rate.factor);
  double taps = 0;
  for (Index r = 0; r < rate.factor; ++r) taps += static_cast<double>(transposed_tap_count(w.taps(), rate.factor, r));
  return per_tap * taps;
}

double outputs_per_input(const LayerRate& rate) {
  return rate.kind == LayerKind::down ? 1.0 / static_cast<double>(rate.factor) : static_cast<double>(rate.factor);
}

/// Cost of running the stack over `len` inputs (len a multiple of the period).
StepCost window_cost(const StridedNetwork& net, Index len) {
  StepCost cost;
  const auto& plan = net.plan();
  for (Index i = 0; i < net.layer_count(); ++i) {
    const double in_nodes = static_cast<double>(len) / static_cast<double>(cache_every_at(plan, i));
    cost.macs += in_nodes * macs_per_input(net, i);
    cost.node_evals += in_nodes * outputs_per_input(net.rate(i));
  }
  return cost;
}

}  // namespace

StepCost strided_cached_step_cost(const StridedNetwork& net) {
  // One period of input is exactly one window of length `period`.
  const Index period = net.plan().period;
  StepCost cost = window_cost(net, period);
  cost.macs /= static_cast<double>(period);
  cost.node_evals /= static_cast<double>(period);
  return cost;
}

StepCost strided_naive_step_cost(const StridedNetwork& net) {
  const Index period = net.plan().period;
  const ReceptiveSpan span = strided_receptive_span(net.plan(), net.kernel());
  StepCost cost;
  const Index base = period * (span.back / period + 2);
  for (Index q = 0; q < period; ++q) {
    const Index t = base + q;
    const Index start = floor_div(t - span.back, period) * period;
    const Index end = (t / period + 1) * period;
    const StepCost c = window_cost(net, end - start);
    cost.macs += c.macs;
    cost.node_evals += c.node_evals;
  }
  cost.macs /= static_cast<double>(period);
  cost.node_evals /= static_cast<double>(period);
  return cost;
}

Index strided_warmup_steps(const StridedNetwork& net) {
  const Index period = net.plan().period;
  const Index back = strided_receptive_span(net.plan(), net.kernel()).back;
  return (back / period + 2) * period;
}

}  // namespace fastgen
