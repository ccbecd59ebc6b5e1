// SPDX-License-Identifier: Apache-2.0

#include "fastgen/dilated.hpp"

#include <algorithm>

#include "fastgen/strided.hpp"

namespace fastgen {

namespace {

void check_input(const Batchf& input, Index batch) {
  if (input.rows() != 1 || input.cols() != batch) {
    throw ShapeError("step input must be 1 x " + std::to_string(batch) + ", got " + std::to_string(input.rows()) + "x" +
                     std::to_string(input.cols()));
  }
}

}  // namespace

DilatedNetwork::DilatedNetwork(NetworkSpec spec) : spec_(std::move(spec)) {
  if (spec_.family != Family::dilated) throw InvalidParameter("DilatedNetwork needs a dilated spec");
  validate(spec_);
  WeightSampler sampler(spec_.seed);
  for (Index s = 0; s < spec_.stacks; ++s) {
    for (Index i = 0; i < spec_.layers; ++i) {
      const Index in = layers_.empty() ? 1 : spec_.channels;
      dilations_.push_back(Index{1} << i);
      layers_.push_back(sampler.conv({spec_.channels, in, spec_.kernel}));
    }
  }
  head_ = sampler.conv({1, spec_.channels, 1});
}

Index DilatedNetwork::receptive_field() const {
  Index rf = 1;
  for (Index d : dilations_) rf += (spec_.kernel - 1) * d;
  return rf;
}

Index receptive_field(const NetworkSpec& spec) {
  switch (spec.family) {
    case Family::dilated: {
      validate(spec);
      Index rf = 1;
      for (Index s = 0; s < spec.stacks; ++s) {
        for (Index i = 0; i < spec.layers; ++i) rf += (spec.kernel - 1) * (Index{1} << i);
      }
      return rf;
    }
    case Family::strided:
      return strided_receptive_field(spec);
    case Family::image2d:
      break;
  }
  throw UnsupportedTopology("receptive_field: 2D models have a (rows, cols) footprint, not a 1D field");
}

std::vector<float> forward_sequence(const DilatedNetwork& net, std::span<const float> inputs, OpCounter& counter) {
  if (inputs.empty()) throw EmptyInput("forward_sequence: empty input");
  const Index len = static_cast<Index>(inputs.size());
  Tensorf x({1, len});
  std::copy(inputs.begin(), inputs.end(), x.data());
  for (Index l = 0; l < net.layer_count(); ++l) {
    x = conv1d_full(net.layer(l), x, net.dilation(l), true, counter);
    tanh_inplace(x.values());
  }
  const Tensorf y = conv1d_full(net.head(), x, 1, true, counter);
  return {y.data(), y.data() + y.size()};
}

std::vector<ConeLevel> dependency_cone(const DilatedNetwork& net) {
  const Index n = net.layer_count();
  const Index k = net.kernel();
  std::vector<ConeLevel> cone(static_cast<std::size_t>(n + 1));
  cone[static_cast<std::size_t>(n)].lags = {0};
  for (Index level = n; level >= 1; --level) {
    const Index d = net.dilation(level - 1);
    auto& upper = cone[static_cast<std::size_t>(level)];
    auto& lower = cone[static_cast<std::size_t>(level - 1)];
    for (Index lag : upper.lags) {
      for (Index j = 0; j < k; ++j) lower.lags.push_back(lag + j * d);
    }
    std::sort(lower.lags.begin(), lower.lags.end());
    lower.lags.erase(std::unique(lower.lags.begin(), lower.lags.end()), lower.lags.end());
    for (Index lag : upper.lags) {
      for (Index j = 0; j < k; ++j) {
        const Index want = lag + (k - 1 - j) * d;
        const auto it = std::lower_bound(lower.lags.begin(), lower.lags.end(), want);
        upper.taps.push_back(static_cast<Index>(it - lower.lags.begin()));
      }
    }
  }
  return cone;
}

DilatedNaive::DilatedNaive(const DilatedNetwork& net, Index batch)
    : net_(&net), batch_(batch), cone_(dependency_cone(net)) {
  if (batch < 1) throw InvalidParameter("batch must be >= 1");
  history_len_ = cone_.front().lags.back() + 1;
  history_.assign(static_cast<std::size_t>(history_len_), Batchf::Zero(1, batch));
  values_.resize(cone_.size());
  ptrs_.resize(cone_.size());
  for (std::size_t l = 0; l < cone_.size(); ++l) {
    const Index rows = l == 0 ? 1 : net.spec().channels;
    values_[l].assign(cone_[l].lags.size(), Batchf::Zero(rows, batch));
    ptrs_[l].assign(cone_[l].lags.size(), nullptr);
  }
  zero_input_ = Batchf::Zero(1, batch);
  zero_hidden_ = Batchf::Zero(net.spec().channels, batch);
}

const Batchf& DilatedNaive::step(const Batchf& input) {
  check_input(input, batch_);
  const Index k = net_->kernel();
  history_[static_cast<std::size_t>(t_ % history_len_)] = input;

  const auto& base = cone_[0].lags;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const Index pos = t_ - base[i];
    ptrs_[0][i] = pos >= 0 ? &history_[static_cast<std::size_t>(pos % history_len_)] : &zero_input_;
  }
  for (std::size_t level = 1; level < cone_.size(); ++level) {
    const auto& lv = cone_[level];
    const auto& below = ptrs_[level - 1];
    const ConvWeightsf& w = net_->layer(static_cast<Index>(level) - 1);
    for (std::size_t i = 0; i < lv.lags.size(); ++i) {
      if (t_ - lv.lags[i] < 0) {
        ptrs_[level][i] = &zero_hidden_;
        continue;
      }
      taps_.clear();
      for (Index j = 0; j < k; ++j) taps_.push_back(below[static_cast<std::size_t>(lv.taps[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)])]);
      Batchf& node = values_[level][i];
      conv_point<float>(w, taps_, node, counter_);
      tanh_inplace(node);
      ptrs_[level][i] = &node;
    }
  }
  taps_.assign(1, ptrs_.back()[0]);
  conv_point<float>(net_->head(), taps_, output_, counter_);
  ++t_;
  return output_;
}

Index GenState::stored_values() const {
  Index n = 0;
  for (const auto& c : caches) n += c.stored_values();
  for (const auto& p : pending) n += p.size();
  return n;
}

DilatedIncremental::DilatedIncremental(const DilatedNetwork& net, Index batch) : net_(&net) {
  if (batch < 1) throw InvalidParameter("batch must be >= 1");
  for (Index l = 0; l < net.layer_count(); ++l) {
    const Index capacity = (net.kernel() - 1) * net.dilation(l);
    state_.caches.emplace_back(capacity, net.layer(l).in_channels(), 1, batch);
  }
  popped_.resize(static_cast<std::size_t>(net.layer_count()));
  outputs_.resize(static_cast<std::size_t>(net.layer_count()));
  state_.last_output = Batchf::Zero(1, batch);
}

const Batchf& DilatedIncremental::step(const Batchf& input) {
  check_input(input, state_.caches.front().batch());
  const Index k = net_->kernel();
  const Index n = net_->layer_count();

  // Pop phase: every layer takes its oldest cached input as the far tap and
  // the freshly computed state below it as the near tap.
  const Batchf* current = &input;
  for (Index l = 0; l < n; ++l) {
    auto& cache = state_.caches[static_cast<std::size_t>(l)];
    const Index d = net_->dilation(l);
    Batchf& far = popped_[static_cast<std::size_t>(l)];
    cache.pop(far);
    taps_.assign(1, &far);
    for (Index j = 1; j < k - 1; ++j) taps_.push_back(&cache.peek(j * d - 1));
    taps_.push_back(current);
    Batchf& out = outputs_[static_cast<std::size_t>(l)];
    conv_point<float>(net_->layer(l), taps_, out, state_.counter);
    tanh_inplace(out);
    current = &out;
  }
  taps_.assign(1, current);
  conv_point<float>(net_->head(), taps_, state_.last_output, state_.counter);

  // Push phase: each layer's input of this step goes to the back of its queue.
  for (Index l = 0; l < n; ++l) {
    auto& cache = state_.caches[static_cast<std::size_t>(l)];
    cache.push(l == 0 ? input : outputs_[static_cast<std::size_t>(l - 1)]);
    cache.tick();
  }
  ++state_.t;
  return state_.last_output;
}

std::vector<float> naive_generate(const DilatedNetwork& net, std::span<const float> prime, Index n_steps,
                                  OpCounter* counter) {
  DilatedNaive engine(net, 1);
  const std::vector<std::vector<float>> primes{std::vector<float>(prime.begin(), prime.end())};
  auto out = rollout(engine, 1, primes, n_steps);
  if (counter) *counter = engine.counter();
  return std::move(out.front());
}

std::vector<float> incremental_generate(const DilatedNetwork& net, std::span<const float> prime, Index n_steps,
                                        OpCounter* counter) {
  DilatedIncremental engine(net, 1);
  const std::vector<std::vector<float>> primes{std::vector<float>(prime.begin(), prime.end())};
  auto out = rollout(engine, 1, primes, n_steps);
  if (counter) *counter = engine.counter();
  return std::move(out.front());
}

namespace {

double node_macs(const ConvWeightsf& w) {
  return static_cast<double>(w.out_channels() * w.in_channels() * w.taps());
}

}  // namespace

StepCost cached_step_cost(const DilatedNetwork& net) {
  StepCost cost;
  for (Index l = 0; l < net.layer_count(); ++l) cost.macs += node_macs(net.layer(l));
  cost.macs += node_macs(net.head());
  cost.node_evals = static_cast<double>(net.layer_count() + 1);
  return cost;
}

StepCost naive_step_cost(const DilatedNetwork& net) {
  const auto cone = dependency_cone(net);
  StepCost cost;
  for (std::size_t level = 1; level < cone.size(); ++level) {
    const double nodes = static_cast<double>(cone[level].lags.size());
    cost.macs += nodes * node_macs(net.layer(static_cast<Index>(level) - 1));
    cost.node_evals += nodes;
  }
  cost.macs += node_macs(net.head());
  cost.node_evals += 1;
  return cost;
}

Index cache_capacity_values(const DilatedNetwork& net) {
  Index n = 0;
  for (Index l = 0; l < net.layer_count(); ++l) {
    n += (net.kernel() - 1) * net.dilation(l) * net.layer(l).in_channels();
  }
  return n;
}

}  // namespace fastgen
