// SPDX-License-Identifier: Apache-2.0

#include "fastgen/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

#include "fastgen/dilated.hpp"
#include "fastgen/image.hpp"
#include "fastgen/strided.hpp"

namespace fastgen {

namespace {

constexpr double kTolerance = 1e-5;

double max_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) return INFINITY;
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::fabs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    if (!(d <= worst)) worst = d;
  }
  return worst;
}

std::vector<float> random_sequence(std::mt19937_64& rng, Index n) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = dist(rng);
  return v;
}

void corrupt(ConvWeightsf& w) { w.w(0, 0, w.taps() - 1) += 0.25f; }

CheckResult equivalence_dilated(const VerifyOptions& opt) {
  const Index configs = opt.quick ? 12 : 100;
  const Index steps = opt.quick ? 64 : 256;
  const Index channel_choices[] = {1, 4, 16};
  std::mt19937_64 rng(1234);
  double worst = 0;
  for (Index i = 0; i < configs; ++i) {
    NetworkSpec spec;
    spec.layers = 1 + static_cast<Index>(rng() % 6);
    spec.stacks = 1 + static_cast<Index>(rng() % 2);
    spec.channels = channel_choices[rng() % 3];
    spec.seed = rng();
    const DilatedNetwork net(spec);
    DilatedNetwork cached_net = net;
    if (opt.inject_fault) corrupt(cached_net.layer(0));
    const auto prime = random_sequence(rng, 8);
    worst = std::max(worst, max_diff(naive_generate(net, prime, steps), incremental_generate(cached_net, prime, steps)));
  }
  return {"equivalence_dilated", worst <= kTolerance,
          std::to_string(configs) + " configs x " + std::to_string(steps) + " steps, max_abs_diff=" + std::to_string(worst)};
}

CheckResult equivalence_strided(const VerifyOptions& opt) {
  const Index seeds = opt.quick ? 10 : 50;
  const Index steps = opt.quick ? 100 : 200;
  double worst = 0;
  std::mt19937_64 rng(99);
  for (Index s = 0; s < seeds; ++s) {
    NetworkSpec spec;
    spec.family = Family::strided;
    spec.channels = 4;
    spec.strides = encoder_decoder_rates(2, 2);
    spec.seed = static_cast<std::uint64_t>(s);
    const StridedNetwork net(spec);
    StridedNetwork cached_net = net;
    if (opt.inject_fault) corrupt(cached_net.layer(0));
    const auto prime = random_sequence(rng, 16);
    worst = std::max(worst, max_diff(strided_naive_generate(net, steps, prime),
                                     strided_incremental_generate(cached_net, steps, prime)));
  }
  return {"equivalence_strided", worst <= kTolerance,
          std::to_string(seeds) + " seeds x " + std::to_string(steps) + " steps, max_abs_diff=" + std::to_string(worst)};
}

CheckResult equivalence_image(const VerifyOptions& opt) {
  const std::vector<Index> sizes = opt.quick ? std::vector<Index>{8} : std::vector<Index>{8, 16};
  const Index seeds = opt.quick ? 3 : 20;
  double worst = 0;
  Index runs = 0;
  std::mt19937_64 rng(7);
  for (Index size : sizes) {
    for (Index s = 0; s < seeds; ++s) {
      NetworkSpec spec;
      spec.family = Family::image2d;
      spec.layers = 3 + s % 3;
      spec.channels = 4;
      spec.image.height = size;
      spec.image.width = size;
      spec.image.resample = s % 4 == 3;
      spec.seed = static_cast<std::uint64_t>(s);
      const ImageNetwork net(spec);
      ImageNetwork cached_net = net;
      if (opt.inject_fault) corrupt(cached_net.vertical(0));
      const std::vector<std::vector<float>> primes{random_sequence(rng, size)};
      const auto a = image_naive_generate(net, 1, primes);
      const auto b = image_incremental_generate(cached_net, 1, primes);
      worst = std::max(worst, max_diff({a[0].data(), static_cast<std::size_t>(a[0].size())},
                                       {b[0].data(), static_cast<std::size_t>(b[0].size())}));
      ++runs;
    }
  }
  return {"equivalence_image", worst <= kTolerance,
          std::to_string(runs) + " images, max_abs_diff=" + std::to_string(worst)};
}

CheckResult op_law_dilated(const VerifyOptions& opt) {
  const Index max_l = opt.quick ? 6 : 8;
  std::ostringstream bad;
  for (Index stacks = 1; stacks <= 2; ++stacks) {
    for (Index l = 1; l <= max_l; ++l) {
      NetworkSpec spec;
      spec.layers = l;
      spec.stacks = stacks;
      const DilatedNetwork net(spec);
      DilatedNaive naive(net);
      DilatedIncremental cached(net);
      const Batchf x = Batchf::Constant(1, 1, 0.5f);
      const Index warm = net.receptive_field();
      for (Index t = 0; t < warm; ++t) {
        naive.step(x);
        cached.step(x);
      }
      const OpCounter n0 = naive.counter();
      const OpCounter c0 = cached.counter();
      naive.step(x);
      cached.step(x);
      const auto n_nodes = (naive.counter() - n0).node_evals;
      const auto c_nodes = (cached.counter() - c0).node_evals;
      if (c_nodes != static_cast<std::uint64_t>(stacks * l + 1)) bad << " cached(L=" << l << ",s=" << stacks << ")=" << c_nodes;
      if (static_cast<double>(n_nodes) != naive_step_cost(net).node_evals) {
        bad << " naive(L=" << l << ",s=" << stacks << ")=" << n_nodes;
      }
      if (stacks == 1 && n_nodes != (std::uint64_t{1} << l)) bad << " naive-law(L=" << l << ")=" << n_nodes;
    }
  }
  const std::string detail = bad.str();
  return {"op_law_dilated", detail.empty(), detail.empty() ? "L=1.." + std::to_string(max_l) + ", stacks 1-2" : detail};
}

CheckResult counters_match_analytic(const VerifyOptions&) {
  std::ostringstream bad;
  NetworkSpec spec;
  spec.family = Family::strided;
  spec.channels = 3;
  spec.strides = encoder_decoder_rates(2, 2);
  const StridedNetwork snet(spec);
  const Index warm = strided_warmup_steps(snet);
  const Index period = snet.plan().period;
  StridedNaive sn(snet);
  StridedIncremental si(snet);
  const Batchf x = Batchf::Constant(1, 1, 0.25f);
  for (Index t = 0; t < warm; ++t) {
    sn.step(x);
    si.step(x);
  }
  const OpCounter n0 = sn.counter();
  const OpCounter c0 = si.counter();
  for (Index t = 0; t < 4 * period; ++t) {
    sn.step(x);
    si.step(x);
  }
  const double steps = static_cast<double>(4 * period);
  auto close = [](double a, double b) { return std::fabs(a - b) <= 1e-9 * std::max(1.0, b); };
  if (!close(static_cast<double>((sn.counter() - n0).macs) / steps, strided_naive_step_cost(snet).macs)) {
    bad << " strided-naive";
  }
  if (!close(static_cast<double>((si.counter() - c0).macs) / steps, strided_cached_step_cost(snet).macs)) {
    bad << " strided-cached";
  }

  NetworkSpec ispec;
  ispec.family = Family::image2d;
  ispec.layers = 3;
  ispec.channels = 2;
  ispec.image.height = 6;
  ispec.image.width = 5;
  const ImageNetwork inet(ispec);
  OpCounter naive_ops, cached_ops;
  image_naive_generate(inet, 1, {}, &naive_ops);
  image_incremental_generate(inet, 1, {}, &cached_ops);
  const StepCost full = image_forward_cost(inet);
  if (static_cast<double>(naive_ops.macs) != full.macs * 30) bad << " image-naive";
  if (static_cast<double>(cached_ops.macs) != full.macs) bad << " image-cached";
  const std::string detail = bad.str();
  return {"counters_match_analytic", detail.empty(), detail.empty() ? "strided and image MAC counts" : "mismatch:" + detail};
}

CheckResult trace_golden(const VerifyOptions&) {
  const auto rates = encoder_decoder_rates(2, 2);
  const StridedPlan plan = make_plan(rates);
  const auto trace = firing_trace(plan, 6);
  const std::vector<std::vector<Index>> nodes{{1, 1, 2, 4}, {0, 0, 0, 0}, {1, 0, 0, 0},
                                              {0, 0, 0, 0}, {1, 1, 2, 4}, {0, 0, 0, 0}};
  bool ok = true;
  for (Index t = 0; t < 6; ++t) {
    const auto& s = trace[static_cast<std::size_t>(t)];
    ok = ok && s.nodes == nodes[static_cast<std::size_t>(t)] && s.outputs_emitted == 1 &&
         s.outputs_buffered == (t % 4 == 0 ? 4 : 0) && s.fresh == (t % 4 == 0);
  }
  // The engine must fire exactly as the symbolic trace says.
  NetworkSpec spec;
  spec.family = Family::strided;
  spec.strides = rates;
  const StridedNetwork net(spec);
  StridedIncremental engine(net);
  const auto long_trace = firing_trace(plan, 16);
  for (const auto& s : long_trace) {
    engine.step(Batchf::Zero(1, 1));
    ok = ok && engine.last_nodes() == s.nodes && engine.last_fresh() == s.fresh;
  }
  return {"trace_golden", ok, ok ? "down2,down2,up2,up2 t=0..5 and engine t=0..15" : "trace differs"};
}

template <typename Forward>
bool causal_1d(Forward&& forward, Index len, std::mt19937_64& rng) {
  const auto x = random_sequence(rng, len);
  const auto y = forward(x);
  for (Index t = 0; t + 1 < len; ++t) {
    auto z = x;
    for (Index p = t + 1; p < len; ++p) z[static_cast<std::size_t>(p)] += 1.0f;
    const auto yz = forward(z);
    for (Index p = 0; p <= t; ++p) {
      if (yz[static_cast<std::size_t>(p)] != y[static_cast<std::size_t>(p)]) return false;
    }
  }
  return true;
}

CheckResult causality(const VerifyOptions&) {
  std::mt19937_64 rng(5);
  std::ostringstream bad;

  NetworkSpec dspec;
  dspec.layers = 3;
  dspec.stacks = 2;
  dspec.channels = 3;
  const DilatedNetwork dnet(dspec);
  if (!causal_1d([&](const std::vector<float>& x) { OpCounter c; return forward_sequence(dnet, x, c); }, 24, rng)) {
    bad << " dilated";
  }

  NetworkSpec sspec;
  sspec.family = Family::strided;
  sspec.channels = 3;
  sspec.strides = encoder_decoder_rates(2, 2);
  const StridedNetwork snet(sspec);
  if (!causal_1d([&](const std::vector<float>& x) { OpCounter c; return strided_forward(snet, x, c); }, 24, rng)) {
    bad << " strided";
  }

  for (bool resample : {false, true}) {
    NetworkSpec ispec;
    ispec.family = Family::image2d;
    ispec.layers = 3;
    ispec.channels = 2;
    ispec.image.height = 6;
    ispec.image.width = 6;
    ispec.image.resample = resample;
    const ImageNetwork inet(ispec);
    const auto flat = random_sequence(rng, 36);
    Tensorf x({1, 6, 6});
    std::copy(flat.begin(), flat.end(), x.data());
    OpCounter c;
    const Tensorf y = image_forward(inet, x, c);
    for (Index i = 0; i < 35; ++i) {
      Tensorf z = x;
      for (Index j = i + 1; j < 36; ++j) z.data()[j] += 1.0f;
      const Tensorf yz = image_forward(inet, z, c);
      for (Index j = 0; j <= i; ++j) {
        if (yz.data()[j] != y.data()[j]) {
          bad << " image" << (resample ? "-resample" : "") << "@" << i;
          i = 35;
          break;
        }
      }
    }
  }
  const std::string detail = bad.str();
  return {"causality", detail.empty(), detail.empty() ? "dilated, strided, image, image+resample" : "leak:" + detail};
}

CheckResult constant_memory(const VerifyOptions&) {
  NetworkSpec spec;
  spec.layers = 6;
  spec.stacks = 2;
  spec.channels = 4;
  const DilatedNetwork net(spec);
  DilatedIncremental engine(net);
  const Index expected = cache_capacity_values(net);
  Batchf x = Batchf::Constant(1, 1, 0.1f);
  bool ok = true;
  for (Index t = 0; t < 1000; ++t) {
    x = engine.step(x);
    ok = ok && engine.state().stored_values() == expected;
  }
  return {"constant_memory", ok, "1000 steps, " + std::to_string(expected) + " cached values"};
}

CheckResult fault_injection_detected(const VerifyOptions& opt) {
  VerifyOptions faulty = opt;
  faulty.quick = true;
  faulty.inject_fault = true;
  const bool dilated = !equivalence_dilated(faulty).passed;
  const bool strided = !equivalence_strided(faulty).passed;
  return {"fault_injection_detected", dilated && strided,
          std::string("corrupted cached weight caught: dilated=") + (dilated ? "yes" : "no") +
              " strided=" + (strided ? "yes" : "no")};
}

}  // namespace

std::vector<CheckResult> run_verify(const VerifyOptions& options) {
  using Check = std::function<CheckResult(const VerifyOptions&)>;
  std::vector<std::pair<std::string, Check>> checks{{"equivalence_dilated", equivalence_dilated},
                                                    {"equivalence_strided", equivalence_strided},
                                                    {"equivalence_image", equivalence_image},
                                                    {"op_law_dilated", op_law_dilated},
                                                    {"counters_match_analytic", counters_match_analytic},
                                                    {"trace_golden", trace_golden},
                                                    {"causality", causality},
                                                    {"constant_memory", constant_memory}};
  if (!options.inject_fault) checks.emplace_back("fault_injection_detected", fault_injection_detected);
  std::vector<CheckResult> results;
  for (const auto& [name, check] : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = check(options);
    } catch (const std::exception& e) {
      r.name = name;
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results.push_back(std::move(r));
  }
  return results;
}

std::string format_check(const CheckResult& result) {
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.3f", result.seconds);
  return "check=" + result.name + " status=" + (result.passed ? "PASS" : "FAIL") + " time_s=" + secs +
         " detail=" + result.detail;
}

}  // namespace fastgen
