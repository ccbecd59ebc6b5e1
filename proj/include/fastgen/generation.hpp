// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "fastgen/tensor.hpp"

namespace fastgen {

/// Per-step analytic cost for one batch element.
struct StepCost {
  double macs = 0;
  double node_evals = 0;

  friend bool operator==(const StepCost&, const StepCost&) = default;
};

/// Autoregressive driver for any engine exposing `const Batchf& step(const Batchf&)`.
///
/// Element b reads primes[b][t] as its step-t input while the prime lasts and
/// the raw previous output afterwards (zero at t = 0). primes may be empty
/// (no priming) or hold one sequence per element. Returns [batch][n_steps].
template <typename Engine>
std::vector<std::vector<float>> rollout(Engine& engine, Index batch, std::span<const std::vector<float>> primes,
                                        Index n_steps) {
  if (!primes.empty() && static_cast<Index>(primes.size()) != batch) {
    throw InvalidParameter("rollout: need one prime per batch element");
  }
  if (n_steps < 1) throw InvalidParameter("rollout: n_steps must be >= 1");
  std::vector<std::vector<float>> out(static_cast<std::size_t>(batch), std::vector<float>(static_cast<std::size_t>(n_steps)));
  Batchf input = Batchf::Zero(1, batch);
  for (Index t = 0; t < n_steps; ++t) {
    for (Index b = 0; b < batch; ++b) {
      if (!primes.empty()) {
        const auto& p = primes[static_cast<std::size_t>(b)];
        if (t < static_cast<Index>(p.size())) input(0, b) = p[static_cast<std::size_t>(t)];
      }
    }
    const Batchf& y = engine.step(input);
    for (Index b = 0; b < batch; ++b) {
      out[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)] = y(0, b);
      input(0, b) = y(0, b);
    }
  }
  return out;
}

}  // namespace fastgen
