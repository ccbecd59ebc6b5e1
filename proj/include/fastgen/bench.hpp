// SPDX-License-Identifier: Apache-2.0

// Benchmark harness: timed naive/cached runs, CSV records and speedup tables.

#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fastgen/network_spec.hpp"

namespace fastgen {

enum class BenchMode { naive, cached, both };

std::string to_string(BenchMode mode);
BenchMode parse_mode(std::string_view text);

/// One CSV row. Columns, in order:
///   model,L,stacks,batch,mode,steps,repeats,wall_us_per_step,macs_per_step,max_abs_diff
/// wall_us_per_step is the median over repeats; macs_per_step is per step and
/// per batch element; max_abs_diff is empty unless the run compared engines.
struct BenchRecord {
  std::string model;
  Index layers = 0;
  Index stacks = 1;
  Index batch = 1;
  std::string mode;
  Index steps = 0;
  Index repeats = 0;
  double wall_us_per_step = 0;
  double wall_us_mean = 0;  ///< not written to the CSV
  double macs_per_step = 0;
  std::optional<double> max_abs_diff;
};

struct BenchConfig {
  Family model = Family::dilated;
  std::vector<Index> layers{4};
  Index stacks = 1;
  Index channels = 16;
  Index steps = 256;  ///< timed steps per repeat (1D); ignored for images
  std::vector<Index> batches{1};
  BenchMode mode = BenchMode::both;
  Index repeats = 20;
  std::uint64_t seed = 0;
  Index image_size = 16;
  bool parallel = false;  ///< one thread and one engine per batch element
  /// When set, overrides model/layers/stacks/channels; the sweep then has a
  /// single depth.
  std::optional<NetworkSpec> spec;
};

/// Spec for one sweep point.
NetworkSpec bench_spec(const BenchConfig& config, Index layers);

/// Runs every (layers, batch, mode) combination. In `both` mode the naive and
/// cached outputs are compared and the difference stored on both rows.
/// Progress lines (including the mean wall time) go to `log` when given.
std::vector<BenchRecord> run_bench(const BenchConfig& config, std::ostream* log = nullptr);

void write_csv(std::ostream& os, const std::vector<BenchRecord>& records);
std::vector<BenchRecord> read_csv(std::istream& is);

struct SpeedupRow {
  std::string model;
  Index layers = 0;
  Index stacks = 1;
  Index batch = 1;
  double naive_us = 0;
  double cached_us = 0;
  double speedup = 0;
};

/// Speedup along one sweep axis with everything else fixed.
struct SpeedupSeries {
  std::string label;            ///< e.g. "dilated stacks=2 batch=1 over L"
  std::vector<Index> points;    ///< L or batch values, ascending
  std::vector<double> speedups;
  bool strictly_increasing = false;
};

struct SpeedupReport {
  std::vector<SpeedupRow> rows;
  std::vector<SpeedupSeries> series;
};

/// Pairs naive and cached rows by (model, L, stacks, batch). Throws
/// InvalidParameter naming every configuration that lacks its partner.
SpeedupReport speedup_report(const std::vector<BenchRecord>& records);
std::string format_report(const SpeedupReport& report);

}  // namespace fastgen
