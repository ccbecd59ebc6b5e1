// SPDX-License-Identifier: Apache-2.0

#include "fastgen/bench.hpp"

#include <algorithm>
#include <barrier>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

#include "fastgen/dilated.hpp"
#include "fastgen/image.hpp"
#include "fastgen/strided.hpp"

namespace fastgen {

std::string to_string(BenchMode mode) {
  switch (mode) {
    case BenchMode::naive:
      return "naive";
    case BenchMode::cached:
      return "cached";
    case BenchMode::both:
      break;
  }
  return "both";
}

BenchMode parse_mode(std::string_view text) {
  if (text == "naive") return BenchMode::naive;
  if (text == "cached") return BenchMode::cached;
  if (text == "both") return BenchMode::both;
  throw InvalidParameter("unknown mode '" + std::string(text) + "' (expected naive, cached or both)");
}

NetworkSpec bench_spec(const BenchConfig& config, Index layers) {
  if (config.spec) return *config.spec;
  NetworkSpec spec;
  spec.family = config.model;
  spec.seed = config.seed;
  spec.kernel = 2;
  switch (config.model) {
    case Family::dilated:
      spec.stacks = config.stacks;
      spec.layers = layers;
      spec.channels = config.channels > 0 ? config.channels : 16;
      break;
    case Family::strided:
      spec.layers = layers;
      spec.channels = config.channels > 0 ? config.channels : 16;
      spec.strides = encoder_decoder_rates(layers, 2);
      break;
    case Family::image2d:
      spec.layers = layers;
      spec.channels = config.channels > 0 ? config.channels : 4;
      spec.image.height = config.image_size;
      spec.image.width = config.image_size;
      break;
  }
  validate(spec);
  return spec;
}

namespace {

using Clock = std::chrono::steady_clock;

/// Seeded per-lane prime so batch lanes carry different sequences.
std::vector<float> lane_prime(std::uint64_t seed, Index lane, Index length) {
  std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(lane + 1));
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> p(static_cast<std::size_t>(length));
  for (auto& v : p) v = dist(rng);
  return p;
}

/// Drives one engine over a fixed set of batch lanes.
class Runner {
 public:
  virtual ~Runner() = default;
  virtual void warmup() = 0;
  virtual void prepare() {}
  virtual void run() = 0;
  virtual OpCounter counter() const = 0;
  /// Everything emitted so far, one vector per lane.
  virtual const std::vector<std::vector<float>>& outputs() const = 0;
};

template <typename Engine, typename Net>
class SequenceRunner final : public Runner {
 public:
  SequenceRunner(const Net& net, std::vector<std::vector<float>> primes, Index warm, Index steps)
      : engine_(net, static_cast<Index>(primes.size())),
        primes_(std::move(primes)),
        warm_(warm),
        steps_(steps),
        input_(Batchf::Zero(1, static_cast<Index>(primes_.size()))),
        outputs_(primes_.size()) {}

  void warmup() override {
    for (Index i = 0; i < warm_; ++i) step();
  }
  void run() override {
    for (Index i = 0; i < steps_; ++i) step();
  }
  OpCounter counter() const override { return engine_.counter(); }
  const std::vector<std::vector<float>>& outputs() const override { return outputs_; }

 private:
  void step() {
    for (std::size_t b = 0; b < primes_.size(); ++b) {
      const auto& p = primes_[b];
      if (t_ < static_cast<Index>(p.size())) input_(0, static_cast<Index>(b)) = p[static_cast<std::size_t>(t_)];
    }
    const Batchf& y = engine_.step(input_);
    for (std::size_t b = 0; b < primes_.size(); ++b) {
      const float v = y(0, static_cast<Index>(b));
      outputs_[b].push_back(v);
      input_(0, static_cast<Index>(b)) = v;
    }
    ++t_;
  }

  Engine engine_;
  std::vector<std::vector<float>> primes_;
  Index warm_;
  Index steps_;
  Batchf input_;
  std::vector<std::vector<float>> outputs_;
  Index t_ = 0;
};

class ImageRunner final : public Runner {
 public:
  ImageRunner(const ImageNetwork& net, std::vector<std::vector<float>> primes, bool naive)
      : net_(&net), primes_(std::move(primes)), naive_(naive), outputs_(primes_.size()) {}

  void warmup() override {
    prepare();
    run();
  }
  void prepare() override {
    if (!naive_) engine_.emplace(*net_, static_cast<Index>(primes_.size()));
  }
  void run() override {
    const Index batch = static_cast<Index>(primes_.size());
    std::vector<Tensorf> images;
    if (naive_) {
      OpCounter ops;
      images = image_naive_generate(*net_, batch, primes_, &ops);
      counter_ += ops;
    } else {
      const OpCounter before = engine_->counter();
      images.assign(static_cast<std::size_t>(batch), Tensorf({net_->height(), net_->width()}));
      Batchf value(1, batch);
      for (Index r = 0; r < net_->height(); ++r) {
        engine_->vertical_row_pass(r);
        for (Index c = 0; c < net_->width(); ++c) {
          const Batchf& y = engine_->pixel(c);
          const Index i = r * net_->width() + c;
          for (Index b = 0; b < batch; ++b) {
            const auto& p = primes_[static_cast<std::size_t>(b)];
            images[static_cast<std::size_t>(b)](r, c) = y(0, b);
            value(0, b) = i < static_cast<Index>(p.size()) ? p[static_cast<std::size_t>(i)] : y(0, b);
          }
          engine_->commit(value);
        }
      }
      counter_ += engine_->counter() - before;
    }
    for (std::size_t b = 0; b < images.size(); ++b) {
      outputs_[b].assign(images[b].data(), images[b].data() + images[b].size());
    }
  }
  OpCounter counter() const override { return counter_; }
  const std::vector<std::vector<float>>& outputs() const override { return outputs_; }

 private:
  const ImageNetwork* net_;
  std::vector<std::vector<float>> primes_;
  bool naive_;
  std::optional<ImageIncremental> engine_;
  OpCounter counter_;
  std::vector<std::vector<float>> outputs_;
};

struct Timing {
  std::vector<double> chunk_us;
  OpCounter timed_ops;
  std::vector<std::vector<float>> outputs;
};

Timing time_runners(std::vector<std::unique_ptr<Runner>>& runners, Index repeats) {
  Timing timing;
  std::vector<OpCounter> before(runners.size());
  auto elapsed_us = [](Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::micro>(b - a).count();
  };

  if (runners.size() == 1) {
    Runner& r = *runners.front();
    r.warmup();
    before[0] = r.counter();
    for (Index i = 0; i < repeats; ++i) {
      r.prepare();
      const auto t0 = Clock::now();
      r.run();
      timing.chunk_us.push_back(elapsed_us(t0, Clock::now()));
    }
  } else {
    // Workers and the timing thread meet at a barrier around every timed
    // chunk, so a chunk lasts until the slowest lane is done.
    std::barrier sync(static_cast<std::ptrdiff_t>(runners.size() + 1));
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < runners.size(); ++w) {
      workers.emplace_back([&, w] {
        Runner& r = *runners[w];
        r.warmup();
        before[w] = r.counter();
        for (Index i = 0; i < repeats; ++i) {
          r.prepare();
          sync.arrive_and_wait();
          r.run();
          sync.arrive_and_wait();
        }
      });
    }
    for (Index i = 0; i < repeats; ++i) {
      sync.arrive_and_wait();
      const auto t0 = Clock::now();
      sync.arrive_and_wait();
      timing.chunk_us.push_back(elapsed_us(t0, Clock::now()));
    }
    workers.clear();
  }

  for (std::size_t w = 0; w < runners.size(); ++w) {
    timing.timed_ops += runners[w]->counter() - before[w];
    for (const auto& lane : runners[w]->outputs()) timing.outputs.push_back(lane);
  }
  return timing;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double max_abs_diff(const std::vector<std::vector<float>>& a, const std::vector<std::vector<float>>& b) {
  if (a.size() != b.size()) throw Error("bench: engines produced different lane counts");
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) throw Error("bench: engines produced different output lengths");
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      const double d = std::fabs(static_cast<double>(a[i][j]) - static_cast<double>(b[i][j]));
      if (!(d <= worst)) worst = d;  // also propagates NaN
    }
  }
  return worst;
}

/// Everything run_bench needs for one sweep point.
struct Point {
  NetworkSpec spec;
  Index steps = 0;  ///< timed steps per repeat
  Index warm = 0;
  StepCost naive_cost;
  StepCost cached_cost;
  std::unique_ptr<DilatedNetwork> dilated;
  std::unique_ptr<StridedNetwork> strided;
  std::unique_ptr<ImageNetwork> image;

  std::unique_ptr<Runner> make(bool naive, std::vector<std::vector<float>> primes) const {
    switch (spec.family) {
      case Family::dilated:
        if (naive) return std::make_unique<SequenceRunner<DilatedNaive, DilatedNetwork>>(*dilated, std::move(primes), warm, steps);
        return std::make_unique<SequenceRunner<DilatedIncremental, DilatedNetwork>>(*dilated, std::move(primes), warm, steps);
      case Family::strided:
        if (naive) return std::make_unique<SequenceRunner<StridedNaive, StridedNetwork>>(*strided, std::move(primes), warm, steps);
        return std::make_unique<SequenceRunner<StridedIncremental, StridedNetwork>>(*strided, std::move(primes), warm, steps);
      case Family::image2d:
        break;
    }
    return std::make_unique<ImageRunner>(*image, std::move(primes), naive);
  }
};

Point make_point(const BenchConfig& config, Index layers) {
  Point p;
  p.spec = bench_spec(config, layers);
  switch (p.spec.family) {
    case Family::dilated: {
      p.dilated = std::make_unique<DilatedNetwork>(p.spec);
      p.steps = config.steps;
      // The naive engine reaches its steady-state cone size at t = rf - 1.
      p.warm = std::max<Index>(1, p.dilated->receptive_field() - 1);
      p.naive_cost = naive_step_cost(*p.dilated);
      p.cached_cost = cached_step_cost(*p.dilated);
      break;
    }
    case Family::strided: {
      p.strided = std::make_unique<StridedNetwork>(p.spec);
      const Index period = p.strided->plan().period;
      p.steps = detail::ceil_div(config.steps, period) * period;
      p.warm = strided_warmup_steps(*p.strided);
      p.naive_cost = strided_naive_step_cost(*p.strided);
      p.cached_cost = strided_cached_step_cost(*p.strided);
      break;
    }
    case Family::image2d: {
      p.image = std::make_unique<ImageNetwork>(p.spec);
      const Index pixels = p.image->height() * p.image->width();
      p.steps = pixels;
      p.warm = p.image->width();
      const StepCost full = image_forward_cost(*p.image);
      p.naive_cost = full;
      p.cached_cost = {full.macs / static_cast<double>(pixels), full.node_evals / static_cast<double>(pixels)};
      break;
    }
  }
  return p;
}

std::string format_number(double v) {
  char buf[64];
  if (v == std::floor(v) && std::fabs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%.0f", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.6g", v);
  }
  return buf;
}

}  // namespace

std::vector<BenchRecord> run_bench(const BenchConfig& config, std::ostream* log) {
  if (config.repeats < 1) throw InvalidParameter("bench: repeats must be >= 1");
  if (config.steps < 1) throw InvalidParameter("bench: steps must be >= 1");
  if (config.layers.empty() || config.batches.empty()) throw InvalidParameter("bench: empty layer or batch list");
  for (Index b : config.batches) {
    if (b < 1) throw InvalidParameter("bench: batch sizes must be >= 1");
  }
  std::vector<Index> layer_list = config.layers;
  if (config.spec) layer_list.assign(1, config.spec->layers);

  std::vector<BenchRecord> records;
  for (Index layers : layer_list) {
    const Point point = make_point(config, layers);
    for (Index batch : config.batches) {
      std::vector<std::vector<float>> primes;
      for (Index b = 0; b < batch; ++b) primes.push_back(lane_prime(config.seed, b, point.warm));

      std::vector<bool> modes;
      if (config.mode != BenchMode::cached) modes.push_back(true);
      if (config.mode != BenchMode::naive) modes.push_back(false);

      std::vector<BenchRecord> pair;
      std::vector<std::vector<std::vector<float>>> outputs;
      for (bool naive : modes) {
        std::vector<std::unique_ptr<Runner>> runners;
        if (config.parallel && batch > 1) {
          for (Index b = 0; b < batch; ++b) runners.push_back(point.make(naive, {primes[static_cast<std::size_t>(b)]}));
        } else {
          runners.push_back(point.make(naive, primes));
        }
        Timing timing = time_runners(runners, config.repeats);

        const double per_elem_steps = static_cast<double>(config.repeats * point.steps * batch);
        const double macs = static_cast<double>(timing.timed_ops.macs) / per_elem_steps;
        const double expected = naive ? point.naive_cost.macs : point.cached_cost.macs;
        if (std::fabs(macs - expected) > 1e-9 * std::max(1.0, expected)) {
          throw Error("bench: measured " + format_number(macs) + " MACs per step, analytic cost is " +
                      format_number(expected));
        }

        std::vector<double> per_step;
        for (double us : timing.chunk_us) per_step.push_back(us / static_cast<double>(point.steps));
        BenchRecord rec;
        rec.model = to_string(point.spec.family);
        rec.layers = point.spec.layers;
        rec.stacks = point.spec.family == Family::dilated ? point.spec.stacks : 1;
        rec.batch = batch;
        rec.mode = naive ? "naive" : "cached";
        rec.steps = point.steps;
        rec.repeats = config.repeats;
        rec.wall_us_per_step = median(per_step);
        rec.wall_us_mean = mean(per_step);
        rec.macs_per_step = macs;
        pair.push_back(rec);
        outputs.push_back(std::move(timing.outputs));
      }
      if (pair.size() == 2) {
        const double diff = max_abs_diff(outputs[0], outputs[1]);
        for (auto& r : pair) r.max_abs_diff = diff;
      }
      for (auto& r : pair) {
        if (log) {
          *log << r.model << " L=" << r.layers << " stacks=" << r.stacks << " batch=" << r.batch << " " << r.mode
               << ": median " << format_number(r.wall_us_per_step) << " us/step, mean "
               << format_number(r.wall_us_mean) << " us/step\n";
        }
        records.push_back(std::move(r));
      }
    }
  }
  return records;
}

namespace {

constexpr const char* kHeader = "model,L,stacks,batch,mode,steps,repeats,wall_us_per_step,macs_per_step,max_abs_diff";

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

void write_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os << kHeader << '\n';
  for (const auto& r : records) {
    os << r.model << ',' << r.layers << ',' << r.stacks << ',' << r.batch << ',' << r.mode << ',' << r.steps << ','
       << r.repeats << ',' << format_number(r.wall_us_per_step) << ',' << format_number(r.macs_per_step) << ',';
    if (r.max_abs_diff) os << format_number(*r.max_abs_diff);
    os << '\n';
  }
}

std::vector<BenchRecord> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidParameter("csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw InvalidParameter("csv: unexpected header '" + line + "'");
  std::vector<BenchRecord> records;
  Index line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 10) throw InvalidParameter("csv line " + std::to_string(line_no) + ": expected 10 fields");
    try {
      BenchRecord r;
      r.model = f[0];
      r.layers = std::stoll(f[1]);
      r.stacks = std::stoll(f[2]);
      r.batch = std::stoll(f[3]);
      r.mode = f[4];
      parse_mode(r.mode);
      r.steps = std::stoll(f[5]);
      r.repeats = std::stoll(f[6]);
      r.wall_us_per_step = std::stod(f[7]);
      r.wall_us_mean = r.wall_us_per_step;
      r.macs_per_step = std::stod(f[8]);
      if (!f[9].empty()) r.max_abs_diff = std::stod(f[9]);
      records.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw InvalidParameter("csv line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

SpeedupReport speedup_report(const std::vector<BenchRecord>& records) {
  using Key = std::tuple<std::string, Index, Index, Index>;
  std::map<Key, std::pair<std::optional<double>, std::optional<double>>> pairs;
  for (const auto& r : records) {
    auto& slot = pairs[{r.model, r.layers, r.stacks, r.batch}];
    if (r.mode == "naive") {
      slot.first = r.wall_us_per_step;
    } else if (r.mode == "cached") {
      slot.second = r.wall_us_per_step;
    } else {
      throw InvalidParameter("report: unknown mode '" + r.mode + "'");
    }
  }
  std::string missing;
  SpeedupReport report;
  for (const auto& [key, times] : pairs) {
    const auto& [model, layers, stacks, batch] = key;
    if (!times.first || !times.second) {
      missing += "\n  " + model + " L=" + std::to_string(layers) + " stacks=" + std::to_string(stacks) +
                 " batch=" + std::to_string(batch) + " (no " + (times.first ? "cached" : "naive") + " row)";
      continue;
    }
    if (!(*times.second > 0)) throw InvalidParameter("report: cached time must be positive");
    report.rows.push_back({model, layers, stacks, batch, *times.first, *times.second, *times.first / *times.second});
  }
  if (!missing.empty()) throw InvalidParameter("report: unmatched configurations:" + missing);

  // Sweeps over L (model, stacks, batch fixed) and over batch (model, L, stacks fixed).
  std::map<std::tuple<std::string, Index, Index>, std::vector<std::pair<Index, double>>> over_l;
  std::map<std::tuple<std::string, Index, Index>, std::vector<std::pair<Index, double>>> over_batch;
  for (const auto& row : report.rows) {
    over_l[{row.model, row.stacks, row.batch}].emplace_back(row.layers, row.speedup);
    over_batch[{row.model, row.layers, row.stacks}].emplace_back(row.batch, row.speedup);
  }
  auto add_series = [&report](std::string label, std::vector<std::pair<Index, double>> pts) {
    if (pts.size() < 2) return;
    std::sort(pts.begin(), pts.end());
    SpeedupSeries s;
    s.label = std::move(label);
    s.strictly_increasing = true;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s.points.push_back(pts[i].first);
      s.speedups.push_back(pts[i].second);
      if (i > 0 && !(pts[i].second > pts[i - 1].second)) s.strictly_increasing = false;
    }
    report.series.push_back(std::move(s));
  };
  for (auto& [k, pts] : over_l) {
    add_series(std::get<0>(k) + " stacks=" + std::to_string(std::get<1>(k)) + " batch=" + std::to_string(std::get<2>(k)) +
                   " over L",
               pts);
  }
  for (auto& [k, pts] : over_batch) {
    add_series(std::get<0>(k) + " L=" + std::to_string(std::get<1>(k)) + " stacks=" + std::to_string(std::get<2>(k)) +
                   " over batch",
               pts);
  }
  return report;
}

std::string format_report(const SpeedupReport& report) {
  std::ostringstream os;
  os << "model,L,stacks,batch,naive_us,cached_us,speedup\n";
  for (const auto& r : report.rows) {
    os << r.model << ',' << r.layers << ',' << r.stacks << ',' << r.batch << ',' << format_number(r.naive_us) << ','
       << format_number(r.cached_us) << ',' << format_number(r.speedup) << '\n';
  }
  for (const auto& s : report.series) {
    os << "# " << s.label << ": ";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      os << (i ? " " : "") << s.points[i] << ":" << format_number(s.speedups[i]) << "x";
    }
    os << (s.strictly_increasing ? " (strictly increasing)" : " (not monotone)") << '\n';
  }
  return os.str();
}

}  // namespace fastgen
