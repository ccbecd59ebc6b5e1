// SPDX-License-Identifier: Apache-2.0

// fastgen: benchmark and self-check driver.
//
//   fastgen --model dilated --stacks 2 --layers 1..10 --mode both --csv out.csv
//   fastgen report out.csv
//   fastgen verify --quick
//   fastgen trace --steps 6
//   fastgen image --pgm sample.pgm

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fastgen/bench.hpp"
#include "fastgen/image.hpp"
#include "fastgen/strided.hpp"
#include "fastgen/verify.hpp"

namespace {

using fastgen::Index;

Index parse_index(const std::string& text, const char* what) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty()) throw CLI::ValidationError(what, "'" + text + "' is not an integer");
  return static_cast<Index>(v);
}

/// "n", "a..b" or "a,b,c".
std::vector<Index> parse_list(const std::string& text, const char* what) {
  std::vector<Index> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const Index a = parse_index(text.substr(0, dots), what);
    const Index b = parse_index(text.substr(dots + 2), what);
    if (a > b) throw CLI::ValidationError(what, "empty range " + text);
    for (Index i = a; i <= b; ++i) out.push_back(i);
    return out;
  }
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(parse_index(item, what));
  if (out.empty()) throw CLI::ValidationError(what, "empty list");
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw fastgen::Error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Naive vs cached autoregressive generation benchmarks"};
  app.require_subcommand(0, 1);

  std::string model = "dilated";
  std::string layers = "4";
  Index stacks = 1;
  Index channels = 0;
  Index steps = 256;
  std::string batch = "1";
  std::string mode = "both";
  Index repeats = 20;
  std::uint64_t seed = 0;
  std::string csv = "-";
  bool quick = false;
  std::string spec_path;
  Index image_size = 16;
  bool parallel = false;

  app.add_option("--model", model, "dilated | strided | image2d")
      ->check(CLI::IsMember({"dilated", "strided", "image2d"}));
  app.add_option("--layers", layers, "layers per stack: n, a..b or a,b,c (strided: encoder depth)");
  auto* stacks_opt = app.add_option("--stacks", stacks, "dilated stacks")->check(CLI::PositiveNumber);
  app.add_option("--channels", channels, "hidden channels (default 16 for 1D, 4 for image2d)")
      ->check(CLI::PositiveNumber);
  app.add_option("--steps", steps, "timed steps per repeat (1D models)")->check(CLI::PositiveNumber);
  app.add_option("--batch", batch, "batch sizes: n, a..b or a,b,c");
  app.add_option("--mode", mode, "naive | cached | both")->check(CLI::IsMember({"naive", "cached", "both"}));
  app.add_option("--repeats", repeats, "timed repeats; the median is reported")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "weight and prime seed");
  app.add_option("--csv", csv, "output path, - for stdout");
  app.add_flag("--quick", quick, "few steps and repeats");
  auto* spec_opt = app.add_option("--spec", spec_path, "network spec JSON file (overrides model/layers/stacks/channels)")
                       ->check(CLI::ExistingFile);
  auto* size_opt = app.add_option("--image-size", image_size, "image height and width")->check(CLI::PositiveNumber);
  app.add_flag("--parallel", parallel, "one thread and engine per batch element");

  auto* report = app.add_subcommand("report", "speedup table from a bench CSV");
  std::string report_path;
  report->add_option("csv", report_path, "bench CSV (- for stdin)")->required();

  auto* verify = app.add_subcommand("verify", "run the equivalence, counter, trace and causality checks");
  bool verify_quick = false;
  bool inject_fault = false;
  verify->add_flag("--quick", verify_quick, "smaller sweep");
  verify->add_flag("--inject-fault", inject_fault, "corrupt one weight on the cached side");

  auto* trace = app.add_subcommand("trace", "firing trace of a strided encoder/decoder");
  Index trace_steps = 6;
  Index trace_depth = 2;
  trace->add_option("--steps", trace_steps, "steps to trace")->check(CLI::PositiveNumber);
  trace->add_option("--depth", trace_depth, "down (and up) layers")->check(CLI::PositiveNumber);

  auto* image = app.add_subcommand("image", "generate one image with the cached engine");
  std::string pgm_path;
  Index image_layers = 3;
  image->add_option("--pgm", pgm_path, "output greymap")->required();
  image->add_option("--layers", image_layers, "layers")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*report) {
      std::vector<fastgen::BenchRecord> records;
      if (report_path == "-") {
        records = fastgen::read_csv(std::cin);
      } else {
        std::ifstream is(report_path);
        if (!is) throw fastgen::Error("cannot open " + report_path);
        records = fastgen::read_csv(is);
      }
      std::cout << fastgen::format_report(fastgen::speedup_report(records));
      return 0;
    }

    if (*verify) {
      fastgen::VerifyOptions opt;
      opt.quick = verify_quick;
      opt.inject_fault = inject_fault;
      bool ok = true;
      for (const auto& r : fastgen::run_verify(opt)) {
        std::cout << fastgen::format_check(r) << std::endl;
        ok = ok && r.passed;
      }
      std::cout << "verify " << (ok ? "PASS" : "FAIL") << std::endl;
      return ok ? 0 : 1;
    }

    if (*trace) {
      const auto plan = fastgen::make_plan(fastgen::encoder_decoder_rates(trace_depth, 2));
      std::cout << fastgen::format_trace(fastgen::firing_trace(plan, trace_steps));
      return 0;
    }

    if (*image) {
      fastgen::NetworkSpec spec;
      spec.family = fastgen::Family::image2d;
      spec.layers = image_layers;
      spec.channels = channels > 0 ? channels : 4;
      spec.seed = seed;
      spec.image.height = image_size;
      spec.image.width = image_size;
      const fastgen::ImageNetwork net(spec);
      const std::vector<std::vector<float>> primes{std::vector<float>(static_cast<std::size_t>(image_size), 0.5f)};
      fastgen::write_pgm(pgm_path, fastgen::image_incremental_generate(net, 1, primes).front());
      return 0;
    }

    fastgen::BenchConfig config;
    config.model = fastgen::parse_family(model);
    if (stacks_opt->count() > 0 && config.model != fastgen::Family::dilated) {
      throw CLI::ValidationError("--stacks", "only the dilated model has stacks");
    }
    if (size_opt->count() > 0 && config.model != fastgen::Family::image2d) {
      throw CLI::ValidationError("--image-size", "only applies to --model image2d");
    }
    config.layers = parse_list(layers, "--layers");
    config.stacks = stacks;
    config.channels = channels;
    config.steps = steps;
    config.batches = parse_list(batch, "--batch");
    config.mode = fastgen::parse_mode(mode);
    config.repeats = repeats;
    config.seed = seed;
    config.image_size = image_size;
    config.parallel = parallel;
    if (spec_opt->count() > 0) {
      config.spec = fastgen::spec_from_json(read_file(spec_path));
      config.model = config.spec->family;
    }
    if (quick) {
      config.steps = std::min<Index>(config.steps, 32);
      config.repeats = std::min<Index>(config.repeats, 3);
    }

    const auto records = fastgen::run_bench(config, &std::cerr);
    if (csv == "-") {
      fastgen::write_csv(std::cout, records);
    } else {
      std::ofstream os(csv);
      if (!os) throw fastgen::Error("cannot open " + csv);
      fastgen::write_csv(os, records);
    }
    for (const auto& r : records) {
      if (r.max_abs_diff && !(*r.max_abs_diff <= 1e-5)) {
        std::cerr << "fastgen: naive and cached outputs differ by " << *r.max_abs_diff << " (" << r.model
                  << " L=" << r.layers << " batch=" << r.batch << ")\n";
        return 1;
      }
    }
    return 0;
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const fastgen::InvalidParameter& e) {
    std::cerr << "fastgen: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "fastgen: " << e.what() << "\n";
    return 1;
  }
}
