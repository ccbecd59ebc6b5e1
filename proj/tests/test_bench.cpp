// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "fastgen/bench.hpp"
#include "fastgen/dilated.hpp"
#include "fastgen/verify.hpp"

namespace fastgen {
namespace {

BenchRecord record(std::string mode, Index layers, Index batch, double us) {
  BenchRecord r;
  r.model = "dilated";
  r.layers = layers;
  r.batch = batch;
  r.mode = std::move(mode);
  r.steps = 64;
  r.repeats = 3;
  r.wall_us_per_step = us;
  r.macs_per_step = 12.5;
  return r;
}

TEST(BenchCsv, RoundTrips) {
  std::vector<BenchRecord> rows{record("naive", 4, 1, 10.0), record("cached", 4, 1, 0.25)};
  rows[0].max_abs_diff = 0.0;
  rows[1].max_abs_diff = 3e-7;
  std::stringstream ss;
  write_csv(ss, rows);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')),
            "model,L,stacks,batch,mode,steps,repeats,wall_us_per_step,macs_per_step,max_abs_diff");
  const auto back = read_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].mode, "naive");
  EXPECT_EQ(back[1].layers, 4);
  EXPECT_DOUBLE_EQ(back[1].wall_us_per_step, 0.25);
  EXPECT_DOUBLE_EQ(back[0].macs_per_step, 12.5);
  ASSERT_TRUE(back[1].max_abs_diff);
  EXPECT_NEAR(*back[1].max_abs_diff, 3e-7, 1e-12);

  std::stringstream no_diff;
  write_csv(no_diff, {record("cached", 2, 1, 1.0)});
  EXPECT_FALSE(read_csv(no_diff)[0].max_abs_diff);
}

TEST(BenchCsv, RejectsMalformedInput) {
  std::stringstream empty;
  EXPECT_THROW(read_csv(empty), InvalidParameter);
  std::stringstream header("model,L\n");
  EXPECT_THROW(read_csv(header), InvalidParameter);
  std::stringstream fields(
      "model,L,stacks,batch,mode,steps,repeats,wall_us_per_step,macs_per_step,max_abs_diff\n"
      "dilated,4,1\n");
  EXPECT_THROW(read_csv(fields), InvalidParameter);
  std::stringstream number(
      "model,L,stacks,batch,mode,steps,repeats,wall_us_per_step,macs_per_step,max_abs_diff\n"
      "dilated,four,1,1,naive,1,1,1,1,\n");
  EXPECT_THROW(read_csv(number), InvalidParameter);
}

TEST(SpeedupReport, EqualTimesGiveUnitSpeedup) {
  const auto report = speedup_report({record("naive", 4, 1, 7.0), record("cached", 4, 1, 7.0)});
  ASSERT_EQ(report.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(report.rows[0].speedup, 1.0);
}

TEST(SpeedupReport, UnmatchedRowsAreNamed) {
  try {
    speedup_report({record("naive", 4, 1, 7.0), record("cached", 6, 1, 1.0)});
    FAIL() << "expected InvalidParameter";
  } catch (const InvalidParameter& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("L=4"), std::string::npos);
    EXPECT_NE(what.find("L=6"), std::string::npos);
  }
  EXPECT_THROW(speedup_report({record("both", 4, 1, 7.0)}), InvalidParameter);
}

TEST(SpeedupReport, FlagsMonotoneSeries) {
  const auto up = speedup_report({record("naive", 2, 1, 4.0), record("cached", 2, 1, 2.0), record("naive", 4, 1, 9.0),
                                  record("cached", 4, 1, 3.0)});
  ASSERT_EQ(up.series.size(), 1u);
  EXPECT_EQ(up.series[0].points, (std::vector<Index>{2, 4}));
  EXPECT_TRUE(up.series[0].strictly_increasing);
  EXPECT_NE(format_report(up).find("(strictly increasing)"), std::string::npos);

  const auto flat = speedup_report({record("naive", 2, 1, 4.0), record("cached", 2, 1, 2.0),
                                    record("naive", 2, 8, 4.0), record("cached", 2, 8, 2.0)});
  ASSERT_EQ(flat.series.size(), 1u);
  EXPECT_FALSE(flat.series[0].strictly_increasing);
}

TEST(RunBench, SmallDilatedRunAgreesWithAnalyticCosts) {
  BenchConfig config;
  config.layers = {3};
  config.channels = 4;
  config.steps = 16;
  config.repeats = 2;
  const auto rows = run_bench(config);
  ASSERT_EQ(rows.size(), 2u);
  const DilatedNetwork net(bench_spec(config, 3));
  for (const auto& r : rows) {
    ASSERT_TRUE(r.max_abs_diff);
    EXPECT_EQ(*r.max_abs_diff, 0.0);
    EXPECT_GT(r.wall_us_per_step, 0.0);
    const double want = r.mode == "naive" ? naive_step_cost(net).macs : cached_step_cost(net).macs;
    EXPECT_EQ(r.macs_per_step, want);
  }
}

TEST(RunBench, EveryFamilyRunsInBothModes) {
  for (Family f : {Family::strided, Family::image2d}) {
    BenchConfig config;
    config.model = f;
    config.layers = {2};
    config.channels = 2;
    config.steps = 8;
    config.repeats = 1;
    config.image_size = 4;
    config.batches = {1, 2};
    const auto rows = run_bench(config);
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) EXPECT_LE(*r.max_abs_diff, 1e-5);
  }
}

TEST(RunBench, RejectsBadConfig) {
  BenchConfig config;
  config.repeats = 0;
  EXPECT_THROW(run_bench(config), InvalidParameter);
  config = BenchConfig{};
  config.batches = {0};
  EXPECT_THROW(run_bench(config), InvalidParameter);
  EXPECT_THROW(parse_mode("fast"), InvalidParameter);
}

TEST(Verify, QuickSuitePassesAndCatchesInjectedFault) {
  for (const auto& r : run_verify({.quick = true, .inject_fault = false})) EXPECT_TRUE(r.passed) << format_check(r);
  bool equivalence_failed = false;
  for (const auto& r : run_verify({.quick = true, .inject_fault = true})) {
    if (r.name.rfind("equivalence_", 0) == 0 && !r.passed) equivalence_failed = true;
  }
  EXPECT_TRUE(equivalence_failed);
}

}  // namespace
}  // namespace fastgen
