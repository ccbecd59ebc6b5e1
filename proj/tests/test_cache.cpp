// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <deque>
#include <random>

#include "fastgen/cache.hpp"

namespace fastgen {
namespace {

Batchf state(float v, Index channels = 1, Index batch = 1) { return Batchf::Constant(channels, batch, v); }

TEST(FifoCache, StartsFullOfZeros) {
  FifoCache<float> cache(3, 2, 1);
  EXPECT_EQ(cache.size(), 3);
  EXPECT_EQ(cache.stored_values(), 6);
  for (Index i = 0; i < 3; ++i) EXPECT_TRUE(cache.peek(i).isZero());
}

TEST(FifoCache, PopReturnsStatePushedCapacityStepsEarlier) {
  // Replay against a std::deque model of a delay line.
  for (Index capacity : {1, 2, 5, 8}) {
    FifoCache<float> cache(capacity, 1, 1);
    std::deque<float> model(static_cast<std::size_t>(capacity), 0.0f);
    for (int t = 0; t < 40; ++t) {
      Batchf out;
      cache.pop(out);
      EXPECT_EQ(out(0, 0), model.front());
      model.pop_front();
      cache.push(state(static_cast<float>(t + 1)));
      model.push_back(static_cast<float>(t + 1));
      cache.tick();
      for (Index i = 0; i < capacity - 1; ++i) EXPECT_EQ(cache.peek(i)(0, 0), model[static_cast<std::size_t>(i)]);
    }
  }
}

TEST(FifoCache, CacheEveryGatesPopAndPush) {
  FifoCache<float> cache(2, 1, 3);
  for (int t = 0; t < 12; ++t) {
    if (t % 3 == 0) {
      EXPECT_TRUE(cache.ready());
      cache.pop();
      cache.push(state(static_cast<float>(t)));
    } else {
      EXPECT_FALSE(cache.ready());
      EXPECT_THROW(cache.pop(), ScheduleViolation);
      EXPECT_THROW(cache.push(state(1.0f)), ScheduleViolation);
    }
    cache.tick();
  }
  // Pushed at t = 6 and t = 9.
  EXPECT_EQ(cache.peek(0)(0, 0), 6.0f);
  EXPECT_EQ(cache.peek(1)(0, 0), 9.0f);
}

TEST(FifoCache, ErrorPaths) {
  EXPECT_THROW(FifoCache<float>(0, 1, 1), InvalidParameter);
  EXPECT_THROW(FifoCache<float>(1, 1, 0), InvalidParameter);
  FifoCache<float> cache(2, 2, 1, 3);
  EXPECT_THROW(cache.push(state(1.0f, 2, 3)), ScheduleViolation);  // full
  cache.pop();
  EXPECT_THROW(cache.push(state(1.0f, 1, 3)), ShapeError);
  EXPECT_THROW(cache.peek(1), ScheduleViolation);
  cache.push(state(1.0f, 2, 3));
  cache.reset();
  EXPECT_TRUE(cache.peek(1).isZero());
}

TEST(RowCache, KeepsTheLastRowsOldestFirst) {
  RowCache<float> cache(2, 3, 1);
  for (int r = 0; r < 4; ++r) {
    std::vector<Batchf> row;
    for (int c = 0; c < 3; ++c) row.push_back(state(static_cast<float>(10 * r + c)));
    cache.push_row(row);
  }
  EXPECT_EQ(cache.rows_pushed(), 4);
  EXPECT_EQ(cache.at(0, 1)(0, 0), 21.0f);
  EXPECT_EQ(cache.at(1, 2)(0, 0), 32.0f);
  EXPECT_TRUE(cache.at(1, -1).isZero());
  EXPECT_TRUE(cache.at(1, 3).isZero());

  std::vector<const Batchf*> taps;
  cache.window(0, 2, taps);
  ASSERT_EQ(taps.size(), 4u);
  EXPECT_TRUE(taps[0]->isZero());
  EXPECT_EQ((*taps[1])(0, 0), 20.0f);
  EXPECT_TRUE(taps[2]->isZero());
  EXPECT_EQ((*taps[3])(0, 0), 30.0f);
  EXPECT_EQ(cache.stored_values(), 6);
}

TEST(RowCache, RejectsPartialRows) {
  RowCache<float> cache(2, 3, 1);
  std::vector<Batchf> partial(2, state(0.0f));
  EXPECT_THROW(cache.push_row(partial), InvalidRow);
  std::vector<Batchf> wrong(3, state(0.0f, 2));
  EXPECT_THROW(cache.push_row(wrong), ShapeError);
  std::vector<const Batchf*> taps;
  EXPECT_THROW(cache.window(0, 4, taps), InsufficientContext);
}

TEST(LayerRate, ParseAndPrint) {
  EXPECT_EQ(parse_layer_rate("down2"), (LayerRate{LayerKind::down, 2}));
  EXPECT_EQ(parse_layer_rate("up4"), (LayerRate{LayerKind::up, 4}));
  EXPECT_EQ(parse_layer_rate("dilated8"), (LayerRate{LayerKind::dilated, 8}));
  EXPECT_EQ(to_string(LayerRate{LayerKind::up, 3}), "up3");
  EXPECT_THROW(parse_layer_rate("sideways2"), InvalidParameter);
  EXPECT_THROW(parse_layer_rate("down0"), InvalidParameter);
  EXPECT_THROW(parse_layer_rate("down"), InvalidParameter);
}

TEST(Schedule, EncoderDecoderCacheEvery) {
  const std::vector<LayerRate> rates{{LayerKind::down, 2}, {LayerKind::down, 2}, {LayerKind::up, 2}, {LayerKind::up, 2}};
  const Schedule s = schedule_build(rates);
  EXPECT_EQ(s.cache_every, (std::vector<Index>{1, 2, 4, 2, 1}));
  EXPECT_EQ(s.fire_every, (std::vector<Index>{2, 4, 4, 4}));
  EXPECT_EQ(s.emit_count, (std::vector<Index>{1, 1, 2, 4}));
  EXPECT_EQ(s.period, 4);
  EXPECT_TRUE(schedule_fires(s, 0, 2));
  EXPECT_FALSE(schedule_fires(s, 1, 2));
  EXPECT_TRUE(schedule_fires(s, 3, 8));
}

TEST(Schedule, DilatedStacksFireEveryStep) {
  const std::vector<LayerRate> rates{{LayerKind::dilated, 1}, {LayerKind::dilated, 2}, {LayerKind::dilated, 4}};
  const Schedule s = schedule_build(rates);
  EXPECT_EQ(s.cache_every, (std::vector<Index>{1, 1, 1, 1}));
  EXPECT_EQ(s.emit_count, (std::vector<Index>{1, 1, 1}));
  EXPECT_EQ(s.period, 1);
}

TEST(Schedule, UnsupportedTopologies) {
  using K = LayerKind;
  EXPECT_THROW(schedule_build(std::vector<LayerRate>{}), InvalidParameter);
  EXPECT_THROW(schedule_build(std::vector<LayerRate>{{K::down, 2}, {K::dilated, 2}, {K::up, 2}}), UnsupportedTopology);
  EXPECT_THROW(schedule_build(std::vector<LayerRate>{{K::down, 2}, {K::up, 2}, {K::down, 2}, {K::up, 2}}),
               UnsupportedTopology);
  EXPECT_THROW(schedule_build(std::vector<LayerRate>{{K::up, 2}, {K::down, 2}}), UnsupportedTopology);
  EXPECT_THROW(schedule_build(std::vector<LayerRate>{{K::down, 2}, {K::up, 3}}), UnsupportedTopology);
  EXPECT_THROW(schedule_build(std::vector<LayerRate>{{K::down, 4}, {K::up, 2}}), UnsupportedTopology);
}

TEST(Schedule, RandomBalancedStacksProduceOneSamplePerStepOnAverage) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LayerRate> rates;
    std::vector<Index> factors;
    const int depth = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < depth; ++i) factors.push_back(2 + static_cast<Index>(rng() % 2));
    for (Index f : factors) rates.push_back({LayerKind::down, f});
    for (auto it = factors.rbegin(); it != factors.rend(); ++it) rates.push_back({LayerKind::up, *it});
    const Schedule s = schedule_build(rates);
    // Over one period every layer produces period / cache_every(out) nodes.
    for (Index i = 0; i < s.layers(); ++i) {
      Index produced = 0;
      for (Index t = 0; t < s.period; ++t) {
        if (s.fires(i, t)) produced += s.emit_count[static_cast<std::size_t>(i)];
      }
      EXPECT_EQ(produced * s.cache_every[static_cast<std::size_t>(i + 1)], s.period);
    }
  }
}

}  // namespace
}  // namespace fastgen
