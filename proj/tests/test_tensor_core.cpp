// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "fastgen/conv.hpp"
#include "oracles.hpp"

namespace fastgen {
namespace {

ConvWeightsf weights_1d(std::vector<float> kernel, std::vector<float> bias, Index out, Index in, Index k) {
  Tensorf kt({out, in, k});
  std::copy(kernel.begin(), kernel.end(), kt.data());
  Tensorf bt({out});
  std::copy(bias.begin(), bias.end(), bt.data());
  return {std::move(kt), std::move(bt)};
}

ConvWeightsf random_weights(std::mt19937_64& rng, std::vector<Index> shape) {
  Tensorf k(shape);
  const auto kv = oracle::uniform(rng, k.size());
  std::copy(kv.begin(), kv.end(), k.data());
  Tensorf b({shape[0]});
  const auto bv = oracle::uniform(rng, b.size());
  std::copy(bv.begin(), bv.end(), b.data());
  return {std::move(k), std::move(b)};
}

Tensorf sequence(std::vector<float> v) {
  Tensorf t({1, static_cast<Index>(v.size())});
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

TEST(Tensor, ShapeAndRowMajorIndexing) {
  Tensorf t({2, 3});
  EXPECT_EQ(t.size(), 6);
  t(1, 2) = 5.0f;
  EXPECT_EQ(t.data()[5], 5.0f);
  EXPECT_THROW(Tensorf({2, 0}), ShapeError);
  EXPECT_TRUE(t.all_finite());
}

TEST(ConvWeights, RejectsMismatchedBias) {
  EXPECT_THROW(ConvWeightsf(Tensorf({2, 1, 2}), Tensorf({3})), ShapeError);
  EXPECT_THROW(ConvWeightsf(Tensorf({2, 1}), Tensorf({2})), ShapeError);
}

TEST(Conv1dPoint, IdentityAndSum) {
  OpCounter c;
  const auto id = weights_1d({0, 1}, {0}, 1, 1, 2);
  const std::vector<Vectorf> taps{Vectorf::Constant(1, 3.0f), Vectorf::Constant(1, 4.0f)};
  EXPECT_EQ(conv1d_point(id, std::span<const Vectorf>(taps), c)(0), 4.0f);
  const auto sum = weights_1d({1, 1}, {0}, 1, 1, 2);
  EXPECT_EQ(conv1d_point(sum, std::span<const Vectorf>(taps), c)(0), 7.0f);
  EXPECT_EQ(c.macs, 4u);
  EXPECT_EQ(c.node_evals, 2u);
}

TEST(Conv1dPoint, RejectsWrongTapCountAndWidth) {
  OpCounter c;
  const auto w = weights_1d({1, 1}, {0}, 1, 1, 2);
  const std::vector<Vectorf> one{Vectorf::Zero(1)};
  EXPECT_THROW(conv1d_point(w, std::span<const Vectorf>(one), c), ShapeError);
  const std::vector<Vectorf> wide{Vectorf::Zero(2), Vectorf::Zero(2)};
  EXPECT_THROW(conv1d_point(w, std::span<const Vectorf>(wide), c), ShapeError);
}

TEST(Conv1dPoint, MatchesScalarOracleOnRandomCases) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Index out = 1 + static_cast<Index>(rng() % 5);
    const Index in = 1 + static_cast<Index>(rng() % 5);
    const Index k = 1 + static_cast<Index>(rng() % 4);
    const auto w = random_weights(rng, {out, in, k});
    std::vector<Vectorf> taps;
    std::vector<std::vector<float>> raw;
    for (Index t = 0; t < k; ++t) {
      raw.push_back(oracle::uniform(rng, in));
      taps.push_back(Eigen::Map<const Vectorf>(raw.back().data(), in));
    }
    OpCounter c;
    const Vectorf got = conv1d_point(w, std::span<const Vectorf>(taps), c);
    const auto want = oracle::conv_point(w, raw);
    for (Index o = 0; o < out; ++o) EXPECT_NEAR(got(o), want[static_cast<std::size_t>(o)], 1e-6);
    EXPECT_EQ(c.macs, static_cast<std::uint64_t>(out * in * k));
  }
}

TEST(ConvPoint, BatchedLanesEqualSingleLaneRuns) {
  std::mt19937_64 rng(3);
  const auto w = random_weights(rng, {6, 5, 3});
  const Index batch = 7;
  std::vector<Batchf> taps;
  for (int t = 0; t < 3; ++t) taps.push_back(Batchf::Random(5, batch));
  std::vector<const Batchf*> ptrs;
  for (const auto& t : taps) ptrs.push_back(&t);
  Batchf out;
  OpCounter c;
  conv_point<float>(w, ptrs, out, c);
  EXPECT_EQ(c.macs, static_cast<std::uint64_t>(6 * 5 * 3 * batch));
  EXPECT_EQ(c.node_evals, static_cast<std::uint64_t>(batch));
  for (Index b = 0; b < batch; ++b) {
    std::vector<Batchf> lane;
    for (const auto& t : taps) lane.push_back(t.col(b));
    std::vector<const Batchf*> lp;
    for (const auto& t : lane) lp.push_back(&t);
    Batchf single;
    conv_point<float>(w, lp, single, c);
    for (Index o = 0; o < 6; ++o) EXPECT_EQ(single(o, 0), out(o, b));  // bit-exact across paths
  }
}

TEST(Conv1dFull, IdentityKernelCopiesInput) {
  OpCounter c;
  const auto id = weights_1d({0, 1}, {0}, 1, 1, 2);
  const Tensorf x = sequence({1, -2, 3, 5});
  EXPECT_EQ(conv1d_full(id, x, 3, true, c), x);
}

TEST(Conv1dFull, HandValuesWithDilationTwo) {
  OpCounter c;
  const auto sum = weights_1d({1, 1}, {0}, 1, 1, 2);
  const Tensorf y = conv1d_full(sum, sequence({1, 2, 3, 4}), 2, true, c);
  const std::vector<float> want{1, 2, 4, 6};
  ASSERT_EQ(y.size(), 4);
  for (Index i = 0; i < 4; ++i) EXPECT_EQ(y.data()[i], want[static_cast<std::size_t>(i)]);
  EXPECT_EQ(c.macs, 8u);
  EXPECT_EQ(c.node_evals, 4u);
}

TEST(Conv1dFull, ErrorPaths) {
  OpCounter c;
  const auto w = weights_1d({1, 1}, {0}, 1, 1, 2);
  EXPECT_THROW(conv1d_full(w, Tensorf(), 1, true, c), EmptyInput);
  EXPECT_THROW(conv1d_full(w, sequence({1, 2}), 2, false, c), InsufficientContext);
  EXPECT_EQ(conv1d_full(w, sequence({1, 2, 3}), 2, false, c).size(), 1);
  EXPECT_THROW(conv1d_full(w, Tensorf({2, 4}), 1, true, c), ShapeError);
}

TEST(Conv1dFull, StackedDilationsSeeOnlySevenSteps) {
  std::mt19937_64 rng(21);
  std::vector<ConvWeightsf> layers;
  for (int i = 0; i < 3; ++i) layers.push_back(random_weights(rng, {3, i == 0 ? 1 : 3, 2}));
  auto run = [&](const std::vector<float>& v) {
    OpCounter c;
    Tensorf x = sequence(v);
    for (int i = 0; i < 3; ++i) {
      x = conv1d_full(layers[static_cast<std::size_t>(i)], x, Index{1} << i, true, c);
      tanh_inplace(x.values());
    }
    return x;
  };
  const auto base = oracle::uniform(rng, 20);
  const Tensorf y = run(base);
  for (Index t = 8; t < 20; ++t) {
    auto far = base;
    far[static_cast<std::size_t>(t - 8)] += 3.0f;
    EXPECT_EQ(run(far)(0, t), y(0, t)) << "t-8 leaked into t=" << t;
    auto near = base;
    near[static_cast<std::size_t>(t - 7)] += 3.0f;
    EXPECT_NE(run(near)(0, t), y(0, t)) << "t-7 should reach t=" << t;
  }
}

TEST(StridedConv, StrideArithmetic) {
  OpCounter c;
  std::mt19937_64 rng(4);
  const auto w = random_weights(rng, {2, 1, 2});
  EXPECT_EQ(strided_conv1d(w, sequence({1, 2, 3, 4}), 2, c).dim(1), 2);
  EXPECT_EQ(strided_conv1d(w, sequence({1, 2, 3, 4, 5}), 2, c).dim(1), 3);
  EXPECT_THROW(strided_conv1d(w, sequence({1}), 0, c), InvalidParameter);
  const auto up = random_weights(rng, {1, 2, 2});
  EXPECT_EQ(strided_transposed_conv1d(up, Tensorf({2, 3}), 2, c).dim(1), 6);
  EXPECT_THROW(strided_transposed_conv1d(up, Tensorf({2, 3}), 0, c), InvalidParameter);
}

TEST(StridedConv, StrideOneIsCausalConvolution) {
  OpCounter c;
  std::mt19937_64 rng(8);
  const auto w = random_weights(rng, {3, 2, 3});
  Tensorf x({2, 9});
  const auto v = oracle::uniform(rng, 18);
  std::copy(v.begin(), v.end(), x.data());
  EXPECT_EQ(strided_conv1d(w, x, 1, c), conv1d_full(w, x, 1, true, c));
}

TEST(StridedConv, MatchesIndexOracle) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const Index s = 1 + static_cast<Index>(rng() % 3);
    const Index k = 1 + static_cast<Index>(rng() % 4);
    const Index len = 1 + static_cast<Index>(rng() % 9);
    const auto w = random_weights(rng, {2, 2, k});
    Tensorf x({2, len});
    const auto v = oracle::uniform(rng, 2 * len);
    std::copy(v.begin(), v.end(), x.data());
    OpCounter c;
    const Tensorf down = strided_conv1d(w, x, s, c);
    for (Index j = 0; j < down.dim(1); ++j) {
      std::vector<std::vector<float>> taps;
      for (Index i = 0; i < k; ++i) {
        const Index p = s * j - (k - 1) + i;
        taps.push_back(p >= 0 && p < len ? std::vector<float>{x(0, p), x(1, p)} : std::vector<float>{0, 0});
      }
      const auto want = oracle::conv_point(w, taps);
      for (Index o = 0; o < 2; ++o) EXPECT_NEAR(down(o, j), want[static_cast<std::size_t>(o)], 1e-6);
    }
    const Tensorf up = strided_transposed_conv1d(w, x, s, c);
    for (Index n = 0; n < up.dim(1); ++n) {
      // Scatter form: output n collects kernel tap i from input m with s*m + i == n.
      for (Index o = 0; o < 2; ++o) {
        double acc = w.b(o);
        for (Index m = 0; m < len; ++m) {
          const Index i = n - s * m;
          if (i < 0 || i >= k) continue;
          for (Index ch = 0; ch < 2; ++ch) acc += static_cast<double>(w.w(o, ch, i)) * x(ch, m);
        }
        EXPECT_NEAR(up(o, n), acc, 1e-5);
      }
    }
  }
}

TEST(StridedConv, TransposedThenStridedPreservesLength) {
  OpCounter c;
  const auto up = weights_1d({1, 0}, {0}, 1, 1, 2);
  const auto down = weights_1d({1, 0}, {0}, 1, 1, 2);
  const Tensorf x = sequence({1, 2, 3, 4, 5});
  const Tensorf y = strided_conv1d(down, strided_transposed_conv1d(up, x, 2, c), 2, c);
  EXPECT_EQ(y.dim(1), x.dim(1));
}

TEST(MaskedConv2d, ZeroInputGivesBias) {
  std::mt19937_64 rng(1);
  const auto w = random_weights(rng, {2, 1, 2, 3});
  OpCounter c;
  const Tensorf y = masked_conv2d(w, Tensorf({1, 4, 5}), MaskKind::vertical, c);
  for (Index o = 0; o < 2; ++o) {
    for (Index r = 0; r < 4; ++r) {
      for (Index col = 0; col < 5; ++col) EXPECT_EQ(y(o, r, col), w.b(o));
    }
  }
  EXPECT_EQ(c.node_evals, 20u);
  EXPECT_EQ(c.macs, static_cast<std::uint64_t>(20 * 2 * 1 * 6));
}

TEST(MaskedConv2d, PerturbationOracleOnSixBySix) {
  std::mt19937_64 rng(6);
  const auto vw = random_weights(rng, {2, 1, 2, 3});
  const auto hw = random_weights(rng, {2, 1, 1, 2});
  Tensorf x({1, 6, 6});
  const auto v = oracle::uniform(rng, 36);
  std::copy(v.begin(), v.end(), x.data());
  OpCounter c;
  const Tensorf v0 = masked_conv2d(vw, x, MaskKind::vertical, c);
  const Tensorf h0 = masked_conv2d(hw, x, MaskKind::horizontal, c);
  for (Index pr = 0; pr < 6; ++pr) {
    for (Index pc = 0; pc < 6; ++pc) {
      Tensorf z = x;
      z(0, pr, pc) += 1.0f;
      const Tensorf v1 = masked_conv2d(vw, z, MaskKind::vertical, c);
      const Tensorf h1 = masked_conv2d(hw, z, MaskKind::horizontal, c);
      for (Index r = 0; r < 6; ++r) {
        for (Index col = 0; col < 6; ++col) {
          for (Index o = 0; o < 2; ++o) {
            // Vertical: rows at or below the perturbed row never move.
            if (r <= pr) {
              EXPECT_EQ(v1(o, r, col), v0(o, r, col));
            }
            // Horizontal: only later columns of the same row may move.
            if (r != pr || col <= pc) {
              EXPECT_EQ(h1(o, r, col), h0(o, r, col));
            }
          }
        }
      }
    }
  }
}

TEST(MaskedConv2d, ErrorPaths) {
  std::mt19937_64 rng(2);
  OpCounter c;
  const auto big = random_weights(rng, {1, 1, 5, 3});
  EXPECT_THROW(masked_conv2d(big, Tensorf({1, 4, 4}), MaskKind::vertical, c), InsufficientContext);
  const auto tall = random_weights(rng, {1, 1, 2, 2});
  EXPECT_THROW(masked_conv2d(tall, Tensorf({1, 4, 4}), MaskKind::horizontal, c), InvalidParameter);
  EXPECT_THROW(masked_conv2d(tall, Tensorf(), MaskKind::vertical, c), EmptyInput);
}

TEST(MaskedConv2d, RowStrideSamplesEveryOtherRow) {
  std::mt19937_64 rng(12);
  const auto w = random_weights(rng, {2, 2, 2, 3});
  Tensorf x({2, 5, 4});
  const auto v = oracle::uniform(rng, x.size());
  std::copy(v.begin(), v.end(), x.data());
  OpCounter c;
  const Tensorf full = masked_conv2d(w, x, MaskKind::vertical, c);
  const Tensorf half = masked_conv2d(w, x, MaskKind::vertical, c, 2);
  ASSERT_EQ(half.dim(1), 3);
  for (Index j = 0; j < 3; ++j) {
    for (Index col = 0; col < 4; ++col) EXPECT_EQ(half(1, j, col), full(1, 2 * j, col));
  }
}

}  // namespace
}  // namespace fastgen
