// SPDX-License-Identifier: Apache-2.0

// Convolution kernels shared by the naive and the cached engines.
//
// Every kernel accumulates a single output value in the same order: bias first,
// then taps oldest to newest, and within a tap channels in ascending order. Both
// engines therefore round identically and agree bit for bit.

#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "fastgen/tensor.hpp"

namespace fastgen {

enum class MaskKind { vertical, horizontal };

namespace detail {

template <typename Scalar, typename KernelTap>
void conv_point_impl(const ConvWeights<Scalar>& w, std::span<const Batch<Scalar>* const> taps, KernelTap&& kernel_tap,
                     Batch<Scalar>& out, OpCounter& counter, bool count_node) {
  const Index out_ch = w.out_channels();
  const Index in_ch = w.in_channels();
  const Index k = w.taps();
  const Index n_taps = static_cast<Index>(taps.size());
  if (n_taps == 0) throw ShapeError("conv point needs at least one tap");
  const Index batch = taps[0]->cols();
  for (Index t = 0; t < n_taps; ++t) {
    const Batch<Scalar>& x = *taps[static_cast<std::size_t>(t)];
    if (x.rows() != in_ch || x.cols() != batch) {
      throw ShapeError("tap " + std::to_string(t) + " is " + std::to_string(x.rows()) + "x" +
                       std::to_string(x.cols()) + ", kernel expects " + std::to_string(in_ch) + " channels");
    }
    const Index kt = kernel_tap(t);
    if (kt < 0 || kt >= k) throw ShapeError("kernel tap index out of range");
  }

  out.resize(out_ch, batch);
  const Scalar* kernel = w.kernel().data();
  if (batch == 1) {
    for (Index o = 0; o < out_ch; ++o) {
      Scalar acc = w.b(o);
      const Scalar* wo = kernel + o * in_ch * k;
      for (Index t = 0; t < n_taps; ++t) {
        const Scalar* x = taps[static_cast<std::size_t>(t)]->data();
        const Index kt = kernel_tap(t);
        for (Index c = 0; c < in_ch; ++c) acc += wo[c * k + kt] * x[c];
      }
      out(o, 0) = acc;
    }
  } else {
    for (Index o = 0; o < out_ch; ++o) {
      auto row = out.row(o);
      row.setConstant(w.b(o));
      const Scalar* wo = kernel + o * in_ch * k;
      for (Index t = 0; t < n_taps; ++t) {
        const Batch<Scalar>& x = *taps[static_cast<std::size_t>(t)];
        const Index kt = kernel_tap(t);
        for (Index c = 0; c < in_ch; ++c) row += wo[c * k + kt] * x.row(c);
      }
    }
  }
  counter.macs += static_cast<std::uint64_t>(out_ch * in_ch * n_taps * batch);
  if (count_node) counter.node_evals += static_cast<std::uint64_t>(batch);
}

inline Index ceil_div(Index a, Index b) { return (a + b - 1) / b; }

}  // namespace detail

/// One output node from explicit taps (oldest first); tap t uses kernel tap t.
template <typename Scalar>
void conv_point(const ConvWeights<Scalar>& w, std::span<const Batch<Scalar>* const> taps, Batch<Scalar>& out,
                OpCounter& counter, bool count_node = true) {
  if (static_cast<Index>(taps.size()) != w.taps()) {
    throw ShapeError("expected " + std::to_string(w.taps()) + " taps, got " + std::to_string(taps.size()));
  }
  detail::conv_point_impl(w, taps, [](Index t) { return t; }, out, counter, count_node);
}

/// One output node where tap t is multiplied by kernel tap kernel_taps[t].
template <typename Scalar>
void conv_point(const ConvWeights<Scalar>& w, std::span<const Batch<Scalar>* const> taps,
                std::span<const Index> kernel_taps, Batch<Scalar>& out, OpCounter& counter, bool count_node = true) {
  if (kernel_taps.size() != taps.size()) throw ShapeError("one kernel tap index is needed per tap");
  detail::conv_point_impl(w, taps, [&](Index t) { return kernel_taps[static_cast<std::size_t>(t)]; }, out, counter,
                          count_node);
}

/// Single-sample form: taps are channel vectors ordered oldest to newest.
template <typename Scalar>
Vector<Scalar> conv1d_point(const ConvWeights<Scalar>& w, std::span<const Vector<Scalar>> taps, OpCounter& counter) {
  if (static_cast<Index>(taps.size()) != w.taps()) {
    throw ShapeError("expected " + std::to_string(w.taps()) + " taps, got " + std::to_string(taps.size()));
  }
  std::vector<Batch<Scalar>> cols;
  cols.reserve(taps.size());
  for (const auto& v : taps) cols.emplace_back(Eigen::Map<const Batch<Scalar>>(v.data(), v.size(), 1));
  std::vector<const Batch<Scalar>*> ptrs;
  for (const auto& c : cols) ptrs.push_back(&c);
  Batch<Scalar> out;
  conv_point<Scalar>(w, ptrs, out, counter);
  return out.col(0);
}

/// Causal dilated convolution over a [channels, T] sequence. With causal_pad
/// the output has T positions and taps before the start read zero; without it
/// only the T - (k-1)*dilation fully supported positions are produced.
template <typename Scalar>
Tensor<Scalar> conv1d_full(const ConvWeights<Scalar>& w, const Tensor<Scalar>& input, Index dilation, bool causal_pad,
                           OpCounter& counter) {
  if (input.size() == 0) throw EmptyInput("conv1d_full: empty input");
  if (input.rank() != 2 || input.dim(0) != w.in_channels()) {
    throw ShapeError("conv1d_full: input " + shape_string(input.shape()) + " does not match kernel " +
                     shape_string(w.kernel().shape()));
  }
  if (dilation < 1) throw InvalidParameter("conv1d_full: dilation must be >= 1");
  const Index in_ch = w.in_channels();
  const Index out_ch = w.out_channels();
  const Index k = w.taps();
  const Index len = input.dim(1);
  const Index reach = (k - 1) * dilation;
  if (!causal_pad && len < reach + 1) {
    throw InsufficientContext("conv1d_full: " + std::to_string(len) + " positions, need " + std::to_string(reach + 1));
  }
  const Index first = causal_pad ? 0 : reach;
  Tensor<Scalar> out({out_ch, len - first});
  for (Index t = first; t < len; ++t) {
    for (Index o = 0; o < out_ch; ++o) {
      Scalar acc = w.b(o);
      for (Index j = 0; j < k; ++j) {
        const Index pos = t - (k - 1 - j) * dilation;
        for (Index c = 0; c < in_ch; ++c) {
          const Scalar x = pos >= 0 ? input(c, pos) : Scalar(0);
          acc += w.w(o, c, j) * x;
        }
      }
      out(o, t - first) = acc;
    }
  }
  const Index points = len - first;
  counter.macs += static_cast<std::uint64_t>(points * out_ch * in_ch * k);
  counter.node_evals += static_cast<std::uint64_t>(points);
  return out;
}

/// Downsampling convolution: output j reads input positions
/// stride*j-(k-1) ... stride*j, so it is available as soon as input stride*j is.
template <typename Scalar>
Tensor<Scalar> strided_conv1d(const ConvWeights<Scalar>& w, const Tensor<Scalar>& input, Index stride,
                              OpCounter& counter) {
  if (stride < 1) throw InvalidParameter("strided_conv1d: stride must be >= 1");
  if (input.size() == 0) throw EmptyInput("strided_conv1d: empty input");
  if (input.rank() != 2 || input.dim(0) != w.in_channels()) {
    throw ShapeError("strided_conv1d: input " + shape_string(input.shape()) + " does not match kernel " +
                     shape_string(w.kernel().shape()));
  }
  const Index in_ch = w.in_channels();
  const Index out_ch = w.out_channels();
  const Index k = w.taps();
  const Index len = input.dim(1);
  const Index out_len = detail::ceil_div(len, stride);
  Tensor<Scalar> out({out_ch, out_len});
  for (Index j = 0; j < out_len; ++j) {
    for (Index o = 0; o < out_ch; ++o) {
      Scalar acc = w.b(o);
      for (Index i = 0; i < k; ++i) {
        const Index pos = stride * j - (k - 1) + i;
        for (Index c = 0; c < in_ch; ++c) {
          const Scalar x = pos >= 0 ? input(c, pos) : Scalar(0);
          acc += w.w(o, c, i) * x;
        }
      }
      out(o, j) = acc;
    }
  }
  counter.macs += static_cast<std::uint64_t>(out_len * out_ch * in_ch * k);
  counter.node_evals += static_cast<std::uint64_t>(out_len);
  return out;
}

/// Number of inputs a transposed-convolution output with residue r reads.
inline Index transposed_tap_count(Index k, Index stride, Index r) {
  return r < k ? (k - 1 - r) / stride + 1 : 0;
}

/// Upsampling (transposed) convolution: input m produces outputs
/// stride*m ... stride*m+stride-1. Output stride*m+r reads inputs m-j with
/// kernel tap stride*j+r, oldest input first.
template <typename Scalar>
Tensor<Scalar> strided_transposed_conv1d(const ConvWeights<Scalar>& w, const Tensor<Scalar>& input, Index stride,
                                         OpCounter& counter) {
  if (stride < 1) throw InvalidParameter("strided_transposed_conv1d: stride must be >= 1");
  if (input.size() == 0) throw EmptyInput("strided_transposed_conv1d: empty input");
  if (input.rank() != 2 || input.dim(0) != w.in_channels()) {
    throw ShapeError("strided_transposed_conv1d: input " + shape_string(input.shape()) + " does not match kernel " +
                     shape_string(w.kernel().shape()));
  }
  const Index in_ch = w.in_channels();
  const Index out_ch = w.out_channels();
  const Index k = w.taps();
  const Index len = input.dim(1);
  Tensor<Scalar> out({out_ch, stride * len});
  std::uint64_t macs = 0;
  for (Index m = 0; m < len; ++m) {
    for (Index r = 0; r < stride; ++r) {
      const Index n_taps = transposed_tap_count(k, stride, r);
      for (Index o = 0; o < out_ch; ++o) {
        Scalar acc = w.b(o);
        for (Index j = n_taps - 1; j >= 0; --j) {
          const Index src = m - j;
          for (Index c = 0; c < in_ch; ++c) {
            const Scalar x = src >= 0 ? input(c, src) : Scalar(0);
            acc += w.w(o, c, stride * j + r) * x;
          }
        }
        out(o, stride * m + r) = acc;
      }
      macs += static_cast<std::uint64_t>(out_ch * in_ch * n_taps);
    }
  }
  counter.macs += macs;
  counter.node_evals += static_cast<std::uint64_t>(stride * len);
  return out;
}

/// Column offset of the leftmost vertical tap relative to the output column.
inline Index vertical_left_reach(Index kernel_width) { return (kernel_width - 1) / 2; }

/// Raster-causal 2D convolution over [channels, H, W].
///
/// vertical: output (r, c) reads rows r-kh ... r-1 (strictly above) and the
///   kw columns centred on c.
/// horizontal: kernel height must be 1; output (r, c) reads columns
///   c-kw ... c-1 of row r (strictly left).
///
/// row_stride > 1 evaluates the vertical mask only at rows 0, s, 2s, ...
template <typename Scalar>
Tensor<Scalar> masked_conv2d(const ConvWeights<Scalar>& w, const Tensor<Scalar>& input, MaskKind mask,
                             OpCounter& counter, Index row_stride = 1) {
  if (input.size() == 0) throw EmptyInput("masked_conv2d: empty input");
  if (input.rank() != 3 || input.dim(0) != w.in_channels() || w.kernel().rank() != 4) {
    throw ShapeError("masked_conv2d: input " + shape_string(input.shape()) + " does not match kernel " +
                     shape_string(w.kernel().shape()));
  }
  if (row_stride < 1) throw InvalidParameter("masked_conv2d: row stride must be >= 1");
  const Index kh = w.kernel_height();
  const Index kw = w.kernel_width();
  const Index height = input.dim(1);
  const Index width = input.dim(2);
  if (mask == MaskKind::horizontal && (kh != 1 || row_stride != 1)) {
    throw InvalidParameter("masked_conv2d: horizontal mask needs a 1 x kw kernel and unit stride");
  }
  if (kh > height || kw > width) {
    throw InsufficientContext("masked_conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                              " exceeds image " + std::to_string(height) + "x" + std::to_string(width));
  }
  const Index in_ch = w.in_channels();
  const Index out_ch = w.out_channels();
  const Index out_h = detail::ceil_div(height, row_stride);
  const Index left = mask == MaskKind::vertical ? vertical_left_reach(kw) : kw;
  const Index row_back = mask == MaskKind::vertical ? kh : 0;

  Tensor<Scalar> out({out_ch, out_h, width});
  for (Index jr = 0; jr < out_h; ++jr) {
    const Index r = jr * row_stride;
    for (Index c = 0; c < width; ++c) {
      for (Index o = 0; o < out_ch; ++o) {
        Scalar acc = w.b(o);
        for (Index i = 0; i < kh; ++i) {
          const Index rr = r - row_back + i;
          for (Index j = 0; j < kw; ++j) {
            const Index cc = c - left + j;
            const bool inside = rr >= 0 && cc >= 0 && cc < width;
            for (Index ch = 0; ch < in_ch; ++ch) {
              const Scalar x = inside ? input(ch, rr, cc) : Scalar(0);
              acc += w.w(o, ch, i * kw + j) * x;
            }
          }
        }
        out(o, jr, c) = acc;
      }
    }
  }
  const Index points = out_h * width;
  counter.macs += static_cast<std::uint64_t>(points * out_ch * in_ch * kh * kw);
  counter.node_evals += static_cast<std::uint64_t>(points);
  return out;
}

/// 1x1 convolution over [channels, H, W]; kernel may be [O, C, 1] or [O, C, 1, 1].
template <typename Scalar>
Tensor<Scalar> pointwise_conv2d(const ConvWeights<Scalar>& w, const Tensor<Scalar>& input, OpCounter& counter,
                                bool count_nodes = true) {
  if (input.rank() != 3 || input.dim(0) != w.in_channels() || w.taps() != 1) {
    throw ShapeError("pointwise_conv2d: input " + shape_string(input.shape()) + " does not match kernel " +
                     shape_string(w.kernel().shape()));
  }
  const Index in_ch = w.in_channels();
  const Index out_ch = w.out_channels();
  const Index height = input.dim(1);
  const Index width = input.dim(2);
  Tensor<Scalar> out({out_ch, height, width});
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      for (Index o = 0; o < out_ch; ++o) {
        Scalar acc = w.b(o);
        for (Index ch = 0; ch < in_ch; ++ch) acc += w.w(o, ch, 0) * input(ch, r, c);
        out(o, r, c) = acc;
      }
    }
  }
  const Index points = height * width;
  counter.macs += static_cast<std::uint64_t>(points * out_ch * in_ch);
  if (count_nodes) counter.node_evals += static_cast<std::uint64_t>(points);
  return out;
}

/// Transposed convolution along rows, applied independently per column:
/// [C, H, W] -> [O, stride*H, W], same tap convention as
/// strided_transposed_conv1d.
template <typename Scalar>
Tensor<Scalar> transposed_rows2d(const ConvWeights<Scalar>& w, const Tensor<Scalar>& input, Index stride,
                                 OpCounter& counter) {
  if (stride < 1) throw InvalidParameter("transposed_rows2d: stride must be >= 1");
  if (input.rank() != 3 || input.dim(0) != w.in_channels() || w.kernel().rank() != 3) {
    throw ShapeError("transposed_rows2d: input " + shape_string(input.shape()) + " does not match kernel " +
                     shape_string(w.kernel().shape()));
  }
  const Index in_ch = w.in_channels();
  const Index out_ch = w.out_channels();
  const Index k = w.taps();
  const Index height = input.dim(1);
  const Index width = input.dim(2);
  Tensor<Scalar> out({out_ch, stride * height, width});
  std::uint64_t macs = 0;
  for (Index m = 0; m < height; ++m) {
    for (Index r = 0; r < stride; ++r) {
      const Index n_taps = transposed_tap_count(k, stride, r);
      for (Index c = 0; c < width; ++c) {
        for (Index o = 0; o < out_ch; ++o) {
          Scalar acc = w.b(o);
          for (Index j = n_taps - 1; j >= 0; --j) {
            const Index src = m - j;
            for (Index ch = 0; ch < in_ch; ++ch) {
              const Scalar x = src >= 0 ? input(ch, src, c) : Scalar(0);
              acc += w.w(o, ch, stride * j + r) * x;
            }
          }
          out(o, stride * m + r, c) = acc;
        }
      }
      macs += static_cast<std::uint64_t>(width * out_ch * in_ch * n_taps);
    }
  }
  counter.macs += macs;
  counter.node_evals += static_cast<std::uint64_t>(stride * height * width);
  return out;
}

}  // namespace fastgen
