// SPDX-License-Identifier: Apache-2.0

// Raster-order 2D generation with a vertical and a horizontal stream.
//
// Layer l computes
//   v[l] = tanh(Vconv_l(v[l-1]))                   rows strictly above
//   h[l] = tanh(Hconv_l(h[l-1]) + Mix_l(v[l]))     columns strictly left
// with v[-1] = h[-1] = x, and the output is a 1x1 linear head on h[L-1].
// Mix_l is a bias-free 1x1 convolution; it is counted in MACs but not as a
// node. With geometry.resample set, v[0] also passes through a row-stride-2
// masked convolution (D) and a stride-2 transposed row convolution (U), and
// layer 1 reads U's output instead of v[0].
//
// The cached engine keeps one RowCache of `vkernel_h` rows per vertical input
// and one column FIFO per horizontal layer. The vertical stream is computed
// once per row (vertical_row_pass), the horizontal stream once per pixel.

#pragma once

#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fastgen/cache.hpp"
#include "fastgen/conv.hpp"
#include "fastgen/generation.hpp"
#include "fastgen/network_spec.hpp"

namespace fastgen {

class ImageNetwork {
 public:
  explicit ImageNetwork(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const ImageGeometry& geometry() const { return spec_.image; }
  Index height() const { return spec_.image.height; }
  Index width() const { return spec_.image.width; }
  Index layer_count() const { return spec_.layers; }
  Index channels() const { return spec_.channels; }
  bool resample() const { return spec_.image.resample; }

  const ConvWeightsf& vertical(Index l) const { return vertical_[static_cast<std::size_t>(l)]; }
  ConvWeightsf& vertical(Index l) { return vertical_[static_cast<std::size_t>(l)]; }
  const ConvWeightsf& horizontal(Index l) const { return horizontal_[static_cast<std::size_t>(l)]; }
  ConvWeightsf& horizontal(Index l) { return horizontal_[static_cast<std::size_t>(l)]; }
  const ConvWeightsf& mix(Index l) const { return mix_[static_cast<std::size_t>(l)]; }
  const ConvWeightsf& head() const { return head_; }
  ConvWeightsf& head() { return head_; }
  /// Resample pair; only meaningful when resample() is set.
  const ConvWeightsf& down() const { return down_; }
  const ConvWeightsf& up() const { return up_; }
  const Schedule& resample_schedule() const { return schedule_; }

 private:
  NetworkSpec spec_;
  std::vector<ConvWeightsf> vertical_;
  std::vector<ConvWeightsf> horizontal_;
  std::vector<ConvWeightsf> mix_;
  ConvWeightsf head_;
  ConvWeightsf down_;
  ConvWeightsf up_;
  Schedule schedule_;
};

/// Every intermediate map of one full-image pass.
struct ImageActivations {
  std::vector<Tensorf> vertical;    ///< [C, H, W] per layer
  std::vector<Tensorf> horizontal;  ///< [C, H, W] per layer
  Tensorf output;                   ///< [1, H, W]
};

/// Full-image teacher-forced pass over x [1, H, W].
ImageActivations image_forward_all(const ImageNetwork& net, const Tensorf& x, OpCounter& counter);
Tensorf image_forward(const ImageNetwork& net, const Tensorf& x, OpCounter& counter);

/// Cached generator for a batch of images. Drive it row by row:
///
///   for r: vertical_row_pass(r); for c: pixel(c); commit(value)
class ImageIncremental {
 public:
  explicit ImageIncremental(const ImageNetwork& net, Index batch = 1);

  /// Vertical stream of every layer for `row`, [layer][column]. Rows must be
  /// passed in order, each after the previous row was fully committed.
  const std::vector<std::vector<Batchf>>& vertical_row_pass(Index row);

  /// Output (1 x batch) at column `col` of the current row; columns in order.
  const Batchf& pixel(Index col);
  /// Writes the generated value of the last pixel() and advances one column.
  void commit(const Batchf& value);

  const OpCounter& counter() const { return counter_; }
  Index vertical_passes() const { return vertical_passes_; }
  /// Scalars held by row caches, column FIFOs and the pending row queue.
  Index stored_values() const;

 private:
  const ImageNetwork* net_;
  Index batch_;
  std::vector<RowCache<float>> vin_;      // input rows of each vertical layer
  std::optional<RowCache<float>> down_in_;  // v[0] rows read by D
  std::deque<std::vector<Batchf>> pending_rows_;
  std::vector<FifoCache<float>> hfifo_;
  std::vector<std::vector<Batchf>> vrow_;  // [layer][column]
  std::vector<Batchf> hcur_;
  std::vector<Batchf> xrow_;
  std::vector<Batchf> drow_;
  std::vector<const Batchf*> taps_;
  Batchf mixed_;
  Batchf scratch_;
  Batchf output_;
  OpCounter counter_;
  Index row_ = -1;
  Index col_ = 0;
  bool pixel_ready_ = false;
  Index vertical_passes_ = 0;
};

/// Images are [H, W]. primes may be empty or hold one raster-order sequence
/// per batch element; pixel i takes primes[b][i] while it lasts and the raw
/// output afterwards.
std::vector<Tensorf> image_naive_generate(const ImageNetwork& net, Index batch,
                                          std::span<const std::vector<float>> primes = {},
                                          OpCounter* counter = nullptr);
std::vector<Tensorf> image_incremental_generate(const ImageNetwork& net, Index batch,
                                                std::span<const std::vector<float>> primes = {},
                                                OpCounter* counter = nullptr);

/// Cost of one full-image pass for one element. The naive engine pays this per
/// pixel; the cached engine pays it once per image.
StepCost image_forward_cost(const ImageNetwork& net);

/// Binary greymap (P5), min-max normalised to 0..255.
void write_pgm(const std::string& path, const Tensorf& image);

}  // namespace fastgen
