// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fastgen/cache.hpp"
#include "fastgen/tensor.hpp"

namespace fastgen {

enum class Family { dilated, strided, image2d };

std::string to_string(Family family);
Family parse_family(std::string_view text);

/// Geometry of the 2D family. Only read when family == image2d.
struct ImageGeometry {
  Index height = 16;
  Index width = 16;
  Index vkernel_h = 2;  ///< vertical-stream filter height (rows strictly above)
  Index vkernel_w = 3;  ///< vertical-stream filter width (centred)
  Index hkernel_w = 2;  ///< horizontal-stream filter width (strictly left)
  bool resample = false;  ///< insert a row-stride-2 down/up pair after the first vertical layer

  friend bool operator==(const ImageGeometry&, const ImageGeometry&) = default;
};

/// Declarative description of a layer stack. (spec, seed) determines every
/// weight.
struct NetworkSpec {
  Family family = Family::dilated;
  Index stacks = 1;
  Index layers = 1;  ///< dilated layers per stack; layer count for image2d
  Index kernel = 2;
  Index channels = 1;
  std::vector<LayerRate> strides;  ///< strided family only
  std::uint64_t seed = 0;
  ImageGeometry image;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Throws InvalidParameter / UnsupportedTopology for specs no engine accepts.
void validate(const NetworkSpec& spec);

std::string to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(std::string_view text);

/// Balanced encoder/decoder: `depth` downs followed by `depth` ups.
std::vector<LayerRate> encoder_decoder_rates(Index depth = 2, Index stride = 2);

/// Seeded weight source. Kernels and biases are uniform in
/// [-0.5/sqrt(fan_in), +0.5/sqrt(fan_in)] with fan_in = in_channels * taps.
class WeightSampler {
 public:
  explicit WeightSampler(std::uint64_t seed) : rng_(seed) {}

  ConvWeightsf conv(std::vector<Index> kernel_shape);
  /// Same shape, zero bias (used for stream-mixing 1x1 kernels).
  ConvWeightsf conv_no_bias(std::vector<Index> kernel_shape);

 private:
  std::mt19937_64 rng_;
};

}  // namespace fastgen
