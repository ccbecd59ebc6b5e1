// SPDX-License-Identifier: Apache-2.0

#include "fastgen/image.hpp"

#include <algorithm>
#include <fstream>

namespace fastgen {

namespace {

constexpr Index kResampleStride = 2;

Tensorf crop_rows(const Tensorf& t, Index height) {
  const Index channels = t.dim(0);
  const Index width = t.dim(2);
  Tensorf out({channels, height, width});
  for (Index ch = 0; ch < channels; ++ch) {
    std::copy_n(t.data() + ch * t.dim(1) * width, height * width, out.data() + ch * height * width);
  }
  return out;
}

}  // namespace

ImageNetwork::ImageNetwork(NetworkSpec spec) : spec_(std::move(spec)) {
  if (spec_.family != Family::image2d) throw InvalidParameter("ImageNetwork needs an image2d spec");
  validate(spec_);
  const auto& g = spec_.image;
  const Index c = spec_.channels;
  WeightSampler sampler(spec_.seed);
  for (Index l = 0; l < spec_.layers; ++l) {
    const Index in = l == 0 ? 1 : c;
    vertical_.push_back(sampler.conv({c, in, g.vkernel_h, g.vkernel_w}));
    horizontal_.push_back(sampler.conv({c, in, 1, g.hkernel_w}));
    mix_.push_back(sampler.conv_no_bias({c, c, 1, 1}));
  }
  head_ = sampler.conv({1, c, 1, 1});
  if (g.resample) {
    down_ = sampler.conv({c, c, g.vkernel_h, g.vkernel_w});
    up_ = sampler.conv({c, c, kResampleStride});
    const LayerRate pair[] = {{LayerKind::down, kResampleStride}, {LayerKind::up, kResampleStride}};
    schedule_ = schedule_build(pair);
  }
}

ImageActivations image_forward_all(const ImageNetwork& net, const Tensorf& x, OpCounter& counter) {
  if (x.rank() != 3 || x.dim(0) != 1 || x.dim(1) != net.height() || x.dim(2) != net.width()) {
    throw ShapeError("image_forward: expected [1, " + std::to_string(net.height()) + ", " +
                     std::to_string(net.width()) + "], got " + shape_string(x.shape()));
  }
  ImageActivations acts;
  Tensorf vin = x;
  for (Index l = 0; l < net.layer_count(); ++l) {
    if (l == 1 && net.resample()) {
      Tensorf d = masked_conv2d(net.down(), acts.vertical[0], MaskKind::vertical, counter, kResampleStride);
      tanh_inplace(d.values());
      Tensorf u = transposed_rows2d(net.up(), d, kResampleStride, counter);
      tanh_inplace(u.values());
      vin = crop_rows(u, net.height());
    }
    Tensorf v = masked_conv2d(net.vertical(l), vin, MaskKind::vertical, counter);
    tanh_inplace(v.values());

    const Tensorf& hin = l == 0 ? x : acts.horizontal.back();
    Tensorf h = masked_conv2d(net.horizontal(l), hin, MaskKind::horizontal, counter);
    h.values() += pointwise_conv2d(net.mix(l), v, counter, false).values();
    tanh_inplace(h.values());

    acts.vertical.push_back(v);
    vin = std::move(v);
    acts.horizontal.push_back(std::move(h));
  }
  acts.output = pointwise_conv2d(net.head(), acts.horizontal.back(), counter);
  return acts;
}

Tensorf image_forward(const ImageNetwork& net, const Tensorf& x, OpCounter& counter) {
  return image_forward_all(net, x, counter).output;
}

ImageIncremental::ImageIncremental(const ImageNetwork& net, Index batch) : net_(&net), batch_(batch) {
  if (batch < 1) throw InvalidParameter("batch must be >= 1");
  const auto& g = net.geometry();
  const Index c = net.channels();
  const Index n = net.layer_count();
  for (Index l = 0; l < n; ++l) {
    vin_.emplace_back(g.vkernel_h, g.width, l == 0 ? 1 : c, batch);
    hfifo_.emplace_back(g.hkernel_w, l == 0 ? 1 : c, 1, batch);
  }
  if (net.resample()) down_in_.emplace(g.vkernel_h, g.width, c, batch);
  vrow_.assign(static_cast<std::size_t>(n), std::vector<Batchf>(static_cast<std::size_t>(g.width)));
  hcur_.resize(static_cast<std::size_t>(n));
  xrow_.assign(static_cast<std::size_t>(g.width), Batchf::Zero(1, batch));
  drow_.resize(static_cast<std::size_t>(g.width));
  output_ = Batchf::Zero(1, batch);
}

const std::vector<std::vector<Batchf>>& ImageIncremental::vertical_row_pass(Index row) {
  const Index width = net_->width();
  if (row < 0 || row >= net_->height()) throw InvalidParameter("vertical_row_pass: row out of range");
  if (row != row_ + 1 || (row_ >= 0 && col_ != width)) {
    throw ScheduleViolation("vertical_row_pass: row " + std::to_string(row) + " requested while row " +
                            std::to_string(row_) + " is at column " + std::to_string(col_));
  }
  const Index kw = net_->geometry().vkernel_w;
  const Index left = vertical_left_reach(kw);
  const Index n = net_->layer_count();

  auto conv_row = [&](const RowCache<float>& cache, const ConvWeightsf& w, std::vector<Batchf>& out) {
    for (Index c = 0; c < width; ++c) {
      cache.window(c - left + kw - 1, kw, taps_);
      Batchf& node = out[static_cast<std::size_t>(c)];
      conv_point<float>(w, taps_, node, counter_);
      tanh_inplace(node);
    }
  };

  for (Index l = 0; l < n; ++l) {
    if (l == 1 && net_->resample()) {
      // D fires on every second row and reads v[0] rows strictly above; U
      // turns its row into two rows of layer-1 input.
      if (net_->resample_schedule().fires(0, row)) {
        conv_row(*down_in_, net_->down(), drow_);
        for (Index r = 0; r < kResampleStride; ++r) {
          std::vector<Batchf> urow(static_cast<std::size_t>(width));
          const Index kernel_tap[1] = {r};
          for (Index c = 0; c < width; ++c) {
            taps_.assign(1, &drow_[static_cast<std::size_t>(c)]);
            Batchf& node = urow[static_cast<std::size_t>(c)];
            conv_point<float>(net_->up(), taps_, kernel_tap, node, counter_);
            tanh_inplace(node);
          }
          pending_rows_.push_back(std::move(urow));
        }
      }
      down_in_->push_row(vrow_[0]);
    }
    conv_row(vin_[static_cast<std::size_t>(l)], net_->vertical(l), vrow_[static_cast<std::size_t>(l)]);
  }

  // Push phase: each vertical layer's input row of this pass enters its cache.
  for (Index l = 1; l < n; ++l) {
    if (l == 1 && net_->resample()) {
      if (pending_rows_.empty()) throw ScheduleViolation("vertical_row_pass: no upsampled row for row " + std::to_string(row));
      vin_[1].push_row(pending_rows_.front());
      pending_rows_.pop_front();
    } else {
      vin_[static_cast<std::size_t>(l)].push_row(vrow_[static_cast<std::size_t>(l - 1)]);
    }
  }

  for (auto& f : hfifo_) f.reset();
  row_ = row;
  col_ = 0;
  pixel_ready_ = false;
  ++vertical_passes_;
  return vrow_;
}

const Batchf& ImageIncremental::pixel(Index col) {
  if (row_ < 0 || col != col_ || col_ >= net_->width() || pixel_ready_) {
    throw ScheduleViolation("pixel: column " + std::to_string(col) + " requested at row " + std::to_string(row_) +
                            ", column " + std::to_string(col_));
  }
  const Index n = net_->layer_count();
  const Index kw = net_->geometry().hkernel_w;
  for (Index l = 0; l < n; ++l) {
    const auto& fifo = hfifo_[static_cast<std::size_t>(l)];
    taps_.clear();
    for (Index j = 0; j < kw; ++j) taps_.push_back(&fifo.peek(j));
    Batchf& h = hcur_[static_cast<std::size_t>(l)];
    conv_point<float>(net_->horizontal(l), taps_, h, counter_);
    taps_.assign(1, &vrow_[static_cast<std::size_t>(l)][static_cast<std::size_t>(col)]);
    conv_point<float>(net_->mix(l), taps_, mixed_, counter_, false);
    h += mixed_;
    tanh_inplace(h);
  }
  taps_.assign(1, &hcur_.back());
  conv_point<float>(net_->head(), taps_, output_, counter_);
  pixel_ready_ = true;
  return output_;
}

void ImageIncremental::commit(const Batchf& value) {
  if (!pixel_ready_) throw ScheduleViolation("commit: no pixel computed");
  if (value.rows() != 1 || value.cols() != batch_) throw ShapeError("commit: value must be 1 x batch");
  const Index n = net_->layer_count();
  for (Index l = 0; l < n; ++l) {
    auto& fifo = hfifo_[static_cast<std::size_t>(l)];
    fifo.pop(scratch_);
    fifo.push(l == 0 ? value : hcur_[static_cast<std::size_t>(l - 1)]);
    fifo.tick();
  }
  xrow_[static_cast<std::size_t>(col_)] = value;
  pixel_ready_ = false;
  if (++col_ == net_->width()) vin_[0].push_row(xrow_);
}

Index ImageIncremental::stored_values() const {
  Index total = 0;
  for (const auto& c : vin_) total += c.stored_values();
  if (down_in_) total += down_in_->stored_values();
  for (const auto& f : hfifo_) total += f.stored_values();
  for (const auto& row : pending_rows_) {
    for (const auto& s : row) total += s.size();
  }
  return total;
}

namespace {

float pick(std::span<const std::vector<float>> primes, Index b, Index i, float fallback) {
  if (primes.empty()) return fallback;
  const auto& p = primes[static_cast<std::size_t>(b)];
  return i < static_cast<Index>(p.size()) ? p[static_cast<std::size_t>(i)] : fallback;
}

void check_primes(std::span<const std::vector<float>> primes, Index batch) {
  if (batch < 1) throw InvalidParameter("batch must be >= 1");
  if (!primes.empty() && static_cast<Index>(primes.size()) != batch) {
    throw InvalidParameter("image generation: need one prime per batch element");
  }
}

}  // namespace

std::vector<Tensorf> image_naive_generate(const ImageNetwork& net, Index batch,
                                          std::span<const std::vector<float>> primes, OpCounter* counter) {
  check_primes(primes, batch);
  const Index height = net.height();
  const Index width = net.width();
  OpCounter ops;
  std::vector<Tensorf> images;
  for (Index b = 0; b < batch; ++b) {
    Tensorf x({1, height, width});
    Tensorf image({height, width});
    for (Index r = 0; r < height; ++r) {
      for (Index c = 0; c < width; ++c) {
        const float y = image_forward(net, x, ops)(0, r, c);
        image(r, c) = y;
        x(0, r, c) = pick(primes, b, r * width + c, y);
      }
    }
    images.push_back(std::move(image));
  }
  if (counter) *counter = ops;
  return images;
}

std::vector<Tensorf> image_incremental_generate(const ImageNetwork& net, Index batch,
                                                std::span<const std::vector<float>> primes, OpCounter* counter) {
  check_primes(primes, batch);
  const Index height = net.height();
  const Index width = net.width();
  ImageIncremental engine(net, batch);
  std::vector<Tensorf> images(static_cast<std::size_t>(batch), Tensorf({height, width}));
  Batchf value(1, batch);
  for (Index r = 0; r < height; ++r) {
    engine.vertical_row_pass(r);
    for (Index c = 0; c < width; ++c) {
      const Batchf& y = engine.pixel(c);
      for (Index b = 0; b < batch; ++b) {
        images[static_cast<std::size_t>(b)](r, c) = y(0, b);
        value(0, b) = pick(primes, b, r * width + c, y(0, b));
      }
      engine.commit(value);
    }
  }
  if (counter) *counter = engine.counter();
  return images;
}

StepCost image_forward_cost(const ImageNetwork& net) {
  OpCounter ops;
  image_forward(net, Tensorf({1, net.height(), net.width()}), ops);
  return {static_cast<double>(ops.macs), static_cast<double>(ops.node_evals)};
}

void write_pgm(const std::string& path, const Tensorf& image) {
  if (image.rank() != 2) throw ShapeError("write_pgm: image must be [H, W], got " + shape_string(image.shape()));
  const auto& v = image.values();
  const float lo = v.minCoeff();
  const float hi = v.maxCoeff();
  const float scale = hi > lo ? 255.0f / (hi - lo) : 0.0f;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("write_pgm: cannot open " + path);
  os << "P5\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  for (Index i = 0; i < image.size(); ++i) {
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround((v[i] - lo) * scale))));
  }
  if (!os) throw Error("write_pgm: write failed for " + path);
}

}  // namespace fastgen
