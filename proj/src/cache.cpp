// SPDX-License-Identifier: Apache-2.0

#include "fastgen/cache.hpp"

#include <algorithm>
#include <charconv>

namespace fastgen {

std::string to_string(const LayerRate& rate) {
  switch (rate.kind) {
    case LayerKind::down:
      return "down" + std::to_string(rate.factor);
    case LayerKind::up:
      return "up" + std::to_string(rate.factor);
    case LayerKind::dilated:
      break;
  }
  return "dilated" + std::to_string(rate.factor);
}

LayerRate parse_layer_rate(const std::string& text) {
  LayerRate rate;
  std::string_view digits;
  const std::string_view s = text;
  if (s.starts_with("down")) {
    rate.kind = LayerKind::down;
    digits = s.substr(4);
  } else if (s.starts_with("up")) {
    rate.kind = LayerKind::up;
    digits = s.substr(2);
  } else if (s.starts_with("dilated")) {
    rate.kind = LayerKind::dilated;
    digits = s.substr(7);
  } else {
    throw InvalidParameter("unknown layer rate '" + text + "' (expected downN, upN or dilatedN)");
  }
  Index factor = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), factor);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || factor < 1) {
    throw InvalidParameter("bad factor in layer rate '" + text + "'");
  }
  rate.factor = factor;
  return rate;
}

Schedule schedule_build(std::span<const LayerRate> layers) {
  if (layers.empty()) throw InvalidParameter("schedule: empty layer stack");
  const bool any_dilated =
      std::any_of(layers.begin(), layers.end(), [](const LayerRate& l) { return l.kind == LayerKind::dilated; });
  const bool any_strided =
      std::any_of(layers.begin(), layers.end(), [](const LayerRate& l) { return l.kind != LayerKind::dilated; });
  if (any_dilated && any_strided) throw UnsupportedTopology("schedule: dilated and strided layers cannot be mixed");

  Schedule s;
  s.cache_every.push_back(1);
  Index running = 1;
  Index fire = 1;
  bool seen_up = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerRate& l = layers[i];
    if (l.factor < 1) throw InvalidParameter("schedule: layer factors must be positive");
    switch (l.kind) {
      case LayerKind::dilated:
        break;
      case LayerKind::down:
        if (seen_up) {
          throw UnsupportedTopology("schedule: layer " + std::to_string(i) +
                                    " downsamples after an upsampling layer; only encoder/decoder stacks are supported");
        }
        running *= l.factor;
        fire = std::max(fire, running);
        break;
      case LayerKind::up:
        seen_up = true;
        if (running % l.factor != 0) {
          throw UnsupportedTopology("schedule: layer " + std::to_string(i) + " upsamples by " +
                                    std::to_string(l.factor) + " but the stream only has cache_every " +
                                    std::to_string(running));
        }
        running /= l.factor;
        break;
    }
    s.cache_every.push_back(running);
    s.fire_every.push_back(fire);
    s.emit_count.push_back(fire / running);
  }
  if (running != 1) {
    throw UnsupportedTopology("schedule: total downsampling and upsampling differ (output cache_every " +
                              std::to_string(running) + ")");
  }
  s.period = fire;
  return s;
}

}  // namespace fastgen
