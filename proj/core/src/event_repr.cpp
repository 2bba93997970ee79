#include "evalign/event_repr.hpp"

#include <algorithm>
#include <cmath>

#include "evalign/error.hpp"

namespace evalign::repr {

EventFrame count_events(const events::EventStream& stream, std::uint32_t t0, std::uint32_t t1) {
  if (t0 >= t1) throw ArgumentError("event window must satisfy t0 < t1");
  EventFrame frame(stream.width, stream.height);
  for (const auto& e : stream.events) {
    if (e.t < t0 || e.t > t1) continue;
    const std::size_t idx = static_cast<std::size_t>(e.y) * stream.width + e.x;
    if (e.polarity > 0) {
      frame.positive[idx] += 1.0;
    } else {
      frame.negative[idx] += 1.0;
    }
  }
  return frame;
}

void normalize_channels(EventFrame& frame) {
  for (auto* channel : {&frame.positive, &frame.negative}) {
    if (channel->empty()) continue;
    const double peak = *std::max_element(channel->begin(), channel->end());
    if (peak <= 0.0) continue;
    for (double& v : *channel) v /= peak;
  }
}

EventFrame to_event_frame(const events::EventStream& stream, std::uint32_t t0, std::uint32_t t1) {
  EventFrame frame = count_events(stream, t0, t1);
  normalize_channels(frame);
  return frame;
}

EventFrame to_event_frame(const events::EventStream& stream) {
  return to_event_frame(stream, 0, stream.duration_us);
}

ImageRGB render_rgb(const EventFrame& frame) {
  ImageRGB img(frame.width, frame.height);
  auto to_byte = [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  };
  for (std::size_t y = 0; y < frame.height; ++y) {
    for (std::size_t x = 0; x < frame.width; ++x) {
      const std::size_t idx = y * frame.width + x;
      const double p = std::clamp(frame.positive[idx], 0.0, 1.0);
      const double n = std::clamp(frame.negative[idx], 0.0, 1.0);
      const double coverage = std::min(1.0, p + n);
      const double background = 1.0 - coverage;
      std::uint8_t* px = img.pixel(x, y);
      px[0] = to_byte(background + p);
      px[1] = to_byte(background);
      px[2] = to_byte(background + n);
    }
  }
  return img;
}

namespace {

// Overlap of source cell [i, i+1) with destination cell j scaled to source
// units [j*ratio, (j+1)*ratio).
std::vector<std::vector<std::pair<std::size_t, double>>> area_weights(std::size_t src,
                                                                      std::size_t dst) {
  std::vector<std::vector<std::pair<std::size_t, double>>> weights(dst);
  const double ratio = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t j = 0; j < dst; ++j) {
    const double lo = static_cast<double>(j) * ratio;
    const double hi = static_cast<double>(j + 1) * ratio;
    const auto first = static_cast<std::size_t>(std::floor(lo));
    const auto last = std::min(src, static_cast<std::size_t>(std::ceil(hi)));
    for (std::size_t i = first; i < last; ++i) {
      const double overlap =
          std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) weights[j].emplace_back(i, overlap / ratio);
    }
  }
  return weights;
}

}  // namespace

EventFrame resize_area(const EventFrame& frame, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw ArgumentError("resize target must be non-empty");
  if (frame.width == width && frame.height == height) return frame;
  const auto wx = area_weights(frame.width, width);
  const auto wy = area_weights(frame.height, height);
  EventFrame out(width, height);
  auto resample = [&](const std::vector<double>& src, std::vector<double>& dst) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        double acc = 0.0;
        for (const auto& [sy, fy] : wy[y]) {
          for (const auto& [sx, fx] : wx[x]) {
            acc += fy * fx * src[sy * frame.width + sx];
          }
        }
        dst[y * width + x] = acc;
      }
    }
  };
  resample(frame.positive, out.positive);
  resample(frame.negative, out.negative);
  return out;
}

std::vector<double> frame_to_feature(const EventFrame& frame, std::size_t width,
                                     std::size_t height) {
  const EventFrame sized = resize_area(frame, width, height);
  std::vector<double> feature;
  feature.reserve(2 * width * height);
  feature.insert(feature.end(), sized.positive.begin(), sized.positive.end());
  feature.insert(feature.end(), sized.negative.begin(), sized.negative.end());
  return feature;
}

}  // namespace evalign::repr
