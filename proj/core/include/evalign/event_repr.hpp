#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "evalign/emitter.hpp"
#include "evalign/image.hpp"

namespace evalign::repr {

/// Two-channel polarity histogram. Channel 0 holds positive events,
/// channel 1 negative; each channel is row-major width x height.
struct EventFrame {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> positive;
  std::vector<double> negative;

  EventFrame() = default;
  EventFrame(std::size_t w, std::size_t h)
      : width(w), height(h), positive(w * h, 0.0), negative(w * h, 0.0) {}

  friend bool operator==(const EventFrame&, const EventFrame&) = default;
};

/// Raw per-pixel counts of events with t0 <= t <= t1 (microseconds).
/// Throws ArgumentError when t0 >= t1.
EventFrame count_events(const events::EventStream& stream, std::uint32_t t0, std::uint32_t t1);

/// Divides each channel by its maximum; an all-zero channel stays zero.
void normalize_channels(EventFrame& frame);

/// count_events followed by normalize_channels.
EventFrame to_event_frame(const events::EventStream& stream, std::uint32_t t0, std::uint32_t t1);

/// Whole-stream window [0, duration]. A zero-duration stream is rejected.
EventFrame to_event_frame(const events::EventStream& stream);

/// White background; positive events tint red, negative tint blue. With
/// p, n the channel intensities the colour is (p, 0, n) composited over
/// white with coverage min(1, p + n), so overlaps read as magenta.
ImageRGB render_rgb(const EventFrame& frame);

/// Area-averaging resize of both channels.
EventFrame resize_area(const EventFrame& frame, std::size_t width, std::size_t height);

/// Flattens to [channel 0 row-major, channel 1 row-major], resizing by area
/// averaging first when the geometry differs from (width, height).
std::vector<double> frame_to_feature(const EventFrame& frame, std::size_t width,
                                     std::size_t height);

}  // namespace evalign::repr
