#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "evalign/motion.hpp"

namespace evalign::events {

/// Idealized DVS pixel parameters. Thresholds are in log-intensity units.
struct EmitterConfig {
  double theta_pos = 0.2;
  double theta_neg = 0.2;
  double log_eps = 1e-3;
  double refractory = 0.0;             // seconds
  double threshold_noise_sigma = 0.0;  // 0 = ideal sensor
  std::uint64_t seed = 0;

  /// Throws ConfigError on non-positive thresholds/eps or negative
  /// refractory/noise.
  void validate() const;
};

struct Event {
  std::uint32_t t = 0;  // microseconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t polarity = 1;  // +1 or -1

  friend bool operator==(const Event&, const Event&) = default;
};

/// Total order used everywhere events are stored: (t, y, x, polarity).
bool event_less(const Event& a, const Event& b) noexcept;

struct EventStream {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint32_t duration_us = 0;
  std::vector<Event> events;

  /// Sorted, in bounds and within [0, duration].
  bool valid() const;

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

/// Converts a duration in seconds to whole microseconds. Throws
/// ArgumentError when negative or beyond the 32-bit range.
std::uint32_t to_microseconds(double seconds);

/// Per-pixel threshold scale max(0.1, 1 + sigma * z), with z a standard
/// normal fixed by (seed, pixel index).
double threshold_scale(const EmitterConfig& cfg, std::size_t pixel_index);

/// Converts a frame sequence into events. Each pixel keeps a memorized log
/// intensity; log(I + eps) is interpolated linearly between frames and an
/// event is emitted at every threshold crossing, at the interpolated time,
/// moving the memory by exactly one threshold. Rows are processed in up to
/// `threads` workers; the result does not depend on the worker count.
EventStream emit(const motion::FrameSequence& seq, const EmitterConfig& cfg,
                 std::size_t threads = 1);

/// Scalar per-pixel, per-interval implementation of the same rule. Test
/// oracle for `emit`; bit-identical output.
EventStream emit_reference(const motion::FrameSequence& seq, const EmitterConfig& cfg);

}  // namespace evalign::events
