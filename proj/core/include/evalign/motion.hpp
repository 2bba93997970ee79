#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "evalign/image.hpp"

namespace evalign::motion {

enum class MotionKind : std::uint8_t { Translation = 0, Scaling = 1, Rotation = 2 };

std::string_view to_string(MotionKind kind);
/// Parses "translation" | "scaling" | "rotation"; throws ConfigError.
MotionKind parse_motion_kind(std::string_view name);

/// One linear motion over a static image. Only the parameters of `kind`
/// are meaningful; the others stay at their neutral values.
struct MotionSpec {
  MotionKind kind = MotionKind::Translation;
  double dx_max = 0.0;     // pixels
  double dy_max = 0.0;     // pixels
  double scale_end = 1.0;  // ratio > 0, starts at 1
  double angle_end = 0.0;  // radians, starts at 0
  double duration = 0.05;  // seconds > 0
  std::size_t n_frames = 8;
  std::uint64_t seed = 0;

  friend bool operator==(const MotionSpec&, const MotionSpec&) = default;
};

struct Range {
  double min = 0.0;
  double max = 0.0;
};

/// Sampling ranges for `sample_motion`. `forced_kind` pins the pattern;
/// otherwise it is drawn uniformly from the three.
struct MotionRanges {
  Range dx{-4.0, 4.0};
  Range dy{-4.0, 4.0};
  Range scale_end{0.85, 1.15};
  Range angle_end{-0.2, 0.2};
  double duration = 0.05;
  std::size_t n_frames = 8;
  std::optional<MotionKind> forced_kind;

  /// Throws ConfigError on min > max, non-positive duration/scale, or
  /// fewer than two frames.
  void validate() const;
};

/// Draws a motion deterministically from `rng_seed`.
MotionSpec sample_motion(std::uint64_t rng_seed, const MotionRanges& ranges);

/// Inverse-maps every output pixel through the affine motion at progress
/// `s` and samples `src` bilinearly with edge replication. s == 0 returns
/// `src` unchanged.
ImageGray warp_frame(const ImageGray& src, const MotionSpec& spec, double s);

struct FrameSequence {
  std::vector<ImageGray> frames;
  std::vector<double> timestamps;  // seconds, uniform, [0, duration]

  double duration() const { return timestamps.empty() ? 0.0 : timestamps.back(); }
};

/// frames[i] = warp_frame(src, spec, i / (n_frames - 1)).
/// Throws ConfigError when n_frames < 2 or duration <= 0.
FrameSequence render_sequence(const ImageGray& src, const MotionSpec& spec);

}  // namespace evalign::motion
