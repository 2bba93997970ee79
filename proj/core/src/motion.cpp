#include "evalign/motion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evalign/error.hpp"
#include "evalign/random.hpp"

namespace evalign::motion {

std::string_view to_string(MotionKind kind) {
  switch (kind) {
    case MotionKind::Translation: return "translation";
    case MotionKind::Scaling: return "scaling";
    case MotionKind::Rotation: return "rotation";
  }
  return "unknown";
}

MotionKind parse_motion_kind(std::string_view name) {
  if (name == "translation") return MotionKind::Translation;
  if (name == "scaling") return MotionKind::Scaling;
  if (name == "rotation") return MotionKind::Rotation;
  throw ConfigError("unknown motion kind '" + std::string(name) + "'");
}

void MotionRanges::validate() const {
  auto check = [](const Range& r, const char* name) {
    if (!std::isfinite(r.min) || !std::isfinite(r.max)) {
      throw ConfigError(std::string("motion range '") + name + "' is not finite");
    }
    if (r.min > r.max) {
      throw ConfigError(std::string("motion range '") + name + "' has min > max");
    }
  };
  check(dx, "dx");
  check(dy, "dy");
  check(scale_end, "scale_end");
  check(angle_end, "angle_end");
  if (scale_end.min <= 0.0) throw ConfigError("scale_end range must be positive");
  if (!(duration > 0.0)) throw ConfigError("duration must be positive");
  if (n_frames < 2) throw ConfigError("n_frames must be at least 2");
}

MotionSpec sample_motion(std::uint64_t rng_seed, const MotionRanges& ranges) {
  ranges.validate();
  Rng rng(rng_seed);
  MotionSpec spec;
  spec.seed = rng_seed;
  spec.duration = ranges.duration;
  spec.n_frames = ranges.n_frames;
  // The kind draw is consumed even when forced so that parameter draws line
  // up across forced and unforced configurations.
  const auto drawn = static_cast<MotionKind>(rng.index(3));
  spec.kind = ranges.forced_kind.value_or(drawn);
  switch (spec.kind) {
    case MotionKind::Translation:
      spec.dx_max = rng.uniform(ranges.dx.min, ranges.dx.max);
      spec.dy_max = rng.uniform(ranges.dy.min, ranges.dy.max);
      break;
    case MotionKind::Scaling:
      spec.scale_end = rng.uniform(ranges.scale_end.min, ranges.scale_end.max);
      break;
    case MotionKind::Rotation:
      spec.angle_end = rng.uniform(ranges.angle_end.min, ranges.angle_end.max);
      break;
  }
  return spec;
}

namespace {

float sample_bilinear(const ImageGray& src, double sx, double sy) {
  // Clamping the coordinate is equivalent to replicating the border.
  const double max_x = static_cast<double>(src.width - 1);
  const double max_y = static_cast<double>(src.height - 1);
  sx = std::clamp(sx, 0.0, max_x);
  sy = std::clamp(sy, 0.0, max_y);
  const auto x0 = static_cast<std::size_t>(std::floor(sx));
  const auto y0 = static_cast<std::size_t>(std::floor(sy));
  const std::size_t x1 = std::min(x0 + 1, src.width - 1);
  const std::size_t y1 = std::min(y0 + 1, src.height - 1);
  const double fx = sx - static_cast<double>(x0);
  const double fy = sy - static_cast<double>(y0);
  const double top = (1.0 - fx) * src.at(x0, y0) + fx * src.at(x1, y0);
  const double bottom = (1.0 - fx) * src.at(x0, y1) + fx * src.at(x1, y1);
  const double v = (1.0 - fy) * top + fy * bottom;
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

}  // namespace

ImageGray warp_frame(const ImageGray& src, const MotionSpec& spec, double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw ArgumentError("warp progress must lie in [0, 1]");
  if (s == 0.0) return src;

  const double cx = 0.5 * static_cast<double>(src.width - 1);
  const double cy = 0.5 * static_cast<double>(src.height - 1);

  // Inverse map: output (x, y) -> source coordinate.
  double a00 = 1.0, a01 = 0.0, a10 = 0.0, a11 = 1.0;
  double tx = 0.0, ty = 0.0;
  switch (spec.kind) {
    case MotionKind::Translation:
      tx = -s * spec.dx_max;
      ty = -s * spec.dy_max;
      break;
    case MotionKind::Scaling: {
      const double factor = 1.0 + s * (spec.scale_end - 1.0);
      if (!(factor > 0.0)) throw ArgumentError("scale factor must stay positive");
      a00 = a11 = 1.0 / factor;
      break;
    }
    case MotionKind::Rotation: {
      const double angle = s * spec.angle_end;
      const double c = std::cos(angle);
      const double sn = std::sin(angle);
      a00 = c;
      a01 = sn;
      a10 = -sn;
      a11 = c;
      break;
    }
  }

  ImageGray out(src.width, src.height);
  for (std::size_t y = 0; y < src.height; ++y) {
    const double py = static_cast<double>(y) - cy;
    for (std::size_t x = 0; x < src.width; ++x) {
      const double px = static_cast<double>(x) - cx;
      const double sx = cx + a00 * px + a01 * py + tx;
      const double sy = cy + a10 * px + a11 * py + ty;
      out.at(x, y) = sample_bilinear(src, sx, sy);
    }
  }
  return out;
}

FrameSequence render_sequence(const ImageGray& src, const MotionSpec& spec) {
  if (spec.n_frames < 2) throw ConfigError("n_frames must be at least 2");
  if (!(spec.duration > 0.0)) throw ConfigError("duration must be positive");
  FrameSequence seq;
  seq.frames.reserve(spec.n_frames);
  seq.timestamps.reserve(spec.n_frames);
  const double last = static_cast<double>(spec.n_frames - 1);
  for (std::size_t i = 0; i < spec.n_frames; ++i) {
    const double s = static_cast<double>(i) / last;
    seq.frames.push_back(warp_frame(src, spec, s));
    seq.timestamps.push_back(i + 1 == spec.n_frames ? spec.duration : spec.duration * s);
  }
  return seq;
}

}  // namespace evalign::motion
