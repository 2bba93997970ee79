#include "evalign/emitter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <thread>

#include "evalign/error.hpp"
#include "evalign/random.hpp"

namespace evalign::events {

namespace {

// Slack in log units when testing a crossing against the interval end, so
// that a change of exactly k thresholds yields k events despite rounding.
constexpr double kCrossingTolerance = 1e-9;

void validate_sequence(const motion::FrameSequence& seq) {
  if (seq.frames.size() < 2 || seq.frames.size() != seq.timestamps.size()) {
    throw ArgumentError("frame sequence needs at least two frames with timestamps");
  }
  const auto& first = seq.frames.front();
  if (first.width == 0 || first.height == 0 || first.width > 65535 || first.height > 65535) {
    throw ArgumentError("frame geometry must be within [1, 65535]");
  }
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& f = seq.frames[i];
    if (f.width != first.width || f.height != first.height || f.data.size() != f.width * f.height) {
      throw ArgumentError("frames must share geometry");
    }
    if (i > 0 && !(seq.timestamps[i] > seq.timestamps[i - 1])) {
      throw ArgumentError("frame timestamps must be strictly increasing");
    }
  }
  if (seq.timestamps.front() < 0.0) throw ArgumentError("timestamps must be non-negative");
}

std::vector<double> timestamps_us(const motion::FrameSequence& seq) {
  std::vector<double> out(seq.timestamps.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = seq.timestamps[i] * 1e6;
  return out;
}

// Per-pixel integrate-and-fire state shared by both implementations so that
// the arithmetic is literally the same.
struct PixelState {
  double memory;
  double theta_pos;
  double theta_neg;
  std::optional<std::uint32_t> last_t;
};

template <typename Sink>
void process_interval(PixelState& px, double l_prev, double l_next, double ta, double tb,
                      double refractory_us, std::uint16_t x, std::uint16_t y, Sink&& sink) {
  if (l_next == l_prev) return;
  const double span = l_next - l_prev;
  const bool rising = l_next > l_prev;
  const double theta = rising ? px.theta_pos : px.theta_neg;
  const double sign = rising ? 1.0 : -1.0;
  for (;;) {
    const double level = px.memory + sign * theta;
    if (rising ? !(level <= l_next + kCrossingTolerance)
               : !(level >= l_next - kCrossingTolerance)) {
      break;
    }
    const double frac = std::clamp((level - l_prev) / span, 0.0, 1.0);
    const double t = ta + frac * (tb - ta);
    const auto t_us = static_cast<std::uint32_t>(std::llround(t));
    px.memory = level;
    if (!px.last_t || static_cast<double>(t_us - *px.last_t) >= refractory_us) {
      sink(Event{t_us, x, y, static_cast<std::int8_t>(rising ? 1 : -1)});
      px.last_t = t_us;
    }
  }
}

PixelState init_pixel(const EmitterConfig& cfg, std::size_t pixel_index, double l0) {
  const double scale = threshold_scale(cfg, pixel_index);
  return PixelState{l0, cfg.theta_pos * scale, cfg.theta_neg * scale, std::nullopt};
}

}  // namespace

void EmitterConfig::validate() const {
  if (!(theta_pos > 0.0) || !(theta_neg > 0.0)) {
    throw ConfigError("contrast thresholds must be positive");
  }
  if (!(log_eps > 0.0)) throw ConfigError("log_eps must be positive");
  if (!(refractory >= 0.0)) throw ConfigError("refractory period must be non-negative");
  if (!(threshold_noise_sigma >= 0.0)) throw ConfigError("threshold noise must be non-negative");
}

bool event_less(const Event& a, const Event& b) noexcept {
  if (a.t != b.t) return a.t < b.t;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  return a.polarity < b.polarity;
}

bool EventStream::valid() const {
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (e.x >= width || e.y >= height || e.t > duration_us) return false;
    if (e.polarity != 1 && e.polarity != -1) return false;
    if (i > 0 && event_less(e, events[i - 1])) return false;
  }
  return true;
}

std::uint32_t to_microseconds(double seconds) {
  const double us = std::round(seconds * 1e6);
  if (!(us >= 0.0) || us > static_cast<double>(std::numeric_limits<std::uint32_t>::max())) {
    throw ArgumentError("duration out of the 32-bit microsecond range");
  }
  return static_cast<std::uint32_t>(us);
}

double threshold_scale(const EmitterConfig& cfg, std::size_t pixel_index) {
  if (cfg.threshold_noise_sigma == 0.0) return 1.0;
  const double z = hashed_normal(cfg.seed, pixel_index);
  return std::max(0.1, 1.0 + cfg.threshold_noise_sigma * z);
}

EventStream emit(const motion::FrameSequence& seq, const EmitterConfig& cfg,
                 std::size_t threads) {
  cfg.validate();
  validate_sequence(seq);
  const std::size_t width = seq.frames.front().width;
  const std::size_t height = seq.frames.front().height;
  const std::size_t n_frames = seq.frames.size();
  const std::vector<double> t_us = timestamps_us(seq);
  const double refractory_us = cfg.refractory * 1e6;

  // Log frames computed once, frame-major.
  std::vector<std::vector<double>> log_frames(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const auto& src = seq.frames[f].data;
    auto& dst = log_frames[f];
    dst.resize(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = std::log(static_cast<double>(src[i]) + cfg.log_eps);
    }
  }

  auto run_rows = [&](std::size_t row_begin, std::size_t row_end, std::vector<Event>& out) {
    std::vector<PixelState> state;
    state.reserve(width);
    for (std::size_t y = row_begin; y < row_end; ++y) {
      state.clear();
      const std::size_t base = y * width;
      for (std::size_t x = 0; x < width; ++x) {
        state.push_back(init_pixel(cfg, base + x, log_frames[0][base + x]));
      }
      auto sink = [&out](const Event& e) { out.push_back(e); };
      for (std::size_t f = 1; f < n_frames; ++f) {
        const auto& prev = log_frames[f - 1];
        const auto& next = log_frames[f];
        for (std::size_t x = 0; x < width; ++x) {
          process_interval(state[x], prev[base + x], next[base + x], t_us[f - 1], t_us[f],
                           refractory_us, static_cast<std::uint16_t>(x),
                           static_cast<std::uint16_t>(y), sink);
        }
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, height);
  std::vector<std::vector<Event>> partial(workers);
  if (workers == 1) {
    run_rows(0, height, partial[0]);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = height * w / workers;
      const std::size_t end = height * (w + 1) / workers;
      pool.emplace_back([&, w, begin, end] { run_rows(begin, end, partial[w]); });
    }
  }

  EventStream stream;
  stream.width = width;
  stream.height = height;
  stream.duration_us = to_microseconds(seq.timestamps.back());
  std::size_t total = 0;
  for (const auto& p : partial) total += p.size();
  stream.events.reserve(total);
  for (auto& p : partial) stream.events.insert(stream.events.end(), p.begin(), p.end());
  std::sort(stream.events.begin(), stream.events.end(), event_less);
  return stream;
}

EventStream emit_reference(const motion::FrameSequence& seq, const EmitterConfig& cfg) {
  cfg.validate();
  validate_sequence(seq);
  const std::size_t width = seq.frames.front().width;
  const std::size_t height = seq.frames.front().height;
  const double refractory_us = cfg.refractory * 1e6;

  EventStream stream;
  stream.width = width;
  stream.height = height;
  stream.duration_us = to_microseconds(seq.timestamps.back());
  auto sink = [&stream](const Event& e) { stream.events.push_back(e); };

  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t idx = y * width + x;
      double l_prev = std::log(static_cast<double>(seq.frames[0].data[idx]) + cfg.log_eps);
      PixelState px = init_pixel(cfg, idx, l_prev);
      for (std::size_t f = 1; f < seq.frames.size(); ++f) {
        const double l_next = std::log(static_cast<double>(seq.frames[f].data[idx]) + cfg.log_eps);
        const double ta = seq.timestamps[f - 1] * 1e6;
        const double tb = seq.timestamps[f] * 1e6;
        process_interval(px, l_prev, l_next, ta, tb, refractory_us,
                         static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), sink);
        l_prev = l_next;
      }
    }
  }
  std::sort(stream.events.begin(), stream.events.end(), event_less);
  return stream;
}

}  // namespace evalign::events
