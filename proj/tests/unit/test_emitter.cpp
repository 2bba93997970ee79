#include <gtest/gtest.h>

#include <cmath>

#include "evalign/emitter.hpp"
#include "evalign/error.hpp"
#include "test_support.hpp"

namespace evalign::events {
namespace {

using motion::FrameSequence;

FrameSequence sequence(std::vector<ImageGray> frames, double duration) {
  FrameSequence seq;
  const std::size_t n = frames.size();
  seq.frames = std::move(frames);
  for (std::size_t i = 0; i < n; ++i) seq.timestamps.push_back(duration * i / (n - 1));
  seq.timestamps.back() = duration;
  return seq;
}

FrameSequence random_sequence(Rng& rng, std::size_t w, std::size_t h, std::size_t n) {
  std::vector<ImageGray> frames;
  for (std::size_t i = 0; i < n; ++i) frames.push_back(testing::random_image(rng, w, h));
  return sequence(std::move(frames), 0.01 + 0.05 * rng.uniform());
}

double log_of(float v, double eps) { return std::log(static_cast<double>(v) + eps); }

// 1x1 two-frame sequence whose log intensity changes by exactly 3 theta.
struct Ramp {
  FrameSequence seq;
  EmitterConfig cfg;
};

Ramp three_threshold_ramp(bool rising) {
  const float lo = 0.1f, hi = 0.4f;
  Ramp r;
  r.cfg.log_eps = 1e-3;
  const double delta = log_of(hi, r.cfg.log_eps) - log_of(lo, r.cfg.log_eps);
  r.cfg.theta_pos = r.cfg.theta_neg = delta / 3.0;
  r.seq = sequence({ImageGray(1, 1, rising ? lo : hi), ImageGray(1, 1, rising ? hi : lo)}, 300e-6);
  return r;
}

TEST(Emit, ConstantSequenceIsSilent) {
  Rng rng(1);
  const auto img = testing::random_image(rng, 9, 7);
  const auto stream = emit(sequence({img, img, img, img}, 0.02), EmitterConfig{});
  EXPECT_TRUE(stream.events.empty());
  EXPECT_EQ(stream.width, 9u);
  EXPECT_EQ(stream.height, 7u);
  EXPECT_EQ(stream.duration_us, 20000u);
}

TEST(Emit, ThreeThresholdRiseGivesEventsAtThirds) {
  const auto r = three_threshold_ramp(true);
  const auto stream = emit(r.seq, r.cfg);
  ASSERT_EQ(stream.events.size(), 3u);
  const std::uint32_t expected[] = {100, 200, 300};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(stream.events[i].t, expected[i]);
    EXPECT_EQ(stream.events[i].polarity, 1);
    EXPECT_EQ(stream.events[i].x, 0);
    EXPECT_EQ(stream.events[i].y, 0);
  }
}

TEST(Emit, InvertedIntensityFlipsPolarityOnly) {
  const auto up = three_threshold_ramp(true);
  const auto down = three_threshold_ramp(false);
  const auto a = emit(up.seq, up.cfg);
  const auto b = emit(down.seq, down.cfg);
  ASSERT_EQ(a.events.size(), b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    EXPECT_EQ(a.events[i].t, b.events[i].t);
    EXPECT_EQ(a.events[i].polarity, -b.events[i].polarity);
  }
}

TEST(Emit, RefractoryWindowSuppressesButMemoryStillMoves) {
  auto r = three_threshold_ramp(true);
  r.cfg.refractory = 150e-6;
  const auto stream = emit(r.seq, r.cfg);
  ASSERT_EQ(stream.events.size(), 2u);
  EXPECT_EQ(stream.events[0].t, 100u);
  EXPECT_EQ(stream.events[1].t, 300u);
}

TEST(Emit, CountLawOnMonotoneRamps) {
  Rng rng(2);
  EmitterConfig cfg;
  cfg.theta_pos = 0.15;
  cfg.theta_neg = 0.25;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t w = 6, h = 5, n = 2 + rng.index(7);
    // Per pixel, a sorted set of intensities, ascending or descending.
    std::vector<ImageGray> frames(n, ImageGray(w, h));
    for (std::size_t p = 0; p < w * h; ++p) {
      std::vector<float> v(n);
      for (auto& x : v) x = static_cast<float>(rng.uniform());
      std::sort(v.begin(), v.end());
      if (rng.index(2)) std::reverse(v.begin(), v.end());
      for (std::size_t f = 0; f < n; ++f) frames[f].data[p] = v[f];
    }
    const auto seq = sequence(frames, 0.004);
    const auto stream = emit(seq, cfg);
    std::vector<int> pos(w * h, 0), neg(w * h, 0);
    for (const auto& e : stream.events) (e.polarity > 0 ? pos : neg)[e.y * w + e.x]++;
    for (std::size_t p = 0; p < w * h; ++p) {
      const double dl = log_of(frames.back().data[p], cfg.log_eps) - log_of(frames.front().data[p], cfg.log_eps);
      const int expected_pos = dl > 0 ? static_cast<int>(std::floor(dl / cfg.theta_pos)) : 0;
      const int expected_neg = dl < 0 ? static_cast<int>(std::floor(-dl / cfg.theta_neg)) : 0;
      EXPECT_EQ(pos[p], expected_pos) << "trial " << trial << " pixel " << p;
      EXPECT_EQ(neg[p], expected_neg) << "trial " << trial << " pixel " << p;
    }
  }
}

TEST(Emit, MatchesReferenceBitExactly) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto seq = random_sequence(rng, 16, 16, 8);
    EmitterConfig cfg;
    cfg.theta_pos = 0.1 + 0.3 * rng.uniform();
    cfg.theta_neg = 0.1 + 0.3 * rng.uniform();
    cfg.refractory = trial % 3 == 0 ? 0.0 : 0.002 * rng.uniform();
    cfg.threshold_noise_sigma = trial % 2 == 0 ? 0.0 : 0.3 * rng.uniform();
    cfg.seed = rng.next_u64();
    const auto ref = emit_reference(seq, cfg);
    ASSERT_EQ(emit(seq, cfg, 1), ref) << "trial " << trial;
    ASSERT_EQ(emit(seq, cfg, 4), ref) << "trial " << trial;
  }
}

TEST(Emit, OutputIsSortedAndInBounds) {
  Rng rng(4);
  const auto seq = random_sequence(rng, 20, 11, 6);
  const auto stream = emit(seq, EmitterConfig{});
  EXPECT_FALSE(stream.events.empty());
  EXPECT_TRUE(stream.valid());
  EXPECT_TRUE(std::is_sorted(stream.events.begin(), stream.events.end(), event_less));
  for (const auto& e : stream.events) EXPECT_LE(e.t, stream.duration_us);
}

TEST(Emit, ThreadCountDoesNotChangeOutput) {
  Rng rng(5);
  const auto seq = random_sequence(rng, 33, 17, 5);
  const auto one = emit(seq, EmitterConfig{}, 1);
  for (std::size_t t : {2u, 3u, 8u, 64u}) EXPECT_EQ(emit(seq, EmitterConfig{}, t), one);
}

TEST(Emit, EmptyMotionIsSilentInReference) {
  const ImageGray img(4, 4, 0.7f);
  EXPECT_TRUE(emit_reference(sequence({img, img}, 0.01), EmitterConfig{}).events.empty());
}

TEST(ThresholdScale, NoiseIsPerPixelAndBounded) {
  EmitterConfig cfg;
  EXPECT_EQ(threshold_scale(cfg, 3), 1.0);
  cfg.threshold_noise_sigma = 5.0;
  cfg.seed = 17;
  bool varied = false;
  for (std::size_t p = 0; p < 500; ++p) {
    const double s = threshold_scale(cfg, p);
    EXPECT_GE(s, 0.1);
    EXPECT_EQ(s, threshold_scale(cfg, p));
    if (s != threshold_scale(cfg, 0)) varied = true;
  }
  EXPECT_TRUE(varied);
}

TEST(Emit, NoisyThresholdsChangeCountsPerPixel) {
  // Same ramp on every pixel; with jitter the counts differ across pixels.
  std::vector<ImageGray> frames{ImageGray(8, 8, 0.05f), ImageGray(8, 8, 0.9f)};
  EmitterConfig cfg;
  cfg.threshold_noise_sigma = 0.3;
  cfg.seed = 5;
  const auto stream = emit(sequence(frames, 0.01), cfg);
  std::vector<int> counts(64, 0);
  for (const auto& e : stream.events) counts[e.y * 8 + e.x]++;
  EXPECT_NE(*std::min_element(counts.begin(), counts.end()),
            *std::max_element(counts.begin(), counts.end()));
}

TEST(EmitterConfig, Validation) {
  EmitterConfig cfg;
  cfg.theta_pos = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.theta_neg = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.log_eps = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.refractory = -1e-3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.threshold_noise_sigma = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Emit, RejectsMalformedSequences) {
  FrameSequence seq;
  seq.frames = {ImageGray(2, 2, 0.1f)};
  seq.timestamps = {0.0};
  EXPECT_THROW(emit(seq, EmitterConfig{}), ArgumentError);
  seq.frames = {ImageGray(2, 2, 0.1f), ImageGray(3, 2, 0.1f)};
  seq.timestamps = {0.0, 0.01};
  EXPECT_THROW(emit(seq, EmitterConfig{}), ArgumentError);
  seq.frames = {ImageGray(2, 2, 0.1f), ImageGray(2, 2, 0.2f)};
  seq.timestamps = {0.01, 0.01};
  EXPECT_THROW(emit(seq, EmitterConfig{}), ArgumentError);
}

TEST(EventOrder, TimeThenRowThenColumnThenPolarity) {
  EXPECT_TRUE(event_less({1, 9, 9, 1}, {2, 0, 0, -1}));
  EXPECT_TRUE(event_less({1, 9, 0, 1}, {1, 0, 1, -1}));
  EXPECT_TRUE(event_less({1, 0, 1, 1}, {1, 1, 1, -1}));
  EXPECT_TRUE(event_less({1, 1, 1, -1}, {1, 1, 1, 1}));
  EXPECT_FALSE(event_less({1, 1, 1, 1}, {1, 1, 1, 1}));
}

TEST(ToMicroseconds, RoundsAndChecksRange) {
  EXPECT_EQ(to_microseconds(0.05), 50000u);
  EXPECT_EQ(to_microseconds(300e-6), 300u);
  EXPECT_THROW(to_microseconds(-1.0), ArgumentError);
  EXPECT_THROW(to_microseconds(1e7), ArgumentError);
}

}  // namespace
}  // namespace evalign::events
