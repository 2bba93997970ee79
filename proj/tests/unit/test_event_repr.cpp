#include <gtest/gtest.h>

#include <numeric>

#include "evalign/error.hpp"
#include "evalign/event_repr.hpp"
#include "test_support.hpp"

namespace evalign::repr {
namespace {

using events::Event;
using events::EventStream;

EventStream random_stream(Rng& rng, std::size_t w, std::size_t h, std::size_t n, std::uint32_t dur) {
  EventStream s{w, h, dur, {}};
  for (std::size_t i = 0; i < n; ++i) {
    s.events.push_back({static_cast<std::uint32_t>(rng.index(dur + 1)),
                        static_cast<std::uint16_t>(rng.index(w)),
                        static_cast<std::uint16_t>(rng.index(h)),
                        static_cast<std::int8_t>(rng.index(2) ? 1 : -1)});
  }
  std::sort(s.events.begin(), s.events.end(), events::event_less);
  return s;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

TEST(EventFrame, EmptyStreamGivesZeroFrame) {
  const EventStream s{5, 4, 1000, {}};
  const auto f = to_event_frame(s);
  EXPECT_EQ(f, EventFrame(5, 4));
}

TEST(EventFrame, SinglePositiveEvent) {
  const EventStream s{5, 4, 1000, {{10, 3, 2, 1}}};
  const auto f = to_event_frame(s, 0, 1000);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(f.positive[i], i == 2 * 5 + 3 ? 1.0 : 0.0);
    EXPECT_EQ(f.negative[i], 0.0);
  }
}

TEST(EventFrame, CountsAreConservedInWindow) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_stream(rng, 7, 6, 300, 5000);
    const std::uint32_t t0 = static_cast<std::uint32_t>(rng.index(2500));
    const std::uint32_t t1 = t0 + 1 + static_cast<std::uint32_t>(rng.index(2500));
    const auto f = count_events(s, t0, t1);
    const auto in_window = std::count_if(s.events.begin(), s.events.end(),
                                         [&](const Event& e) { return e.t >= t0 && e.t <= t1; });
    EXPECT_EQ(sum(f.positive) + sum(f.negative), static_cast<double>(in_window));
  }
}

TEST(EventFrame, WindowBoundsAreInclusive) {
  const EventStream s{2, 1, 100, {{10, 0, 0, 1}, {20, 1, 0, -1}, {30, 0, 0, 1}}};
  const auto f = count_events(s, 10, 20);
  EXPECT_EQ(f.positive[0], 1.0);
  EXPECT_EQ(f.negative[1], 1.0);
}

TEST(EventFrame, EmptyWindowRejected) {
  const EventStream s{2, 2, 100, {}};
  EXPECT_THROW(count_events(s, 50, 50), ArgumentError);
  EXPECT_THROW(to_event_frame(s, 60, 10), ArgumentError);
}

TEST(EventFrame, NormalizationDividesEachChannelByItsMax) {
  const EventStream s{3, 1, 100, {{1, 0, 0, 1}, {2, 0, 0, 1}, {3, 1, 0, 1}, {4, 2, 0, -1}}};
  const auto f = to_event_frame(s);
  EXPECT_EQ(f.positive, (std::vector<double>{1.0, 0.5, 0.0}));
  EXPECT_EQ(f.negative, (std::vector<double>{0.0, 0.0, 1.0}));
}

TEST(EventFrame, PolaritySwapSwapsChannels) {
  Rng rng(2);
  auto s = random_stream(rng, 6, 6, 200, 1000);
  const auto a = to_event_frame(s);
  for (auto& e : s.events) e.polarity = static_cast<std::int8_t>(-e.polarity);
  std::sort(s.events.begin(), s.events.end(), events::event_less);
  const auto b = to_event_frame(s);
  EXPECT_EQ(a.positive, b.negative);
  EXPECT_EQ(a.negative, b.positive);
}

TEST(RenderRgb, ZeroFrameIsWhite) {
  const auto img = render_rgb(EventFrame(3, 2));
  for (auto v : img.data) EXPECT_EQ(v, 255);
}

TEST(RenderRgb, PositiveEventIsRed) {
  const EventStream s{3, 2, 100, {{5, 1, 1, 1}}};
  const auto img = render_rgb(to_event_frame(s));
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t x = 0; x < 3; ++x) {
      const auto* p = img.pixel(x, y);
      if (x == 1 && y == 1) {
        EXPECT_EQ(p[0], 255);
        EXPECT_EQ(p[1], 0);
        EXPECT_EQ(p[2], 0);
      } else {
        EXPECT_EQ(p[0], 255);
        EXPECT_EQ(p[1], 255);
        EXPECT_EQ(p[2], 255);
      }
    }
  }
}

TEST(RenderRgb, NegativeEventIsBlue) {
  const EventStream s{1, 1, 100, {{5, 0, 0, -1}}};
  const auto img = render_rgb(to_event_frame(s));
  EXPECT_EQ(img.data, (std::vector<std::uint8_t>{0, 0, 255}));
}

TEST(RenderRgb, BothPolaritiesBlendToMagenta) {
  const EventStream s{1, 1, 100, {{5, 0, 0, -1}, {6, 0, 0, 1}}};
  const auto img = render_rgb(to_event_frame(s));
  EXPECT_EQ(img.data, (std::vector<std::uint8_t>{255, 0, 255}));
}

TEST(RenderRgb, PartialIntensitiesFollowTheBlend) {
  EventFrame f(1, 1);
  f.positive[0] = 0.5;
  f.negative[0] = 0.25;
  // coverage 0.75: (1 - 0.75 + 0.5, 1 - 0.75, 1 - 0.75 + 0.25) = (0.75, 0.25, 0.5)
  const auto img = render_rgb(f);
  EXPECT_NEAR(img.data[0], 0.75 * 255, 0.51);
  EXPECT_NEAR(img.data[1], 0.25 * 255, 0.51);
  EXPECT_NEAR(img.data[2], 0.5 * 255, 0.51);
}

TEST(Feature, ChannelMajorFlatten) {
  EventFrame f(2, 2);
  f.positive = {1, 2, 3, 4};
  f.negative = {5, 6, 7, 8};
  EXPECT_EQ(frame_to_feature(f, 2, 2), (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}));
  EXPECT_EQ(frame_to_feature(EventFrame(2, 2), 2, 2), std::vector<double>(8, 0.0));
}

TEST(Feature, AreaResizeFourToTwo) {
  EventFrame f(4, 4);
  for (std::size_t i = 0; i < 16; ++i) {
    f.positive[i] = static_cast<double>(i);
    f.negative[i] = i == 0 ? 4.0 : 0.0;
  }
  const auto r = resize_area(f, 2, 2);
  // Means of the 2x2 blocks of 0..15 laid out row-major.
  EXPECT_EQ(r.positive, (std::vector<double>{2.5, 4.5, 10.5, 12.5}));
  EXPECT_EQ(r.negative, (std::vector<double>{1.0, 0.0, 0.0, 0.0}));
  EXPECT_EQ(frame_to_feature(f, 2, 2), (std::vector<double>{2.5, 4.5, 10.5, 12.5, 1, 0, 0, 0}));
}

TEST(Feature, FractionalAreaResizePreservesMean) {
  Rng rng(3);
  EventFrame f(7, 5);
  for (auto& v : f.positive) v = rng.uniform();
  for (auto& v : f.negative) v = rng.uniform();
  const auto r = resize_area(f, 3, 2);
  EXPECT_NEAR(sum(r.positive) / 6.0, sum(f.positive) / 35.0, 1e-12);
  EXPECT_NEAR(sum(r.negative) / 6.0, sum(f.negative) / 35.0, 1e-12);
}

}  // namespace
}  // namespace evalign::repr
