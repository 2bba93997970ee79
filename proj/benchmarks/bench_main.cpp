#include <benchmark/benchmark.h>

#include <cmath>

#include "evalign/alignment.hpp"
#include "evalign/emitter.hpp"
#include "evalign/motion.hpp"
#include "evalign/random.hpp"

namespace {

using namespace evalign;

ImageGray pattern(std::size_t size) {
  ImageGray img(size, size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      img.at(x, y) = static_cast<float>(0.5 + 0.4 * std::sin(0.31 * x) * std::cos(0.23 * y));
    }
  }
  return img;
}

motion::FrameSequence sequence(std::size_t size) {
  motion::MotionRanges ranges;
  ranges.n_frames = 8;
  return motion::render_sequence(pattern(size), motion::sample_motion(7, ranges));
}

align::EmbeddingBatch batch(Rng& rng, align::Role role, std::size_t n, std::size_t d) {
  align::EmbeddingBatch b(role, d);
  std::vector<double> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : row) v = rng.normal();
    b.push_back(align::normalized(row));
  }
  return b;
}

void BM_Warp(benchmark::State& state) {
  const auto img = pattern(static_cast<std::size_t>(state.range(0)));
  motion::MotionRanges ranges;
  const auto spec = motion::sample_motion(3, ranges);
  for (auto _ : state) benchmark::DoNotOptimize(motion::warp_frame(img, spec, 0.5));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_Warp)->Arg(64)->Arg(256);

void BM_Emit(benchmark::State& state) {
  const auto seq = sequence(static_cast<std::size_t>(state.range(0)));
  const auto threads = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(events::emit(seq, events::EmitterConfig{}, threads));
}
BENCHMARK(BM_Emit)->Args({64, 1})->Args({256, 1})->Args({256, 4});

void BM_EmitReference(benchmark::State& state) {
  const auto seq = sequence(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(events::emit_reference(seq, events::EmitterConfig{}));
}
BENCHMARK(BM_EmitReference)->Arg(64);

void BM_TotalLoss(benchmark::State& state) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto ev = batch(rng, align::Role::Event, n, 16);
  const auto im = batch(rng, align::Role::Image, n, 16);
  for (auto _ : state) benchmark::DoNotOptimize(align::total_loss(ev, im, align::LossConfig{}));
}
BENCHMARK(BM_TotalLoss)->Arg(32)->Arg(256);

void BM_KnnTranslate(benchmark::State& state) {
  Rng rng(2);
  const auto pool = batch(rng, align::Role::Image, static_cast<std::size_t>(state.range(0)), 16);
  const auto q = batch(rng, align::Role::Event, 1, 16);
  for (auto _ : state) benchmark::DoNotOptimize(align::knn_translate(q.row(0), pool, 5));
}
BENCHMARK(BM_KnnTranslate)->Arg(100)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
