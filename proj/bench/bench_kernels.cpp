#include <benchmark/benchmark.h>

#include <random>

#include "obfloc/obfuscate.hpp"
#include "obfloc/pipeline.hpp"

using namespace obfloc;

namespace {

RasterImage test_image(int w, int h, int c) {
  RasterImage img(w, h, c);
  std::mt19937 g(1);
  std::uniform_int_distribution<int> d(0, 255);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) img.at(x, y, k) = static_cast<std::uint8_t>(((x / 16 + y / 16) % 2) * 160 + d(g) / 4);
  return img;
}

LabelMap test_labels(int w, int h) {
  LabelMap m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.at(x, y) = 1 + (x / 37) + 100 * (y / 29);
  return m;
}

BinaryMask test_mask(int w, int h) {
  BinaryMask m(w, h);
  for (int y = h / 3; y < h / 2; ++y)
    for (int x = w / 4; x < w / 2; ++x) m.set(x, y);
  return m;
}

const RasterImage& rgb() {
  static const RasterImage img = test_image(512, 384, 3);
  return img;
}
const RasterImage& gray() {
  static const RasterImage img = test_image(512, 384, 1);
  return img;
}

}  // namespace

static void BM_blur41(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(gaussian_blur(rgb(), 41, 6.5));
}
static void BM_blur41_reference(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::gaussian_blur(rgb(), 41, 6.5));
}
static void BM_pixelate10(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(pixelate(rgb(), 10));
}
static void BM_pixelate10_reference(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::pixelate(rgb(), 10));
}
static void BM_clahe(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(clahe(gray()));
}
static void BM_clahe_reference(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::clahe(gray()));
}
static void BM_canny(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(canny(gray()));
}
static void BM_canny_reference(benchmark::State& s) {
  for (auto _ : s) benchmark::DoNotOptimize(reference::canny(gray()));
}
static void BM_infill(benchmark::State& s) {
  const BinaryMask m = test_mask(512, 384);
  for (auto _ : s) benchmark::DoNotOptimize(infill_diffusion(rgb(), m, 100));
}
static void BM_infill_reference(benchmark::State& s) {
  const BinaryMask m = test_mask(512, 384);
  for (auto _ : s) benchmark::DoNotOptimize(reference::infill_diffusion(rgb(), m, 100));
}
static void BM_borders(benchmark::State& s) {
  const LabelMap l = test_labels(512, 384);
  for (auto _ : s) benchmark::DoNotOptimize(render_borders(l));
}
static void BM_borders_reference(benchmark::State& s) {
  const LabelMap l = test_labels(512, 384);
  for (auto _ : s) benchmark::DoNotOptimize(reference::render_borders(l));
}
static void BM_retrieve_top20(benchmark::State& s) {
  std::mt19937 g(2);
  std::normal_distribution<float> d;
  std::vector<GlobalDescriptor> db(5000);
  for (std::size_t i = 0; i < db.size(); ++i) {
    db[i].id = "r" + std::to_string(i);
    db[i].values.resize(2048);
    for (float& v : db[i].values) v = d(g);
  }
  const GlobalDescriptor q = db[17];
  for (auto _ : s) benchmark::DoNotOptimize(retrieve_topk(q, db, 20));
}

BENCHMARK(BM_blur41)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_blur41_reference)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_pixelate10)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_pixelate10_reference)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_clahe)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_clahe_reference)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_canny)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_canny_reference)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_infill)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_infill_reference)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_borders)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_borders_reference)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_retrieve_top20)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
