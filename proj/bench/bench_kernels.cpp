// Serial vs OpenMP kernels on a brain-sized grid.
//
//   ./bench_kernels --benchmark_filter=edt
//
// The thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "btk/kernels.hpp"
#include "btk/rng.hpp"

namespace {

constexpr btk::Extents kExtents{240, 240, 155};
constexpr btk::Spacing kSpacing{1.0, 1.0, 1.0};
constexpr std::size_t kVoxels = kExtents[0] * kExtents[1] * kExtents[2];

// Forty spherical blobs of radius 2 to 14, roughly a tumour mask plus false
// positives.
const std::vector<std::uint8_t>& mask() {
  static const std::vector<std::uint8_t> m = [] {
    std::vector<std::uint8_t> out(kVoxels, 0);
    btk::Rng rng(7);
    for (int b = 0; b < 40; ++b) {
      const double cx = 30 + rng.uniform() * 180, cy = 30 + rng.uniform() * 180, cz = 20 + rng.uniform() * 115;
      const double r = 2 + rng.uniform() * 12;
      auto lo = [&](double c) { return static_cast<std::size_t>(std::max(0.0, c - r)); };
      auto hi = [&](double c, std::size_t n) { return std::min(n, static_cast<std::size_t>(c + r) + 1); };
      for (std::size_t z = lo(cz); z < hi(cz, kExtents[2]); ++z)
        for (std::size_t y = lo(cy); y < hi(cy, kExtents[1]); ++y)
          for (std::size_t x = lo(cx); x < hi(cx, kExtents[0]); ++x) {
            const double d = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy,
                                        static_cast<double>(z) - cz);
            if (d <= r) out[x + kExtents[0] * (y + kExtents[1] * z)] = 1;
          }
    }
    return out;
  }();
  return m;
}

std::vector<double> sites() {
  const auto& m = mask();
  std::vector<double> f(kVoxels);
  for (std::size_t i = 0; i < kVoxels; ++i) f[i] = m[i] ? 0.0 : std::numeric_limits<double>::infinity();
  return f;
}

template <bool Parallel>
void bm_edt(benchmark::State& state) {
  const auto init = sites();
  std::vector<double> f;
  for (auto _ : state) {
    state.PauseTiming();
    f = init;
    state.ResumeTiming();
    if constexpr (Parallel) {
      btk::kernels::squared_edt(f, kExtents, kSpacing);
    } else {
      btk::kernels::serial::squared_edt(f, kExtents, kSpacing);
    }
    benchmark::DoNotOptimize(f.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kVoxels));
}

template <bool Parallel>
void bm_components(benchmark::State& state) {
  const auto& m = mask();
  std::vector<std::uint32_t> labels(kVoxels);
  const int connectivity = static_cast<int>(state.range(0));
  for (auto _ : state) {
    std::uint32_t k = Parallel ? btk::kernels::label_components(m, kExtents, connectivity, labels)
                               : btk::kernels::serial::label_components(m, kExtents, connectivity, labels);
    benchmark::DoNotOptimize(k);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kVoxels));
}

template <bool Parallel>
void bm_dilate(benchmark::State& state) {
  const auto& m = mask();
  std::vector<std::uint8_t> out(kVoxels);
  const auto radius = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    if constexpr (Parallel) {
      btk::kernels::box_dilate(m, kExtents, radius, out);
    } else {
      btk::kernels::serial::box_dilate(m, kExtents, radius, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kVoxels));
}

template <bool Parallel>
void bm_surface(benchmark::State& state) {
  const auto& m = mask();
  std::vector<std::uint8_t> out(kVoxels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      btk::kernels::surface(m, kExtents, out);
    } else {
      btk::kernels::serial::surface(m, kExtents, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kVoxels));
}

template <bool Parallel>
void bm_accumulate(benchmark::State& state) {
  std::vector<double> p(kVoxels);
  btk::Rng rng(11);
  for (auto& v : p) v = rng.uniform();
  std::vector<std::int64_t> acc(kVoxels, 0);
  for (auto _ : state) {
    state.PauseTiming();
    std::fill(acc.begin(), acc.end(), 0);
    state.ResumeTiming();
    if constexpr (Parallel) {
      btk::kernels::accumulate_fixed(p, 0.2, acc);
    } else {
      btk::kernels::serial::accumulate_fixed(p, 0.2, acc);
    }
    benchmark::DoNotOptimize(acc.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(kVoxels));
}

}  // namespace

BENCHMARK(bm_edt<false>)->Name("edt/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_edt<true>)->Name("edt/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_components<false>)->Name("components/serial")->Arg(6)->Arg(26)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_components<true>)->Name("components/omp")->Arg(6)->Arg(26)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_dilate<false>)->Name("dilate/serial")->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_dilate<true>)->Name("dilate/omp")->Arg(1)->Arg(3)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_surface<false>)->Name("surface/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_surface<true>)->Name("surface/omp")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_accumulate<false>)->Name("accumulate/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_accumulate<true>)->Name("accumulate/omp")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
