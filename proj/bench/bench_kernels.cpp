#include <benchmark/benchmark.h>

#include <vector>

#include "hst/kernels.hpp"
#include "hst/ref_kernels.hpp"
#include "hst/rng.hpp"

// OpenMP kernels vs their serial naive references on training-shaped
// workloads. Run with HSTKIT_THREADS/OMP_NUM_THREADS to see scaling.

namespace {

std::vector<float> randu(size_t n, uint64_t seed) {
  hst::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

constexpr int kB = 1, kC = 60, kH = 64, kW = 64, kK = 3;

void bm_conv2d_omp(benchmark::State& state) {
  auto x = randu(static_cast<size_t>(kB) * kC * kH * kW, 1);
  auto w = randu(static_cast<size_t>(kC) * kC * kK * kK, 2);
  auto b = randu(kC, 3);
  std::vector<float> y(static_cast<size_t>(kB) * kC * kH * kW);
  for (auto _ : state) {
    hst::kernels::conv2d_fwd(x.data(), w.data(), b.data(), y.data(), kB, kC, kH, kW, kC, kK, 1,
                             1, kH, kW);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_conv2d_omp)->Unit(benchmark::kMillisecond);

void bm_conv2d_serial_ref(benchmark::State& state) {
  auto x = randu(static_cast<size_t>(kB) * kC * kH * kW, 1);
  auto w = randu(static_cast<size_t>(kC) * kC * kK * kK, 2);
  auto b = randu(kC, 3);
  std::vector<float> y(static_cast<size_t>(kB) * kC * kH * kW);
  for (auto _ : state) {
    hst::ref::conv2d(x.data(), w.data(), b.data(), y.data(), kB, kC, kH, kW, kC, kK, 1, 1, kH,
                     kW);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_conv2d_serial_ref)->Unit(benchmark::kMillisecond);

constexpr int kRows = 4096, kDin = 60, kDout = 180;

void bm_linear_omp(benchmark::State& state) {
  auto x = randu(static_cast<size_t>(kRows) * kDin, 4);
  auto w = randu(static_cast<size_t>(kDout) * kDin, 5);
  auto b = randu(kDout, 6);
  std::vector<float> y(static_cast<size_t>(kRows) * kDout);
  for (auto _ : state) {
    hst::kernels::linear_fwd(x.data(), w.data(), b.data(), y.data(), kRows, kDin, kDout);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_linear_omp)->Unit(benchmark::kMillisecond);

void bm_linear_serial_ref(benchmark::State& state) {
  auto x = randu(static_cast<size_t>(kRows) * kDin, 4);
  auto w = randu(static_cast<size_t>(kDout) * kDin, 5);
  auto b = randu(kDout, 6);
  std::vector<float> y(static_cast<size_t>(kRows) * kDout);
  for (auto _ : state) {
    hst::ref::linear(x.data(), w.data(), b.data(), y.data(), kRows, kDin, kDout);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_linear_serial_ref)->Unit(benchmark::kMillisecond);

constexpr int kBatch = 384, kM = 64, kKd = 10;

void bm_attention_scores_omp(benchmark::State& state) {
  auto a = randu(static_cast<size_t>(kBatch) * kM * kKd, 7);
  auto b = randu(static_cast<size_t>(kBatch) * kM * kKd, 8);
  std::vector<float> c(static_cast<size_t>(kBatch) * kM * kM);
  for (auto _ : state) {
    hst::kernels::bmm(a.data(), b.data(), c.data(), kBatch, kM, kKd, kM, true, 0.25f, false);
    benchmark::DoNotOptimize(c.data());
  }
}
BENCHMARK(bm_attention_scores_omp)->Unit(benchmark::kMillisecond);

void bm_attention_scores_serial_ref(benchmark::State& state) {
  auto a = randu(static_cast<size_t>(kBatch) * kM * kKd, 7);
  auto b = randu(static_cast<size_t>(kBatch) * kM * kKd, 8);
  std::vector<float> c(static_cast<size_t>(kBatch) * kM * kM);
  for (auto _ : state) {
    hst::ref::bmm(a.data(), b.data(), c.data(), kBatch, kM, kKd, kM, true, 0.25f);
    benchmark::DoNotOptimize(c.data());
  }
}
BENCHMARK(bm_attention_scores_serial_ref)->Unit(benchmark::kMillisecond);

void bm_layer_norm_omp(benchmark::State& state) {
  auto x = randu(static_cast<size_t>(kRows) * kC, 9);
  auto g = randu(kC, 10);
  auto be = randu(kC, 11);
  std::vector<float> y(x.size()), mean(kRows), rstd(kRows);
  for (auto _ : state) {
    hst::kernels::layer_norm_fwd(x.data(), g.data(), be.data(), y.data(), mean.data(),
                                 rstd.data(), kRows, kC, 1e-5f);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_layer_norm_omp)->Unit(benchmark::kMillisecond);

void bm_layer_norm_serial_ref(benchmark::State& state) {
  auto x = randu(static_cast<size_t>(kRows) * kC, 9);
  auto g = randu(kC, 10);
  auto be = randu(kC, 11);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    hst::ref::layer_norm(x.data(), g.data(), be.data(), y.data(), kRows, kC, 1e-5f);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_layer_norm_serial_ref)->Unit(benchmark::kMillisecond);

void bm_softmax_omp(benchmark::State& state) {
  auto x = randu(static_cast<size_t>(kBatch) * kM * kM, 12);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    hst::kernels::softmax_fwd(x.data(), y.data(), static_cast<long long>(kBatch) * kM, kM);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_softmax_omp)->Unit(benchmark::kMillisecond);

void bm_softmax_serial_ref(benchmark::State& state) {
  auto x = randu(static_cast<size_t>(kBatch) * kM * kM, 12);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    hst::ref::softmax(x.data(), y.data(), static_cast<long long>(kBatch) * kM, kM);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(bm_softmax_serial_ref)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
