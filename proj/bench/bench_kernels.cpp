// Serial reference vs OpenMP kernels on training-sized workloads:
//   ./bench_kernels [--benchmark_filter=...]

#include <benchmark/benchmark.h>

#include <vector>

#include "glioma/kernels.hpp"
#include "glioma/rng.hpp"

using namespace glioma;
namespace k = glioma::kernels;

namespace {

struct ConvData {
  k::Conv3dShape shape;
  std::vector<float> in, w, bias, out, gout, gin, gw;
};

ConvData make_conv_data(int64_t c, int64_t side) {
  ConvData d;
  d.shape = {1, c, c, side, side, side, 3};
  Rng rng(1);
  auto fill = [&](std::vector<float>& v, size_t n) {
    v.resize(n);
    for (auto& x : v) x = float(rng.normal());
  };
  size_t spatial = size_t(side * side * side);
  fill(d.in, size_t(c) * spatial);
  fill(d.w, size_t(c * c) * 27);
  fill(d.bias, size_t(c));
  fill(d.gout, size_t(c) * spatial);
  d.out.resize(size_t(c) * spatial);
  d.gin.resize(size_t(c) * spatial);
  d.gw.resize(size_t(c * c) * 27);
  return d;
}

void conv_forward_serial(benchmark::State& state) {
  ConvData d = make_conv_data(state.range(0), state.range(1));
  for (auto _ : state) {
    k::serial::conv3d_forward(d.in.data(), d.w.data(), d.bias.data(),
                              d.out.data(), d.shape);
    benchmark::ClobberMemory();
  }
}

void conv_forward_omp(benchmark::State& state) {
  ConvData d = make_conv_data(state.range(0), state.range(1));
  for (auto _ : state) {
    k::par::conv3d_forward(d.in.data(), d.w.data(), d.bias.data(),
                           d.out.data(), d.shape);
    benchmark::ClobberMemory();
  }
}

void conv_backward_weight_serial(benchmark::State& state) {
  ConvData d = make_conv_data(state.range(0), state.range(1));
  for (auto _ : state) {
    k::serial::conv3d_backward_weight(d.gout.data(), d.in.data(), d.gw.data(),
                                      d.shape);
    benchmark::ClobberMemory();
  }
}

void conv_backward_weight_omp(benchmark::State& state) {
  ConvData d = make_conv_data(state.range(0), state.range(1));
  for (auto _ : state) {
    k::par::conv3d_backward_weight(d.gout.data(), d.in.data(), d.gw.data(),
                                   d.shape);
    benchmark::ClobberMemory();
  }
}

void instance_norm_serial(benchmark::State& state) {
  const int64_t bc = 8, spatial = 64 * 64 * 64;
  Rng rng(2);
  std::vector<float> in(size_t(bc * spatial)), out(in.size());
  std::vector<float> mean(static_cast<size_t>(bc)), istd(static_cast<size_t>(bc));
  for (auto& v : in) v = float(rng.normal());
  for (auto _ : state) {
    k::serial::instance_norm_forward(in.data(), out.data(), mean.data(),
                                     istd.data(), bc, spatial, 1e-5);
    benchmark::ClobberMemory();
  }
}

void instance_norm_omp(benchmark::State& state) {
  const int64_t bc = 8, spatial = 64 * 64 * 64;
  Rng rng(2);
  std::vector<float> in(size_t(bc * spatial)), out(in.size());
  std::vector<float> mean(static_cast<size_t>(bc)), istd(static_cast<size_t>(bc));
  for (auto& v : in) v = float(rng.normal());
  for (auto _ : state) {
    k::par::instance_norm_forward(in.data(), out.data(), mean.data(),
                                  istd.data(), bc, spatial, 1e-5);
    benchmark::ClobberMemory();
  }
}

void upsample_serial(benchmark::State& state) {
  const int64_t bc = 8, side = 32;
  Rng rng(3);
  std::vector<float> in(size_t(bc * side * side * side));
  std::vector<float> out(in.size() * 8);
  for (auto& v : in) v = float(rng.normal());
  for (auto _ : state) {
    k::serial::upsample2_forward(in.data(), out.data(), bc, side, side, side);
    benchmark::ClobberMemory();
  }
}

void upsample_omp(benchmark::State& state) {
  const int64_t bc = 8, side = 32;
  Rng rng(3);
  std::vector<float> in(size_t(bc * side * side * side));
  std::vector<float> out(in.size() * 8);
  for (auto& v : in) v = float(rng.normal());
  for (auto _ : state) {
    k::par::upsample2_forward(in.data(), out.data(), bc, side, side, side);
    benchmark::ClobberMemory();
  }
}

}  // namespace

BENCHMARK(conv_forward_serial)->Args({8, 32})->Args({8, 64})->Args({16, 32})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(conv_forward_omp)->Args({8, 32})->Args({8, 64})->Args({16, 32})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(conv_backward_weight_serial)->Args({8, 32})->Args({8, 64})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(conv_backward_weight_omp)->Args({8, 32})->Args({8, 64})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(instance_norm_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(instance_norm_omp)->Unit(benchmark::kMillisecond);
BENCHMARK(upsample_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(upsample_omp)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
