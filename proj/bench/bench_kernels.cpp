#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "prototsnet/kernels.hpp"

using namespace prototsnet::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

// First encoder layer of the default model on a batch of 32 BasicMotions-sized series:
// l=32 groups, d=6 masked copies each, 4 channels per group, kernel 7, T=100.
ConvDims conv_dims() {
    ConvDims d;
    d.batch = 32;
    d.groups = 32;
    d.in_channels = 32 * 6;
    d.out_channels = 32 * 4;
    d.length = 100;
    d.kernel = 7;
    return d;
}

// 40 prototypes of length 20 over a 32-channel latent of length 100.
SlideDims slide_dims() {
    SlideDims d;
    d.batch = 32;
    d.channels = 32;
    d.length = 100;
    d.protos = 40;
    d.proto_len = 20;
    return d;
}

template <bool Omp>
void BM_ConvForward(benchmark::State& state) {
    const ConvDims d = conv_dims();
    const auto in = random_vector(static_cast<std::size_t>(d.batch * d.in_channels * d.length), 1);
    const auto w = random_vector(static_cast<std::size_t>(d.out_channels * d.in_per_group() * d.kernel), 2);
    const auto b = random_vector(static_cast<std::size_t>(d.out_channels), 3);
    std::vector<double> out(static_cast<std::size_t>(d.batch * d.out_channels * d.length));
    for (auto _ : state) {
        if constexpr (Omp) {
            omp::conv1d_forward(d, in, w, b, out);
        } else {
            serial::conv1d_forward(d, in, w, b, out);
        }
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Omp>
void BM_ConvBackward(benchmark::State& state) {
    const ConvDims d = conv_dims();
    const auto in = random_vector(static_cast<std::size_t>(d.batch * d.in_channels * d.length), 1);
    const auto w = random_vector(static_cast<std::size_t>(d.out_channels * d.in_per_group() * d.kernel), 2);
    const auto go = random_vector(static_cast<std::size_t>(d.batch * d.out_channels * d.length), 4);
    std::vector<double> gi(in.size()), gw(w.size()), gb(static_cast<std::size_t>(d.out_channels));
    for (auto _ : state) {
        if constexpr (Omp) {
            omp::conv1d_backward_input(d, go, w, gi);
            omp::conv1d_backward_params(d, go, in, gw, gb);
        } else {
            serial::conv1d_backward_input(d, go, w, gi);
            serial::conv1d_backward_params(d, go, in, gw, gb);
        }
        benchmark::DoNotOptimize(gi.data());
        benchmark::DoNotOptimize(gw.data());
    }
}

template <bool Omp>
void BM_SlidingForward(benchmark::State& state) {
    const SlideDims d = slide_dims();
    const auto z = random_vector(static_cast<std::size_t>(d.batch * d.channels * d.length), 5);
    const auto p = random_vector(static_cast<std::size_t>(d.protos * d.channels * d.proto_len), 6);
    std::vector<double> out(static_cast<std::size_t>(d.batch * d.protos * d.windows()));
    for (auto _ : state) {
        if constexpr (Omp) {
            omp::sliding_sq_l2_forward(d, z, p, out);
        } else {
            serial::sliding_sq_l2_forward(d, z, p, out);
        }
        benchmark::DoNotOptimize(out.data());
    }
}

// Dense upstream gradient, or the training case: min/max over time pass
// gradient to a single window per (series, prototype).
template <bool Omp, bool Sparse>
void BM_SlidingBackward(benchmark::State& state) {
    const SlideDims d = slide_dims();
    const auto z = random_vector(static_cast<std::size_t>(d.batch * d.channels * d.length), 5);
    const auto p = random_vector(static_cast<std::size_t>(d.protos * d.channels * d.proto_len), 6);
    auto go = random_vector(static_cast<std::size_t>(d.batch * d.protos * d.windows()), 7);
    if constexpr (Sparse) {
        const std::size_t w = static_cast<std::size_t>(d.windows());
        for (std::size_t r = 0; r < go.size() / w; ++r) {
            for (std::size_t s = 0; s < w; ++s) {
                if (s != (r * 37) % w) go[r * w + s] = 0.0;
            }
        }
    }
    std::vector<double> gz(z.size()), gp(p.size());
    for (auto _ : state) {
        if constexpr (Omp) {
            omp::sliding_sq_l2_backward(d, go, z, p, gz, gp);
        } else {
            serial::sliding_sq_l2_backward(d, go, z, p, gz, gp);
        }
        benchmark::DoNotOptimize(gz.data());
        benchmark::DoNotOptimize(gp.data());
    }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv1d_forward/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvForward<true>)->Name("conv1d_forward/omp")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvBackward<false>)->Name("conv1d_backward/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvBackward<true>)->Name("conv1d_backward/omp")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SlidingForward<false>)->Name("sliding_sq_l2_forward/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SlidingForward<true>)->Name("sliding_sq_l2_forward/omp")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SlidingBackward<false, false>)->Name("sliding_sq_l2_backward_dense/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SlidingBackward<true, false>)->Name("sliding_sq_l2_backward_dense/omp")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SlidingBackward<false, true>)->Name("sliding_sq_l2_backward_sparse/serial")->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SlidingBackward<true, true>)->Name("sliding_sq_l2_backward_sparse/omp")->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
