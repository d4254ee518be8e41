#include "prototsnet/kernels.hpp"

#include <algorithm>
#include <cstddef>
#include <vector>

namespace prototsnet::kernels::omp {

namespace {

inline std::size_t row(int a, int b, int nb, int len) { return (static_cast<std::size_t>(a) * nb + b) * len; }

// Below this many multiply-adds the fork/join overhead dominates.
constexpr long kParallelThreshold = 1L << 15;

}  // namespace

void conv1d_forward(const ConvDims& d, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
    const int cin_g = d.in_per_group();
    const int cout_g = d.out_per_group();
    const int pad = d.pad();
    const int len = d.length;
    const long work = static_cast<long>(d.batch) * d.out_channels * cin_g * d.kernel * len;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelThreshold)
    for (int b = 0; b < d.batch; ++b) {
        for (int o = 0; o < d.out_channels; ++o) {
            const int group = o / cout_g;
            double* dst = out.data() + row(b, o, d.out_channels, len);
            const double b0 = bias.empty() ? 0.0 : bias[o];
            std::fill(dst, dst + len, b0);
            for (int c = 0; c < cin_g; ++c) {
                const double* src = in.data() + row(b, group * cin_g + c, d.in_channels, len);
                const double* w = weight.data() + row(o, c, cin_g, d.kernel);
                for (int q = 0; q < d.kernel; ++q) {
                    const double wq = w[q];
                    const int shift = q - pad;
                    const int t0 = std::max(0, -shift);
                    const int t1 = std::min(len, len - shift);
                    for (int t = t0; t < t1; ++t) dst[t] += wq * src[t + shift];
                }
            }
        }
    }
}

void conv1d_backward_input(const ConvDims& d, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in) {
    const int cin_g = d.in_per_group();
    const int cout_g = d.out_per_group();
    const int pad = d.pad();
    const int len = d.length;
    const long work = static_cast<long>(d.batch) * d.out_channels * cin_g * d.kernel * len;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelThreshold)
    for (int b = 0; b < d.batch; ++b) {
        for (int ci = 0; ci < d.in_channels; ++ci) {
            const int group = ci / cin_g;
            const int c = ci - group * cin_g;
            double* dst = grad_in.data() + row(b, ci, d.in_channels, len);
            for (int o = group * cout_g; o < (group + 1) * cout_g; ++o) {
                const double* g = grad_out.data() + row(b, o, d.out_channels, len);
                const double* w = weight.data() + row(o, c, cin_g, d.kernel);
                for (int q = 0; q < d.kernel; ++q) {
                    const double wq = w[q];
                    // input index u receives grad_out[u - shift]
                    const int shift = q - pad;
                    const int u0 = std::max(0, shift);
                    const int u1 = std::min(len, len + shift);
                    for (int u = u0; u < u1; ++u) dst[u] += wq * g[u - shift];
                }
            }
        }
    }
}

void conv1d_backward_params(const ConvDims& d, std::span<const double> grad_out, std::span<const double> in,
                            std::span<double> grad_weight, std::span<double> grad_bias) {
    const int cin_g = d.in_per_group();
    const int cout_g = d.out_per_group();
    const int pad = d.pad();
    const int len = d.length;
    const long work = static_cast<long>(d.batch) * d.out_channels * cin_g * d.kernel * len;
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
    for (int o = 0; o < d.out_channels; ++o) {
        const int group = o / cout_g;
        double* gw = grad_weight.data() + row(o, 0, cin_g, d.kernel);
        for (int b = 0; b < d.batch; ++b) {
            const double* g = grad_out.data() + row(b, o, d.out_channels, len);
            if (!grad_bias.empty()) {
                double acc = 0.0;
                for (int t = 0; t < len; ++t) acc += g[t];
                grad_bias[o] += acc;
            }
            for (int c = 0; c < cin_g; ++c) {
                const double* src = in.data() + row(b, group * cin_g + c, d.in_channels, len);
                for (int q = 0; q < d.kernel; ++q) {
                    const int shift = q - pad;
                    const int t0 = std::max(0, -shift);
                    const int t1 = std::min(len, len - shift);
                    double acc = 0.0;
                    for (int t = t0; t < t1; ++t) acc += g[t] * src[t + shift];
                    gw[c * d.kernel + q] += acc;
                }
            }
        }
    }
}

void sliding_sq_l2_forward(const SlideDims& d, std::span<const double> z, std::span<const double> protos,
                           std::span<double> out) {
    const int windows = d.windows();
    const long work = static_cast<long>(d.batch) * d.protos * windows * d.channels * d.proto_len;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelThreshold)
    for (int b = 0; b < d.batch; ++b) {
        for (int j = 0; j < d.protos; ++j) {
            double* dst = out.data() + row(b, j, d.protos, windows);
            std::fill(dst, dst + windows, 0.0);
            for (int c = 0; c < d.channels; ++c) {
                const double* zr = z.data() + row(b, c, d.channels, d.length);
                const double* pr = protos.data() + row(j, c, d.channels, d.proto_len);
                for (int s = 0; s < windows; ++s) {
                    double acc = 0.0;
                    for (int tau = 0; tau < d.proto_len; ++tau) {
                        const double diff = zr[s + tau] - pr[tau];
                        acc += diff * diff;
                    }
                    dst[s] += acc;
                }
            }
        }
    }
}

void sliding_sq_l2_backward(const SlideDims& d, std::span<const double> grad_out, std::span<const double> z,
                            std::span<const double> protos, std::span<double> grad_z,
                            std::span<double> grad_protos) {
    const int windows = d.windows();
    const int rows = d.batch * d.protos;
    const long work = static_cast<long>(rows) * windows * d.channels * d.proto_len;

    // Non-zero windows of each (b, j) row, with 2 * grad.
    std::vector<int> count(static_cast<std::size_t>(rows));
    std::vector<int> nz_offset(static_cast<std::size_t>(rows) * windows);
    std::vector<double> nz_grad(static_cast<std::size_t>(rows) * windows);
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
    for (int r = 0; r < rows; ++r) {
        const double* g = grad_out.data() + static_cast<std::size_t>(r) * windows;
        const std::size_t base = static_cast<std::size_t>(r) * windows;
        int n = 0;
        for (int s = 0; s < windows; ++s) {
            if (g[s] == 0.0) continue;
            nz_offset[base + n] = s;
            nz_grad[base + n] = 2.0 * g[s];
            ++n;
        }
        count[static_cast<std::size_t>(r)] = n;
    }

    if (!grad_z.empty()) {
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelThreshold)
        for (int b = 0; b < d.batch; ++b) {
            for (int c = 0; c < d.channels; ++c) {
                const double* __restrict zr = z.data() + row(b, c, d.channels, d.length);
                double* __restrict gz = grad_z.data() + row(b, c, d.channels, d.length);
                for (int j = 0; j < d.protos; ++j) {
                    const std::size_t r = static_cast<std::size_t>(b) * d.protos + j;
                    const std::size_t base = r * windows;
                    const double* __restrict pr = protos.data() + row(j, c, d.channels, d.proto_len);
                    for (int n = 0; n < count[r]; ++n) {
                        const int s = nz_offset[base + n];
                        const double g2 = nz_grad[base + n];
                        for (int tau = 0; tau < d.proto_len; ++tau) gz[s + tau] += g2 * (zr[s + tau] - pr[tau]);
                    }
                }
            }
        }
    }
    if (!grad_protos.empty()) {
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelThreshold)
        for (int j = 0; j < d.protos; ++j) {
            for (int c = 0; c < d.channels; ++c) {
                const double* __restrict pr = protos.data() + row(j, c, d.channels, d.proto_len);
                double* __restrict gp = grad_protos.data() + row(j, c, d.channels, d.proto_len);
                for (int b = 0; b < d.batch; ++b) {
                    const std::size_t r = static_cast<std::size_t>(b) * d.protos + j;
                    const std::size_t base = r * windows;
                    const double* __restrict zr = z.data() + row(b, c, d.channels, d.length);
                    for (int n = 0; n < count[r]; ++n) {
                        const int s = nz_offset[base + n];
                        const double g2 = nz_grad[base + n];
                        for (int tau = 0; tau < d.proto_len; ++tau) gp[tau] -= g2 * (zr[s + tau] - pr[tau]);
                    }
                }
            }
        }
    }
}

}  // namespace prototsnet::kernels::omp
