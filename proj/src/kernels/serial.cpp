#include "prototsnet/kernels.hpp"

#include <cstddef>

namespace prototsnet::kernels::serial {

namespace {

inline std::size_t idx3(int a, int b, int c, int nb, int nc) {
    return (static_cast<std::size_t>(a) * nb + b) * nc + c;
}

}  // namespace

void conv1d_forward(const ConvDims& d, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
    const int cin_g = d.in_per_group();
    const int cout_g = d.out_per_group();
    const int pad = d.pad();
    for (int b = 0; b < d.batch; ++b) {
        for (int o = 0; o < d.out_channels; ++o) {
            const int group = o / cout_g;
            for (int t = 0; t < d.length; ++t) {
                double acc = bias.empty() ? 0.0 : bias[o];
                for (int c = 0; c < cin_g; ++c) {
                    const int ci = group * cin_g + c;
                    for (int q = 0; q < d.kernel; ++q) {
                        const int src = t + q - pad;
                        if (src < 0 || src >= d.length) continue;
                        acc += weight[idx3(o, c, q, cin_g, d.kernel)] * in[idx3(b, ci, src, d.in_channels, d.length)];
                    }
                }
                out[idx3(b, o, t, d.out_channels, d.length)] = acc;
            }
        }
    }
}

void conv1d_backward_input(const ConvDims& d, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in) {
    const int cin_g = d.in_per_group();
    const int cout_g = d.out_per_group();
    const int pad = d.pad();
    // scatter each output gradient back along the kernel taps
    for (int b = 0; b < d.batch; ++b) {
        for (int o = 0; o < d.out_channels; ++o) {
            const int group = o / cout_g;
            for (int t = 0; t < d.length; ++t) {
                const double g = grad_out[idx3(b, o, t, d.out_channels, d.length)];
                for (int c = 0; c < cin_g; ++c) {
                    const int ci = group * cin_g + c;
                    for (int q = 0; q < d.kernel; ++q) {
                        const int src = t + q - pad;
                        if (src < 0 || src >= d.length) continue;
                        grad_in[idx3(b, ci, src, d.in_channels, d.length)] += g * weight[idx3(o, c, q, cin_g, d.kernel)];
                    }
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
    for (int b = 0; b < d.batch; ++b) {
        for (int o = 0; o < d.out_channels; ++o) {
            const int group = o / cout_g;
            for (int t = 0; t < d.length; ++t) {
                const double g = grad_out[idx3(b, o, t, d.out_channels, d.length)];
                if (!grad_bias.empty()) grad_bias[o] += g;
                for (int c = 0; c < cin_g; ++c) {
                    const int ci = group * cin_g + c;
                    for (int q = 0; q < d.kernel; ++q) {
                        const int src = t + q - pad;
                        if (src < 0 || src >= d.length) continue;
                        grad_weight[idx3(o, c, q, cin_g, d.kernel)] += g * in[idx3(b, ci, src, d.in_channels, d.length)];
                    }
                }
            }
        }
    }
}

void sliding_sq_l2_forward(const SlideDims& d, std::span<const double> z, std::span<const double> protos,
                           std::span<double> out) {
    const int windows = d.windows();
    for (int b = 0; b < d.batch; ++b) {
        for (int j = 0; j < d.protos; ++j) {
            for (int s = 0; s < windows; ++s) {
                double acc = 0.0;
                for (int c = 0; c < d.channels; ++c) {
                    for (int tau = 0; tau < d.proto_len; ++tau) {
                        const double diff = z[idx3(b, c, s + tau, d.channels, d.length)] -
                                            protos[idx3(j, c, tau, d.channels, d.proto_len)];
                        acc += diff * diff;
                    }
                }
                out[idx3(b, j, s, d.protos, windows)] = acc;
            }
        }
    }
}

void sliding_sq_l2_backward(const SlideDims& d, std::span<const double> grad_out, std::span<const double> z,
                            std::span<const double> protos, std::span<double> grad_z,
                            std::span<double> grad_protos) {
    const int windows = d.windows();
    for (int b = 0; b < d.batch; ++b) {
        for (int j = 0; j < d.protos; ++j) {
            for (int s = 0; s < windows; ++s) {
                const double g = grad_out[idx3(b, j, s, d.protos, windows)];
                if (g == 0.0) continue;
                for (int c = 0; c < d.channels; ++c) {
                    for (int tau = 0; tau < d.proto_len; ++tau) {
                        const std::size_t zi = idx3(b, c, s + tau, d.channels, d.length);
                        const std::size_t pi = idx3(j, c, tau, d.channels, d.proto_len);
                        const double diff = 2.0 * g * (z[zi] - protos[pi]);
                        if (!grad_z.empty()) grad_z[zi] += diff;
                        if (!grad_protos.empty()) grad_protos[pi] -= diff;
                    }
                }
            }
        }
    }
}

}  // namespace prototsnet::kernels::serial
