#pragma once

// Raw numeric kernels behind the autodiff ops.
//
// Two implementations share every signature: `serial` is a direct
// nested-loop transcription of the definitions and is kept as the
// reference for tests; `omp` reorganizes the loops as gathers so each
// output element is owned by one thread, which makes results independent
// of the thread count. Backward kernels accumulate into their outputs.

#include <span>

namespace prototsnet::kernels {

struct ConvDims {
    int batch = 1;
    int in_channels = 1;
    int out_channels = 1;
    int length = 1;
    int kernel = 1;
    int groups = 1;

    int in_per_group() const { return in_channels / groups; }
    int out_per_group() const { return out_channels / groups; }
    int pad() const { return kernel / 2; }
};

struct SlideDims {
    int batch = 1;
    int channels = 1;
    int length = 1;
    int protos = 1;
    int proto_len = 1;

    int windows() const { return length - proto_len + 1; }
};

namespace serial {

void conv1d_forward(const ConvDims& d, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv1d_backward_input(const ConvDims& d, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in);
void conv1d_backward_params(const ConvDims& d, std::span<const double> grad_out, std::span<const double> in,
                            std::span<double> grad_weight, std::span<double> grad_bias);

void sliding_sq_l2_forward(const SlideDims& d, std::span<const double> z, std::span<const double> protos,
                           std::span<double> out);
// Either gradient span may be empty to skip it.
void sliding_sq_l2_backward(const SlideDims& d, std::span<const double> grad_out, std::span<const double> z,
                            std::span<const double> protos, std::span<double> grad_z,
                            std::span<double> grad_protos);

}  // namespace serial

namespace omp {

void conv1d_forward(const ConvDims& d, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv1d_backward_input(const ConvDims& d, std::span<const double> grad_out, std::span<const double> weight,
                           std::span<double> grad_in);
void conv1d_backward_params(const ConvDims& d, std::span<const double> grad_out, std::span<const double> in,
                            std::span<double> grad_weight, std::span<double> grad_bias);

void sliding_sq_l2_forward(const SlideDims& d, std::span<const double> z, std::span<const double> protos,
                           std::span<double> out);
void sliding_sq_l2_backward(const SlideDims& d, std::span<const double> grad_out, std::span<const double> z,
                            std::span<const double> protos, std::span<double> grad_z,
                            std::span<double> grad_protos);

}  // namespace omp

}  // namespace prototsnet::kernels
