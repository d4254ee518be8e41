#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prototsnet/autodiff.hpp"
#include "prototsnet/dataset.hpp"
#include "prototsnet/masks.hpp"
#include "prototsnet/tensor.hpp"

namespace prototsnet {

struct EncoderConfig {
    int groups = 32;  // l
    std::vector<int> kernels{7, 5, 3};
    std::vector<int> channels_per_group{4, 4, 1};
    Activation activation = Activation::Relu;
    // false selects the regular encoder: one group, unmasked input.
    bool grouped = true;

    // R = sum (k_i - 1) / 2
    int receptive_radius() const;
    void validate() const;
};

struct ModelConfig {
    EncoderConfig encoder;
    double reception = 0.75;
    double proto_fraction = 0.2;
    int protos_per_class = 10;
    double epsilon = 1e-4;
    double init_own_class = 1.0;
    double init_other_class = -0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ConvLayer {
    Tensor weight;  // [C_out, C_in / groups, k]
    Tensor bias;    // [C_out]
    int groups = 1;
};

struct ProtoSource {
    int series = 0;
    int offset = 0;
    bool operator==(const ProtoSource&) const = default;
};

struct ProtoTSNetModel {
    ModelConfig config;
    int features = 0;      // d
    int classes = 0;       // C
    int series_length = 0; // T the model was built for
    int proto_len = 0;     // L_lat
    std::vector<std::string> class_names;

    MaskSet masks;
    std::vector<ConvLayer> encoder;
    Tensor mix_weight;  // [l, l], mix_weight(j, i): encoder output i -> latent feature j
    Tensor mix_bias;    // [l]
    Tensor prototypes;  // [m, l, L_lat]
    std::vector<int> proto_classes;
    Tensor last_weight;  // [C, m]
    std::optional<std::vector<ProtoSource>> proto_sources;
    std::optional<Normalization> normalization;

    int latent_channels() const { return config.encoder.groups; }
    int num_prototypes() const { return static_cast<int>(proto_classes.size()); }
    std::vector<int> prototypes_of_class(int c) const;
};

// Independent RNG stream `stream` derived from a base seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// L_lat = max(1, round(fraction * T)), capped at T.
int latent_proto_length(double fraction, int length);

ProtoTSNetModel create_model(const ModelConfig& config, int features, int length, int classes);

// Mirror of the encoder used only for reconstruction pretraining.
struct Decoder {
    std::vector<ConvLayer> layers;
    Activation activation = Activation::Relu;
};

Decoder create_decoder(const ProtoTSNetModel& model, std::uint64_t seed);

// Graph-bound parameters. Each entry is a parameter (trainable in the
// current stage) or a constant.
struct ModelVars {
    std::vector<Var> enc_weight, enc_bias;
    Var mix_weight, mix_bias, prototypes, last_weight;
};

struct Trainables {
    bool encoder = false;
    bool mixing = false;
    bool prototypes = false;
    bool last_layer = false;
};

ModelVars bind_model(Graph& g, const ProtoTSNetModel& model, const Trainables& trainable);

struct DecoderVars {
    std::vector<Var> weight, bias;
};
DecoderVars bind_decoder(Graph& g, const Decoder& decoder, bool trainable);

// x [B, d, T] -> encoder input ([B, l*d, T] masked, or x itself for the regular encoder)
Tensor encoder_input(const ProtoTSNetModel& model, const Tensor& x);

// z [B, l, T] in the prototype latent space.
Var encode_graph(Graph& g, const ProtoTSNetModel& model, const ModelVars& vars, Var encoder_in);

struct ForwardVars {
    Var latent;     // [B, l, T]
    Var distances;  // [B, m, S]
    Var min_dist;   // [B, m]
    Var similarity; // [B, m]
    Var logits;     // [B, C]
    std::vector<int> best_offset;  // [B, m]
};

ForwardVars forward_graph(Graph& g, const ProtoTSNetModel& model, const ModelVars& vars, Var encoder_in);

Var decode_graph(Graph& g, const Decoder& decoder, const DecoderVars& vars, Var latent);

// ---- inference (no gradients) ----

using LatentSeries = Tensor;  // [l, T]

LatentSeries encode(const Tensor& x, const ProtoTSNetModel& model);
Tensor encode_batch(const Tensor& x, const ProtoTSNetModel& model);

struct SimilarityResult {
    std::vector<double> similarity;  // [m]
    std::vector<int> best_offset;    // [m]
    std::vector<double> best_sqdist; // [m]
};

SimilarityResult similarity(const LatentSeries& z, const ProtoTSNetModel& model);

struct ForwardResult {
    std::vector<double> logits;  // [C]
    std::vector<double> similarity;
    std::vector<int> best_offset;
    int predicted() const;
};

ForwardResult forward(const Tensor& x, const ProtoTSNetModel& model);
std::vector<ForwardResult> forward_batch(const Tensor& x, const ProtoTSNetModel& model);

Tensor decode(const LatentSeries& z, const Decoder& decoder);

// I_m = sum_j | sum_i delta(i, m) * w_ij |, w_ij = mix_weight(j, i).
std::vector<double> feature_importance(const MaskSet& masks, const Tensor& mix_weight);
std::vector<double> feature_importance(const ProtoTSNetModel& model);

// Closed input-space interval influencing latent steps [first, last].
std::pair<int, int> receptive_window(int first, int last, const EncoderConfig& encoder, int length);

}  // namespace prototsnet
