#include "prototsnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace prototsnet {

int EncoderConfig::receptive_radius() const {
    int r = 0;
    for (int k : kernels) r += (k - 1) / 2;
    return r;
}

void EncoderConfig::validate() const {
    if (groups < 1) throw std::invalid_argument("encoder groups must be positive");
    if (kernels.empty()) throw std::invalid_argument("encoder needs at least one layer");
    if (kernels.size() != channels_per_group.size()) {
        throw std::invalid_argument("encoder kernels and channels_per_group differ in length");
    }
    for (int k : kernels) {
        if (k < 1 || k % 2 == 0) throw std::invalid_argument("encoder kernel sizes must be odd and positive");
    }
    for (int c : channels_per_group) {
        if (c < 1) throw std::invalid_argument("encoder channel counts must be positive");
    }
    if (channels_per_group.back() != 1) {
        throw std::invalid_argument("last encoder layer must emit one channel per group");
    }
}

void ModelConfig::validate() const {
    encoder.validate();
    if (!(reception > 0.0) || reception > 1.0) throw std::invalid_argument("reception must lie in (0, 1]");
    if (!(proto_fraction > 0.0) || proto_fraction > 1.0) throw std::invalid_argument("proto_fraction must lie in (0, 1]");
    if (protos_per_class < 1) throw std::invalid_argument("protos_per_class must be positive");
    if (!(epsilon > 0.0) || epsilon >= 1.0) throw std::invalid_argument("epsilon must lie in (0, 1)");
}

std::vector<int> ProtoTSNetModel::prototypes_of_class(int c) const {
    std::vector<int> out;
    for (int j = 0; j < num_prototypes(); ++j) {
        if (proto_classes[static_cast<std::size_t>(j)] == c) out.push_back(j);
    }
    return out;
}

int latent_proto_length(double fraction, int length) {
    if (length < 1) throw std::invalid_argument("series length must be positive");
    const int l = static_cast<int>(std::lround(fraction * length));
    return std::clamp(l, 1, length);
}

namespace {

ConvLayer make_conv(int in_channels, int out_channels, int kernel, int groups, std::mt19937_64& rng) {
    ConvLayer layer;
    layer.groups = groups;
    const int fan_in = (in_channels / groups) * kernel;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    layer.weight = Tensor(Shape{out_channels, in_channels / groups, kernel});
    layer.bias = Tensor(Shape{out_channels});
    for (double& w : layer.weight.data()) w = u(rng);
    for (double& b : layer.bias.data()) b = u(rng);
    return layer;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

ProtoTSNetModel create_model(const ModelConfig& config, int features, int length, int classes) {
    config.validate();
    if (features < 1 || length < 1) throw std::invalid_argument("model needs positive feature count and length");
    if (classes < 2) throw std::invalid_argument("model needs at least two classes");

    ProtoTSNetModel model;
    model.config = config;
    model.features = features;
    model.classes = classes;
    model.series_length = length;
    model.proto_len = latent_proto_length(config.proto_fraction, length);
    for (int c = 0; c < classes; ++c) model.class_names.push_back(std::to_string(c));

    const EncoderConfig& enc = config.encoder;
    const int l = enc.groups;
    model.masks = enc.grouped ? generate_masks(features, l, config.reception, config.seed)
                              : all_ones_masks(features, l);

    std::mt19937_64 rng(derive_seed(config.seed, 1));
    const int groups = enc.grouped ? l : 1;
    int in_channels = enc.grouped ? l * features : features;
    for (std::size_t i = 0; i < enc.kernels.size(); ++i) {
        const int out_channels = l * enc.channels_per_group[i];
        model.encoder.push_back(make_conv(in_channels, out_channels, enc.kernels[i], groups, rng));
        in_channels = out_channels;
    }

    ConvLayer mix = make_conv(l, l, 1, 1, rng);
    model.mix_weight = mix.weight.reshaped(Shape{l, l});
    model.mix_bias = mix.bias;

    const int m = config.protos_per_class * classes;
    model.prototypes = Tensor(Shape{m, l, model.proto_len});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (double& p : model.prototypes.data()) p = unit(rng);
    for (int j = 0; j < m; ++j) model.proto_classes.push_back(j / config.protos_per_class);

    model.last_weight = Tensor(Shape{classes, m});
    for (int c = 0; c < classes; ++c) {
        for (int j = 0; j < m; ++j) {
            model.last_weight.at(c, j) =
                model.proto_classes[static_cast<std::size_t>(j)] == c ? config.init_own_class : config.init_other_class;
        }
    }
    return model;
}

Decoder create_decoder(const ProtoTSNetModel& model, std::uint64_t seed) {
    const EncoderConfig& enc = model.config.encoder;
    const int l = enc.groups;
    const int groups = enc.grouped ? l : 1;
    const std::size_t n = enc.kernels.size();
    std::mt19937_64 rng(derive_seed(seed, 2));
    Decoder dec;
    dec.activation = enc.activation;
    // layer i undoes encoder layer n-1-i; the final layer returns to the d input features
    int in_channels = l;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t mirrored = n - 1 - i;
        const int kernel = enc.kernels[mirrored];
        if (mirrored == 0) {
            dec.layers.push_back(make_conv(in_channels, model.features, kernel, 1, rng));
        } else {
            const int out_channels = l * enc.channels_per_group[mirrored - 1];
            dec.layers.push_back(make_conv(in_channels, out_channels, kernel, groups, rng));
            in_channels = out_channels;
        }
    }
    return dec;
}

ModelVars bind_model(Graph& g, const ProtoTSNetModel& model, const Trainables& trainable) {
    auto bind = [&g](const Tensor& t, bool train) { return train ? g.parameter(t) : g.constant(t); };
    ModelVars v;
    for (const ConvLayer& layer : model.encoder) {
        v.enc_weight.push_back(bind(layer.weight, trainable.encoder));
        v.enc_bias.push_back(bind(layer.bias, trainable.encoder));
    }
    v.mix_weight = bind(model.mix_weight, trainable.mixing);
    v.mix_bias = bind(model.mix_bias, trainable.mixing);
    v.prototypes = bind(model.prototypes, trainable.prototypes);
    v.last_weight = bind(model.last_weight, trainable.last_layer);
    return v;
}

DecoderVars bind_decoder(Graph& g, const Decoder& decoder, bool trainable) {
    DecoderVars v;
    for (const ConvLayer& layer : decoder.layers) {
        v.weight.push_back(trainable ? g.parameter(layer.weight) : g.constant(layer.weight));
        v.bias.push_back(trainable ? g.parameter(layer.bias) : g.constant(layer.bias));
    }
    return v;
}

Tensor encoder_input(const ProtoTSNetModel& model, const Tensor& x) {
    if (x.rank() != 3 || x.dim(1) != model.features) {
        throw ShapeError("model expects [B, " + std::to_string(model.features) + ", T] input, got " +
                         shape_string(x.shape()));
    }
    return model.config.encoder.grouped ? apply_masks_batch(x, model.masks) : x;
}

Var encode_graph(Graph& g, const ProtoTSNetModel& model, const ModelVars& vars, Var encoder_in) {
    Var h = encoder_in;
    const std::size_t n = model.encoder.size();
    for (std::size_t i = 0; i < n; ++i) {
        h = ops::grouped_conv1d(g, h, vars.enc_weight[i], vars.enc_bias[i], model.encoder[i].groups);
        if (i + 1 < n) h = ops::activation(g, h, model.config.encoder.activation);
    }
    return ops::pointwise_mix(g, h, vars.mix_weight, vars.mix_bias);
}

ForwardVars forward_graph(Graph& g, const ProtoTSNetModel& model, const ModelVars& vars, Var encoder_in) {
    ForwardVars f;
    f.latent = encode_graph(g, model, vars, encoder_in);
    f.distances = ops::sliding_sq_l2(g, f.latent, vars.prototypes);
    f.min_dist = ops::min_over_time(g, f.distances);
    Var sims = ops::log_similarity(g, f.distances, model.config.epsilon);
    f.similarity = ops::max_over_time(g, sims, &f.best_offset);
    f.logits = ops::linear(g, f.similarity, vars.last_weight);
    return f;
}

Var decode_graph(Graph& g, const Decoder& decoder, const DecoderVars& vars, Var latent) {
    Var h = latent;
    const std::size_t n = decoder.layers.size();
    for (std::size_t i = 0; i < n; ++i) {
        h = ops::grouped_conv1d(g, h, vars.weight[i], vars.bias[i], decoder.layers[i].groups);
        if (i + 1 < n) h = ops::activation(g, h, decoder.activation);
    }
    return h;
}

LatentSeries encode(const Tensor& x, const ProtoTSNetModel& model) {
    if (x.rank() != 2) throw ShapeError("encode expects [d, T], got " + shape_string(x.shape()));
    Tensor z = encode_batch(x.reshaped(Shape{1, x.dim(0), x.dim(1)}), model);
    return z.reshaped(Shape{z.dim(1), z.dim(2)});
}

Tensor encode_batch(const Tensor& x, const ProtoTSNetModel& model) {
    Graph g;
    ModelVars vars = bind_model(g, model, Trainables{});
    Var in = g.constant(encoder_input(model, x));
    return g.value(encode_graph(g, model, vars, in));
}

SimilarityResult similarity(const LatentSeries& z, const ProtoTSNetModel& model) {
    if (z.rank() != 2 || z.dim(0) != model.latent_channels()) {
        throw ShapeError("similarity expects [l, T] latent, got " + shape_string(z.shape()));
    }
    Graph g;
    Var zv = g.constant(z.reshaped(Shape{1, z.dim(0), z.dim(1)}));
    Var d = ops::sliding_sq_l2(g, zv, g.constant(model.prototypes));
    std::vector<int> best;
    Var s = ops::max_over_time(g, ops::log_similarity(g, d, model.config.epsilon), &best);
    SimilarityResult r;
    const Tensor& sv = g.value(s);
    const Tensor& dv = g.value(d);
    for (int j = 0; j < model.num_prototypes(); ++j) {
        r.similarity.push_back(sv.at(0, j));
        r.best_offset.push_back(best[static_cast<std::size_t>(j)]);
        r.best_sqdist.push_back(dv.at(0, j, best[static_cast<std::size_t>(j)]));
    }
    return r;
}

int ForwardResult::predicted() const {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::vector<ForwardResult> forward_batch(const Tensor& x, const ProtoTSNetModel& model) {
    Graph g;
    ModelVars vars = bind_model(g, model, Trainables{});
    ForwardVars f = forward_graph(g, model, vars, g.constant(encoder_input(model, x)));
    const Tensor& logits = g.value(f.logits);
    const Tensor& sim = g.value(f.similarity);
    const int m = model.num_prototypes();
    std::vector<ForwardResult> out(static_cast<std::size_t>(x.dim(0)));
    for (int b = 0; b < x.dim(0); ++b) {
        ForwardResult& r = out[static_cast<std::size_t>(b)];
        for (int c = 0; c < model.classes; ++c) r.logits.push_back(logits.at(b, c));
        for (int j = 0; j < m; ++j) {
            r.similarity.push_back(sim.at(b, j));
            r.best_offset.push_back(f.best_offset[static_cast<std::size_t>(b) * m + j]);
        }
    }
    return out;
}

ForwardResult forward(const Tensor& x, const ProtoTSNetModel& model) {
    if (x.rank() != 2) throw ShapeError("forward expects [d, T], got " + shape_string(x.shape()));
    return forward_batch(x.reshaped(Shape{1, x.dim(0), x.dim(1)}), model).front();
}

Tensor decode(const LatentSeries& z, const Decoder& decoder) {
    if (z.rank() != 2) throw ShapeError("decode expects [l, T], got " + shape_string(z.shape()));
    Graph g;
    DecoderVars vars = bind_decoder(g, decoder, false);
    Tensor out = g.value(decode_graph(g, decoder, vars, g.constant(z.reshaped(Shape{1, z.dim(0), z.dim(1)}))));
    return out.reshaped(Shape{out.dim(1), out.dim(2)});
}

std::vector<double> feature_importance(const MaskSet& masks, const Tensor& mix_weight) {
    const int l = masks.groups;
    if (mix_weight.rank() != 2 || mix_weight.dim(0) != l || mix_weight.dim(1) != l) {
        throw ShapeError("feature_importance: mixing weight " + shape_string(mix_weight.shape()) + " does not match " +
                         std::to_string(l) + " groups");
    }
    std::vector<double> importance(static_cast<std::size_t>(masks.features), 0.0);
    for (int m = 0; m < masks.features; ++m) {
        double total = 0.0;
        for (int j = 0; j < l; ++j) {
            double path = 0.0;
            for (int i = 0; i < l; ++i) {
                if (masks.at(i, m)) path += mix_weight.at(j, i);
            }
            total += std::abs(path);
        }
        importance[static_cast<std::size_t>(m)] = total;
    }
    return importance;
}

std::vector<double> feature_importance(const ProtoTSNetModel& model) {
    return feature_importance(model.masks, model.mix_weight);
}

std::pair<int, int> receptive_window(int first, int last, const EncoderConfig& encoder, int length) {
    if (length < 1 || first < 0 || last < first || last >= length) {
        throw std::out_of_range("receptive_window: invalid latent range [" + std::to_string(first) + ", " +
                                std::to_string(last) + "] for length " + std::to_string(length));
    }
    const int r = encoder.receptive_radius();
    return {std::max(0, first - r), std::min(length - 1, last + r)};
}

}  // namespace prototsnet
