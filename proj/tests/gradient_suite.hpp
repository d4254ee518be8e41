#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prototsnet/gradcheck.hpp"
#include "prototsnet/trainer.hpp"
#include "support.hpp"

namespace testing_support {

struct GradientCase {
    std::string name;
    double error = 0.0;
};

// Central-difference relative error of every differentiable op, each reduced
// to a scalar through an MSE against a fixed random target.
inline std::vector<GradientCase> per_op_gradient_errors() {
    using namespace prototsnet;
    std::vector<GradientCase> out;
    auto reduce = [](Graph& g, Var y, std::uint64_t seed) {
        return ops::mse(g, y, g.constant(random_tensor(g.value(y).shape(), seed)));
    };
    auto add = [&](const std::string& name, const ScalarFunction& f, const std::vector<Tensor>& xs) {
        out.push_back({name, finite_diff_check(f, xs)});
    };

    add("grouped_conv1d",
        [&](Graph& g, std::span<const Var> v) { return reduce(g, ops::grouped_conv1d(g, v[0], v[1], v[2], 2), 100); },
        {random_tensor(Shape{2, 4, 6}, 1), random_tensor(Shape{6, 2, 3}, 2), random_tensor(Shape{6}, 3)});
    add("pointwise_mix",
        [&](Graph& g, std::span<const Var> v) { return reduce(g, ops::pointwise_mix(g, v[0], v[1], v[2]), 101); },
        {random_tensor(Shape{2, 3, 5}, 4), random_tensor(Shape{3, 3}, 5), random_tensor(Shape{3}, 6)});
    for (Activation a : {Activation::Relu, Activation::Tanh, Activation::Identity}) {
        add("activation_" + activation_name(a),
            [&, a](Graph& g, std::span<const Var> v) { return reduce(g, ops::activation(g, v[0], a), 102); },
            {random_tensor(Shape{2, 3, 4}, 7)});
    }
    add("sliding_sq_l2",
        [&](Graph& g, std::span<const Var> v) { return reduce(g, ops::sliding_sq_l2(g, v[0], v[1]), 103); },
        {random_tensor(Shape{2, 3, 9}, 8), random_tensor(Shape{2, 3, 4}, 9)});
    add("log_similarity",
        [&](Graph& g, std::span<const Var> v) { return reduce(g, ops::log_similarity(g, v[0], 1e-4), 104); },
        {random_tensor(Shape{2, 3, 4}, 10, 0.05, 3.0)});
    add("max_over_time",
        [&](Graph& g, std::span<const Var> v) { return reduce(g, ops::max_over_time(g, v[0]), 105); },
        {random_tensor(Shape{2, 3, 5}, 11)});
    add("min_over_time",
        [&](Graph& g, std::span<const Var> v) { return reduce(g, ops::min_over_time(g, v[0]), 106); },
        {random_tensor(Shape{2, 3, 5}, 12)});
    const std::vector<std::vector<char>> mask{{1, 0, 1}, {0, 1, 1}};
    add("masked_row_min",
        [&](Graph& g, std::span<const Var> v) { return reduce(g, ops::masked_row_min(g, v[0], mask), 107); },
        {random_tensor(Shape{2, 3}, 13)});
    add("linear",
        [&](Graph& g, std::span<const Var> v) { return reduce(g, ops::linear(g, v[0], v[1], v[2]), 108); },
        {random_tensor(Shape{3, 4}, 14), random_tensor(Shape{2, 4}, 15), random_tensor(Shape{2}, 16)});
    const std::vector<int> labels{0, 2, 1};
    add("softmax_cross_entropy",
        [&](Graph& g, std::span<const Var> v) { return ops::softmax_cross_entropy(g, v[0], labels); },
        {random_tensor(Shape{3, 3}, 17, -3.0, 3.0)});
    add("mse", [&](Graph& g, std::span<const Var> v) { return ops::mse(g, v[0], v[1]); },
        {random_tensor(Shape{2, 5}, 18), random_tensor(Shape{2, 5}, 19)});
    add("sum", [&](Graph& g, std::span<const Var> v) { return ops::sum(g, v[0]); }, {random_tensor(Shape{3, 2}, 20)});
    add("mean", [&](Graph& g, std::span<const Var> v) { return ops::mean(g, v[0]); }, {random_tensor(Shape{3, 2}, 21)});
    add("abs_sum", [&](Graph& g, std::span<const Var> v) { return ops::abs_sum(g, v[0]); }, {random_tensor(Shape{3, 3}, 22)});
    add("negative_part_sum", [&](Graph& g, std::span<const Var> v) { return ops::negative_part_sum(g, v[0]); },
        {random_tensor(Shape{3, 3}, 23)});
    add("weighted_sum",
        [&](Graph& g, std::span<const Var> v) {
            return ops::weighted_sum(g, {{0.7, ops::sum(g, v[0])}, {-1.3, ops::mean(g, v[1])}});
        },
        {random_tensor(Shape{2, 2}, 24), random_tensor(Shape{3}, 25)});
    return out;
}

// Relative error of the full joint-stage objective (cross-entropy, cluster,
// separation and L1 terms) with respect to every model parameter on a toy
// model with d=3, l=4, T=12 and two prototypes.
inline double end_to_end_gradient_error(std::uint64_t seed = 3) {
    using namespace prototsnet;
    const ModelConfig mc = toy_model_config(seed);
    const ProtoTSNetModel model = create_model(mc, 3, 12, 2);
    const Tensor x = random_tensor(Shape{2, 3, 12}, seed + 10);
    const std::vector<int> labels{0, 1};
    TrainConfig tc;

    std::vector<Tensor> params;
    for (const auto& layer : model.encoder) {
        params.push_back(layer.weight);
        params.push_back(layer.bias);
    }
    params.push_back(model.mix_weight);
    params.push_back(model.mix_bias);
    params.push_back(model.prototypes);
    params.push_back(model.last_weight);

    const Tensor input = encoder_input(model, x);
    const ScalarFunction loss = [&](Graph& g, std::span<const Var> v) {
        ModelVars mv;
        std::size_t k = 0;
        for (std::size_t i = 0; i < model.encoder.size(); ++i) {
            mv.enc_weight.push_back(v[k++]);
            mv.enc_bias.push_back(v[k++]);
        }
        mv.mix_weight = v[k++];
        mv.mix_bias = v[k++];
        mv.prototypes = v[k++];
        mv.last_weight = v[k++];
        const ForwardVars fwd = forward_graph(g, model, mv, g.constant(input));
        return stage_loss(g, Stage::Joint, model, mv, fwd, labels, tc).total;
    };
    return finite_diff_check(loss, params);
}

}  // namespace testing_support
