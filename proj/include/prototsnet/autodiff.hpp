#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prototsnet/tensor.hpp"

namespace prototsnet {

class Graph;

// Handle to a node recorded in a Graph.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Gradient callback of a recorded op. `input_grads[i]` is null when input i
// does not require a gradient; otherwise the callback adds its contribution.
using BackwardFn =
    std::function<void(const Graph& graph, const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

// Tape of op records in creation order (which is a topological order).
// One graph serves one forward/backward pass and is then discarded.
class Graph {
public:
    Var constant(Tensor value);
    Var parameter(Tensor value);

    Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor& value(Var v) const;
    const Tensor& grad(Var v) const;
    bool requires_grad(Var v) const;
    const std::string& op(Var v) const;
    const std::vector<Var>& inputs(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    // Reverse sweep from a scalar. A graph can be swept once; gradients of
    // every node requiring one are available through grad() afterwards.
    void backward(Var loss);
    bool consumed() const { return consumed_; }

private:
    struct Node {
        std::string op;
        Tensor value;
        Tensor grad;
        std::vector<Var> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };

    const Node& node(Var v) const;

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

enum class Activation { Relu, Tanh, Identity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

namespace ops {

// input [B, C_in, T], weight [C_out, C_in/g, k], bias [C_out] -> [B, C_out, T].
// Stride 1, odd k, zero padding k/2 on both sides.
Var grouped_conv1d(Graph& g, Var input, Var weight, Var bias, int groups);

// 1x1 convolution: out[b, j, t] = sum_i weight[j, i] * in[b, i, t] + bias[j].
Var pointwise_mix(Graph& g, Var input, Var weight, Var bias);

Var activation(Graph& g, Var x, Activation a);

// z [B, l, T], protos [m, l, L] -> [B, m, T - L + 1] squared distances.
Var sliding_sq_l2(Graph& g, Var z, Var protos);

// log((d + 1) / (d + eps)) elementwise.
Var log_similarity(Graph& g, Var d, double eps);

// Reduce the last axis of [B, m, S]; ties go to the smallest offset.
// The winning offsets are written to `argbest` (row-major [B, m]) when given.
Var max_over_time(Graph& g, Var d, std::vector<int>* argbest = nullptr);
Var min_over_time(Graph& g, Var d, std::vector<int>* argbest = nullptr);

// x [B, m], mask [B, m] of 0/1 -> [B], minimum over masked columns.
// Every row must select at least one column.
Var masked_row_min(Graph& g, Var x, const std::vector<std::vector<char>>& mask);

// a [B, m], weight [C, m], optional bias [C] -> [B, C].
Var linear(Graph& g, Var a, Var weight, Var bias = Var{});

Var softmax_cross_entropy(Graph& g, Var logits, std::span<const int> labels);
Var mse(Graph& g, Var pred, Var target);

Var sum(Graph& g, Var x);
Var mean(Graph& g, Var x);
Var abs_sum(Graph& g, Var x);
// Sum of max(0, -x) over all entries.
Var negative_part_sum(Graph& g, Var x);
// Scalar sum of coefficient * scalar-var terms.
Var weighted_sum(Graph& g, const std::vector<std::pair<double, Var>>& terms);

}  // namespace ops

}  // namespace prototsnet
