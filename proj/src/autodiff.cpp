#include "prototsnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prototsnet/kernels.hpp"

namespace prototsnet {

Var Graph::constant(Tensor value) { return record("constant", std::move(value), {}, nullptr); }

Var Graph::parameter(Tensor value) {
    Var v = record("parameter", std::move(value), {}, nullptr);
    nodes_.back().requires_grad = true;
    return v;
}

Var Graph::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    if (consumed_) throw std::logic_error("graph already consumed by backward()");
    if (!value.all_finite()) throw NumericError("non-finite values produced by op '" + op + "'");
    bool needs = false;
    for (Var in : inputs) {
        if (in.id < 0 || in.id >= static_cast<int>(nodes_.size())) throw std::out_of_range("unknown graph node");
        needs = needs || nodes_[static_cast<std::size_t>(in.id)].requires_grad;
    }
    Node n;
    n.op = std::move(op);
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.requires_grad = needs && backward != nullptr;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Graph::Node& Graph::node(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) throw std::out_of_range("unknown graph node");
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

const Tensor& Graph::grad(Var v) const {
    const Node& n = node(v);
    if (!consumed_) throw std::logic_error("grad() before backward()");
    if (!n.requires_grad) throw std::logic_error("node '" + n.op + "' does not require a gradient");
    return n.grad;
}

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }
const std::string& Graph::op(Var v) const { return node(v).op; }
const std::vector<Var>& Graph::inputs(Var v) const { return node(v).inputs; }

void Graph::backward(Var loss) {
    if (consumed_) throw std::logic_error("backward() called twice on the same graph");
    const Node& root = node(loss);
    if (root.value.size() != 1) throw ShapeError("backward() needs a scalar, got " + shape_string(root.value.shape()));
    consumed_ = true;
    for (Node& n : nodes_) {
        if (n.requires_grad) n.grad = Tensor(n.value.shape(), 0.0);
    }
    if (!root.requires_grad) return;
    nodes_[static_cast<std::size_t>(loss.id)].grad[0] = 1.0;

    std::vector<Tensor*> slots;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad || !n.backward) continue;
        slots.clear();
        for (Var in : n.inputs) {
            Node& src = nodes_[static_cast<std::size_t>(in.id)];
            slots.push_back(src.requires_grad ? &src.grad : nullptr);
        }
        n.backward(*this, n.grad, slots);
    }
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "relu";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

namespace ops {

namespace {

void require_rank(const Tensor& t, int rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

void require_scalar(const Tensor& t, const char* what) {
    if (t.size() != 1) throw ShapeError(std::string(what) + ": expected a scalar, got " + shape_string(t.shape()));
}

}  // namespace

Var grouped_conv1d(Graph& g, Var input, Var weight, Var bias, int groups) {
    const Tensor& x = g.value(input);
    const Tensor& w = g.value(weight);
    const Tensor& b = g.value(bias);
    require_rank(x, 3, "grouped_conv1d input");
    require_rank(w, 3, "grouped_conv1d weight");
    require_rank(b, 1, "grouped_conv1d bias");
    if (groups < 1) throw ShapeError("grouped_conv1d: groups must be positive");
    kernels::ConvDims d;
    d.batch = x.dim(0);
    d.in_channels = x.dim(1);
    d.length = x.dim(2);
    d.out_channels = w.dim(0);
    d.kernel = w.dim(2);
    d.groups = groups;
    if (d.in_channels % groups != 0 || d.out_channels % groups != 0) {
        throw ShapeError("grouped_conv1d: groups=" + std::to_string(groups) + " does not divide channels " +
                         std::to_string(d.in_channels) + "->" + std::to_string(d.out_channels));
    }
    if (d.kernel % 2 == 0) throw ShapeError("grouped_conv1d: kernel size must be odd, got " + std::to_string(d.kernel));
    if (w.dim(1) != d.in_per_group()) {
        throw ShapeError("grouped_conv1d: weight " + shape_string(w.shape()) + " expects " +
                         std::to_string(w.dim(1)) + " input channels per group, input gives " +
                         std::to_string(d.in_per_group()));
    }
    if (b.dim(0) != d.out_channels) throw ShapeError("grouped_conv1d: bias length mismatch");

    Tensor out(Shape{d.batch, d.out_channels, d.length});
    kernels::omp::conv1d_forward(d, x.data(), w.data(), b.data(), out.data());
    return g.record("grouped_conv1d", std::move(out), {input, weight, bias},
                    [d, input, weight](const Graph& gr, const Tensor& go, std::span<Tensor* const> grads) {
                        if (grads[0]) kernels::omp::conv1d_backward_input(d, go.data(), gr.value(weight).data(), grads[0]->data());
                        if (grads[1] || grads[2]) {
                            Tensor gw(gr.value(weight).shape());
                            Tensor gb(Shape{d.out_channels});
                            kernels::omp::conv1d_backward_params(d, go.data(), gr.value(input).data(), gw.data(), gb.data());
                            if (grads[1]) {
                                for (std::size_t i = 0; i < gw.size(); ++i) (*grads[1])[i] += gw[i];
                            }
                            if (grads[2]) {
                                for (std::size_t i = 0; i < gb.size(); ++i) (*grads[2])[i] += gb[i];
                            }
                        }
                    });
}

Var pointwise_mix(Graph& g, Var input, Var weight, Var bias) {
    const Tensor& x = g.value(input);
    const Tensor& w = g.value(weight);
    require_rank(x, 3, "pointwise_mix input");
    require_rank(w, 2, "pointwise_mix weight");
    if (w.dim(0) != w.dim(1) || w.dim(1) != x.dim(1)) {
        throw ShapeError("pointwise_mix: weight " + shape_string(w.shape()) + " does not fit input " +
                         shape_string(x.shape()));
    }
    if (g.value(bias).size() != static_cast<std::size_t>(w.dim(0))) throw ShapeError("pointwise_mix: bias length mismatch");
    const int l = w.dim(0);
    kernels::ConvDims d;
    d.batch = x.dim(0);
    d.in_channels = l;
    d.out_channels = l;
    d.length = x.dim(2);
    d.kernel = 1;
    d.groups = 1;
    Tensor out(Shape{d.batch, l, d.length});
    kernels::omp::conv1d_forward(d, x.data(), w.data(), g.value(bias).data(), out.data());
    return g.record("pointwise_mix", std::move(out), {input, weight, bias},
                    [d, input, weight](const Graph& gr, const Tensor& go, std::span<Tensor* const> grads) {
                        if (grads[0]) kernels::omp::conv1d_backward_input(d, go.data(), gr.value(weight).data(), grads[0]->data());
                        if (grads[1] || grads[2]) {
                            Tensor gw(gr.value(weight).shape());
                            Tensor gb(Shape{d.out_channels});
                            kernels::omp::conv1d_backward_params(d, go.data(), gr.value(input).data(), gw.data(), gb.data());
                            if (grads[1]) {
                                for (std::size_t i = 0; i < gw.size(); ++i) (*grads[1])[i] += gw[i];
                            }
                            if (grads[2]) {
                                for (std::size_t i = 0; i < gb.size(); ++i) (*grads[2])[i] += gb[i];
                            }
                        }
                    });
}

Var activation(Graph& g, Var x, Activation a) {
    if (a == Activation::Identity) return x;
    const Tensor& in = g.value(x);
    Tensor out(in.shape());
    if (a == Activation::Relu) {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
    } else {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
    }
    const Var produced{static_cast<int>(g.size())};
    return g.record(activation_name(a), std::move(out), {x},
                    [a, x, produced](const Graph& gr, const Tensor& go, std::span<Tensor* const> grads) {
                        if (!grads[0]) return;
                        const Tensor& in = gr.value(x);
                        Tensor& dst = *grads[0];
                        if (a == Activation::Relu) {
                            for (std::size_t i = 0; i < in.size(); ++i) {
                                if (in[i] > 0.0) dst[i] += go[i];
                            }
                        } else {
                            const Tensor& y = gr.value(produced);
                            for (std::size_t i = 0; i < in.size(); ++i) dst[i] += go[i] * (1.0 - y[i] * y[i]);
                        }
                    });
}

Var sliding_sq_l2(Graph& g, Var z, Var protos) {
    const Tensor& zt = g.value(z);
    const Tensor& pt = g.value(protos);
    require_rank(zt, 3, "sliding_sq_l2 latent");
    require_rank(pt, 3, "sliding_sq_l2 prototypes");
    if (zt.dim(1) != pt.dim(1)) throw ShapeError("sliding_sq_l2: channel mismatch");
    kernels::SlideDims d;
    d.batch = zt.dim(0);
    d.channels = zt.dim(1);
    d.length = zt.dim(2);
    d.protos = pt.dim(0);
    d.proto_len = pt.dim(2);
    if (d.proto_len > d.length) {
        throw ShapeError("sliding_sq_l2: prototype length " + std::to_string(d.proto_len) + " exceeds series length " +
                         std::to_string(d.length));
    }
    Tensor out(Shape{d.batch, d.protos, d.windows()});
    kernels::omp::sliding_sq_l2_forward(d, zt.data(), pt.data(), out.data());
    return g.record("sliding_sq_l2", std::move(out), {z, protos},
                    [d, z, protos](const Graph& gr, const Tensor& go, std::span<Tensor* const> grads) {
                        std::span<double> gz = grads[0] ? grads[0]->data() : std::span<double>{};
                        std::span<double> gp = grads[1] ? grads[1]->data() : std::span<double>{};
                        kernels::omp::sliding_sq_l2_backward(d, go.data(), gr.value(z).data(), gr.value(protos).data(), gz, gp);
                    });
}

Var log_similarity(Graph& g, Var d, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("log_similarity: epsilon must be positive");
    const Tensor& in = g.value(d);
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] < 0.0) throw NumericError("log_similarity: negative distance");
        out[i] = std::log((in[i] + 1.0) / (in[i] + eps));
    }
    return g.record("log_similarity", std::move(out), {d},
                    [d, eps](const Graph& gr, const Tensor& go, std::span<Tensor* const> grads) {
                        if (!grads[0]) return;
                        const Tensor& in = gr.value(d);
                        for (std::size_t i = 0; i < in.size(); ++i) {
                            (*grads[0])[i] += go[i] * (1.0 / (in[i] + 1.0) - 1.0 / (in[i] + eps));
                        }
                    });
}

namespace {

template <typename Better>
Var reduce_over_time(Graph& g, Var d, std::vector<int>* argbest, const char* name, Better better) {
    const Tensor& in = g.value(d);
    require_rank(in, 3, name);
    const int batch = in.dim(0), m = in.dim(1), len = in.dim(2);
    Tensor out(Shape{batch, m});
    std::vector<int> arg(static_cast<std::size_t>(batch) * m, 0);
    for (int b = 0; b < batch; ++b) {
        for (int j = 0; j < m; ++j) {
            int best = 0;
            double v = in.at(b, j, 0);
            for (int s = 1; s < len; ++s) {
                if (better(in.at(b, j, s), v)) {
                    v = in.at(b, j, s);
                    best = s;
                }
            }
            out.at(b, j) = v;
            arg[static_cast<std::size_t>(b) * m + j] = best;
        }
    }
    if (argbest) *argbest = arg;
    return g.record(name, std::move(out), {d},
                    [arg = std::move(arg), m, len](const Graph&, const Tensor& go, std::span<Tensor* const> grads) {
                        if (!grads[0]) return;
                        for (std::size_t bj = 0; bj < arg.size(); ++bj) {
                            (*grads[0])[bj * static_cast<std::size_t>(len) + static_cast<std::size_t>(arg[bj])] += go[bj];
                        }
                        (void)m;
                    });
}

}  // namespace

Var max_over_time(Graph& g, Var d, std::vector<int>* argbest) {
    return reduce_over_time(g, d, argbest, "max_over_time", [](double a, double b) { return a > b; });
}

Var min_over_time(Graph& g, Var d, std::vector<int>* argbest) {
    return reduce_over_time(g, d, argbest, "min_over_time", [](double a, double b) { return a < b; });
}

Var masked_row_min(Graph& g, Var x, const std::vector<std::vector<char>>& mask) {
    const Tensor& in = g.value(x);
    require_rank(in, 2, "masked_row_min");
    const int batch = in.dim(0), m = in.dim(1);
    if (mask.size() != static_cast<std::size_t>(batch)) throw ShapeError("masked_row_min: mask rows mismatch");
    Tensor out(Shape{batch});
    std::vector<int> arg(static_cast<std::size_t>(batch), -1);
    for (int b = 0; b < batch; ++b) {
        const auto& row = mask[static_cast<std::size_t>(b)];
        if (row.size() != static_cast<std::size_t>(m)) throw ShapeError("masked_row_min: mask columns mismatch");
        double v = std::numeric_limits<double>::infinity();
        for (int j = 0; j < m; ++j) {
            if (row[static_cast<std::size_t>(j)] && in.at(b, j) < v) {
                v = in.at(b, j);
                arg[static_cast<std::size_t>(b)] = j;
            }
        }
        if (arg[static_cast<std::size_t>(b)] < 0) throw std::invalid_argument("masked_row_min: row selects no column");
        out.at(b) = v;
    }
    return g.record("masked_row_min", std::move(out), {x},
                    [arg = std::move(arg), m](const Graph&, const Tensor& go, std::span<Tensor* const> grads) {
                        if (!grads[0]) return;
                        for (std::size_t b = 0; b < arg.size(); ++b) {
                            (*grads[0])[b * static_cast<std::size_t>(m) + static_cast<std::size_t>(arg[b])] += go[b];
                        }
                    });
}

Var linear(Graph& g, Var a, Var weight, Var bias) {
    const Tensor& at = g.value(a);
    const Tensor& w = g.value(weight);
    require_rank(at, 2, "linear input");
    require_rank(w, 2, "linear weight");
    if (at.dim(1) != w.dim(1)) {
        throw ShapeError("linear: input " + shape_string(at.shape()) + " does not fit weight " + shape_string(w.shape()));
    }
    const int batch = at.dim(0), m = at.dim(1), classes = w.dim(0);
    const bool has_bias = bias.valid();
    if (has_bias && g.value(bias).size() != static_cast<std::size_t>(classes)) throw ShapeError("linear: bias length mismatch");
    Tensor out(Shape{batch, classes});
    for (int b = 0; b < batch; ++b) {
        for (int c = 0; c < classes; ++c) {
            double acc = has_bias ? g.value(bias)[static_cast<std::size_t>(c)] : 0.0;
            for (int j = 0; j < m; ++j) acc += w.at(c, j) * at.at(b, j);
            out.at(b, c) = acc;
        }
    }
    std::vector<Var> inputs{a, weight};
    if (has_bias) inputs.push_back(bias);
    return g.record("linear", std::move(out), std::move(inputs),
                    [a, weight, batch, m, classes](const Graph& gr, const Tensor& go, std::span<Tensor* const> grads) {
                        const Tensor& av = gr.value(a);
                        const Tensor& wv = gr.value(weight);
                        for (int b = 0; b < batch; ++b) {
                            for (int c = 0; c < classes; ++c) {
                                const double gbc = go.at(b, c);
                                if (grads[0]) {
                                    for (int j = 0; j < m; ++j) grads[0]->at(b, j) += gbc * wv.at(c, j);
                                }
                                if (grads[1]) {
                                    for (int j = 0; j < m; ++j) grads[1]->at(c, j) += gbc * av.at(b, j);
                                }
                                if (grads.size() > 2 && grads[2]) grads[2]->at(c) += gbc;
                            }
                        }
                    });
}

Var softmax_cross_entropy(Graph& g, Var logits, std::span<const int> labels) {
    const Tensor& z = g.value(logits);
    require_rank(z, 2, "softmax_cross_entropy");
    const int batch = z.dim(0), classes = z.dim(1);
    if (labels.size() != static_cast<std::size_t>(batch)) throw ShapeError("softmax_cross_entropy: label count mismatch");
    Tensor probs(z.shape());
    double loss = 0.0;
    for (int b = 0; b < batch; ++b) {
        const int y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= classes) throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) + " out of range");
        double mx = z.at(b, 0);
        for (int c = 1; c < classes; ++c) mx = std::max(mx, z.at(b, c));
        double denom = 0.0;
        for (int c = 0; c < classes; ++c) denom += std::exp(z.at(b, c) - mx);
        const double log_denom = std::log(denom);
        for (int c = 0; c < classes; ++c) probs.at(b, c) = std::exp(z.at(b, c) - mx - log_denom);
        loss -= z.at(b, y) - mx - log_denom;
    }
    loss /= batch;
    std::vector<int> ys(labels.begin(), labels.end());
    return g.record("softmax_cross_entropy", Tensor::scalar(loss), {logits},
                    [probs = std::move(probs), ys = std::move(ys)](const Graph&, const Tensor& go, std::span<Tensor* const> grads) {
                        if (!grads[0]) return;
                        const int batch = probs.dim(0), classes = probs.dim(1);
                        const double scale = go[0] / batch;
                        for (int b = 0; b < batch; ++b) {
                            for (int c = 0; c < classes; ++c) {
                                const double target = c == ys[static_cast<std::size_t>(b)] ? 1.0 : 0.0;
                                grads[0]->at(b, c) += scale * (probs.at(b, c) - target);
                            }
                        }
                    });
}

Var mse(Graph& g, Var pred, Var target) {
    const Tensor& p = g.value(pred);
    const Tensor& t = g.value(target);
    if (p.shape() != t.shape()) {
        throw ShapeError("mse: shape " + shape_string(p.shape()) + " vs " + shape_string(t.shape()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double diff = p[i] - t[i];
        acc += diff * diff;
    }
    const double n = static_cast<double>(p.size());
    return g.record("mse", Tensor::scalar(acc / n), {pred, target},
                    [pred, target, n](const Graph& gr, const Tensor& go, std::span<Tensor* const> grads) {
                        const Tensor& pv = gr.value(pred);
                        const Tensor& tv = gr.value(target);
                        const double scale = 2.0 * go[0] / n;
                        for (std::size_t i = 0; i < pv.size(); ++i) {
                            const double diff = scale * (pv[i] - tv[i]);
                            if (grads[0]) (*grads[0])[i] += diff;
                            if (grads[1]) (*grads[1])[i] -= diff;
                        }
                    });
}

Var sum(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    double acc = 0.0;
    for (double v : in.data()) acc += v;
    return g.record("sum", Tensor::scalar(acc), {x}, [](const Graph&, const Tensor& go, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (double& v : grads[0]->data()) v += go[0];
    });
}

Var mean(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    double acc = 0.0;
    for (double v : in.data()) acc += v;
    const double n = static_cast<double>(in.size());
    return g.record("mean", Tensor::scalar(acc / n), {x}, [n](const Graph&, const Tensor& go, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        for (double& v : grads[0]->data()) v += go[0] / n;
    });
}

Var abs_sum(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    double acc = 0.0;
    for (double v : in.data()) acc += std::abs(v);
    return g.record("abs_sum", Tensor::scalar(acc), {x}, [x](const Graph& gr, const Tensor& go, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        const Tensor& in = gr.value(x);
        for (std::size_t i = 0; i < in.size(); ++i) {
            if (in[i] > 0.0) (*grads[0])[i] += go[0];
            else if (in[i] < 0.0) (*grads[0])[i] -= go[0];
        }
    });
}

Var negative_part_sum(Graph& g, Var x) {
    const Tensor& in = g.value(x);
    double acc = 0.0;
    for (double v : in.data()) acc += v < 0.0 ? -v : 0.0;
    return g.record("negative_part_sum", Tensor::scalar(acc), {x},
                    [x](const Graph& gr, const Tensor& go, std::span<Tensor* const> grads) {
                        if (!grads[0]) return;
                        const Tensor& in = gr.value(x);
                        for (std::size_t i = 0; i < in.size(); ++i) {
                            if (in[i] < 0.0) (*grads[0])[i] -= go[0];
                        }
                    });
}

Var weighted_sum(Graph& g, const std::vector<std::pair<double, Var>>& terms) {
    if (terms.empty()) throw std::invalid_argument("weighted_sum: no terms");
    double acc = 0.0;
    std::vector<Var> inputs;
    std::vector<double> coefs;
    for (const auto& [c, v] : terms) {
        require_scalar(g.value(v), "weighted_sum");
        acc += c * g.value(v)[0];
        inputs.push_back(v);
        coefs.push_back(c);
    }
    return g.record("weighted_sum", Tensor::scalar(acc), std::move(inputs),
                    [coefs = std::move(coefs)](const Graph&, const Tensor& go, std::span<Tensor* const> grads) {
                        for (std::size_t i = 0; i < coefs.size(); ++i) {
                            if (grads[i]) (*grads[i])[0] += coefs[i] * go[0];
                        }
                    });
}

}  // namespace ops

}  // namespace prototsnet
