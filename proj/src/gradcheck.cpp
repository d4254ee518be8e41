#include "prototsnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace prototsnet {

namespace {

double evaluate(const ScalarFunction& f, const std::vector<Tensor>& xs) {
    Graph g;
    std::vector<Var> leaves;
    leaves.reserve(xs.size());
    for (const Tensor& x : xs) leaves.push_back(g.constant(x));
    const double v = g.value(f(g, leaves)).item();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite function value");
    return v;
}

}  // namespace

double finite_diff_check(const ScalarFunction& f, const std::vector<Tensor>& xs, double step) {
    Graph g;
    std::vector<Var> leaves;
    for (const Tensor& x : xs) {
        if (!x.all_finite()) throw NumericError("finite_diff_check: non-finite input");
        leaves.push_back(g.parameter(x));
    }
    Var out = f(g, leaves);
    g.backward(out);

    double worst = 0.0;
    std::vector<Tensor> probe = xs;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const Tensor& analytic = g.grad(leaves[k]);
        for (std::size_t i = 0; i < xs[k].size(); ++i) {
            const double orig = xs[k][i];
            probe[k][i] = orig + step;
            const double up = evaluate(f, probe);
            probe[k][i] = orig - step;
            const double down = evaluate(f, probe);
            probe[k][i] = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

double finite_diff_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, double step) {
    return finite_diff_check([&f](Graph& g, std::span<const Var> leaves) { return f(g, leaves[0]); },
                             std::vector<Tensor>{x}, step);
}

}  // namespace prototsnet
