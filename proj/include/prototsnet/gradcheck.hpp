#pragma once

#include <functional>
#include <span>
#include <vector>

#include "prototsnet/autodiff.hpp"

namespace prototsnet {

// Builds a scalar from graph leaves; the leaves are parameters when the
// analytic gradient is wanted and constants during probing.
using ScalarFunction = std::function<Var(Graph&, std::span<const Var>)>;

// Max over all coordinates of |analytic - central difference| / max(1, |analytic|).
double finite_diff_check(const ScalarFunction& f, const std::vector<Tensor>& xs, double step = 1e-5);
double finite_diff_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, double step = 1e-5);

}  // namespace prototsnet
