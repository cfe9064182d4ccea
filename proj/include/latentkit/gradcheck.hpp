#pragma once

#include <functional>

#include "latentkit/tensor.hpp"

namespace latentkit {

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// `eps` must lie in [1e-7, 1e-3]. Throws naming the coordinate when f(x +/- eps)
// is not finite.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double eps = 1e-5);

// Same measure over every coordinate of every listed parameter; `f` closes over
// the parameters, which are perturbed in place and restored.
double grad_check(const std::function<Tensor()>& f, const ParameterList& params,
                  double eps = 1e-5);

}  // namespace latentkit
