#include "latentkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "latentkit/error.hpp"

namespace latentkit {

namespace {

void check_eps(double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    fail(ErrorCode::invalid_argument, "grad_check: eps must lie in [1e-7, 1e-3]");
  }
}

double evaluate(const std::function<Tensor()>& f, const std::string& where) {
  const double v = f().item();
  if (!std::isfinite(v)) fail(ErrorCode::numeric, "grad_check: non-finite objective at " + where);
  return v;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor leaf = x.clone(true);
  ParameterList params{{"x", leaf}};
  return grad_check([&] { return f(leaf); }, params, eps);
}

double grad_check(const std::function<Tensor()>& f, const ParameterList& params, double eps) {
  check_eps(eps);
  std::vector<std::pair<Tensor, bool>> flags;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    flags.emplace_back(t, t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  f().backward();

  double worst = 0.0;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const std::vector<double> analytic = t.grad();
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      const std::string where = p.name + "[" + std::to_string(i) + "]";
      values[i] = saved + eps;
      const double up = evaluate(f, where + " + eps");
      values[i] = saved - eps;
      const double down = evaluate(f, where + " - eps");
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      worst = std::max(worst, std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(analytic[i])));
    }
  }
  for (auto& [t, flag] : flags) {
    t.zero_grad();
    t.set_requires_grad(flag);
  }
  return worst;
}

}  // namespace latentkit
