#include "latentkit/optim.hpp"

#include <cmath>

#include "latentkit/error.hpp"

namespace latentkit {

Optimizer::Optimizer(OptimizerSettings settings) : settings_(settings) {}

void Optimizer::step(const ParameterList& params) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    grads.push_back(p.tensor.grad());
    for (std::size_t i = 0; i < grads.back().size(); ++i) {
      if (!std::isfinite(grads.back()[i])) {
        fail(ErrorCode::numeric, "non-finite gradient for parameter '" + p.name + "' at index " + std::to_string(i));
      }
    }
  }

  ++steps_;
  const double lr = settings_.learning_rate;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor t = params[k].tensor;
    auto values = t.mutable_values();
    const auto& g = grads[k];
    if (settings_.kind == OptimizerKind::plain_gradient) {
      for (std::size_t i = 0; i < values.size(); ++i) values[i] += lr * g[i];
      continue;
    }
    Moments& m = moments_[params[k].name];
    if (m.first.size() != values.size()) {
      m.first.assign(values.size(), 0.0);
      m.second.assign(values.size(), 0.0);
    }
    const double b1 = settings_.beta1, b2 = settings_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < values.size(); ++i) {
      m.first[i] = b1 * m.first[i] + (1.0 - b1) * g[i];
      m.second[i] = b2 * m.second[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m.first[i] / c1;
      const double vhat = m.second[i] / c2;
      values[i] += lr * mhat / (std::sqrt(vhat) + settings_.epsilon);
    }
  }
}

}  // namespace latentkit
