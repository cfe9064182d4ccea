#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "latentkit/tensor.hpp"

namespace latentkit {

enum class OptimizerKind { plain_gradient, adaptive_moment };

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::adaptive_moment;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Gradient *ascent*: objectives in this library are maximized, so a step moves
// each parameter along its accumulated gradient.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSettings settings = {});

  // Reads each parameter's grad; throws naming the parameter if any entry is
  // non-finite, before anything is modified. Grads are left in place.
  void step(const ParameterList& params);

  std::uint64_t step_count() const { return steps_; }
  const OptimizerSettings& settings() const { return settings_; }
  void set_learning_rate(double lr) { settings_.learning_rate = lr; }

 private:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };

  OptimizerSettings settings_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace latentkit
