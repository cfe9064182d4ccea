#include <gtest/gtest.h>

#include <cmath>

#include "latentkit/error.hpp"
#include "latentkit/gradcheck.hpp"
#include "latentkit/nn.hpp"
#include "latentkit/optim.hpp"
#include "latentkit/rng.hpp"
#include "latentkit/tensor.hpp"

using namespace latentkit;

TEST(Rng, StandardTestVectors) {
  Rng a(5489);
  EXPECT_EQ(a.next_u64(), 14514284786278117030ull);
  Rng b;
  std::uint64_t last = 0;
  for (int i = 0; i < 10000; ++i) last = b.next_u64();
  EXPECT_EQ(last, 9981545732273789042ull);
}

TEST(Rng, SplitDependsOnSeedAndStreamOnly) {
  Rng a(42);
  Rng b(42);
  a.next_u64();
  a.normal();
  EXPECT_EQ(a.split(3).next_u64(), b.split(3).next_u64());
  EXPECT_NE(b.split(3).next_u64(), b.split(4).next_u64());
}

TEST(Rng, NormalMoments) {
  Rng r(1);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Rng, DirichletOnSimplex) {
  Rng r(2);
  for (int i = 0; i < 50; ++i) {
    auto p = r.dirichlet_ones(5);
    double s = 0;
    for (double v : p) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Tensor, BroadcastAdd) {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::vector({10, 20, 30});
  Tensor c = a + b;
  EXPECT_EQ(c.to_vector(), (std::vector<double>{11, 22, 33, 14, 25, 36}));
}

TEST(Tensor, ShapeMismatchThrows) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2});
  try {
    (void)(a + b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::shape_mismatch);
  }
  EXPECT_THROW((void)matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), Error);
}

TEST(Tensor, MatmulValues) {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor v = Tensor::vector({1, 1});
  EXPECT_EQ(matmul(a, v).to_vector(), (std::vector<double>{3, 7}));
  EXPECT_EQ(matmul(a, a).to_vector(), (std::vector<double>{7, 10, 15, 22}));
  EXPECT_EQ(transpose(a).to_vector(), (std::vector<double>{1, 3, 2, 4}));
}

TEST(Tensor, LogSoftmaxStable) {
  Tensor x = Tensor::vector({1000, 1000, 0});
  auto l = log_softmax(x).to_vector();
  EXPECT_NEAR(l[0], std::log(0.5), 1e-12);
  EXPECT_TRUE(std::isfinite(l[2]));
  EXPECT_NEAR(log_sum_exp(x).item(), 1000 + std::log(2.0), 1e-9);
}

TEST(Tensor, LogFloor) { EXPECT_NEAR(log(Tensor::scalar(0.0)).item(), std::log(kLogFloor), 1e-9); }

TEST(Tensor, BackwardSimpleChain) {
  Tensor x = Tensor::vector({0.5, -1.0}, true);
  Tensor y = sum(square(x) * 3.0);
  y.backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{3.0, -6.0}));
}

TEST(Tensor, GradAccumulatesAcrossBackward) {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor y = x * x;
  y.backward();
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Tensor, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::vector({1, 2}, true);
  {
    NoGradGuard g;
    Tensor y = sum(x * x);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(sum(x * x).requires_grad());
}

TEST(Tensor, FreezeGuardRestores) {
  Tensor x = Tensor::vector({1, 2}, true);
  ParameterList p{{"x", x}};
  {
    FreezeGuard f(p);
    EXPECT_FALSE(x.requires_grad());
  }
  EXPECT_TRUE(x.requires_grad());
}

TEST(Tensor, DetachCutsGraph) {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor y = x.detach() * x;
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
}

TEST(Tensor, MaximumPassesAdjointAboveFloor) {
  Tensor x = Tensor::vector({0.5, 2.0}, true);
  sum(maximum(x, 1.0)).backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{0.0, 1.0}));
}

// Each primitive against central differences at random points.
TEST(GradCheck, Primitives) {
  Rng rng(11);
  const std::vector<std::pair<const char*, std::function<Tensor(const Tensor&)>>> fns = {
      {"tanh", [](const Tensor& x) { return sum(tanh(x)); }},
      {"sigmoid", [](const Tensor& x) { return sum(sigmoid(x) * x); }},
      {"exp", [](const Tensor& x) { return sum(exp(x)); }},
      {"log", [](const Tensor& x) { return sum(log(exp(x) + 1.0)); }},
      {"softplus", [](const Tensor& x) { return sum(softplus(x)); }},
      {"sqrt", [](const Tensor& x) { return sum(sqrt(square(x) + 1.0)); }},
      {"div", [](const Tensor& x) { return sum(x / (square(x) + 2.0)); }},
      {"softmax", [](const Tensor& x) { return dot(softmax(x), Tensor::vector({1, 2, 3, 4})); }},
      {"log_softmax", [](const Tensor& x) { return pick(log_softmax(x), 2); }},
      {"log_sum_exp", [](const Tensor& x) { return log_sum_exp(x); }},
      {"matmul", [](const Tensor& x) {
         Tensor m = reshape(x, {2, 2});
         return sum(matmul(m, transpose(m)));
       }},
      {"take_concat", [](const Tensor& x) { return sum(square(concat({take(x, {0, 3}), slice(x, 1, 2)}))); }},
      {"stack_axis_sum", [](const Tensor& x) {
         std::vector<Tensor> parts{x, square(x)};
         return sum(square(sum(stack(parts), 0)));
       }},
      {"mean_abs", [](const Tensor& x) { return mean(abs(x)); }},
  };
  for (const auto& [name, f] : fns) {
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<double> v(4);
      // abs has a kink at 0
      for (auto& a : v) {
        a = rng.uniform() * 2 - 1;
        if (std::abs(a) < 0.05) a = 0.3;
      }
      Tensor x = Tensor::vector(v, true);
      EXPECT_LT(grad_check(f, x), 1e-6) << name;
    }
  }
}

TEST(GradCheck, RejectsBadEpsilon) {
  Tensor x = Tensor::vector({1.0}, true);
  auto f = [](const Tensor& t) { return sum(t); };
  EXPECT_THROW(grad_check(f, x, 1e-2), Error);
}

TEST(GradCheck, LayersParameters) {
  Rng rng(3);
  Mlp mlp = Mlp::create(3, 5, 2, &rng, 0.5);
  ElmanCell cell = ElmanCell::create(3, 4, &rng, 0.5);
  ParameterList p;
  mlp.collect("mlp", p);
  cell.collect("cell", p);
  Tensor x = Tensor::vector({0.2, -0.4, 0.7});
  auto f = [&] {
    Tensor h = cell.step(Tensor::zeros({4}), x);
    h = cell.step(h, x);
    return sum(mlp(x)) + sum(square(h));
  };
  EXPECT_LT(grad_check(f, p), 1e-6);
}

TEST(Optimizer, AscentDirection) {
  Tensor x = Tensor::scalar(0.0, true);
  ParameterList p{{"x", x}};
  OptimizerSettings s;
  s.kind = OptimizerKind::plain_gradient;
  s.learning_rate = 0.1;
  Optimizer opt(s);
  for (int i = 0; i < 200; ++i) {
    zero_grads(p);
    Tensor obj = -square(x - 2.0);
    obj.backward();
    opt.step(p);
  }
  EXPECT_NEAR(x.item(), 2.0, 1e-6);
}

TEST(Optimizer, AdamConverges) {
  Tensor x = Tensor::vector({5.0, -3.0}, true);
  ParameterList p{{"x", x}};
  OptimizerSettings s;
  s.learning_rate = 0.05;
  Optimizer opt(s);
  for (int i = 0; i < 2000; ++i) {
    zero_grads(p);
    (-sum(square(x))).backward();
    opt.step(p);
  }
  EXPECT_NEAR(x[0], 0.0, 1e-3);
  EXPECT_NEAR(x[1], 0.0, 1e-3);
  EXPECT_EQ(opt.step_count(), 2000u);
}

TEST(Optimizer, NonFiniteGradientLeavesParameters) {
  Tensor x = Tensor::vector({1.0}, true);
  Tensor y = Tensor::vector({1.0}, true);
  ParameterList p{{"x", x}, {"y", y}};
  sum(x * 2.0 + y * std::nan("")).backward();
  Optimizer opt;
  try {
    opt.step(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::numeric);
    EXPECT_NE(std::string(e.what()).find("y"), std::string::npos);
  }
  EXPECT_DOUBLE_EQ(x.item(), 1.0);
}
