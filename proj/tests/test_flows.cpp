#include <gtest/gtest.h>

#include <cmath>

#include "latentkit/error.hpp"
#include "latentkit/flows.hpp"
#include "latentkit/gradcheck.hpp"
#include "test_util.hpp"

using namespace latentkit;

namespace {

// log |det| of a d x d matrix by partial-pivot elimination.
double log_abs_det(std::vector<double> a, std::size_t d) {
  double acc = 0;
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < d; ++r)
      if (std::abs(a[r * d + c]) > std::abs(a[p * d + c])) p = r;
    if (p != c)
      for (std::size_t k = 0; k < d; ++k) std::swap(a[c * d + k], a[p * d + k]);
    const double piv = a[c * d + c];
    acc += std::log(std::abs(piv));
    for (std::size_t r = c + 1; r < d; ++r) {
      const double f = a[r * d + c] / piv;
      for (std::size_t k = c; k < d; ++k) a[r * d + k] -= f * a[c * d + k];
    }
  }
  return acc;
}

template <typename F>
double numeric_log_det(F f, const std::vector<double>& z) {
  const std::size_t d = z.size();
  const double h = 1e-6;
  std::vector<double> jac(d * d);
  for (std::size_t j = 0; j < d; ++j) {
    auto zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    auto fp = f(Tensor::vector(zp)).z.to_vector();
    auto fm = f(Tensor::vector(zm)).z.to_vector();
    for (std::size_t i = 0; i < d; ++i) jac[i * d + j] = (fp[i] - fm[i]) / (2 * h);
  }
  return log_abs_det(jac, d);
}

void randomize(Tensor& t, Rng& rng, double r) {
  for (auto& v : t.mutable_values()) v = (rng.uniform() * 2 - 1) * r;
}

}  // namespace

TEST(Planar, ConstraintKeepsInvertible) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    Tensor u = Tensor::vector({rng.normal() * 3, rng.normal() * 3});
    Tensor w = Tensor::vector({rng.normal(), rng.normal()});
    EXPECT_GE(dot(w, planar_constrain(u, w)).item(), -1.0 - 1e-12);
  }
  Tensor u = Tensor::vector({1.0, 2.0});
  EXPECT_EQ(planar_constrain(u, Tensor::zeros({2})).to_vector(), u.to_vector());
}

TEST(Planar, LogDetMatchesJacobian) {
  Rng rng(2);
  for (std::size_t d = 1; d <= 4; ++d) {
    PlanarStep s = PlanarStep::create(d, &rng, 1.0);
    randomize(s.u, rng, 2.0);
    randomize(s.b, rng, 1.0);
    std::vector<double> z(d);
    for (auto& v : z) v = rng.normal();
    auto f = [&](const Tensor& x) { return planar_forward(s, x); };
    EXPECT_NEAR(f(Tensor::vector(z)).log_det.item(), numeric_log_det(f, z), 1e-6);
  }
}

TEST(Iaf, LogDetMatchesJacobianAndTriangular) {
  Rng rng(3);
  for (std::size_t d = 1; d <= 4; ++d) {
    IafStep s = IafStep::create(d, 6, &rng, 0.5);
    randomize(s.w_out, rng, 0.5);
    randomize(s.b_out, rng, 0.5);
    std::vector<double> z(d);
    for (auto& v : z) v = rng.normal();
    auto f = [&](const Tensor& x) { return iaf_forward(s, x); };
    EXPECT_NEAR(f(Tensor::vector(z)).log_det.item(), numeric_log_det(f, z), 1e-6);
    // output i must not depend on inputs j >= i through mu and log sigma
    auto [mu, ls] = s.shift_and_log_scale(Tensor::vector(z));
    auto z2 = z;
    z2[d - 1] += 1.0;
    auto [mu2, ls2] = s.shift_and_log_scale(Tensor::vector(z2));
    for (std::size_t i = 0; i < d; ++i) {
      EXPECT_EQ(mu[i], mu2[i]);
      EXPECT_EQ(ls[i], ls2[i]);
    }
  }
}

TEST(Iaf, FromMasksRejectsLeakyMask) {
  const std::size_t d = 2, h = 2;
  Tensor mask_in = Tensor::from({h, d}, {1, 1, 1, 1});  // hidden sees z_2
  Tensor mask_out = Tensor::from({2 * d, h}, {0, 0, 1, 1, 0, 0, 1, 1});
  EXPECT_THROW(IafStep::from_masks(Tensor::zeros({h, d}), Tensor::zeros({h}), Tensor::zeros({2 * d, h}), Tensor::zeros({2 * d}),
                                   mask_in, mask_out),
               Error);
}

TEST(Flows, NewStacksAreIdentity) {
  Rng rng(4);
  for (FlowKind k : {FlowKind::planar, FlowKind::iaf}) {
    FlowStack s = FlowStack::create(k, 2, 3, &rng, 0.1);
    const Tensor z0 = Tensor::vector({0.3, -0.2, 1.0});
    const DiagGaussian base = DiagGaussian::standard(3);
    FlowDensity fd = flow_log_density(s, z0, base);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(fd.z[i], z0[i], 1e-14);
    EXPECT_NEAR(fd.log_q.item(), gaussian_log_prob(base, z0).item(), 1e-13);
  }
  EXPECT_EQ(parse_flow_kind("iaf"), FlowKind::iaf);
  EXPECT_THROW(parse_flow_kind("radial"), Error);
}

TEST(Flows, StackGradients) {
  Rng rng(5);
  for (FlowKind k : {FlowKind::planar, FlowKind::iaf}) {
    FlowStack s = FlowStack::create(k, 2, 3, &rng, 0.5, 4);
    for (auto& p : s.parameters()) {
      Tensor t = p.tensor;
      randomize(t, rng, 0.5);
    }
    Tensor mean = Tensor::vector({0.1, 0.2, -0.3}, true);
    Tensor lv = Tensor::vector({-0.2, 0.1, 0.0}, true);
    ParameterList p = s.parameters();
    p.push_back({"mean", mean});
    p.push_back({"lv", lv});
    ContinuousTarget target;
    target.prior_mean = Tensor::zeros({3});
    target.log_likelihood = [](const Tensor& z) { return -0.5 * sum(square(z - 1.0)); };
    const std::vector<double> eps{0.3, -1.0, 0.8};
    EXPECT_LT(grad_check([&] { return flow_elbo(target, {mean, lv}, s, eps).objective; }, p), 1e-6);
  }
}
