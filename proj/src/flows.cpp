#include "latentkit/flows.hpp"

#include <cmath>

#include "latentkit/error.hpp"

namespace latentkit {

namespace {

void check_z(const char* op, std::size_t d, const Tensor& z) {
  if (z.numel() != d) {
    fail(ErrorCode::shape_mismatch, std::string(op) + ": z has " + std::to_string(z.numel()) + " entries, flow has d=" + std::to_string(d));
  }
}

void check_autoregressive(const Tensor& mask_in, const Tensor& mask_out) {
  const std::size_t h = mask_in.dim(0);
  const std::size_t d = mask_in.dim(1);
  if (mask_out.dim(0) != 2 * d || mask_out.dim(1) != h) {
    fail(ErrorCode::shape_mismatch, "IAF masks have inconsistent shapes " + shape_string(mask_in.shape()) + " and " +
                                        shape_string(mask_out.shape()));
  }
  const auto in = mask_in.values();
  const auto out = mask_out.values();
  for (std::size_t r = 0; r < 2 * d; ++r) {
    const std::size_t j = r % d;
    for (std::size_t i = j; i < d; ++i) {
      double path = 0.0;
      for (std::size_t u = 0; u < h; ++u) path += out[r * h + u] * in[u * d + i];
      if (path != 0.0) {
        fail(ErrorCode::invalid_argument, "IAF mask violation: output for dimension " + std::to_string(j) +
                                              " depends on input dimension " + std::to_string(i));
      }
    }
  }
}

}  // namespace

PlanarStep PlanarStep::create(std::size_t d, Rng* rng, double radius) {
  if (d == 0) fail(ErrorCode::invalid_argument, "flow dimension must be positive");
  PlanarStep s{Tensor::zeros({d}, true), Tensor::zeros({d}, true), Tensor::zeros({1}, true)};
  if (rng) init_uniform(s.w, *rng, radius);
  // u = a w / |w|^2 with softplus(a) = 1 gives u_hat = 0.
  double norm2 = 0.0;
  for (double v : s.w.values()) norm2 += v * v;
  if (norm2 > 0.0) {
    const double a = std::log(std::exp(1.0) - 1.0);
    auto u = s.u.mutable_values();
    for (std::size_t i = 0; i < d; ++i) u[i] = a * s.w[i] / norm2;
  }
  return s;
}

void PlanarStep::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".u", u});
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

PlanarStep PlanarStep::clone() const { return {u.clone(true), w.clone(true), b.clone(true)}; }

Tensor planar_constrain(const Tensor& u, const Tensor& w) {
  if (u.numel() != w.numel()) fail(ErrorCode::shape_mismatch, "planar_constrain: u and w differ in size");
  Tensor norm2 = dot(w, w);
  if (norm2.item() == 0.0) return u;
  Tensor wu = dot(w, u);
  Tensor m = softplus(wu) - 1.0;
  return u + w * ((m - wu) / norm2);
}

FlowOutput planar_forward(const PlanarStep& step, const Tensor& z) {
  check_z("planar_forward", step.dim(), z);
  Tensor zz = reshape(z, {step.dim()});
  Tensor u_hat = planar_constrain(step.u, step.w);
  Tensor h = tanh(dot(step.w, zz) + sum(step.b));
  Tensor dh = 1.0 - square(h);
  Tensor log_det = log(abs(1.0 + dot(u_hat, step.w) * dh));
  return {zz + u_hat * h, log_det};
}

IafStep IafStep::create(std::size_t d, std::size_t hidden, Rng* rng, double radius) {
  if (d == 0 || hidden == 0) fail(ErrorCode::invalid_argument, "IAF sizes must be positive");
  const std::size_t cycle = std::max<std::size_t>(1, d - 1);
  std::vector<double> mask_in(hidden * d), mask_out(2 * d * hidden);
  for (std::size_t u = 0; u < hidden; ++u) {
    const std::size_t degree = u % cycle + 1;
    for (std::size_t i = 0; i < d; ++i) mask_in[u * d + i] = (i + 1 <= degree) ? 1.0 : 0.0;
    for (std::size_t r = 0; r < 2 * d; ++r) mask_out[r * hidden + u] = (degree < r % d + 1) ? 1.0 : 0.0;
  }
  Tensor w_in = Tensor::zeros({hidden, d}, true);
  if (rng) init_uniform(w_in, *rng, radius);
  return from_masks(w_in, Tensor::zeros({hidden}, true), Tensor::zeros({2 * d, hidden}, true), Tensor::zeros({2 * d}, true),
                    Tensor::from({hidden, d}, std::move(mask_in)), Tensor::from({2 * d, hidden}, std::move(mask_out)));
}

IafStep IafStep::from_masks(Tensor w_in, Tensor b_in, Tensor w_out, Tensor b_out, Tensor mask_in, Tensor mask_out) {
  if (w_in.shape() != mask_in.shape() || w_out.shape() != mask_out.shape() || b_in.numel() != w_in.dim(0) ||
      b_out.numel() != w_out.dim(0)) {
    fail(ErrorCode::shape_mismatch, "IAF weights and masks have inconsistent shapes");
  }
  check_autoregressive(mask_in, mask_out);
  return {std::move(w_in), std::move(b_in), std::move(w_out), std::move(b_out), std::move(mask_in), std::move(mask_out)};
}

std::pair<Tensor, Tensor> IafStep::shift_and_log_scale(const Tensor& z) const {
  const std::size_t d = dim();
  check_z("iaf_forward", d, z);
  Tensor h = tanh(matmul(w_in * mask_in, reshape(z, {d})) + b_in);
  Tensor out = matmul(w_out * mask_out, h) + b_out;
  return {slice(out, 0, d), slice(out, d, d)};
}

void IafStep::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".w_in", w_in});
  out.push_back({prefix + ".b_in", b_in});
  out.push_back({prefix + ".w_out", w_out});
  out.push_back({prefix + ".b_out", b_out});
}

IafStep IafStep::clone() const {
  return {w_in.clone(true), b_in.clone(true), w_out.clone(true), b_out.clone(true), mask_in, mask_out};
}

FlowOutput iaf_forward(const IafStep& step, const Tensor& z) {
  auto [mu, log_sigma] = step.shift_and_log_scale(z);
  return {mu + exp(log_sigma) * reshape(z, {step.dim()}), sum(log_sigma)};
}

FlowKind parse_flow_kind(const std::string& name) {
  if (name == "none") return FlowKind::none;
  if (name == "planar") return FlowKind::planar;
  if (name == "iaf") return FlowKind::iaf;
  fail(ErrorCode::config, "unknown flow kind '" + name + "' (expected none, planar or iaf)");
}

std::string flow_kind_name(FlowKind kind) {
  switch (kind) {
    case FlowKind::none: return "none";
    case FlowKind::planar: return "planar";
    case FlowKind::iaf: return "iaf";
  }
  return "none";
}

FlowStack FlowStack::create(FlowKind kind, std::size_t depth, std::size_t d, Rng* rng, double radius, std::size_t iaf_hidden) {
  FlowStack s;
  if (kind == FlowKind::none) return s;
  for (std::size_t k = 0; k < depth; ++k) {
    if (kind == FlowKind::planar) {
      s.steps.emplace_back(PlanarStep::create(d, rng, radius));
    } else {
      s.steps.emplace_back(IafStep::create(d, iaf_hidden, rng, radius));
    }
  }
  return s;
}

ParameterList FlowStack::parameters() const {
  ParameterList out;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const std::string prefix = "flow." + std::to_string(k);
    std::visit([&](const auto& step) { step.collect(prefix, out); }, steps[k]);
  }
  return out;
}

FlowStack FlowStack::clone() const {
  FlowStack s;
  for (const auto& step : steps) {
    std::visit([&](const auto& st) { s.steps.emplace_back(st.clone()); }, step);
  }
  return s;
}

FlowDensity flow_log_density(const FlowStack& stack, const Tensor& z0, const DiagGaussian& base) {
  Tensor z = reshape(z0, {base.dim()});
  Tensor log_q = gaussian_log_prob(base, z);
  for (const auto& step : stack.steps) {
    FlowOutput out = std::visit(
        [&](const auto& st) {
          if constexpr (std::is_same_v<std::decay_t<decltype(st)>, PlanarStep>) {
            return planar_forward(st, z);
          } else {
            return iaf_forward(st, z);
          }
        },
        step);
    z = out.z;
    log_q = log_q - out.log_det;
  }
  return {z, log_q};
}

ElboTerms flow_elbo(const ContinuousTarget& target, const DiagGaussian& q0, const FlowStack& stack,
                    std::span<const double> eps, const ElboOptions& options) {
  if (eps.size() != q0.dim()) fail(ErrorCode::shape_mismatch, "flow_elbo: noise must have d entries");
  Tensor z0 = gaussian_sample_reparam(q0, Tensor::from(q0.mean.shape(), {eps.begin(), eps.end()}));
  FlowDensity dens = flow_log_density(stack, z0, q0);
  Tensor recon = target.log_likelihood(dens.z);
  Tensor kl = dens.log_q - target.log_prior(dens.z);
  return {recon - free_bits(kl, options.free_bits) * options.beta, recon, kl};
}

}  // namespace latentkit
