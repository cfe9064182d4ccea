#include "latentkit/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "latentkit/error.hpp"

namespace latentkit {

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

Rng::Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

std::uint64_t Rng::next_u64() {
  ++position_;
  return engine_();
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
  return std::clamp(uniform(), 1e-12, 1.0 - 1e-12);
}

double Rng::normal() {
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<double> Rng::normals(std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = normal();
  return out;
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) fail(ErrorCode::invalid_argument, "Rng::below(0)");
  return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n)));
}

std::vector<double> Rng::dirichlet_ones(std::size_t n) {
  std::vector<double> out(n);
  double total = 0.0;
  for (double& v : out) {
    v = -std::log(uniform_open());
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x5851f42d4c957f2dULL)));
}

}  // namespace latentkit
