#include "mmrank/random.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mmrank {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return h;
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t s = derive_seed(seed, stream);
  std::seed_seq seq{static_cast<std::uint32_t>(s),
                    static_cast<std::uint32_t>(s >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int draw_categorical(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) {
    throw std::invalid_argument("draw_categorical: total weight is not positive");
  }
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = static_cast<int>(i);
    if (u < acc) return last_positive;
  }
  return last_positive;  // u landed in the rounding gap at the top end
}

std::vector<double> draw_dirichlet(std::span<const double> alpha, Rng& rng) {
  // log G_k with G_k ~ Gamma(alpha_k). For alpha < 1 use
  // Gamma(a) = Gamma(a + 1) * U^(1/a).
  std::vector<double> log_g(alpha.size());
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const double a = alpha[k];
    if (!(a > 0.0)) throw std::invalid_argument("draw_dirichlet: alpha must be positive");
    if (a < 1.0) {
      std::gamma_distribution<double> gamma(a + 1.0, 1.0);
      double u = uniform01(rng);
      while (u == 0.0) u = uniform01(rng);
      log_g[k] = std::log(gamma(rng)) + std::log(u) / a;
    } else {
      std::gamma_distribution<double> gamma(a, 1.0);
      double g = gamma(rng);
      while (g == 0.0) g = gamma(rng);
      log_g[k] = std::log(g);
    }
  }
  const double mx = *std::max_element(log_g.begin(), log_g.end());
  double total = 0.0;
  std::vector<double> out(alpha.size());
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    out[k] = std::exp(log_g[k] - mx);
    total += out[k];
  }
  for (double& v : out) v /= total;
  return out;
}

}  // namespace mmrank
