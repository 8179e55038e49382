#include "mmrank/plackett_luce.h"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mmrank {

void validate_ranking(const Ranking& x) {
  const int v = x.num_alternatives;
  if (x.items.empty() || x.size() > v) {
    throw std::invalid_argument("ranking length " + std::to_string(x.size()) +
                                " outside [1, " + std::to_string(v) + "]");
  }
  std::vector<char> seen(static_cast<std::size_t>(v), 0);
  for (int a : x.items) {
    if (a < 0 || a >= v) {
      throw std::invalid_argument("ranked alternative " + std::to_string(a + 1) +
                                  " outside [1, " + std::to_string(v) + "]");
    }
    if (seen[a]) {
      throw std::invalid_argument("alternative " + std::to_string(a + 1) +
                                  " ranked twice");
    }
    seen[a] = 1;
  }
}

void validate_support(std::span<const double> theta, bool require_positive,
                      double tol) {
  if (theta.empty()) throw std::invalid_argument("empty support vector");
  double total = 0.0;
  for (double w : theta) {
    if (!std::isfinite(w) || w < 0.0 || (require_positive && w <= 0.0)) {
      throw std::invalid_argument("invalid support weight " + std::to_string(w));
    }
    total += w;
  }
  if (std::abs(total - 1.0) > tol) {
    throw std::invalid_argument("support weights sum to " +
                                std::to_string(total) + ", expected 1");
  }
}

void pl_level_log_probs(std::span<const double> theta, const Ranking& x,
                        std::span<double> out) {
  if (static_cast<int>(theta.size()) != x.num_alternatives) {
    throw std::invalid_argument("support length does not match choice set size");
  }
  double ranked_mass = 0.0;
  for (int n = 0; n < x.size(); ++n) {
    const double remaining = 1.0 - ranked_mass;
    if (remaining < kMinRemainingMass) {
      throw std::domain_error("Plackett-Luce denominator " +
                              std::to_string(remaining) + " at level " +
                              std::to_string(n + 1) +
                              " is not positive; malformed support vector");
    }
    const double w = theta[x.items[n]];
    out[n] = w > 0.0 ? std::log(w) - std::log(remaining)
                     : -std::numeric_limits<double>::infinity();
    ranked_mass += w;
  }
}

double pl_log_mass(std::span<const double> theta, const Ranking& x) {
  validate_ranking(x);
  std::vector<double> levels(x.items.size());
  pl_level_log_probs(theta, x, levels);
  double total = 0.0;
  for (double l : levels) total += l;
  return total;
}

int pl_draw_next(std::span<const double> theta, std::span<const char> taken,
                 Rng& rng) {
  std::vector<double> weights(theta.begin(), theta.end());
  double total = 0.0;
  for (std::size_t v = 0; v < weights.size(); ++v) {
    if (taken[v]) weights[v] = 0.0;
    total += weights[v];
  }
  if (!(total > 0.0)) {
    throw std::domain_error("no remaining alternative has positive support");
  }
  return draw_categorical(weights, rng);
}

Ranking pl_sample(std::span<const double> theta, int n_levels, Rng& rng) {
  const int v = static_cast<int>(theta.size());
  if (n_levels < 1 || n_levels > v) {
    throw std::invalid_argument("n_levels must lie in [1, V]");
  }
  int positive = 0;
  for (double w : theta) positive += w > 0.0;
  if (positive < n_levels) {
    throw std::domain_error("only " + std::to_string(positive) +
                            " alternatives have positive support, " +
                            std::to_string(n_levels) + " levels requested");
  }
  Ranking x{{}, v};
  x.items.reserve(n_levels);
  std::vector<char> taken(v, 0);
  for (int n = 0; n < n_levels; ++n) {
    const int a = pl_draw_next(theta, taken, rng);
    taken[a] = 1;
    x.items.push_back(a);
  }
  return x;
}

}  // namespace mmrank
