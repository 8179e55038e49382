#ifndef MMRANK_PLACKETT_LUCE_H_
#define MMRANK_PLACKETT_LUCE_H_

#include <span>
#include <vector>

#include "mmrank/random.h"

namespace mmrank {

// A top-N partial ranking of a choice set of size num_alternatives.
// Alternatives are 0-based here; files and the CLI use 1-based labels.
struct Ranking {
  std::vector<int> items;  // best first
  int num_alternatives = 0;

  int size() const { return static_cast<int>(items.size()); }
  bool operator==(const Ranking&) const = default;
};

// Throws std::invalid_argument unless items are distinct, in range and
// 1 <= size <= num_alternatives.
void validate_ranking(const Ranking& x);

// Support parameters of one Plackett-Luce distribution, summing to one.
using SupportVector = std::vector<double>;

// Throws std::invalid_argument if weights are negative, non-finite, or do not
// sum to one within `tol`. With require_positive, zeros are rejected too.
void validate_support(std::span<const double> theta, bool require_positive,
                      double tol = 1e-10);

// Smallest admissible value of 1 - (mass already ranked) at any level.
inline constexpr double kMinRemainingMass = 1e-14;

// Per-level log selection probabilities
//   ln theta[a(n)] - ln(1 - sum_{c<n} theta[a(c)])
// written to out[0..N). A ranked alternative with zero weight yields -inf.
// Throws std::domain_error when a denominator falls below kMinRemainingMass.
void pl_level_log_probs(std::span<const double> theta, const Ranking& x,
                        std::span<double> out);

// Log mass of a partial ranking; unranked alternatives are marginalized.
// Validates the ranking first; pl_level_log_probs assumes a valid one.
double pl_log_mass(std::span<const double> theta, const Ranking& x);

// Draws the next alternative among those with taken[v] == 0, proportional to
// theta. Throws if every remaining alternative has zero weight.
int pl_draw_next(std::span<const double> theta, std::span<const char> taken,
                 Rng& rng);

// Exact sequential sampler: each level picks among the remaining
// alternatives with probability proportional to their weights.
Ranking pl_sample(std::span<const double> theta, int n_levels, Rng& rng);

}  // namespace mmrank

#endif  // MMRANK_PLACKETT_LUCE_H_
