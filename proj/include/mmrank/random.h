#ifndef MMRANK_RANDOM_H_
#define MMRANK_RANDOM_H_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mmrank {

using Rng = std::mt19937_64;

// Independent stream `stream` derived from a root seed. Streams for distinct
// (seed, stream) pairs are decorrelated by a SplitMix64 finalizer, so work
// items can own their generator and parallel runs match serial ones.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

// Mixes several integers into a single seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                          std::uint64_t b = 0, std::uint64_t c = 0);

// Uniform on [0, 1) with 53 random bits.
double uniform01(Rng& rng);

// Index drawn with probability proportional to `weights` (non-negative,
// not necessarily normalized). Throws if the total weight is not positive.
int draw_categorical(std::span<const double> weights, Rng& rng);

// Dirichlet(alpha) draw. Small concentrations are handled in log space so the
// result stays on the simplex even when every gamma variate would underflow.
std::vector<double> draw_dirichlet(std::span<const double> alpha, Rng& rng);

}  // namespace mmrank

#endif  // MMRANK_RANDOM_H_
