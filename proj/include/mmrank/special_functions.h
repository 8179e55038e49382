#ifndef MMRANK_SPECIAL_FUNCTIONS_H_
#define MMRANK_SPECIAL_FUNCTIONS_H_

namespace mmrank {

// ln Gamma(x) for x > 0. Throws std::domain_error otherwise.
double log_gamma(double x);

// Psi(x) = d/dx ln Gamma(x) for x > 0.
//
// The argument is shifted above 10 with Psi(x) = Psi(x + 1) - 1/x and the
// remainder is taken from the asymptotic expansion in 1/x^2.
double digamma(double x);

// Psi'(x) for x > 0, same shift-then-expand scheme as digamma().
double trigamma(double x);

}  // namespace mmrank

#endif  // MMRANK_SPECIAL_FUNCTIONS_H_
