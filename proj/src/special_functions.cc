#include "mmrank/special_functions.h"

#include <cmath>
#include <stdexcept>
#include <string>

#include <math.h>

namespace mmrank {
namespace {

constexpr double kShiftThreshold = 10.0;

void check_domain(double x, const char* name) {
  if (!(x > 0.0) || std::isinf(x)) {
    throw std::domain_error(std::string(name) +
                            ": argument must be positive and finite, got " +
                            std::to_string(x));
  }
}

}  // namespace

double log_gamma(double x) {
  check_domain(x, "log_gamma");
  int sign = 0;
  return lgamma_r(x, &sign);  // reentrant, unlike std::lgamma's signgam
}

double digamma(double x) {
  check_domain(x, "digamma");
  double shift = 0.0;
  while (x < kShiftThreshold) {
    shift -= 1.0 / x;
    x += 1.0;
  }
  // Bernoulli-number series: ln x - 1/(2x) - sum B_2n / (2n x^2n).
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv2 * (1.0 / 12 -
      inv2 * (1.0 / 120 -
      inv2 * (1.0 / 252 -
      inv2 * (1.0 / 240 -
      inv2 * (1.0 / 132 -
      inv2 * (691.0 / 32760 -
      inv2 * (1.0 / 12)))))));
  return shift + std::log(x) - 0.5 * inv - series;
}

double trigamma(double x) {
  check_domain(x, "trigamma");
  double shift = 0.0;
  while (x < kShiftThreshold) {
    shift += 1.0 / (x * x);
    x += 1.0;
  }
  // 1/x + 1/(2x^2) + sum B_2n / x^(2n+1).
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv * inv2 * (1.0 / 6 -
      inv2 * (1.0 / 30 -
      inv2 * (1.0 / 42 -
      inv2 * (1.0 / 30 -
      inv2 * (5.0 / 66 -
      inv2 * (691.0 / 2730 -
      inv2 * (7.0 / 6)))))));
  return shift + inv + 0.5 * inv2 + series;
}

}  // namespace mmrank
