#include "mmrank/estep.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mmrank/parallel.h"
#include "mmrank/special_functions.h"

namespace mmrank {
namespace {

void expected_log_lambda(std::span<const double> phi, std::span<double> out) {
  double phi_sum = 0.0;
  for (double p : phi) phi_sum += p;
  const double d = digamma(phi_sum);
  for (std::size_t k = 0; k < phi.size(); ++k) out[k] = digamma(phi[k]) - d;
}

// Writes the normalized delta row and returns the log normalizer
// ln sum_k exp(e_log_lambda_k + logp_k).
double normalized_delta(std::span<const double> e_log_lambda,
                        std::span<const double> logp, std::span<double> delta) {
  const std::size_t K = delta.size();
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    delta[k] = e_log_lambda[k] + logp[k];
    mx = std::max(mx, delta[k]);
  }
  if (mx == -std::numeric_limits<double>::infinity()) {
    throw std::domain_error(
        "update_delta: observed selection has zero probability in every subgroup");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    delta[k] = std::exp(delta[k] - mx);
    total += delta[k];
  }
  for (std::size_t k = 0; k < K; ++k) delta[k] /= total;
  return mx + std::log(total);
}

// Updates every delta row of individual i, then phi_i, and returns the
// individual's ELBO at the new point. With delta_s = softmax(e + logp_s) for
// the pre-update expectations e, each slot contributes its log normalizer
// plus sum_k delta_sk (e'_k - e_k) under the updated expectations e'; the
// Dirichlet terms then collapse because phi = alpha + counts, leaving
//   const(alpha) + sum_s lse_s - sum_k c_k e_k - ln Gamma(sum phi)
//   + sum_k ln Gamma(phi_k).
double sweep_individual(const RankDataset& data, const ModelParams& params,
                        const SelectionLogProbs& log_probs, VariationalParams& var,
                        int i, double alpha_const, std::vector<double>& e_log_lambda) {
  const int K = params.num_subgroups();
  expected_log_lambda(var.phi_row(i), e_log_lambda);
  double elbo = alpha_const;
  for (int s = data.slot_begin(i); s < data.slot_end(i); ++s) {
    elbo += normalized_delta(e_log_lambda, log_probs.slot(s), var.delta_row(s));
  }
  update_phi(data, params, var, i);
  const auto phi = var.phi_row(i);
  double phi_sum = 0.0;
  for (int k = 0; k < K; ++k) {
    elbo -= (phi[k] - params.alpha[k]) * e_log_lambda[k];
    elbo += log_gamma(phi[k]);
    phi_sum += phi[k];
  }
  return elbo - log_gamma(phi_sum);
}

}  // namespace

void update_delta(const RankDataset& data, const ModelParams& params,
                  const SelectionLogProbs& log_probs, VariationalParams& var,
                  int i, int j, int n) {
  std::vector<double> e_log_lambda(params.num_subgroups());
  expected_log_lambda(var.phi_row(i), e_log_lambda);
  const int s = data.slot_index(i, j, n);
  normalized_delta(e_log_lambda, log_probs.slot(s), var.delta_row(s));
}

void update_phi(const RankDataset& data, const ModelParams& params,
                VariationalParams& var, int i) {
  const int K = params.num_subgroups();
  auto phi = var.phi_row(i);
  for (int k = 0; k < K; ++k) phi[k] = params.alpha[k];
  for (int s = data.slot_begin(i); s < data.slot_end(i); ++s) {
    const auto delta = var.delta_row(s);
    for (int k = 0; k < K; ++k) phi[k] += delta[k];
  }
}

EStepResult run_estep(const RankDataset& data, const ModelParams& params,
                      VariationalParams& var, const EStepOptions& options) {
  return run_estep(data, params, SelectionLogProbs(data, params), var, options);
}

EStepResult run_estep(const RankDataset& data, const ModelParams& params,
                      const SelectionLogProbs& log_probs, VariationalParams& var,
                      const EStepOptions& options) {
  if (!(options.tol > 0.0)) throw std::invalid_argument("E-step tolerance must be positive");
  const int T = data.num_individuals();
  const int K = params.num_subgroups();
  EStepResult result;
  double previous = std::isnan(options.initial_elbo)
                        ? compute_elbo(data, params, var, log_probs, options.num_threads)
                        : options.initial_elbo;
  double alpha_sum = 0.0;
  double alpha_const = 0.0;
  for (double a : params.alpha) {
    alpha_sum += a;
    alpha_const -= log_gamma(a);
  }
  alpha_const += log_gamma(alpha_sum);
  std::vector<double> parts(T);
  while (result.iters < options.max_iters) {
    parallel_for(T, options.num_threads, [&](int i) {
      std::vector<double> scratch(K);
      parts[i] = sweep_individual(data, params, log_probs, var, i, alpha_const, scratch);
    });
    double elbo = 0.0;
    for (double p : parts) elbo += p;
    ++result.iters;
    result.trace.push_back(elbo);
    result.elbo = elbo;
    if (std::isfinite(previous) && std::isfinite(elbo) &&
        std::abs(elbo - previous) <= options.tol * std::abs(elbo)) {
      result.converged = true;
      break;
    }
    previous = elbo;
  }
  if (result.iters == 0) result.elbo = previous;
  return result;
}

}  // namespace mmrank
