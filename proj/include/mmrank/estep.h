#ifndef MMRANK_ESTEP_H_
#define MMRANK_ESTEP_H_

#include <limits>
#include <span>
#include <vector>

#include "mmrank/model.h"

namespace mmrank {

struct EStepOptions {
  double tol = 1e-6;  // relative ELBO change between sweeps
  int max_iters = 500;
  int num_threads = 1;
  // ELBO at the starting point when the caller already has it; NaN means
  // it is computed.
  double initial_elbo = std::numeric_limits<double>::quiet_NaN();
};

struct EStepResult {
  double elbo = 0.0;
  int iters = 0;
  bool converged = false;
  std::vector<double> trace;  // ELBO after each sweep
};

// Closed-form coordinate update of delta for slot (i, j, n):
//   delta_k proportional to exp(E ln lambda_ik + ln P(selection | subgroup k)).
// Throws std::domain_error if no subgroup can explain the selection.
void update_delta(const RankDataset& data, const ModelParams& params,
                  const SelectionLogProbs& log_probs, VariationalParams& var,
                  int i, int j, int n);

// phi_ik = alpha_k + sum over i's slots of delta_k.
void update_phi(const RankDataset& data, const ModelParams& params,
                VariationalParams& var, int i);

// Sweeps every individual (all its delta rows, then its phi row) until the
// relative ELBO change drops below tol or max_iters sweeps have run.
EStepResult run_estep(const RankDataset& data, const ModelParams& params,
                      VariationalParams& var, const EStepOptions& options = {});
EStepResult run_estep(const RankDataset& data, const ModelParams& params,
                      const SelectionLogProbs& log_probs, VariationalParams& var,
                      const EStepOptions& options = {});

}  // namespace mmrank

#endif  // MMRANK_ESTEP_H_
