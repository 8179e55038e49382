#ifndef MMRANK_REPORT_H_
#define MMRANK_REPORT_H_

#include <span>
#include <vector>

#include "mmrank/driver.h"
#include "mmrank/model.h"

namespace mmrank {

struct Report {
  // theta_jkv * V_j: preference relative to uniform selection, and its log10.
  std::vector<std::vector<std::vector<double>>> support_ratio;
  std::vector<std::vector<std::vector<double>>> log10_support_ratio;
  std::vector<double> relative_frequency;  // alpha_k / sum alpha
  // Posterior-mean memberships phi_i / sum_k phi_ik.
  std::vector<std::vector<double>> memberships;
  std::vector<int> modal_subgroup;
  std::vector<double> modal_membership;
  // Pearson correlation of membership columns; NaN for constant columns.
  std::vector<std::vector<double>> membership_correlation;
};

std::vector<double> relative_frequencies(std::span<const double> alpha);

Report report_summaries(const ModelParams& params, const VariationalParams& var,
                        int num_individuals);
Report report_summaries(const FitResult& fitted);

struct ConditionalMemberships {
  std::vector<int> kept;                         // individual indices
  std::vector<std::vector<double>> memberships;  // renormalized over subset
};

// Drops individuals whose total membership outside `subset` exceeds
// `max_outside`, then renormalizes the rest over `subset`.
ConditionalMemberships conditional_memberships(
    const std::vector<std::vector<double>>& memberships,
    std::span<const int> subset, double max_outside = 0.5);

}  // namespace mmrank

#endif  // MMRANK_REPORT_H_
