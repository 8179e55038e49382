#include "mmrank/report.h"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mmrank {

std::vector<double> relative_frequencies(std::span<const double> alpha) {
  double total = 0.0;
  for (double a : alpha) total += a;
  std::vector<double> out(alpha.begin(), alpha.end());
  for (double& a : out) a /= total;
  return out;
}

Report report_summaries(const ModelParams& params, const VariationalParams& var,
                        int num_individuals) {
  const int K = params.num_subgroups();
  Report r;
  r.relative_frequency = relative_frequencies(params.alpha);
  for (const auto& per_k : params.theta) {
    auto& ratio = r.support_ratio.emplace_back();
    auto& log_ratio = r.log10_support_ratio.emplace_back();
    for (const SupportVector& theta : per_k) {
      const double V = static_cast<double>(theta.size());
      auto& row = ratio.emplace_back();
      auto& log_row = log_ratio.emplace_back();
      for (double t : theta) {
        row.push_back(t * V);
        log_row.push_back(std::log10(t * V));
      }
    }
  }

  r.memberships.resize(num_individuals);
  r.modal_subgroup.resize(num_individuals);
  r.modal_membership.resize(num_individuals);
  std::vector<double> mean(K, 0.0);
  for (int i = 0; i < num_individuals; ++i) {
    const auto phi = var.phi_row(i);
    double total = 0.0;
    for (double p : phi) total += p;
    auto& m = r.memberships[i];
    m.resize(K);
    int mode = 0;
    for (int k = 0; k < K; ++k) {
      m[k] = phi[k] / total;
      mean[k] += m[k];
      if (m[k] > m[mode]) mode = k;
    }
    r.modal_subgroup[i] = mode;
    r.modal_membership[i] = m[mode];
  }
  for (double& v : mean) v /= std::max(num_individuals, 1);

  std::vector<std::vector<double>> cov(K, std::vector<double>(K, 0.0));
  for (const auto& m : r.memberships) {
    for (int a = 0; a < K; ++a) {
      for (int b = 0; b < K; ++b) cov[a][b] += (m[a] - mean[a]) * (m[b] - mean[b]);
    }
  }
  r.membership_correlation.assign(K, std::vector<double>(K));
  for (int a = 0; a < K; ++a) {
    for (int b = 0; b < K; ++b) {
      const double denom = std::sqrt(cov[a][a] * cov[b][b]);
      r.membership_correlation[a][b] =
          denom > 0.0 ? cov[a][b] / denom : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return r;
}

Report report_summaries(const FitResult& fitted) {
  return report_summaries(fitted.params, fitted.var,
                          static_cast<int>(fitted.var.phi.size()) /
                              std::max(fitted.var.num_subgroups, 1));
}

ConditionalMemberships conditional_memberships(
    const std::vector<std::vector<double>>& memberships,
    std::span<const int> subset, double max_outside) {
  if (subset.empty()) throw std::invalid_argument("subgroup subset is empty");
  ConditionalMemberships out;
  for (std::size_t i = 0; i < memberships.size(); ++i) {
    double inside = 0.0;
    for (int k : subset) inside += memberships[i].at(k);
    if (1.0 - inside > max_outside || !(inside > 0.0)) continue;
    std::vector<double> row;
    for (int k : subset) row.push_back(memberships[i][k] / inside);
    out.kept.push_back(static_cast<int>(i));
    out.memberships.push_back(std::move(row));
  }
  return out;
}

}  // namespace mmrank
