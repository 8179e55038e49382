#ifndef MMRANK_MSTEP_H_
#define MMRANK_MSTEP_H_

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mmrank/model.h"

namespace mmrank {

// Log-barrier continuation. Stage m = 1..stages uses barrier weight
// base^-m, so the barrier weakens from stage to stage.
struct BarrierSchedule {
  double base = 10.0;
  int stages = 4;

  double weight(int stage) const;
  void validate() const;
};

struct LineSearchConfig {
  double tau0 = 0.5;
  int max_backtracks = 60;
};

struct MStepOptions {
  BarrierSchedule schedule;
  LineSearchConfig line_search;
  // A barrier stage ends once half the Newton decrement is below
  // theta_tol * (1 + |objective|).
  double theta_tol = 1e-10;
  int theta_max_iters = 100;  // Newton iterations per stage
  double alpha_tol = 1e-6;    // max-norm of the alpha gradient
  int alpha_max_iters = 100;
  int num_threads = 1;
  bool record_stages = false;  // fill ThetaSubproblemReport::stages
};

// ---- alpha -----------------------------------------------------------------

// Per-subgroup sum over individuals of E_Q ln lambda_ik.
std::vector<double> expected_log_membership_totals(const VariationalParams& var,
                                                   int num_individuals);

// The alpha-dependent part of the ELBO:
//   T ln Gamma(sum alpha) - T sum ln Gamma(alpha_k) + sum (alpha_k - 1) s_k.
double alpha_objective(std::span<const double> alpha,
                       std::span<const double> log_membership_totals,
                       int num_individuals);

std::vector<double> alpha_gradient(const RankDataset& data,
                                   const ModelParams& params,
                                   const VariationalParams& var);

// H = -T (diag(Psi'(alpha)) - Psi'(sum alpha) 1 1^T).
Eigen::MatrixXd alpha_hessian(const ModelParams& params, int num_individuals);

struct AlphaUpdateResult {
  std::vector<double> alpha;
  int iters = 0;
  bool converged = false;
};

// Damped Newton-Raphson. The diagonal-plus-rank-one Hessian is inverted in
// O(K); steps are halved until alpha stays above 1e-8 and the objective does
// not decrease. Every component is updated, fixed subgroups included.
AlphaUpdateResult update_alpha(const RankDataset& data, const ModelParams& params,
                               const VariationalParams& var, double tol = 1e-6,
                               int max_iters = 100);

// ---- theta -----------------------------------------------------------------

// Negative ELBO restricted to the terms in theta_jk, plus the log barrier
// -w sum_v ln theta_v. Slots are aggregated by (selected alternative) and by
// (set of previously ranked alternatives), so evaluations cost
// O(#distinct prefixes * V) instead of O(T * N * V).
class ThetaObjective {
 public:
  ThetaObjective(const RankDataset& data, const VariationalParams& var, int j,
                 int k);

  int size() const { return static_cast<int>(selected_weight_.size()); }
  double total_weight() const { return total_weight_; }

  // -ELBO_jk(theta), excluding the barrier; +inf outside the domain.
  double data_term(std::span<const double> theta) const;
  // data_term + barrier; +inf unless theta > 0 componentwise.
  double value(std::span<const double> theta, double barrier_weight) const;
  void derivatives(std::span<const double> theta, double barrier_weight,
                   Eigen::VectorXd& gradient, Eigen::MatrixXd& hessian) const;

 private:
  struct Prefix {
    std::vector<int> members;
    double weight;
  };
  std::vector<double> selected_weight_;
  std::vector<Prefix> prefixes_;
  double total_weight_ = 0.0;
};

std::pair<Eigen::VectorXd, Eigen::MatrixXd> theta_gradient_hessian(
    const RankDataset& data, const VariationalParams& var, int j, int k,
    std::span<const double> theta, double barrier_weight);

struct KktStep {
  Eigen::VectorXd direction;
  bool singular = false;  // projected-gradient fallback was used
};

// Newton direction restricted to sum(delta) = 0:
//   delta = -H^-1 (g - 1 (1 H^-1 g) / (1 H^-1 1)).
KktStep kkt_step(const Eigen::VectorXd& gradient, const Eigen::MatrixXd& hessian);

struct LineSearchResult {
  double tau = 0.0;
  bool progressed = false;
  double value = 0.0;  // objective at the accepted point
};

// Smallest s >= 0 with theta + tau0^s * direction strictly positive and an
// objective no larger than at theta. tau = 0 and progressed = false when
// max_backtracks is exhausted.
LineSearchResult backtracking_line_search(const ThetaObjective& objective,
                                          std::span<const double> theta,
                                          const Eigen::VectorXd& direction,
                                          const LineSearchConfig& config,
                                          double barrier_weight);

struct BarrierStageRecord {
  double barrier_weight = 0.0;
  SupportVector start;
  SupportVector result;  // equals start when the stage was rejected
  bool accepted = false;
};

struct ThetaSubproblemReport {
  int variable = 0;
  int subgroup = 0;
  int newton_iters = 0;
  bool converged = true;    // every stage met its tolerance
  bool no_progress = false; // some line search stalled
  bool regularized = false; // a log-coordinate safeguard step was taken
  bool stage_rejected = false;  // some stage was rejected
  std::vector<BarrierStageRecord> stages;  // only with record_stages
};

// Interior-point solve of one (j, k) subproblem from an interior start,
// warm-starting each barrier stage at the previous stage's solution. A stage
// is accepted only if its solution does not lower the ELBO (the data term);
// a rejected stage passes its starting point on to the next one.
SupportVector solve_theta_subproblem(const ThetaObjective& objective,
                                     std::span<const double> start,
                                     const MStepOptions& options,
                                     ThetaSubproblemReport& report);

struct ThetaUpdateResult {
  std::vector<std::vector<SupportVector>> theta;
  std::vector<ThetaSubproblemReport> reports;  // one per estimated (j, k)
};

// Solves every estimated (j, k) subproblem; fixed subgroups are copied.
ThetaUpdateResult update_theta(const RankDataset& data, const VariationalParams& var,
                               const ModelParams& params,
                               const MStepOptions& options = {});

struct MStepReport {
  AlphaUpdateResult alpha;
  std::vector<ThetaSubproblemReport> theta;
};

// Full M-step: alpha and all theta subproblems, in place.
MStepReport run_mstep(const RankDataset& data, const VariationalParams& var,
                      ModelParams& params, const MStepOptions& options = {});

}  // namespace mmrank

#endif  // MMRANK_MSTEP_H_
