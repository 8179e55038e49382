#include "mmrank/mstep.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "mmrank/parallel.h"
#include "mmrank/special_functions.h"

namespace mmrank {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kAlphaFloor = 1e-8;
constexpr double kThetaFloor = 1e-12;

std::vector<double> alpha_gradient_from_totals(std::span<const double> alpha,
                                               std::span<const double> totals,
                                               int T) {
  double alpha_sum = 0.0;
  for (double a : alpha) alpha_sum += a;
  const double d_sum = digamma(alpha_sum);
  std::vector<double> g(alpha.size());
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    g[k] = T * (d_sum - digamma(alpha[k])) + totals[k];
  }
  return g;
}

void renormalize(SupportVector& theta) {
  double total = 0.0;
  for (double& t : theta) {
    t = std::max(t, kThetaFloor);
    total += t;
  }
  for (double& t : theta) t /= total;
}

struct LogStep {
  SupportVector theta;
  double value = 0.0;
  double decrement = 0.0;
  bool progressed = false;
};

// Newton step for gamma with theta = softmax(gamma). With the gradient g and
// Hessian H in theta, the chain rule gives
//   grad = J g,  Hess = J H J + diag(r) - r theta' - theta r',
// with J = diag(theta) - theta theta' and r = J g. The direction along 1 does
// not move theta, so it is excluded by the sum-zero constraint of kkt_step.
LogStep log_newton_step(const ThetaObjective& objective,
                        std::span<const double> theta, double w,
                        const Eigen::VectorXd& g, const Eigen::MatrixXd& h,
                        const LineSearchConfig& config) {
  const Eigen::Index V = g.size();
  const Eigen::Map<const Eigen::VectorXd> t(theta.data(), V);
  Eigen::MatrixXd jac = -t * t.transpose();
  jac.diagonal() += t;
  const Eigen::VectorXd r = jac * g;
  Eigen::MatrixXd hess = jac * h * jac;
  hess.diagonal() += r;
  hess -= r * t.transpose() + t * r.transpose();
  hess = 0.5 * (hess + hess.transpose());
  const double scale = std::max(hess.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  hess.array() += scale;  // pins the gauge direction without moving the step

  LogStep out;
  Eigen::VectorXd dir;
  double slope = 0.0;
  double mu = 0.0;
  for (int attempt = 0; attempt < 30; ++attempt) {
    Eigen::MatrixXd damped = hess;
    damped.diagonal().array() += mu;
    const KktStep step = kkt_step(r, damped);
    dir = step.direction;
    slope = r.dot(dir);
    if (!step.singular && slope < 0.0) break;
    mu = mu == 0.0 ? 1e-10 * scale : mu * 10.0;
  }
  if (!(slope < 0.0)) {
    dir = -(r.array() - r.mean()).matrix();
    slope = r.dot(dir);
    if (!(slope < 0.0)) return out;
  }
  const double start = objective.value(theta, w);
  SupportVector trial(V);
  double tau = 1.0;
  for (int s = 0; s <= config.max_backtracks; ++s, tau *= config.tau0) {
    double total = 0.0;
    for (Eigen::Index v = 0; v < V; ++v) {
      trial[v] = theta[v] * std::exp(std::min(tau * dir[v], 700.0));
      total += trial[v];
    }
    bool positive = std::isfinite(total);
    for (double& x : trial) {
      x /= total;
      positive = positive && x > 0.0;
    }
    if (!positive) continue;
    const double value = objective.value(trial, w);
    if (value <= start) {
      out.theta = trial;
      out.value = value;
      out.decrement = -0.5 * slope;
      out.progressed = value < start || tau == 1.0;
      return out;
    }
  }
  return out;
}
}  // namespace

// ---- alpha -----------------------------------------------------------------

double BarrierSchedule::weight(int stage) const { return std::pow(base, -stage); }

void BarrierSchedule::validate() const {
  if (!(base > 1.0)) throw std::invalid_argument("barrier base must exceed 1");
  if (stages < 1) throw std::invalid_argument("barrier needs at least one stage");
}

std::vector<double> expected_log_membership_totals(const VariationalParams& var,
                                                   int num_individuals) {
  const int K = var.num_subgroups;
  std::vector<double> totals(K, 0.0);
  for (int i = 0; i < num_individuals; ++i) {
    const auto phi = var.phi_row(i);
    double phi_sum = 0.0;
    for (double p : phi) phi_sum += p;
    const double d = digamma(phi_sum);
    for (int k = 0; k < K; ++k) totals[k] += digamma(phi[k]) - d;
  }
  return totals;
}

double alpha_objective(std::span<const double> alpha,
                       std::span<const double> log_membership_totals,
                       int num_individuals) {
  double alpha_sum = 0.0;
  double value = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    alpha_sum += alpha[k];
    value += (alpha[k] - 1.0) * log_membership_totals[k] -
             num_individuals * log_gamma(alpha[k]);
  }
  return value + num_individuals * log_gamma(alpha_sum);
}

std::vector<double> alpha_gradient(const RankDataset& data,
                                   const ModelParams& params,
                                   const VariationalParams& var) {
  const int T = data.num_individuals();
  return alpha_gradient_from_totals(params.alpha,
                                    expected_log_membership_totals(var, T), T);
}

Eigen::MatrixXd alpha_hessian(const ModelParams& params, int num_individuals) {
  const int K = params.num_subgroups();
  double alpha_sum = 0.0;
  for (double a : params.alpha) alpha_sum += a;
  const double t_sum = trigamma(alpha_sum);
  Eigen::MatrixXd h = Eigen::MatrixXd::Constant(K, K, num_individuals * t_sum);
  for (int k = 0; k < K; ++k) h(k, k) -= num_individuals * trigamma(params.alpha[k]);
  return h;
}

AlphaUpdateResult update_alpha(const RankDataset& data, const ModelParams& params,
                               const VariationalParams& var, double tol,
                               int max_iters) {
  const int T = data.num_individuals();
  const int K = params.num_subgroups();
  const std::vector<double> totals = expected_log_membership_totals(var, T);
  AlphaUpdateResult result{params.alpha, 0, false};
  std::vector<double>& alpha = result.alpha;
  double value = alpha_objective(alpha, totals, T);
  std::vector<double> trial(K);
  while (true) {
    const std::vector<double> g = alpha_gradient_from_totals(alpha, totals, T);
    double g_max = 0.0;
    for (double x : g) g_max = std::max(g_max, std::abs(x));
    if (g_max < tol) {
      result.converged = true;
      break;
    }
    if (result.iters >= max_iters) break;

    // H = diag(d) + c 1 1^T; H^-1 g by Sherman-Morrison.
    double alpha_sum = 0.0;
    for (double a : alpha) alpha_sum += a;
    const double c = T * trigamma(alpha_sum);
    std::vector<double> d_inv(K);
    double sum_d_inv = 0.0;
    double sum_d_inv_g = 0.0;
    for (int k = 0; k < K; ++k) {
      d_inv[k] = -1.0 / (T * trigamma(alpha[k]));
      sum_d_inv += d_inv[k];
      sum_d_inv_g += d_inv[k] * g[k];
    }
    const double denom = 1.0 + c * sum_d_inv;
    if (std::abs(denom) < 1e-12) break;  // singular (K = 1)
    std::vector<double> newton(K);
    for (int k = 0; k < K; ++k) {
      newton[k] = d_inv[k] * g[k] - d_inv[k] * c * sum_d_inv_g / denom;
    }

    bool accepted = false;
    double step = 1.0;
    for (int h = 0; h < 60 && !accepted; ++h, step *= 0.5) {
      bool feasible = true;
      for (int k = 0; k < K; ++k) {
        trial[k] = alpha[k] - step * newton[k];
        feasible = feasible && trial[k] > kAlphaFloor;
      }
      if (!feasible) continue;
      const double trial_value = alpha_objective(trial, totals, T);
      if (trial_value >= value) {
        alpha = trial;
        value = trial_value;
        accepted = true;
      }
    }
    ++result.iters;
    if (!accepted) break;
  }
  return result;
}

// ---- theta -----------------------------------------------------------------

ThetaObjective::ThetaObjective(const RankDataset& data, const VariationalParams& var,
                               int j, int k)
    : selected_weight_(data.num_alternatives(j), 0.0) {
  const int V = data.num_alternatives(j);
  if (V > 64) throw std::invalid_argument("choice sets above 64 alternatives are unsupported");
  std::map<std::uint64_t, double> prefix_weight;
  for (int i = 0; i < data.num_individuals(); ++i) {
    const Ranking& x = data.observation(i, j);
    const int first = data.slot_index(i, j, 0);
    std::uint64_t mask = 0;
    for (int n = 0; n < x.size(); ++n) {
      const double w = var.delta_row(first + n)[k];
      if (w > 0.0) {
        selected_weight_[x.items[n]] += w;
        total_weight_ += w;
        if (mask != 0) prefix_weight[mask] += w;
      }
      mask |= std::uint64_t{1} << x.items[n];
    }
  }
  prefixes_.reserve(prefix_weight.size());
  for (const auto& [mask, weight] : prefix_weight) {
    Prefix p{{}, weight};
    for (int v = 0; v < V; ++v) {
      if (mask & (std::uint64_t{1} << v)) p.members.push_back(v);
    }
    prefixes_.push_back(std::move(p));
  }
}

double ThetaObjective::data_term(std::span<const double> theta) const {
  double value = 0.0;
  for (std::size_t v = 0; v < selected_weight_.size(); ++v) {
    if (selected_weight_[v] > 0.0) {
      if (!(theta[v] > 0.0)) return kInf;
      value -= selected_weight_[v] * std::log(theta[v]);
    }
  }
  for (const Prefix& p : prefixes_) {
    double remaining = 1.0;
    for (int v : p.members) remaining -= theta[v];
    if (!(remaining > 0.0)) return kInf;
    value += p.weight * std::log(remaining);
  }
  return value;
}

double ThetaObjective::value(std::span<const double> theta,
                             double barrier_weight) const {
  double barrier = 0.0;
  for (double t : theta) {
    if (!(t > 0.0)) return kInf;
    barrier -= std::log(t);
  }
  return data_term(theta) + barrier_weight * barrier;
}

void ThetaObjective::derivatives(std::span<const double> theta,
                                 double barrier_weight, Eigen::VectorXd& gradient,
                                 Eigen::MatrixXd& hessian) const {
  const int V = size();
  gradient.resize(V);
  hessian.setZero(V, V);
  for (int v = 0; v < V; ++v) {
    const double inv = 1.0 / theta[v];
    gradient[v] = -(selected_weight_[v] + barrier_weight) * inv;
    hessian(v, v) = (selected_weight_[v] + barrier_weight) * inv * inv;
  }
  for (const Prefix& p : prefixes_) {
    double remaining = 1.0;
    for (int v : p.members) remaining -= theta[v];
    const double r = p.weight / remaining;
    const double r2 = r / remaining;
    for (int v1 : p.members) {
      gradient[v1] -= r;
      for (int v2 : p.members) hessian(v1, v2) -= r2;
    }
  }
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> theta_gradient_hessian(
    const RankDataset& data, const VariationalParams& var, int j, int k,
    std::span<const double> theta, double barrier_weight) {
  const ThetaObjective objective(data, var, j, k);
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> out;
  objective.derivatives(theta, barrier_weight, out.first, out.second);
  return out;
}

KktStep kkt_step(const Eigen::VectorXd& gradient, const Eigen::MatrixXd& hessian) {
  const Eigen::Index V = gradient.size();
  KktStep step;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(hessian);
  if (lu.isInvertible()) {
    const Eigen::VectorXd h_inv_g = lu.solve(gradient);
    const Eigen::VectorXd h_inv_1 = lu.solve(Eigen::VectorXd::Ones(V));
    const double denom = h_inv_1.sum();
    if (std::abs(denom) > 1e-300 && h_inv_g.allFinite() && h_inv_1.allFinite()) {
      step.direction = -(h_inv_g - h_inv_1 * (h_inv_g.sum() / denom));
    }
  }
  if (step.direction.size() != V || !step.direction.allFinite()) {
    step.singular = true;
    step.direction = -(gradient.array() - gradient.mean()).matrix();
  }
  // Remove rounding residue from the constraint direction.
  step.direction.array() -= step.direction.mean();
  return step;
}

LineSearchResult backtracking_line_search(const ThetaObjective& objective,
                                          std::span<const double> theta,
                                          const Eigen::VectorXd& direction,
                                          const LineSearchConfig& config,
                                          double barrier_weight) {
  if (!(config.tau0 > 0.0 && config.tau0 < 1.0)) {
    throw std::invalid_argument("line search tau0 must lie in (0, 1)");
  }
  const double start = objective.value(theta, barrier_weight);
  std::vector<double> trial(theta.size());
  double tau = 1.0;
  for (int s = 0; s <= config.max_backtracks; ++s, tau *= config.tau0) {
    bool feasible = true;
    for (std::size_t v = 0; v < theta.size(); ++v) {
      trial[v] = theta[v] + tau * direction[static_cast<Eigen::Index>(v)];
      feasible = feasible && trial[v] > 0.0;
    }
    if (!feasible) continue;
    const double value = objective.value(trial, barrier_weight);
    if (value <= start) return {tau, true, value};
  }
  return {0.0, false, start};
}

SupportVector solve_theta_subproblem(const ThetaObjective& objective,
                                     std::span<const double> start,
                                     const MStepOptions& options,
                                     ThetaSubproblemReport& report) {
  options.schedule.validate();
  const int V = objective.size();
  SupportVector theta(start.begin(), start.end());
  renormalize(theta);
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  SupportVector trial(V);
  for (int stage = 1; stage <= options.schedule.stages; ++stage) {
    const double w = options.schedule.weight(stage);
    const SupportVector stage_start = theta;
    bool stage_converged = false;
    for (int it = 0; it < options.theta_max_iters; ++it) {
      const double f = objective.value(theta, w);
      objective.derivatives(theta, w, g, h);
      ++report.newton_iters;

      // Constrained Newton step in theta.
      const KktStep step = kkt_step(g, h);
      const double slope = g.dot(step.direction);
      LineSearchResult ls;
      if (!step.singular && slope < 0.0) {
        ls = backtracking_line_search(objective, theta, step.direction,
                                      options.line_search, w);
      }
      double decrement = ls.progressed ? -0.5 * slope : 0.0;
      bool use_log_step = !ls.progressed || ls.tau < 1.0;

      // Safeguard: Newton step in log coordinates, where the objective is
      // convex, whenever the theta step is not a clean full Newton step.
      LogStep log_step;
      if (use_log_step) {
        log_step = log_newton_step(objective, theta, w, g, h, options.line_search);
        use_log_step = log_step.progressed && (!ls.progressed || log_step.value < ls.value);
      }
      if (use_log_step) {
        report.regularized = true;
        theta = log_step.theta;
        decrement = log_step.decrement;
      } else if (ls.progressed) {
        for (int v = 0; v < V; ++v) theta[v] += ls.tau * step.direction[v];
      } else {
        report.no_progress = true;
        stage_converged = true;  // nothing further to gain at this stage
        break;
      }
      // Near the optimum the Newton step squares the error, so the stage
      // ends only after taking the step that met the tolerance.
      if (decrement <= options.theta_tol * (1.0 + std::abs(f))) {
        stage_converged = true;
        break;
      }
    }
    report.converged = report.converged && stage_converged;
    renormalize(theta);
    const bool accepted = objective.data_term(theta) <= objective.data_term(stage_start);
    if (!accepted) {
      report.stage_rejected = true;
      theta = stage_start;
    }
    if (options.record_stages) report.stages.push_back({w, stage_start, theta, accepted});
  }
  return theta;
}

ThetaUpdateResult update_theta(const RankDataset& data, const VariationalParams& var,
                               const ModelParams& params,
                               const MStepOptions& options) {
  const int J = params.num_variables();
  const int K = params.num_subgroups();
  ThetaUpdateResult result{params.theta, {}};
  std::vector<std::pair<int, int>> jobs;
  for (int j = 0; j < J; ++j) {
    for (int k = 0; k < K; ++k) {
      if (!params.fixed[k]) jobs.emplace_back(j, k);
    }
  }
  result.reports.resize(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), options.num_threads, [&](int job) {
    const auto [j, k] = jobs[job];
    ThetaSubproblemReport& report = result.reports[job];
    report.variable = j;
    report.subgroup = k;
    const ThetaObjective objective(data, var, j, k);
    result.theta[j][k] =
        solve_theta_subproblem(objective, params.theta[j][k], options, report);
  });
  return result;
}

MStepReport run_mstep(const RankDataset& data, const VariationalParams& var,
                      ModelParams& params, const MStepOptions& options) {
  MStepReport report;
  report.alpha =
      update_alpha(data, params, var, options.alpha_tol, options.alpha_max_iters);
  ThetaUpdateResult theta = update_theta(data, var, params, options);
  params.alpha = report.alpha.alpha;
  params.theta = std::move(theta.theta);
  report.theta = std::move(theta.reports);
  return report;
}

}  // namespace mmrank
