#ifndef MMRANK_DRIVER_H_
#define MMRANK_DRIVER_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mmrank/estep.h"
#include "mmrank/model.h"
#include "mmrank/mstep.h"

namespace mmrank {

enum class InitKind { kRandom, kProvided, kTwoStep };

struct FitConfig {
  int num_subgroups = 1;
  // Frozen subgroups, placed after the estimated ones (indices K-F .. K-1).
  std::vector<FixedSubgroupSpec> fixed_subgroups;
  double outer_tol = 1e-6;
  double estep_tol = 1e-6;
  double mstep_tol = 1e-10;
  int max_outer_iters = 500;
  int max_estep_iters = 500;
  std::uint64_t seed = 1;
  InitKind init = InitKind::kRandom;
  // Random starts draw each estimated theta_jk from Dirichlet(a, ..., a) and
  // set every alpha_k to initial_alpha.
  double dirichlet_a = 1.0;
  double initial_alpha = 1.0;
  std::optional<ModelParams> initial_params;  // required for kProvided
  BarrierSchedule schedule;
  LineSearchConfig line_search;
  int num_threads = 1;

  int num_fixed() const { return static_cast<int>(fixed_subgroups.size()); }
  void validate() const;
  EStepOptions estep_options() const;
  MStepOptions mstep_options() const;
};

struct FitDiagnostics {
  int estep_not_converged = 0;   // outer iterations whose E-step hit max_iters
  int alpha_not_converged = 0;
  int theta_not_converged = 0;   // (j, k) solves with a stage over max_iters
  int theta_no_progress = 0;
  int theta_regularized = 0;
  int theta_stage_rejected = 0;
};

struct FitResult {
  ModelParams params;
  VariationalParams var;
  std::vector<double> elbo_trace;  // ELBO after each outer iteration
  bool converged = false;
  int iters = 0;
  FitDiagnostics diagnostics;

  double elbo() const { return elbo_trace.empty() ? 0.0 : elbo_trace.back(); }
};

// Random starting point for `data` under `config` (seeded by config.seed).
ModelParams random_init(const RankDataset& data, const FitConfig& config);

// One variational EM run from `start`, with phi = delta = 1/K.
FitResult run_em(const RankDataset& data, const FitConfig& config,
                 const ModelParams& start);
// Same, starting the first E-step from the given variational parameters.
FitResult run_em(const RankDataset& data, const FitConfig& config,
                 const ModelParams& start, VariationalParams start_var);

// Variational EM with the configured initialization.
FitResult fit(const RankDataset& data, const FitConfig& config);

struct MultiStartResult {
  FitResult best;
  int best_restart = -1;
  double best_dirichlet_a = 0.0;
  int failed_fits = 0;
  std::vector<double> elbos;  // per start, grid-major; NaN for failed fits
};

// Random starts: `restarts` per Dirichlet concentration in `dirichlet_grid`,
// each seeded from (config.seed, K, grid index, restart). Returns the fit with
// the largest final ELBO; ties go to the earlier start.
MultiStartResult multi_start_fit(const RankDataset& data, const FitConfig& config,
                                 int restarts, std::span<const double> dirichlet_grid);

struct TwoStepResult {
  FitResult first;   // from the random start
  FitResult second;  // restarted at first's global parameters
};

TwoStepResult two_step_fit(const RankDataset& data, const FitConfig& config);

// Global parameters of the second run of the two-step procedure.
ModelParams two_step_init(const RankDataset& data, const FitConfig& config);

struct HeldOutResult {
  FitResult train_fit;
  VariationalParams test_var;
  double test_elbo = 0.0;
};

// Fits on `train`, then runs one E-step phase on `test` with the fitted
// global parameters frozen.
HeldOutResult held_out(const RankDataset& train, const RankDataset& test,
                       const FitConfig& config);
double held_out_elbo(const RankDataset& train, const RankDataset& test,
                     const FitConfig& config);

// Splits individuals in half by a keyed hash of their ids, so the split does
// not depend on row order. Returns {train rows, test rows}.
std::pair<std::vector<int>, std::vector<int>> split_half(const RankDataset& data,
                                                         std::uint64_t split_seed);

struct SelectKRow {
  int num_subgroups = 0;
  double best_held_out_elbo = 0.0;
  double best_dirichlet_a = 0.0;
  int best_restart = -1;
  int failed_fits = 0;
  ModelParams best_params;  // training-set stationary point behind the best
};

struct SelectKResult {
  int best_k = 0;
  std::vector<SelectKRow> table;  // one row per entry of k_range
};

inline const std::vector<double> kDefaultDirichletGrid = {0.6, 1.1, 1.5};

// Held-out ELBO model selection: split in half, fit `restarts_per_k` random
// starts per Dirichlet concentration per K, keep the best test-set ELBO.
SelectKResult select_k(const RankDataset& data, std::span<const int> k_range,
                       int restarts_per_k, std::uint64_t split_seed,
                       const FitConfig& config,
                       std::span<const double> dirichlet_grid = kDefaultDirichletGrid);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct BootstrapResult {
  double level = 0.95;
  int replicates_used = 0;
  int replicates_dropped = 0;  // did not converge or failed
  std::vector<Interval> alpha;
  std::vector<Interval> relative_frequency;
  std::vector<std::vector<std::vector<Interval>>> theta;  // [j][k][v]
  std::vector<std::vector<double>> alpha_draws;           // per kept replicate
};

// Empirical quantile with linear interpolation between order statistics.
double empirical_quantile(std::vector<double> values, double p);

// Resamples individuals with replacement `replicates` times and refits each
// replicate from the full-data stationary point: the fitted alpha and theta,
// and each drawn individual's fitted phi and delta rows. Intervals are the
// (1-level)/2 and 1-(1-level)/2 quantiles of the kept replicate estimates.
BootstrapResult bootstrap_ci(const RankDataset& data, const FitResult& fitted,
                             int replicates, double level,
                             const FitConfig& config);

struct GoodnessOfFit {
  // counts[s][j][v]: individuals ranking v first for variable j in simulation s.
  std::vector<std::vector<std::vector<int>>> simulated;
  std::vector<std::vector<int>> observed;  // [j][v]
};

std::vector<std::vector<int>> first_choice_counts(const RankDataset& data);

// Simulates `simulations` datasets with the shape (T, N_ij) of `data` from
// `params` and tabulates first-place counts.
GoodnessOfFit goodness_of_fit(const ModelParams& params, const RankDataset& data,
                              int simulations, std::uint64_t seed,
                              int num_threads = 1);

// Share of (variable, alternative) cells whose observed count lies inside the
// central `level` band of the simulated counts.
double band_coverage(const GoodnessOfFit& gof, double level = 0.95);

}  // namespace mmrank

#endif  // MMRANK_DRIVER_H_
