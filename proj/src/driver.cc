#include "mmrank/driver.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <tuple>

#include "mmrank/parallel.h"
#include "mmrank/random.h"
#include "mmrank/report.h"

namespace mmrank {
namespace {

constexpr double kInitThetaFloor = 1e-8;
constexpr std::uint64_t kInitStream = 0x696e6974;  // "init"

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

FitConfig single_threaded(FitConfig config) {
  config.num_threads = 1;
  return config;
}

}  // namespace

void FitConfig::validate() const {
  if (num_subgroups < 1) throw std::invalid_argument("K must be at least 1");
  if (num_fixed() > 0 && num_subgroups < num_fixed() + 1) {
    throw std::invalid_argument("K must exceed the number of fixed subgroups");
  }
  if (!(outer_tol > 0.0 && estep_tol > 0.0 && mstep_tol > 0.0)) {
    throw std::invalid_argument("tolerances must be positive");
  }
  if (max_outer_iters < 1 || max_estep_iters < 1) {
    throw std::invalid_argument("iteration limits must be positive");
  }
  if (!(dirichlet_a > 0.0)) throw std::invalid_argument("Dirichlet a must be positive");
  if (!(initial_alpha > 0.0)) throw std::invalid_argument("initial alpha must be positive");
  if (init == InitKind::kProvided && !initial_params) {
    throw std::invalid_argument("provided initialization needs initial parameters");
  }
  schedule.validate();
  if (!(line_search.tau0 > 0.0 && line_search.tau0 < 1.0)) {
    throw std::invalid_argument("tau0 must lie in (0, 1)");
  }
}

EStepOptions FitConfig::estep_options() const {
  return {estep_tol, max_estep_iters, num_threads};
}

MStepOptions FitConfig::mstep_options() const {
  MStepOptions options;
  options.schedule = schedule;
  options.line_search = line_search;
  options.theta_tol = mstep_tol;
  options.num_threads = num_threads;
  return options;
}

ModelParams random_init(const RankDataset& data, const FitConfig& config) {
  config.validate();
  const int K = config.num_subgroups;
  const int n_estimated = K - config.num_fixed();
  ModelParams params;
  params.alpha.assign(K, config.initial_alpha);
  params.fixed.assign(K, false);
  for (int k = n_estimated; k < K; ++k) params.fixed[k] = true;
  Rng rng = make_rng(config.seed, kInitStream);
  params.theta.resize(data.num_variables());
  for (int j = 0; j < data.num_variables(); ++j) {
    const int V = data.num_alternatives(j);
    const std::vector<double> conc(V, config.dirichlet_a);
    for (int k = 0; k < K; ++k) {
      if (k >= n_estimated) {
        params.theta[j].push_back(
            make_fixed_theta(config.fixed_subgroups[k - n_estimated], V));
        continue;
      }
      SupportVector theta = draw_dirichlet(conc, rng);
      double total = 0.0;
      for (double& t : theta) {
        t = std::max(t, kInitThetaFloor);
        total += t;
      }
      for (double& t : theta) t /= total;
      params.theta[j].push_back(std::move(theta));
    }
  }
  return params;
}

FitResult run_em(const RankDataset& data, const FitConfig& config,
                 const ModelParams& start) {
  return run_em(data, config, start,
                VariationalParams::uniform(data, config.num_subgroups));
}

FitResult run_em(const RankDataset& data, const FitConfig& config,
                 const ModelParams& start, VariationalParams start_var) {
  config.validate();
  validate_params(start, data);
  if (start.num_subgroups() != config.num_subgroups) {
    throw std::invalid_argument("starting point has the wrong number of subgroups");
  }
  if (start_var.num_subgroups != config.num_subgroups ||
      start_var.phi.size() != static_cast<std::size_t>(data.num_individuals()) * config.num_subgroups ||
      start_var.delta.size() != static_cast<std::size_t>(data.total_slots()) * config.num_subgroups) {
    throw std::invalid_argument("starting variational parameters do not match the data");
  }
  FitResult result;
  result.params = start;
  result.var = std::move(start_var);
  EStepOptions e_options = config.estep_options();
  const MStepOptions m_options = config.mstep_options();
  double previous = std::numeric_limits<double>::quiet_NaN();
  for (int it = 1; it <= config.max_outer_iters; ++it) {
    const SelectionLogProbs before(data, result.params);
    e_options.initial_elbo = previous;
    const EStepResult e = run_estep(data, result.params, before, result.var, e_options);
    if (!e.converged) ++result.diagnostics.estep_not_converged;

    const MStepReport m = run_mstep(data, result.var, result.params, m_options);
    if (!m.alpha.converged) ++result.diagnostics.alpha_not_converged;
    for (const ThetaSubproblemReport& r : m.theta) {
      result.diagnostics.theta_not_converged += !r.converged;
      result.diagnostics.theta_no_progress += r.no_progress;
      result.diagnostics.theta_regularized += r.regularized;
      result.diagnostics.theta_stage_rejected += r.stage_rejected;
    }

    const SelectionLogProbs after(data, result.params);
    const double elbo =
        compute_elbo(data, result.params, result.var, after, config.num_threads);
    result.elbo_trace.push_back(elbo);
    result.iters = it;
    if (std::isfinite(previous) &&
        std::abs(elbo - previous) <= config.outer_tol * std::abs(elbo)) {
      result.converged = true;
      break;
    }
    previous = elbo;
  }
  return result;
}

TwoStepResult two_step_fit(const RankDataset& data, const FitConfig& config) {
  TwoStepResult out;
  out.first = run_em(data, config, random_init(data, config));
  out.second = run_em(data, config, out.first.params);
  return out;
}

ModelParams two_step_init(const RankDataset& data, const FitConfig& config) {
  return two_step_fit(data, config).second.params;
}

FitResult fit(const RankDataset& data, const FitConfig& config) {
  config.validate();
  switch (config.init) {
    case InitKind::kRandom:
      return run_em(data, config, random_init(data, config));
    case InitKind::kProvided:
      return run_em(data, config, *config.initial_params);
    case InitKind::kTwoStep:
      return two_step_fit(data, config).second;
  }
  throw std::logic_error("unknown initialization kind");
}

MultiStartResult multi_start_fit(const RankDataset& data, const FitConfig& config,
                                 int restarts, std::span<const double> dirichlet_grid) {
  if (restarts < 1) throw std::invalid_argument("need at least one restart");
  if (dirichlet_grid.empty()) throw std::invalid_argument("Dirichlet grid is empty");
  config.validate();
  const int n_starts = restarts * static_cast<int>(dirichlet_grid.size());
  std::vector<std::optional<FitResult>> fits(n_starts);
  parallel_for(n_starts, config.num_threads, [&](int idx) {
    FitConfig c = single_threaded(config);
    c.init = InitKind::kRandom;
    c.dirichlet_a = dirichlet_grid[idx / restarts];
    c.seed = derive_seed(config.seed, static_cast<std::uint64_t>(c.num_subgroups),
                         static_cast<std::uint64_t>(idx / restarts),
                         static_cast<std::uint64_t>(idx % restarts));
    try {
      FitResult f = fit(data, c);
      if (std::isfinite(f.elbo())) fits[idx] = std::move(f);
    } catch (const std::exception&) {
      // counted as a failed fit below
    }
  });

  MultiStartResult out;
  for (int idx = 0; idx < n_starts; ++idx) {
    if (!fits[idx]) {
      ++out.failed_fits;
      out.elbos.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    out.elbos.push_back(fits[idx]->elbo());
    if (out.best_restart < 0 || fits[idx]->elbo() > out.best.elbo()) {
      out.best = std::move(*fits[idx]);
      out.best_restart = idx % restarts;
      out.best_dirichlet_a = dirichlet_grid[idx / restarts];
    }
  }
  if (out.best_restart < 0) throw std::runtime_error("multi_start_fit: every fit failed");
  return out;
}

HeldOutResult held_out(const RankDataset& train, const RankDataset& test,
                       const FitConfig& config) {
  if (std::vector<int>(train.num_alternatives().begin(), train.num_alternatives().end()) !=
      std::vector<int>(test.num_alternatives().begin(), test.num_alternatives().end())) {
    throw std::invalid_argument("train and test sets have different choice sets");
  }
  HeldOutResult out;
  out.train_fit = fit(train, config);
  out.test_var = VariationalParams::uniform(test, config.num_subgroups);
  const EStepResult e =
      run_estep(test, out.train_fit.params, out.test_var, config.estep_options());
  out.test_elbo = e.elbo;
  return out;
}

double held_out_elbo(const RankDataset& train, const RankDataset& test,
                     const FitConfig& config) {
  return held_out(train, test, config).test_elbo;
}

std::pair<std::vector<int>, std::vector<int>> split_half(const RankDataset& data,
                                                         std::uint64_t split_seed) {
  const int T = data.num_individuals();
  std::vector<std::uint64_t> keys(T);
  for (int i = 0; i < T; ++i) keys[i] = derive_seed(split_seed, fnv1a(data.id(i)));
  std::vector<int> order(T);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::tie(keys[a], data.id(a), a) < std::tie(keys[b], data.id(b), b);
  });
  const int n_train = T / 2;
  return {std::vector<int>(order.begin(), order.begin() + n_train),
          std::vector<int>(order.begin() + n_train, order.end())};
}

SelectKResult select_k(const RankDataset& data, std::span<const int> k_range,
                       int restarts_per_k, std::uint64_t split_seed,
                       const FitConfig& config,
                       std::span<const double> dirichlet_grid) {
  if (k_range.empty()) throw std::invalid_argument("k_range is empty");
  if (restarts_per_k < 1) throw std::invalid_argument("need at least one restart per K");
  if (dirichlet_grid.empty()) throw std::invalid_argument("Dirichlet grid is empty");
  const auto [train_rows, test_rows] = split_half(data, split_seed);
  const RankDataset train = data.select(train_rows);
  const RankDataset test = data.select(test_rows);

  struct Job {
    int k_index, a_index, restart;
  };
  std::vector<Job> jobs;
  for (std::size_t ki = 0; ki < k_range.size(); ++ki) {
    FitConfig probe = config;
    probe.num_subgroups = k_range[ki];
    probe.validate();
    for (std::size_t ai = 0; ai < dirichlet_grid.size(); ++ai) {
      for (int r = 0; r < restarts_per_k; ++r) {
        jobs.push_back({static_cast<int>(ki), static_cast<int>(ai), r});
      }
    }
  }
  struct Outcome {
    bool ok = false;
    double elbo = 0.0;
    ModelParams params;
  };
  std::vector<Outcome> outcomes(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), config.num_threads, [&](int idx) {
    const Job& job = jobs[idx];
    FitConfig c = single_threaded(config);
    c.num_subgroups = k_range[job.k_index];
    c.dirichlet_a = dirichlet_grid[job.a_index];
    if (c.init == InitKind::kProvided) c.init = InitKind::kRandom;
    c.seed = derive_seed(config.seed, static_cast<std::uint64_t>(c.num_subgroups),
                         static_cast<std::uint64_t>(job.a_index),
                         static_cast<std::uint64_t>(job.restart));
    try {
      HeldOutResult h = held_out(train, test, c);
      if (std::isfinite(h.test_elbo)) {
        outcomes[idx] = {true, h.test_elbo, std::move(h.train_fit.params)};
      }
    } catch (const std::exception&) {
      // counted as a failed fit below
    }
  });

  SelectKResult result;
  result.table.resize(k_range.size());
  for (std::size_t ki = 0; ki < k_range.size(); ++ki) {
    result.table[ki].num_subgroups = k_range[ki];
    result.table[ki].best_held_out_elbo = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t idx = 0; idx < jobs.size(); ++idx) {
    SelectKRow& row = result.table[jobs[idx].k_index];
    if (!outcomes[idx].ok) {
      ++row.failed_fits;
      continue;
    }
    if (outcomes[idx].elbo > row.best_held_out_elbo) {
      row.best_held_out_elbo = outcomes[idx].elbo;
      row.best_dirichlet_a = dirichlet_grid[jobs[idx].a_index];
      row.best_restart = jobs[idx].restart;
      row.best_params = std::move(outcomes[idx].params);
    }
  }
  double best = -std::numeric_limits<double>::infinity();
  for (const SelectKRow& row : result.table) {
    if (row.best_held_out_elbo > best) {
      best = row.best_held_out_elbo;
      result.best_k = row.num_subgroups;
    }
  }
  if (result.best_k == 0) throw std::runtime_error("select_k: every fit failed");
  return result;
}

double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

BootstrapResult bootstrap_ci(const RankDataset& data, const FitResult& fitted,
                             int replicates, double level,
                             const FitConfig& config) {
  if (replicates < 2) throw std::invalid_argument("bootstrap needs B >= 2");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0, 1)");
  const int T = data.num_individuals();
  FitConfig c = single_threaded(config);
  c.num_subgroups = fitted.params.num_subgroups();
  c.init = InitKind::kProvided;
  c.initial_params = fitted.params;
  const int K = c.num_subgroups;
  if (fitted.var.phi.size() != static_cast<std::size_t>(T) * K ||
      fitted.var.delta.size() != static_cast<std::size_t>(data.total_slots()) * K) {
    throw std::invalid_argument("fitted variational parameters do not match the data");
  }

  std::vector<std::optional<ModelParams>> estimates(replicates);
  parallel_for(replicates, config.num_threads, [&](int b) {
    Rng rng = make_rng(config.seed, static_cast<std::uint64_t>(b));
    std::vector<int> rows(T);
    for (int& r : rows) r = static_cast<int>(uniform01(rng) * T);
    try {
      const RankDataset sample = data.select(rows);
      VariationalParams var = VariationalParams::uniform(sample, K);
      for (int i = 0; i < T; ++i) {
        const auto phi = fitted.var.phi_row(rows[i]);
        std::copy(phi.begin(), phi.end(), var.phi_row(i).begin());
        for (int s = 0; s < sample.num_slots(i); ++s) {
          const auto delta = fitted.var.delta_row(data.slot_begin(rows[i]) + s);
          std::copy(delta.begin(), delta.end(),
                    var.delta_row(sample.slot_begin(i) + s).begin());
        }
      }
      FitResult r = run_em(sample, c, fitted.params, std::move(var));
      if (r.converged) estimates[b] = std::move(r.params);
    } catch (const std::exception&) {
      // dropped below
    }
  });

  BootstrapResult out;
  out.level = level;
  std::vector<const ModelParams*> kept;
  for (const auto& e : estimates) {
    if (e) kept.push_back(&*e);
  }
  out.replicates_used = static_cast<int>(kept.size());
  out.replicates_dropped = replicates - out.replicates_used;
  if (kept.empty()) throw std::runtime_error("bootstrap: no replicate converged");

  const double lo_p = (1.0 - level) / 2.0;
  const double hi_p = 1.0 - lo_p;
  auto interval = [&](const std::vector<double>& draws) {
    return Interval{empirical_quantile(draws, lo_p), empirical_quantile(draws, hi_p)};
  };
  for (const ModelParams* p : kept) out.alpha_draws.push_back(p->alpha);
  for (int k = 0; k < K; ++k) {
    std::vector<double> a, rf;
    for (const ModelParams* p : kept) {
      a.push_back(p->alpha[k]);
      rf.push_back(relative_frequencies(p->alpha)[k]);
    }
    out.alpha.push_back(interval(a));
    out.relative_frequency.push_back(interval(rf));
  }
  const int J = fitted.params.num_variables();
  out.theta.resize(J);
  for (int j = 0; j < J; ++j) {
    out.theta[j].resize(K);
    for (int k = 0; k < K; ++k) {
      const std::size_t V = fitted.params.theta[j][k].size();
      for (std::size_t v = 0; v < V; ++v) {
        std::vector<double> draws;
        for (const ModelParams* p : kept) draws.push_back(p->theta[j][k][v]);
        out.theta[j][k].push_back(interval(draws));
      }
    }
  }
  return out;
}

std::vector<std::vector<int>> first_choice_counts(const RankDataset& data) {
  std::vector<std::vector<int>> counts(data.num_variables());
  for (int j = 0; j < data.num_variables(); ++j) {
    counts[j].assign(data.num_alternatives(j), 0);
    for (int i = 0; i < data.num_individuals(); ++i) {
      ++counts[j][data.observation(i, j).items[0]];
    }
  }
  return counts;
}

GoodnessOfFit goodness_of_fit(const ModelParams& params, const RankDataset& data,
                              int simulations, std::uint64_t seed,
                              int num_threads) {
  if (simulations < 1) throw std::invalid_argument("need at least one simulation");
  validate_params(params, data);
  const std::vector<std::vector<int>> levels = data.levels();
  GoodnessOfFit gof;
  gof.observed = first_choice_counts(data);
  gof.simulated.resize(simulations);
  parallel_for(simulations, num_threads, [&](int s) {
    const GeneratedData sim =
        generate_dataset(params, levels, derive_seed(seed, static_cast<std::uint64_t>(s)));
    gof.simulated[s] = first_choice_counts(sim.data);
  });
  return gof;
}

double band_coverage(const GoodnessOfFit& gof, double level) {
  const double lo_p = (1.0 - level) / 2.0;
  int cells = 0;
  int covered = 0;
  for (std::size_t j = 0; j < gof.observed.size(); ++j) {
    for (std::size_t v = 0; v < gof.observed[j].size(); ++v) {
      std::vector<double> draws;
      draws.reserve(gof.simulated.size());
      for (const auto& sim : gof.simulated) draws.push_back(sim[j][v]);
      const double lo = empirical_quantile(draws, lo_p);
      const double hi = empirical_quantile(draws, 1.0 - lo_p);
      ++cells;
      covered += gof.observed[j][v] >= lo && gof.observed[j][v] <= hi;
    }
  }
  return cells == 0 ? 1.0 : static_cast<double>(covered) / cells;
}

}  // namespace mmrank
