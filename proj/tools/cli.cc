#include "cli.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mmrank/driver.h"
#include "mmrank/io.h"
#include "mmrank/report.h"

namespace mmrank {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct InputOptions {
  std::string data;
  std::string schema;
};

struct FitOptions {
  int k = 1;
  bool fixed_presentation = false;
  bool fixed_uniform = false;
  double sharpness = 0.01;
  double outer_tol = 1e-6;
  double estep_tol = 1e-6;
  double mstep_tol = 1e-10;
  int max_iters = 500;
  double b0 = 10.0;
  int barrier_stages = 4;
  std::string init = "random";
  std::string params;
  double dirichlet_a = 1.0;
  double initial_alpha = 1.0;
  int restarts = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  bool record_timing = false;
};

void add_input_options(CLI::App* cmd, InputOptions& in) {
  cmd->add_option("--data", in.data, "long-format ranking CSV")->required();
  cmd->add_option("--schema", in.schema, "schema JSON declaring the variables")->required();
}

void add_common_fit_options(CLI::App* cmd, FitOptions& o) {
  cmd->add_flag("--fixed-presentation", o.fixed_presentation,
                "add a frozen subgroup preferring the presentation order");
  cmd->add_flag("--fixed-uniform", o.fixed_uniform, "add a frozen uniform subgroup");
  cmd->add_option("--sharpness", o.sharpness,
                  "ratio between consecutive presentation-ordered weights")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--outer-tol", o.outer_tol, "relative ELBO change ending EM")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--estep-tol", o.estep_tol, "relative ELBO change ending an E-step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--mstep-tol", o.mstep_tol, "barrier stage tolerance")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--max-iters", o.max_iters, "outer EM iteration limit")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--b0", o.b0, "barrier base; stage m uses weight b0^-m")->capture_default_str();
  cmd->add_option("--barrier-stages", o.barrier_stages, "number of barrier stages")
      ->capture_default_str();
  cmd->add_option("--dirichlet-a", o.dirichlet_a, "concentration of random theta starts")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--initial-alpha", o.initial_alpha, "alpha at random starts")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "root random seed")->capture_default_str();
  cmd->add_option("--threads", o.threads, "worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--record-timing", o.record_timing, "store wall-clock time in the manifest");
}

void add_single_fit_options(CLI::App* cmd, FitOptions& o) {
  cmd->add_option("--k", o.k, "number of subgroups, fixed ones included")
      ->required()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--init", o.init, "random or two-step")
      ->check(CLI::IsMember({"random", "two-step"}))
      ->capture_default_str();
  cmd->add_option("--params", o.params, "start from the parameters in this JSON file");
  cmd->add_option("--restarts", o.restarts, "random starts; the best ELBO is kept")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

FitConfig make_config(const FitOptions& o) {
  FitConfig c;
  c.num_subgroups = o.k;
  if (o.fixed_presentation) {
    c.fixed_subgroups.push_back({FixedSubgroupSpec::Kind::kPresentationOrdered, o.sharpness});
  }
  if (o.fixed_uniform) {
    c.fixed_subgroups.push_back({FixedSubgroupSpec::Kind::kUniform, o.sharpness});
  }
  c.outer_tol = o.outer_tol;
  c.estep_tol = o.estep_tol;
  c.mstep_tol = o.mstep_tol;
  c.max_outer_iters = o.max_iters;
  c.schedule = {o.b0, o.barrier_stages};
  c.dirichlet_a = o.dirichlet_a;
  c.initial_alpha = o.initial_alpha;
  c.seed = o.seed;
  c.num_threads = o.threads;
  if (!o.params.empty()) {
    c.init = InitKind::kProvided;
    c.initial_params = params_from_json(read_json(o.params));
  } else if (o.init == "two-step") {
    c.init = InitKind::kTwoStep;
  }
  return c;
}

// Everything that determines the result. The thread count does not, so it
// is left out to keep serial and parallel outputs identical.
json config_echo(const FitOptions& o) {
  json fixed = json::array();
  if (o.fixed_presentation) fixed.push_back("presentation");
  if (o.fixed_uniform) fixed.push_back("uniform");
  json c = {{"k", o.k},
            {"fixed_subgroups", fixed},
            {"sharpness", o.sharpness},
            {"outer_tol", o.outer_tol},
            {"estep_tol", o.estep_tol},
            {"mstep_tol", o.mstep_tol},
            {"max_iters", o.max_iters},
            {"b0", o.b0},
            {"barrier_stages", o.barrier_stages},
            {"init", o.params.empty() ? o.init : "provided"},
            {"dirichlet_a", o.dirichlet_a},
            {"initial_alpha", o.initial_alpha},
            {"restarts", o.restarts}};
  if (!o.params.empty()) c["params"] = o.params;
  return c;
}

json convergence_json(const FitResult& r) {
  return {{"converged", r.converged},
          {"iterations", r.iters},
          {"estep_not_converged", r.diagnostics.estep_not_converged},
          {"alpha_not_converged", r.diagnostics.alpha_not_converged},
          {"theta_not_converged", r.diagnostics.theta_not_converged}};
}

json interval_json(const Interval& iv) {
  return json::array({round_sig12(iv.lower), round_sig12(iv.upper)});
}

void emit(const json& doc, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << doc.dump(2) << '\n';
  } else {
    write_json(doc, path);
  }
}

struct Loaded {
  Schema schema;
  LoadedDataset data;
};

Loaded load_inputs(const InputOptions& in) {
  Loaded l;
  l.schema = load_schema(in.schema);
  l.data = load_dataset(in.data, l.schema);
  return l;
}

struct FitOutcome {
  FitResult result;
  json convergence;
};

// Single run, two-step run or best of several random starts, per the options.
FitOutcome fit_per_options(const RankDataset& data, const FitConfig& config,
                           const FitOptions& o) {
  FitOutcome out;
  if (o.restarts > 1) {
    if (config.init != InitKind::kRandom) {
      throw CLI::ValidationError("--restarts", "needs random initialization");
    }
    const std::vector<double> grid{config.dirichlet_a};
    MultiStartResult ms = multi_start_fit(data, config, o.restarts, grid);
    out.result = std::move(ms.best);
    out.convergence = convergence_json(out.result);
    out.convergence["best_restart"] = ms.best_restart;
    out.convergence["failed_restarts"] = ms.failed_fits;
  } else {
    out.result = fit(data, config);
    out.convergence = convergence_json(out.result);
  }
  return out;
}

json fit_document(const std::string& command, const FitResult& result,
                  const Loaded& in, const FitOptions& o, json convergence,
                  Clock::time_point start) {
  convergence["dropped_incomplete"] = in.data.dropped_incomplete;
  RunManifest m{command, config_echo(o), o.seed, in.data.digest, std::move(convergence), {}};
  if (o.record_timing) {
    m.wall_clock_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  }
  return results_to_json(result, report_summaries(result), in.schema, in.data.data, m);
}

int cmd_fit(const InputOptions& in, const FitOptions& o, const std::string& out_path,
            std::ostream& out) {
  const auto start = Clock::now();
  const Loaded l = load_inputs(in);
  const FitConfig config = make_config(o);
  const FitOutcome f = fit_per_options(l.data.data, config, o);
  emit(fit_document("fit", f.result, l, o, f.convergence, start), out_path, out);
  return 0;
}

int cmd_select_k(const InputOptions& in, FitOptions o, const std::vector<int>& k_range,
                 int restarts, std::uint64_t split_seed, const std::vector<double>& grid,
                 const std::string& out_path, std::ostream& out) {
  const auto start = Clock::now();
  const Loaded l = load_inputs(in);
  o.k = *std::max_element(k_range.begin(), k_range.end());
  o.restarts = restarts;
  FitConfig config = make_config(o);
  const SelectKResult sk = select_k(l.data.data, k_range, o.restarts, split_seed, config, grid);

  // Final run on the full data from the selected stationary point.
  const SelectKRow& best = *std::find_if(sk.table.begin(), sk.table.end(), [&](const auto& r) {
    return r.num_subgroups == sk.best_k;
  });
  config.num_subgroups = sk.best_k;
  config.init = InitKind::kProvided;
  config.initial_params = best.best_params;
  const FitResult result = fit(l.data.data, config);

  o.k = sk.best_k;
  json doc = fit_document("select-k", result, l, o, convergence_json(result), start);
  json table = json::array();
  for (const SelectKRow& row : sk.table) {
    table.push_back({{"k", row.num_subgroups},
                     {"best_held_out_elbo", round_sig12(row.best_held_out_elbo)},
                     {"best_dirichlet_a", row.best_dirichlet_a},
                     {"best_restart", row.best_restart},
                     {"failed_fits", row.failed_fits}});
  }
  doc["model_selection"] = {{"best_k", sk.best_k},
                            {"k_range", k_range},
                            {"restarts_per_k", o.restarts},
                            {"dirichlet_grid", grid},
                            {"split_seed", split_seed},
                            {"table", table}};
  emit(doc, out_path, out);
  return 0;
}

int cmd_bootstrap(const InputOptions& in, const FitOptions& o, int replicates, double level,
                  const std::string& out_path, std::ostream& out) {
  const auto start = Clock::now();
  const Loaded l = load_inputs(in);
  const FitConfig config = make_config(o);
  const FitOutcome f = fit_per_options(l.data.data, config, o);
  const BootstrapResult b = bootstrap_ci(l.data.data, f.result, replicates, level, config);

  json doc = fit_document("bootstrap", f.result, l, o, f.convergence, start);
  json alpha = json::array();
  json rf = json::array();
  for (const Interval& iv : b.alpha) alpha.push_back(interval_json(iv));
  for (const Interval& iv : b.relative_frequency) rf.push_back(interval_json(iv));
  json theta = json::array();
  for (const auto& per_k : b.theta) {
    json row = json::array();
    for (const auto& per_v : per_k) {
      json cell = json::array();
      for (const Interval& iv : per_v) cell.push_back(interval_json(iv));
      row.push_back(cell);
    }
    theta.push_back(row);
  }
  doc["bootstrap"] = {{"level", level},
                      {"replicates", replicates},
                      {"replicates_used", b.replicates_used},
                      {"replicates_dropped", b.replicates_dropped},
                      {"alpha", alpha},
                      {"relative_frequency", rf},
                      {"theta", theta}};
  emit(doc, out_path, out);
  return 0;
}

Schema generic_schema(const ModelParams& p) {
  Schema s;
  for (int j = 0; j < p.num_variables(); ++j) {
    VariableSchema v;
    v.id = "v" + std::to_string(j + 1);
    for (std::size_t a = 1; a <= p.theta[j][0].size(); ++a) v.labels.push_back(std::to_string(a));
    s.variables.push_back(std::move(v));
  }
  return s;
}

int cmd_simulate(const std::string& params_path, const std::string& schema_path, int T,
                 std::vector<int> levels, std::uint64_t seed, int threads,
                 const std::string& out_path, const std::string& schema_out) {
  const json doc = read_json(params_path);
  const ModelParams params = params_from_json(doc);
  Schema schema;
  if (!schema_path.empty()) {
    schema = load_schema(schema_path);
  } else if (doc.contains("schema")) {
    schema = parse_schema(doc["schema"]);
  } else {
    schema = generic_schema(params);
  }
  const int J = params.num_variables();
  if (static_cast<int>(schema.variables.size()) != J) {
    throw DataError("schema declares " + std::to_string(schema.variables.size()) +
                    " variables but the parameters have " + std::to_string(J));
  }
  if (levels.size() == 1) levels.assign(J, levels[0]);
  if (static_cast<int>(levels.size()) != J) {
    throw CLI::ValidationError("--n", "give one ranking length or one per variable");
  }
  for (int j = 0; j < J; ++j) {
    const int V = static_cast<int>(params.theta[j][0].size());
    if (schema.variables[j].num_alternatives() != V) {
      throw DataError("schema variable " + schema.variables[j].id + " has " +
                      std::to_string(schema.variables[j].num_alternatives()) +
                      " alternatives but the parameters have " + std::to_string(V));
    }
    if (levels[j] < 1 || levels[j] > V) {
      throw CLI::ValidationError("--n", "ranking length must lie in 1.." + std::to_string(V));
    }
  }
  const GeneratedData gen = generate_dataset(params, T, levels, seed, threads);
  save_dataset(gen.data, schema, out_path);
  if (!schema_out.empty()) save_schema(schema, schema_out);
  return 0;
}

int cmd_gof(const std::string& fit_path, const InputOptions& in, int simulations,
            std::uint64_t seed, int threads, double level, const std::string& out_path,
            const std::string& observed_out, std::ostream& out) {
  const LoadedFit fitted = load_results(fit_path);
  const Schema schema = in.schema.empty() ? fitted.schema : load_schema(in.schema);
  const LoadedDataset data = load_dataset(in.data, schema);
  const GoodnessOfFit gof = goodness_of_fit(fitted.params, data.data, simulations, seed, threads);
  save_gof_table(gof, schema, out_path);
  if (!observed_out.empty()) save_observed_counts(gof, schema, observed_out);
  out << "simulations " << simulations << '\n'
      << "band_level " << level << '\n'
      << "band_coverage " << std::setprecision(12) << band_coverage(gof, level) << '\n';
  return 0;
}

std::string format_fixed(double x, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << x;
  return s.str();
}

int cmd_report(const std::string& fit_path, const std::string& out_path, std::ostream& out) {
  const LoadedFit fitted = load_results(fit_path);
  const int T = static_cast<int>(fitted.individual_ids.size());
  const Report r = report_summaries(fitted.params, fitted.var, T);
  const int K = fitted.params.num_subgroups();

  out << "subgroup  alpha         relative_frequency\n";
  for (int k = 0; k < K; ++k) {
    out << std::setw(8) << k + 1 << "  " << std::setw(12) << format_fixed(fitted.params.alpha[k], 6)
        << "  " << format_fixed(r.relative_frequency[k], 4)
        << (fitted.params.fixed[k] ? "  (fixed)" : "") << '\n';
  }
  for (std::size_t j = 0; j < fitted.schema.variables.size(); ++j) {
    const VariableSchema& var = fitted.schema.variables[j];
    out << "\nsupport ratio, variable " << var.id << '\n';
    for (int v = 0; v < var.num_alternatives(); ++v) {
      out << "  " << std::setw(24) << std::left << var.labels[v] << std::right;
      for (int k = 0; k < K; ++k) out << std::setw(10) << format_fixed(r.support_ratio[j][k][v], 3);
      out << '\n';
    }
  }
  if (T > 0) {
    out << "\nmodal membership quantiles (5/25/50/75/95%):";
    for (double q : {0.05, 0.25, 0.5, 0.75, 0.95}) {
      out << ' ' << format_fixed(empirical_quantile(r.modal_membership, q), 3);
    }
    out << "\nmembership correlation\n";
    for (int a = 0; a < K; ++a) {
      for (int b = 0; b < K; ++b) out << std::setw(8) << format_fixed(r.membership_correlation[a][b], 2);
      out << '\n';
    }
  }

  if (!out_path.empty()) {
    json doc = {{"relative_frequency", json::array()},
                {"support_ratio", json::array()},
                {"log10_support_ratio", json::array()},
                {"modal_subgroup", r.modal_subgroup},
                {"membership_correlation", json::array()}};
    for (double x : r.relative_frequency) doc["relative_frequency"].push_back(round_sig12(x));
    for (std::size_t j = 0; j < r.support_ratio.size(); ++j) {
      json ratio = json::array();
      json log_ratio = json::array();
      for (int k = 0; k < K; ++k) {
        json row = json::array();
        json log_row = json::array();
        for (std::size_t v = 0; v < r.support_ratio[j][k].size(); ++v) {
          row.push_back(round_sig12(r.support_ratio[j][k][v]));
          log_row.push_back(round_sig12(r.log10_support_ratio[j][k][v]));
        }
        ratio.push_back(row);
        log_ratio.push_back(log_row);
      }
      doc["support_ratio"].push_back(ratio);
      doc["log10_support_ratio"].push_back(log_ratio);
    }
    for (const auto& row : r.membership_correlation) {
      json c = json::array();
      for (double x : row) c.push_back(std::isfinite(x) ? json(round_sig12(x)) : json(nullptr));
      doc["membership_correlation"].push_back(c);
    }
    write_json(doc, out_path);
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixed-membership Plackett-Luce models for multivariate rank data", "mmrank"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  InputOptions in;
  FitOptions fo;
  std::string out_path;

  CLI::App* fit_cmd = app.add_subcommand("fit", "fit a model by variational EM");
  add_input_options(fit_cmd, in);
  add_single_fit_options(fit_cmd, fo);
  add_common_fit_options(fit_cmd, fo);
  fit_cmd->add_option("--out", out_path, "results JSON (default: stdout)");

  std::vector<int> k_range;
  std::uint64_t split_seed = 1;
  std::vector<double> grid = kDefaultDirichletGrid;
  int sk_restarts = 40;
  CLI::App* sk_cmd = app.add_subcommand("select-k", "choose K by held-out ELBO, then fit");
  add_input_options(sk_cmd, in);
  add_common_fit_options(sk_cmd, fo);
  sk_cmd->add_option("--k-range", k_range, "candidate K values, e.g. 2,3,4,5")
      ->required()
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  sk_cmd->add_option("--restarts", sk_restarts, "random starts per K and concentration")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sk_cmd->add_option("--split-seed", split_seed, "seed of the half split")->capture_default_str();
  sk_cmd->add_option("--dirichlet-grid", grid, "concentrations for random starts")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  sk_cmd->add_option("--out", out_path, "results JSON (default: stdout)");

  int replicates = 200;
  double level = 0.95;
  CLI::App* boot_cmd = app.add_subcommand("bootstrap", "fit, then bootstrap confidence intervals");
  add_input_options(boot_cmd, in);
  add_single_fit_options(boot_cmd, fo);
  add_common_fit_options(boot_cmd, fo);
  boot_cmd->add_option("--bootstrap-b", replicates, "number of bootstrap replicates")
      ->check(CLI::Range(2, 1000000))
      ->capture_default_str();
  boot_cmd->add_option("--level", level, "confidence level")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  boot_cmd->add_option("--out", out_path, "results JSON (default: stdout)");

  std::string params_path;
  std::string schema_path;
  std::string schema_out;
  int T = 0;
  std::vector<int> levels;
  std::uint64_t seed = 1;
  int threads = 1;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim_cmd->add_option("--params", params_path, "parameter or results JSON")->required();
  sim_cmd->add_option("--schema", schema_path, "schema for the output (default: from --params)");
  sim_cmd->add_option("--t", T, "number of individuals")->required()->check(CLI::PositiveNumber);
  sim_cmd->add_option("--n", levels, "ranking length, one value or one per variable")
      ->required()
      ->delimiter(',');
  sim_cmd->add_option("--seed", seed, "random seed")->capture_default_str();
  sim_cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--out", out_path, "dataset CSV")->required();
  sim_cmd->add_option("--schema-out", schema_out, "also write the schema JSON here");

  std::string fit_path;
  std::string observed_out;
  int simulations = 1000;
  CLI::App* gof_cmd = app.add_subcommand("gof", "simulate first-choice counts from a fit");
  gof_cmd->add_option("--fit", fit_path, "results JSON of a fit")->required();
  gof_cmd->add_option("--data", in.data, "observed dataset CSV")->required();
  gof_cmd->add_option("--schema", in.schema, "schema JSON (default: from the fit)");
  gof_cmd->add_option("-S,--simulations", simulations, "number of simulated datasets")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gof_cmd->add_option("--seed", seed, "random seed")->capture_default_str();
  gof_cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  gof_cmd->add_option("--level", level, "central band for the coverage summary")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  gof_cmd->add_option("--out", out_path, "simulated counts CSV")->required();
  gof_cmd->add_option("--observed-out", observed_out, "observed counts CSV");

  CLI::App* report_cmd = app.add_subcommand("report", "print summary tables of a fit");
  report_cmd->add_option("--fit", fit_path, "results JSON of a fit")->required();
  report_cmd->add_option("--out", out_path, "also write the tables as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*fit_cmd) return cmd_fit(in, fo, out_path, out);
    if (*sk_cmd) return cmd_select_k(in, fo, k_range, sk_restarts, split_seed, grid, out_path, out);
    if (*boot_cmd) return cmd_bootstrap(in, fo, replicates, level, out_path, out);
    if (*sim_cmd) {
      return cmd_simulate(params_path, schema_path, T, levels, seed, threads, out_path,
                          schema_out);
    }
    if (*gof_cmd) {
      return cmd_gof(fit_path, in, simulations, seed, threads, level, out_path, observed_out,
                     out);
    }
    if (*report_cmd) return cmd_report(fit_path, out_path, out);
  } catch (const CLI::Error& e) {
    return app.exit(e, out, err);
  } catch (const std::exception& e) {
    err << "mmrank: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace mmrank
