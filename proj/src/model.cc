#include "mmrank/model.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "mmrank/parallel.h"
#include "mmrank/special_functions.h"

namespace mmrank {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(std::span<const double> values) {
  double mx = kNegInf;
  for (double v : values) mx = std::max(mx, v);
  if (mx == kNegInf) return kNegInf;
  double total = 0.0;
  for (double v : values) total += std::exp(v - mx);
  return mx + std::log(total);
}

}  // namespace

RankDataset::RankDataset(std::vector<int> num_alternatives,
                         std::vector<Ranking> observations,
                         std::vector<std::string> ids)
    : num_alternatives_(std::move(num_alternatives)),
      observations_(std::move(observations)),
      ids_(std::move(ids)) {
  const std::size_t J = num_alternatives_.size();
  if (J == 0) throw std::invalid_argument("dataset needs at least one variable");
  if (observations_.size() % J != 0) {
    throw std::invalid_argument("observation count is not a multiple of J");
  }
  const std::size_t T = observations_.size() / J;
  if (ids_.empty()) {
    ids_.reserve(T);
    for (std::size_t i = 0; i < T; ++i) ids_.push_back(std::to_string(i + 1));
  }
  if (ids_.size() != T) throw std::invalid_argument("id count does not match T");
  for (int v : num_alternatives_) {
    if (v < 1) throw std::invalid_argument("choice sets need at least one alternative");
  }
  slot_offsets_.assign(observations_.size() + 1, 0);
  for (std::size_t o = 0; o < observations_.size(); ++o) {
    const Ranking& x = observations_[o];
    if (x.num_alternatives != num_alternatives_[o % J]) {
      throw std::invalid_argument("observation for individual " + ids_[o / J] +
                                  " has the wrong choice set size");
    }
    validate_ranking(x);
    slot_offsets_[o + 1] = slot_offsets_[o] + x.size();
  }
}

std::vector<std::vector<int>> RankDataset::levels() const {
  std::vector<std::vector<int>> out(num_individuals(),
                                    std::vector<int>(num_variables()));
  for (int i = 0; i < num_individuals(); ++i) {
    for (int j = 0; j < num_variables(); ++j) out[i][j] = observation(i, j).size();
  }
  return out;
}

RankDataset RankDataset::select(std::span<const int> rows) const {
  std::vector<Ranking> obs;
  std::vector<std::string> ids;
  obs.reserve(rows.size() * num_alternatives_.size());
  ids.reserve(rows.size());
  for (int i : rows) {
    if (i < 0 || i >= num_individuals()) throw std::out_of_range("row index");
    for (int j = 0; j < num_variables(); ++j) obs.push_back(observation(i, j));
    ids.push_back(ids_[i]);
  }
  return RankDataset(num_alternatives_, std::move(obs), std::move(ids));
}

void validate_params(const ModelParams& params) {
  const int K = params.num_subgroups();
  if (K < 1) throw std::invalid_argument("need at least one subgroup");
  if (static_cast<int>(params.fixed.size()) != K) {
    throw std::invalid_argument("fixed mask length differs from K");
  }
  for (double a : params.alpha) {
    if (!(a > 0.0) || !std::isfinite(a)) {
      throw std::invalid_argument("alpha entries must be positive and finite");
    }
  }
  if (params.theta.empty()) throw std::invalid_argument("theta has no variables");
  for (std::size_t j = 0; j < params.theta.size(); ++j) {
    if (static_cast<int>(params.theta[j].size()) != K) {
      throw std::invalid_argument("theta for variable " + std::to_string(j + 1) +
                                  " does not have K support vectors");
    }
    const std::size_t V = params.theta[j][0].size();
    for (int k = 0; k < K; ++k) {
      if (params.theta[j][k].size() != V) {
        throw std::invalid_argument("support vectors of a variable differ in length");
      }
      validate_support(params.theta[j][k], !params.fixed[k]);
    }
  }
}

void validate_params(const ModelParams& params, const RankDataset& data) {
  validate_params(params);
  if (params.num_variables() != data.num_variables()) {
    throw std::invalid_argument("parameter and data variable counts differ");
  }
  for (int j = 0; j < data.num_variables(); ++j) {
    if (static_cast<int>(params.theta[j][0].size()) != data.num_alternatives(j)) {
      throw std::invalid_argument("choice set size mismatch for variable " +
                                  std::to_string(j + 1));
    }
  }
}

VariationalParams VariationalParams::uniform(const RankDataset& data,
                                             int num_subgroups) {
  VariationalParams var;
  var.num_subgroups = num_subgroups;
  const double u = 1.0 / num_subgroups;
  var.phi.assign(static_cast<std::size_t>(data.num_individuals()) * num_subgroups, u);
  var.delta.assign(static_cast<std::size_t>(data.total_slots()) * num_subgroups, u);
  return var;
}

SupportVector make_fixed_theta(const FixedSubgroupSpec& spec, int num_alternatives) {
  if (num_alternatives < 2) {
    throw std::invalid_argument("fixed subgroups need at least two alternatives");
  }
  SupportVector theta(num_alternatives);
  if (spec.kind == FixedSubgroupSpec::Kind::kUniform) {
    std::fill(theta.begin(), theta.end(), 1.0 / num_alternatives);
    return theta;
  }
  if (!(spec.sharpness > 0.0 && spec.sharpness < 1.0)) {
    throw std::invalid_argument("sharpness must lie in (0, 1), got " +
                                std::to_string(spec.sharpness));
  }
  double w = 1.0;
  double total = 0.0;
  for (int v = 0; v < num_alternatives; ++v) {
    theta[v] = w;
    total += w;
    w *= spec.sharpness;
  }
  for (double& t : theta) t /= total;
  return theta;
}

SelectionLogProbs::SelectionLogProbs(const RankDataset& data,
                                     const ModelParams& params)
    : num_subgroups_(params.num_subgroups()),
      values_(static_cast<std::size_t>(data.total_slots()) * num_subgroups_) {
  std::vector<double> levels;
  for (int i = 0; i < data.num_individuals(); ++i) {
    for (int j = 0; j < data.num_variables(); ++j) {
      const Ranking& x = data.observation(i, j);
      levels.resize(x.items.size());
      const int first = data.slot_index(i, j, 0);
      for (int k = 0; k < num_subgroups_; ++k) {
        pl_level_log_probs(params.theta[j][k], x, levels);
        for (int n = 0; n < x.size(); ++n) {
          values_[static_cast<std::size_t>(first + n) * num_subgroups_ + k] = levels[n];
        }
      }
    }
  }
}

double individual_elbo(const RankDataset& data, const ModelParams& params,
                       const VariationalParams& var,
                       const SelectionLogProbs& log_probs, int i) {
  const int K = params.num_subgroups();
  const auto phi = var.phi_row(i);
  double alpha_sum = 0.0;
  double phi_sum = 0.0;
  for (int k = 0; k < K; ++k) {
    alpha_sum += params.alpha[k];
    phi_sum += phi[k];
  }
  const double digamma_phi_sum = digamma(phi_sum);
  std::vector<double> expected_log_lambda(K);
  for (int k = 0; k < K; ++k) {
    expected_log_lambda[k] = digamma(phi[k]) - digamma_phi_sum;
  }

  // E_Q ln Dir(lambda | alpha)
  double elbo = log_gamma(alpha_sum);
  for (int k = 0; k < K; ++k) {
    elbo += (params.alpha[k] - 1.0) * expected_log_lambda[k] -
            log_gamma(params.alpha[k]);
  }
  // Context and Plackett-Luce expectations, minus the categorical entropy.
  for (int s = data.slot_begin(i); s < data.slot_end(i); ++s) {
    const auto delta = var.delta_row(s);
    const auto logp = log_probs.slot(s);
    for (int k = 0; k < K; ++k) {
      const double d = delta[k];
      if (d > 0.0) elbo += d * (expected_log_lambda[k] + logp[k] - std::log(d));
    }
  }
  // -E_Q ln Dir(lambda | phi)
  elbo -= log_gamma(phi_sum);
  for (int k = 0; k < K; ++k) {
    elbo += log_gamma(phi[k]) - (phi[k] - 1.0) * expected_log_lambda[k];
  }
  return elbo;
}

double compute_elbo(const RankDataset& data, const ModelParams& params,
                    const VariationalParams& var) {
  return compute_elbo(data, params, var, SelectionLogProbs(data, params));
}

double compute_elbo(const RankDataset& data, const ModelParams& params,
                    const VariationalParams& var,
                    const SelectionLogProbs& log_probs, int num_threads) {
  std::vector<double> parts(data.num_individuals());
  parallel_for(data.num_individuals(), num_threads, [&](int i) {
    parts[i] = individual_elbo(data, params, var, log_probs, i);
  });
  double total = 0.0;
  for (double p : parts) total += p;
  return total;
}

double exact_log_marginal(const RankDataset& data, const ModelParams& params,
                          double budget) {
  validate_params(params, data);
  const int K = params.num_subgroups();
  double work = 0.0;
  for (int i = 0; i < data.num_individuals(); ++i) {
    work += std::pow(static_cast<double>(K), data.num_slots(i));
  }
  if (work > budget) {
    throw std::length_error("exact_log_marginal: " + std::to_string(work) +
                            " configurations exceed the enumeration budget");
  }
  const SelectionLogProbs log_probs(data, params);
  double alpha_sum = 0.0;
  for (double a : params.alpha) alpha_sum += a;

  double total = 0.0;
  std::vector<double> terms;
  for (int i = 0; i < data.num_individuals(); ++i) {
    const int first = data.slot_begin(i);
    const int n_slots = data.num_slots(i);
    const double norm = log_gamma(alpha_sum) - log_gamma(alpha_sum + n_slots);
    std::vector<int> z(n_slots, 0);
    std::vector<int> counts(K, 0);
    terms.clear();
    while (true) {
      std::fill(counts.begin(), counts.end(), 0);
      double log_w = norm;
      for (int s = 0; s < n_slots; ++s) {
        ++counts[z[s]];
        log_w += log_probs.slot(first + s)[z[s]];
      }
      for (int k = 0; k < K; ++k) {
        log_w += log_gamma(params.alpha[k] + counts[k]) - log_gamma(params.alpha[k]);
      }
      terms.push_back(log_w);
      int pos = 0;
      while (pos < n_slots && ++z[pos] == K) z[pos++] = 0;
      if (pos == n_slots) break;
    }
    total += log_sum_exp(terms);
  }
  return total;
}

GeneratedData generate_dataset(const ModelParams& params, int num_individuals,
                               std::span<const int> levels_per_variable,
                               std::uint64_t seed, int num_threads) {
  std::vector<std::vector<int>> levels(
      num_individuals,
      std::vector<int>(levels_per_variable.begin(), levels_per_variable.end()));
  return generate_dataset(params, levels, seed, num_threads);
}

namespace {

void draw_individual(const ModelParams& params, std::span<const int> levels,
                     std::span<const double> membership, Rng& rng,
                     std::span<Ranking> out, std::vector<int>& contexts) {
  const int J = params.num_variables();
  for (int j = 0; j < J; ++j) {
    const int V = static_cast<int>(params.theta[j][0].size());
    if (levels[j] < 1 || levels[j] > V) {
      throw std::invalid_argument("ranking length outside [1, V] for variable " +
                                  std::to_string(j + 1));
    }
    Ranking x{{}, V};
    std::vector<char> taken(V, 0);
    for (int n = 0; n < levels[j]; ++n) {
      const int z = draw_categorical(membership, rng);
      const int a = pl_draw_next(params.theta[j][z], taken, rng);
      taken[a] = 1;
      x.items.push_back(a);
      contexts.push_back(z);
    }
    out[j] = std::move(x);
  }
}

GeneratedData assemble(const ModelParams& params,
                       std::vector<std::vector<double>> memberships,
                       std::vector<std::vector<Ranking>> rows,
                       std::vector<std::vector<int>> contexts) {
  std::vector<int> num_alternatives;
  for (const auto& thetas : params.theta) {
    num_alternatives.push_back(static_cast<int>(thetas[0].size()));
  }
  std::vector<Ranking> obs;
  std::vector<int> flat_contexts;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (auto& x : rows[i]) obs.push_back(std::move(x));
    flat_contexts.insert(flat_contexts.end(), contexts[i].begin(), contexts[i].end());
  }
  return {RankDataset(std::move(num_alternatives), std::move(obs)),
          std::move(memberships), std::move(flat_contexts)};
}

}  // namespace

GeneratedData generate_dataset(const ModelParams& params,
                               const std::vector<std::vector<int>>& levels,
                               std::uint64_t seed, int num_threads) {
  validate_params(params);
  const int T = static_cast<int>(levels.size());
  const int J = params.num_variables();
  std::vector<std::vector<double>> memberships(T);
  std::vector<std::vector<Ranking>> rows(T, std::vector<Ranking>(J));
  std::vector<std::vector<int>> contexts(T);
  parallel_for(T, num_threads, [&](int i) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(i));
    memberships[i] = draw_dirichlet(params.alpha, rng);
    draw_individual(params, levels[i], memberships[i], rng, rows[i], contexts[i]);
  });
  return assemble(params, std::move(memberships), std::move(rows), std::move(contexts));
}

GeneratedData generate_dataset_with_memberships(
    const ModelParams& params, std::vector<std::vector<double>> memberships,
    const std::vector<std::vector<int>>& levels, std::uint64_t seed) {
  validate_params(params);
  if (memberships.size() != levels.size()) {
    throw std::invalid_argument("one membership row per individual required");
  }
  const int T = static_cast<int>(levels.size());
  const int J = params.num_variables();
  std::vector<std::vector<Ranking>> rows(T, std::vector<Ranking>(J));
  std::vector<std::vector<int>> contexts(T);
  for (int i = 0; i < T; ++i) {
    Rng rng = make_rng(seed, static_cast<std::uint64_t>(i));
    draw_individual(params, levels[i], memberships[i], rng, rows[i], contexts[i]);
  }
  return assemble(params, std::move(memberships), std::move(rows), std::move(contexts));
}

}  // namespace mmrank
