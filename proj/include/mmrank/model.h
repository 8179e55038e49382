#ifndef MMRANK_MODEL_H_
#define MMRANK_MODEL_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmrank/plackett_luce.h"

namespace mmrank {

// T individuals x J variables of partial rankings. Every individual answers
// every variable with at least one ranked alternative.
//
// Each (individual, variable, level) triple is a "slot"; slots are numbered
// contiguously, individual-major, so one individual's slots form a range.
class RankDataset {
 public:
  RankDataset() = default;

  // `observations` is row-major T x J. Empty `ids` defaults to "1".."T".
  RankDataset(std::vector<int> num_alternatives,
              std::vector<Ranking> observations,
              std::vector<std::string> ids = {});

  int num_individuals() const { return static_cast<int>(ids_.size()); }
  int num_variables() const { return static_cast<int>(num_alternatives_.size()); }
  int num_alternatives(int j) const { return num_alternatives_[j]; }
  std::span<const int> num_alternatives() const { return num_alternatives_; }

  const Ranking& observation(int i, int j) const {
    return observations_[static_cast<std::size_t>(i) * num_variables() + j];
  }
  const std::string& id(int i) const { return ids_[i]; }
  std::span<const std::string> ids() const { return ids_; }

  int slot_begin(int i) const { return slot_offsets_[static_cast<std::size_t>(i) * num_variables()]; }
  int slot_end(int i) const { return slot_offsets_[static_cast<std::size_t>(i + 1) * num_variables()]; }
  int num_slots(int i) const { return slot_end(i) - slot_begin(i); }
  int slot_index(int i, int j, int n) const {
    return slot_offsets_[static_cast<std::size_t>(i) * num_variables() + j] + n;
  }
  int total_slots() const { return slot_offsets_.empty() ? 0 : slot_offsets_.back(); }

  // Ranking lengths N_ij, row-major T x J.
  std::vector<std::vector<int>> levels() const;

  // Dataset made of the listed individuals (repeats allowed), in that order.
  RankDataset select(std::span<const int> rows) const;

  bool operator==(const RankDataset& other) const {
    return num_alternatives_ == other.num_alternatives_ &&
           observations_ == other.observations_ && ids_ == other.ids_;
  }

 private:
  std::vector<int> num_alternatives_;
  std::vector<Ranking> observations_;
  std::vector<std::string> ids_;
  std::vector<int> slot_offsets_;  // T*J + 1 prefix offsets
};

// Global parameters: Dirichlet membership concentration alpha (length K) and
// one support vector per (variable, subgroup). Subgroups flagged in `fixed`
// keep their support vectors through estimation.
struct ModelParams {
  std::vector<double> alpha;
  std::vector<std::vector<SupportVector>> theta;  // theta[j][k]
  std::vector<bool> fixed;                        // size K

  int num_subgroups() const { return static_cast<int>(alpha.size()); }
  int num_variables() const { return static_cast<int>(theta.size()); }

  bool operator==(const ModelParams&) const = default;
};

// Throws std::invalid_argument on shape or value violations. Estimated
// subgroups need strictly positive weights; fixed ones may contain zeros.
void validate_params(const ModelParams& params);
void validate_params(const ModelParams& params, const RankDataset& data);

// Mean-field parameters: a Dirichlet phi per individual and a categorical
// delta over subgroups per slot.
struct VariationalParams {
  int num_subgroups = 0;
  std::vector<double> phi;    // T x K
  std::vector<double> delta;  // total_slots x K

  // phi = delta = 1/K everywhere.
  static VariationalParams uniform(const RankDataset& data, int num_subgroups);

  std::span<double> phi_row(int i) {
    return {phi.data() + static_cast<std::size_t>(i) * num_subgroups,
            static_cast<std::size_t>(num_subgroups)};
  }
  std::span<const double> phi_row(int i) const {
    return {phi.data() + static_cast<std::size_t>(i) * num_subgroups,
            static_cast<std::size_t>(num_subgroups)};
  }
  std::span<double> delta_row(int slot) {
    return {delta.data() + static_cast<std::size_t>(slot) * num_subgroups,
            static_cast<std::size_t>(num_subgroups)};
  }
  std::span<const double> delta_row(int slot) const {
    return {delta.data() + static_cast<std::size_t>(slot) * num_subgroups,
            static_cast<std::size_t>(num_subgroups)};
  }

  bool operator==(const VariationalParams&) const = default;
};

// Non-estimated subgroup with frozen support parameters.
struct FixedSubgroupSpec {
  enum class Kind { kUniform, kPresentationOrdered };
  Kind kind = Kind::kUniform;
  // Ratio between consecutive presentation-ordered weights, in (0, 1).
  double sharpness = 0.01;
};

// uniform: 1/V each. presentation-ordered: sharpness^(v-1), normalized.
SupportVector make_fixed_theta(const FixedSubgroupSpec& spec, int num_alternatives);

// Cache of ln theta_{jk a(n)} - ln(1 - sum_{c<n} theta_{jk a(c)}) for every
// slot and subgroup. Rebuild whenever theta changes.
class SelectionLogProbs {
 public:
  SelectionLogProbs(const RankDataset& data, const ModelParams& params);

  std::span<const double> slot(int s) const {
    return {values_.data() + static_cast<std::size_t>(s) * num_subgroups_,
            static_cast<std::size_t>(num_subgroups_)};
  }

 private:
  int num_subgroups_;
  std::vector<double> values_;
};

// ELBO contribution of individual i; compute_elbo is the sum over i in index
// order. Uses 0 ln 0 = 0 and returns -inf if delta puts mass on a subgroup
// that gives an observed selection zero probability.
double individual_elbo(const RankDataset& data, const ModelParams& params,
                       const VariationalParams& var,
                       const SelectionLogProbs& log_probs, int i);

double compute_elbo(const RankDataset& data, const ModelParams& params,
                    const VariationalParams& var);
double compute_elbo(const RankDataset& data, const ModelParams& params,
                    const VariationalParams& var,
                    const SelectionLogProbs& log_probs, int num_threads = 1);

// log P(X | alpha, theta) by enumerating every context assignment of every
// individual. Each assignment is weighted by its Dirichlet-multinomial
// probability. Throws std::length_error when sum_i K^(N_i) exceeds `budget`.
double exact_log_marginal(const RankDataset& data, const ModelParams& params,
                          double budget = 1e7);

struct GeneratedData {
  RankDataset data;
  std::vector<std::vector<double>> memberships;  // T x K, rows on the simplex
  std::vector<int> contexts;                     // subgroup per slot
};

// Draws T individuals from the generative model. Individual i uses random
// stream i of `seed`, so output is identical for any thread count.
GeneratedData generate_dataset(const ModelParams& params, int num_individuals,
                               std::span<const int> levels_per_variable,
                               std::uint64_t seed, int num_threads = 1);

// Same, with per-individual ranking lengths levels[i][j].
GeneratedData generate_dataset(const ModelParams& params,
                               const std::vector<std::vector<int>>& levels,
                               std::uint64_t seed, int num_threads = 1);

// Same, with memberships supplied instead of drawn from Dirichlet(alpha).
GeneratedData generate_dataset_with_memberships(
    const ModelParams& params, std::vector<std::vector<double>> memberships,
    const std::vector<std::vector<int>>& levels, std::uint64_t seed);

}  // namespace mmrank

#endif  // MMRANK_MODEL_H_
