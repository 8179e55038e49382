#ifndef MMRANK_IO_H_
#define MMRANK_IO_H_

#include <cstdint>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "mmrank/driver.h"
#include "mmrank/model.h"
#include "mmrank/report.h"

namespace mmrank {

inline constexpr const char* kVersion = "0.1.0";

// Input problems: malformed rows, ties, out-of-range alternatives, etc.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct VariableSchema {
  std::string id;
  std::vector<std::string> labels;  // one per alternative, presentation order

  int num_alternatives() const { return static_cast<int>(labels.size()); }
};

struct Schema {
  std::vector<VariableSchema> variables;

  std::vector<int> num_alternatives() const;
};

// {"variables": [{"id": "drugs", "alternatives": ["a", "b", ...]},
//                {"id": "aids", "num_alternatives": 5}, ...]}
Schema parse_schema(const nlohmann::json& doc);
Schema load_schema(const std::string& path);
nlohmann::json schema_to_json(const Schema& schema);
void save_schema(const Schema& schema, const std::string& path);

struct LoadedDataset {
  RankDataset data;
  int dropped_incomplete = 0;  // individuals missing a declared variable
  std::string digest;          // SHA-256 of the canonical dataset
};

// Long-format CSV with header individual_id,variable_id,rank_level,alternative.
// Alternatives are 1-based. Individuals are ordered by id (numeric ids
// numerically), so row order does not matter.
LoadedDataset parse_dataset(std::istream& in, const Schema& schema,
                            const std::string& source = "<input>");
LoadedDataset load_dataset(const std::string& path, const Schema& schema);
void save_dataset(const RankDataset& data, const Schema& schema,
                  const std::string& path);
std::string dataset_digest(const RankDataset& data, const Schema& schema);

// Rounds to 12 significant digits, the precision of every saved number.
double round_sig12(double x);

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string dataset_digest;
  nlohmann::json convergence;
  std::optional<double> wall_clock_seconds;  // omitted unless requested
};

nlohmann::json manifest_to_json(const RunManifest& manifest);

nlohmann::json params_to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& doc);

// Full results document: parameters, report tables, memberships, ELBO trace
// and manifest. Keys are sorted and numbers carry 12 significant digits.
nlohmann::json results_to_json(const FitResult& result, const Report& report,
                               const Schema& schema, const RankDataset& data,
                               const RunManifest& manifest);
void save_results(const FitResult& result, const Report& report,
                  const Schema& schema, const RankDataset& data,
                  const RunManifest& manifest, const std::string& path);

struct LoadedFit {
  Schema schema;
  ModelParams params;
  VariationalParams var;  // phi only
  std::vector<std::string> individual_ids;
  std::vector<double> elbo_trace;
  bool converged = false;
};

LoadedFit load_results(const std::string& path);

void write_json(const nlohmann::json& doc, const std::string& path);
nlohmann::json read_json(const std::string& path);

// variable,alternative,simulation_index,first_choice_count
void save_gof_table(const GoodnessOfFit& gof, const Schema& schema,
                    const std::string& path);
// variable,alternative,observed_count
void save_observed_counts(const GoodnessOfFit& gof, const Schema& schema,
                          const std::string& path);

}  // namespace mmrank

#endif  // MMRANK_IO_H_
