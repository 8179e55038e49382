#include "mmrank/io.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <openssl/evp.h>

namespace mmrank {
namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(std::string_view(line).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::optional<long long> parse_integer(const std::string& s) {
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

// Numeric ids compare numerically and sort before non-numeric ones.
bool id_less(const std::string& a, const std::string& b) {
  const auto na = parse_integer(a);
  const auto nb = parse_integer(b);
  if (na && nb) return *na != *nb ? *na < *nb : a < b;
  if (na != nb) return static_cast<bool>(na);
  return a < b;
}

std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, text.data(), text.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &length) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-256 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

json number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return round_sig12(x);
}

json numbers(std::span<const double> xs) {
  json arr = json::array();
  for (double x : xs) arr.push_back(number(x));
  return arr;
}

double read_number(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

}  // namespace

double round_sig12(double x) {
  if (!std::isfinite(x) || x == 0.0) return x;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return std::strtod(buf, nullptr);
}

std::vector<int> Schema::num_alternatives() const {
  std::vector<int> out;
  for (const auto& v : variables) out.push_back(v.num_alternatives());
  return out;
}

Schema parse_schema(const json& doc) {
  if (!doc.is_object() || !doc.contains("variables") || !doc["variables"].is_array()) {
    throw DataError("schema: expected an object with a \"variables\" array");
  }
  Schema schema;
  std::set<std::string> seen;
  for (const json& v : doc["variables"]) {
    VariableSchema var;
    var.id = v.at("id").get<std::string>();
    if (!seen.insert(var.id).second) throw DataError("schema: duplicate variable " + var.id);
    if (v.contains("alternatives")) {
      var.labels = v["alternatives"].get<std::vector<std::string>>();
    }
    if (v.contains("num_alternatives")) {
      const int n = v["num_alternatives"].get<int>();
      if (!var.labels.empty() && static_cast<int>(var.labels.size()) != n) {
        throw DataError("schema: variable " + var.id +
                        " lists a different number of labels than num_alternatives");
      }
      if (var.labels.empty()) {
        for (int a = 1; a <= n; ++a) var.labels.push_back(std::to_string(a));
      }
    }
    if (var.labels.empty()) {
      throw DataError("schema: variable " + var.id + " declares no alternatives");
    }
    schema.variables.push_back(std::move(var));
  }
  if (schema.variables.empty()) throw DataError("schema: no variables declared");
  return schema;
}

Schema load_schema(const std::string& path) { return parse_schema(read_json(path)); }

json schema_to_json(const Schema& schema) {
  json vars = json::array();
  for (const auto& v : schema.variables) {
    vars.push_back({{"id", v.id}, {"alternatives", v.labels}});
  }
  return {{"variables", vars}};
}

void save_schema(const Schema& schema, const std::string& path) {
  write_json(schema_to_json(schema), path);
}

LoadedDataset parse_dataset(std::istream& in, const Schema& schema,
                            const std::string& source) {
  std::map<std::string, int> var_index;
  for (std::size_t j = 0; j < schema.variables.size(); ++j) {
    var_index[schema.variables[j].id] = static_cast<int>(j);
  }
  const int J = static_cast<int>(schema.variables.size());

  std::string line;
  int line_no = 0;
  std::map<std::string, int> column;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto header = split_csv(trim(line));
    for (std::size_t c = 0; c < header.size(); ++c) column[header[c]] = static_cast<int>(c);
    break;
  }
  for (const char* name : {"individual_id", "variable_id", "rank_level", "alternative"}) {
    if (!column.count(name)) {
      throw DataError(source + ": header is missing column " + name);
    }
  }
  const int c_ind = column["individual_id"];
  const int c_var = column["variable_id"];
  const int c_lvl = column["rank_level"];
  const int c_alt = column["alternative"];
  const std::size_t width = column.size();

  // individual -> variable -> level -> (alternative, line)
  std::map<std::string, std::map<int, std::map<int, std::pair<int, int>>>> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(trim(line));
    const std::string where = source + ":" + std::to_string(line_no);
    if (fields.size() != width) {
      throw DataError(where + ": expected " + std::to_string(width) + " fields, got " +
                      std::to_string(fields.size()));
    }
    const std::string& ind = fields[c_ind];
    if (ind.empty()) throw DataError(where + ": empty individual_id");
    const auto var = var_index.find(fields[c_var]);
    if (var == var_index.end()) {
      throw DataError(where + ": variable " + fields[c_var] + " is not in the schema");
    }
    const auto level = parse_integer(fields[c_lvl]);
    const auto alt = parse_integer(fields[c_alt]);
    if (!level || *level < 1) {
      throw DataError(where + ": rank_level must be a positive integer, got '" +
                      fields[c_lvl] + "'");
    }
    const int V = schema.variables[var->second].num_alternatives();
    if (!alt || *alt < 1 || *alt > V) {
      throw DataError(where + ": alternative '" + fields[c_alt] + "' outside 1.." +
                      std::to_string(V) + " for variable " + var->first);
    }
    auto& levels = records[ind][var->second];
    const auto [it, inserted] =
        levels.emplace(static_cast<int>(*level), std::make_pair(static_cast<int>(*alt), line_no));
    if (!inserted) {
      throw DataError(where + ": tie: individual " + ind + ", variable " + var->first +
                      ", rank_level " + std::to_string(*level) +
                      " already given on line " + std::to_string(it->second.second));
    }
  }

  std::vector<std::string> ids;
  for (const auto& [id, vars] : records) ids.push_back(id);
  std::sort(ids.begin(), ids.end(), id_less);

  LoadedDataset out;
  std::vector<Ranking> observations;
  std::vector<std::string> kept_ids;
  for (const std::string& id : ids) {
    const auto& vars = records[id];
    if (static_cast<int>(vars.size()) < J) {
      ++out.dropped_incomplete;
      continue;
    }
    for (int j = 0; j < J; ++j) {
      const auto& levels = vars.at(j);
      Ranking x{{}, schema.variables[j].num_alternatives()};
      std::set<int> used;
      int expected = 1;
      for (const auto& [level, alt_line] : levels) {
        if (level != expected) {
          throw DataError(source + ": individual " + id + ", variable " +
                          schema.variables[j].id + ": rank levels are not contiguous from 1 "
                          "(missing level " + std::to_string(expected) + ")");
        }
        if (!used.insert(alt_line.first).second) {
          throw DataError(source + ":" + std::to_string(alt_line.second) + ": individual " +
                          id + " ranks alternative " + std::to_string(alt_line.first) +
                          " twice for variable " + schema.variables[j].id);
        }
        x.items.push_back(alt_line.first - 1);
        ++expected;
      }
      observations.push_back(std::move(x));
    }
    kept_ids.push_back(id);
  }
  if (kept_ids.empty()) throw DataError(source + ": no complete individuals in dataset");
  out.data = RankDataset(schema.num_alternatives(), std::move(observations), std::move(kept_ids));
  out.digest = dataset_digest(out.data, schema);
  return out;
}

LoadedDataset load_dataset(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path);
  return parse_dataset(in, schema, path);
}

void save_dataset(const RankDataset& data, const Schema& schema, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "individual_id,variable_id,rank_level,alternative\n";
  for (int i = 0; i < data.num_individuals(); ++i) {
    for (int j = 0; j < data.num_variables(); ++j) {
      const Ranking& x = data.observation(i, j);
      for (int n = 0; n < x.size(); ++n) {
        out << data.id(i) << ',' << schema.variables[j].id << ',' << n + 1 << ','
            << x.items[n] + 1 << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::string dataset_digest(const RankDataset& data, const Schema& schema) {
  std::ostringstream canon;
  for (const auto& v : schema.variables) {
    canon << "variable " << v.id << ' ' << v.num_alternatives() << '\n';
  }
  for (int i = 0; i < data.num_individuals(); ++i) {
    canon << data.id(i);
    for (int j = 0; j < data.num_variables(); ++j) {
      canon << '|';
      for (int a : data.observation(i, j).items) canon << a + 1 << ',';
    }
    canon << '\n';
  }
  return sha256_hex(canon.str());
}

json manifest_to_json(const RunManifest& manifest) {
  json m = {{"command", manifest.command},
            {"config", manifest.config},
            {"seed", manifest.seed},
            {"software_version", kVersion},
            {"dataset_digest", manifest.dataset_digest},
            {"convergence", manifest.convergence}};
  if (manifest.wall_clock_seconds) m["wall_clock_seconds"] = *manifest.wall_clock_seconds;
  return m;
}

json params_to_json(const ModelParams& params) {
  json theta = json::array();
  for (const auto& per_k : params.theta) {
    json row = json::array();
    for (const auto& t : per_k) row.push_back(numbers(t));
    theta.push_back(row);
  }
  json fixed = json::array();
  for (bool f : params.fixed) fixed.push_back(f);
  return {{"alpha", numbers(params.alpha)}, {"theta", theta}, {"fixed", fixed}};
}

ModelParams params_from_json(const json& doc) {
  ModelParams p;
  p.alpha = doc.at("alpha").get<std::vector<double>>();
  p.theta = doc.at("theta").get<std::vector<std::vector<SupportVector>>>();
  if (doc.contains("fixed")) {
    for (const json& f : doc["fixed"]) p.fixed.push_back(f.get<bool>());
  } else {
    p.fixed.assign(p.alpha.size(), false);
  }
  validate_params(p);
  return p;
}

json results_to_json(const FitResult& result, const Report& report,
                     const Schema& schema, const RankDataset& data,
                     const RunManifest& manifest) {
  const int K = result.params.num_subgroups();
  json doc = params_to_json(result.params);
  doc["format"] = "mmrank-fit/1";
  doc["schema"] = schema_to_json(schema);
  doc["manifest"] = manifest_to_json(manifest);
  doc["relative_frequency"] = numbers(report.relative_frequency);
  json ratio = json::array();
  json log_ratio = json::array();
  for (std::size_t j = 0; j < report.support_ratio.size(); ++j) {
    json r = json::array();
    json lr = json::array();
    for (std::size_t k = 0; k < report.support_ratio[j].size(); ++k) {
      r.push_back(numbers(report.support_ratio[j][k]));
      lr.push_back(numbers(report.log10_support_ratio[j][k]));
    }
    ratio.push_back(r);
    log_ratio.push_back(lr);
  }
  doc["support_ratio"] = ratio;
  doc["log10_support_ratio"] = log_ratio;
  doc["elbo_trace"] = numbers(result.elbo_trace);
  doc["converged"] = result.converged;
  doc["iterations"] = result.iters;
  doc["diagnostics"] = {{"estep_not_converged", result.diagnostics.estep_not_converged},
                        {"alpha_not_converged", result.diagnostics.alpha_not_converged},
                        {"theta_not_converged", result.diagnostics.theta_not_converged},
                        {"theta_no_progress", result.diagnostics.theta_no_progress},
                        {"theta_regularized", result.diagnostics.theta_regularized},
                        {"theta_stage_rejected", result.diagnostics.theta_stage_rejected}};

  json ids = json::array();
  json phi = json::array();
  for (int i = 0; i < data.num_individuals(); ++i) {
    ids.push_back(data.id(i));
    phi.push_back(numbers(result.var.phi_row(i)));
  }
  doc["individual_ids"] = ids;
  doc["phi"] = phi;

  std::vector<double> mean(K, 0.0);
  std::vector<int> modal_counts(K, 0);
  for (std::size_t i = 0; i < report.memberships.size(); ++i) {
    for (int k = 0; k < K; ++k) mean[k] += report.memberships[i][k];
    ++modal_counts[report.modal_subgroup[i]];
  }
  for (double& m : mean) m /= std::max<std::size_t>(report.memberships.size(), 1);
  json quantiles = json::object();
  if (!report.modal_membership.empty()) {
    for (double q : {0.05, 0.25, 0.5, 0.75, 0.95}) {
      char key[16];
      std::snprintf(key, sizeof key, "q%02d", static_cast<int>(std::lround(q * 100)));
      quantiles[key] = number(empirical_quantile(report.modal_membership, q));
    }
  }
  json corr = json::array();
  for (const auto& row : report.membership_correlation) corr.push_back(numbers(row));
  doc["membership_summary"] = {{"mean", numbers(mean)},
                               {"modal_counts", modal_counts},
                               {"modal_membership_quantiles", quantiles},
                               {"correlation", corr}};
  return doc;
}

void save_results(const FitResult& result, const Report& report,
                  const Schema& schema, const RankDataset& data,
                  const RunManifest& manifest, const std::string& path) {
  write_json(results_to_json(result, report, schema, data, manifest), path);
}

LoadedFit load_results(const std::string& path) {
  const json doc = read_json(path);
  LoadedFit out;
  out.schema = parse_schema(doc.at("schema"));
  out.params = params_from_json(doc);
  const int K = out.params.num_subgroups();
  out.var.num_subgroups = K;
  for (const json& row : doc.at("phi")) {
    if (static_cast<int>(row.size()) != K) throw DataError(path + ": phi row has wrong length");
    for (const json& v : row) out.var.phi.push_back(read_number(v));
  }
  out.individual_ids = doc.at("individual_ids").get<std::vector<std::string>>();
  for (const json& v : doc.at("elbo_trace")) out.elbo_trace.push_back(read_number(v));
  out.converged = doc.value("converged", false);
  return out;
}

void write_json(const json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path);
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

void save_gof_table(const GoodnessOfFit& gof, const Schema& schema,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "variable,alternative,simulation_index,first_choice_count\n";
  for (std::size_t j = 0; j < gof.observed.size(); ++j) {
    for (std::size_t v = 0; v < gof.observed[j].size(); ++v) {
      for (std::size_t s = 0; s < gof.simulated.size(); ++s) {
        out << schema.variables[j].id << ',' << v + 1 << ',' << s + 1 << ','
            << gof.simulated[s][j][v] << '\n';
      }
    }
  }
}

void save_observed_counts(const GoodnessOfFit& gof, const Schema& schema,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "variable,alternative,observed_count\n";
  for (std::size_t j = 0; j < gof.observed.size(); ++j) {
    for (std::size_t v = 0; v < gof.observed[j].size(); ++v) {
      out << schema.variables[j].id << ',' << v + 1 << ',' << gof.observed[j][v] << '\n';
    }
  }
}

}  // namespace mmrank
