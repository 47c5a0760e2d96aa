#pragma once

// Run configuration: a plain `key = value` file (`#` comments, repeatable
// `model` keys) that command-line flags override.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ben/bagging.hpp"
#include "ben/errors.hpp"
#include "ben/io.hpp"
#include "ben/models.hpp"
#include "ben/pseudo_sim.hpp"

namespace ben {

struct RunConfig {
  std::string expression_path;
  std::string covariate_path;
  CovariateRoles roles;
  std::string model_set = "logistic";  // linear | logistic | univariate_linear | univariate_logistic | custom
  std::vector<std::string> models;     // formulas, used when model_set = custom
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  NullMethod en_method = NullMethod::mle;
  NullPooling pooling = NullPooling::principled;
  Resampling resampling = Resampling::automatic;
  AdjustMode adjust_mode = AdjustMode::adjust_then_average;
  double central_coverage = 0.80;
  double min_converged_fraction = 0.5;
  std::size_t threads = 0;
  bool impute = true;
  std::size_t impute_k = 5;
  bool normalize = true;
  NormalizeOrder normalize_order = NormalizeOrder::samples_then_genes;
  std::size_t exclude_extreme = 0;
  double p_max = 0.1;
  double fit_min = 0.9;
  std::string output_dir = ".";
  std::string prefix = "ben";
  // pseudo-simulation
  double pool_threshold = 0.3;
  std::size_t n_induced = 30;
  std::vector<double> multipliers{7.0, 4.0, 2.0};
  std::size_t pool_size = 300;
  bool keep_inactive = false;
  std::size_t replications = 25;

  /// Every setting as `key = value`, in key order. This is also the input
  /// of the config hash.
  std::map<std::string, std::string> entries() const;
  void set(const std::string& key, const std::string& value);
  void validate(bool need_files = true) const;

  std::vector<ModelSpec> model_specs() const {
    CovariateRoles r = roles;
    if (model_set == "linear") return linear_model_set(r);
    if (model_set == "logistic") return logistic_model_set(r);
    if (model_set == "univariate_linear") return {univariate_linear(r)};
    if (model_set == "univariate_logistic") return {univariate_logistic(r)};
    if (model_set == "custom") {
      if (models.empty()) throw ConfigError("model_set = custom needs at least one 'model' line");
      std::vector<ModelSpec> out;
      for (std::size_t i = 0; i < models.size(); ++i) out.push_back(parse_model(models[i], "m" + std::to_string(i + 1)));
      return out;
    }
    throw ConfigError("unknown model_set '" + model_set + "'");
  }

  /// Univariate model of the same family as the model set; the raw
  /// comparator in reports.
  ModelSpec comparator() const {
    const auto specs = model_specs();
    return specs.front().family == Family::logistic ? univariate_logistic(roles) : univariate_linear(roles);
  }

  BaggingConfig bagging() const {
    BaggingConfig b;
    b.replicates = replicates;
    b.models = model_specs();
    b.en_method = en_method;
    b.pooling = pooling;
    b.seed = seed;
    b.min_converged_fraction = min_converged_fraction;
    b.resampling = resampling;
    b.adjust_mode = adjust_mode;
    b.null_options.central_coverage = central_coverage;
    b.threads = threads;
    return b;
  }

  InjectionConfig injection() const {
    InjectionConfig c;
    c.pool_p_threshold = pool_threshold;
    c.n_induced = n_induced;
    if (multipliers.size() != 3) throw ConfigError("multipliers needs exactly three values");
    std::copy(multipliers.begin(), multipliers.end(), c.multipliers.begin());
    c.pool_size = pool_size;
    c.keep_inactive_terms = keep_inactive;
    c.roles = roles;
    c.seed = seed;
    return c;
  }
};

namespace detail {

template <class E>
E parse_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, value] : options)
    if (v == name) return value;
  std::string msg = "bad value '" + v + "' for " + key + " (expected";
  for (const auto& o : options) msg += std::string(" ") + o.first;
  throw ConfigError(msg + ")");
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  if (!csv::parse_double(v, out)) throw ConfigError("bad number '" + v + "' for " + key);
  return out;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto out = std::stoull(v, &used);
    if (used != v.size() || v.front() == '-') throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("bad non-negative integer '" + v + "' for " + key);
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean '" + v + "' for " + key);
}

inline std::string join_reals(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + csv::format_double(v[i]);
  return s;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using namespace detail;
  const std::string& v = value;
  if (key == "expression") expression_path = v;
  else if (key == "covariates") covariate_path = v;
  else if (key == "outcome") roles.outcome = v;
  else if (key == "site") roles.site = v;
  else if (key == "sex") roles.sex = v;
  else if (key == "model_set") model_set = v;
  else if (key == "model") models.push_back(v);
  else if (key == "replicates") replicates = parse_count(key, v);
  else if (key == "seed") seed = parse_count(key, v);
  else if (key == "en_method")
    en_method = parse_enum<NullMethod>(key, v, {{"mle", NullMethod::mle}, {"central_matching", NullMethod::central_matching},
                                                {"theoretical", NullMethod::theoretical}});
  else if (key == "pooling")
    pooling = parse_enum<NullPooling>(key, v, {{"principled", NullPooling::principled},
                                               {"best_fit_single_null", NullPooling::best_fit_single_null},
                                               {"pooled_all_models", NullPooling::pooled_all_models}});
  else if (key == "resampling")
    resampling = parse_enum<Resampling>(key, v, {{"automatic", Resampling::automatic}, {"plain", Resampling::plain},
                                                 {"stratified", Resampling::stratified}, {"identity", Resampling::identity}});
  else if (key == "adjust_mode")
    adjust_mode = parse_enum<AdjustMode>(key, v, {{"adjust_then_average", AdjustMode::adjust_then_average},
                                                  {"average_then_adjust", AdjustMode::average_then_adjust}});
  else if (key == "central_coverage") central_coverage = parse_real(key, v);
  else if (key == "min_converged_fraction") min_converged_fraction = parse_real(key, v);
  else if (key == "threads") threads = parse_count(key, v);
  else if (key == "impute") impute = parse_bool(key, v);
  else if (key == "impute_k") impute_k = parse_count(key, v);
  else if (key == "normalize") normalize = parse_bool(key, v);
  else if (key == "normalize_order")
    normalize_order = parse_enum<NormalizeOrder>(key, v, {{"samples_then_genes", NormalizeOrder::samples_then_genes},
                                                          {"genes_then_samples", NormalizeOrder::genes_then_samples}});
  else if (key == "exclude_extreme") exclude_extreme = parse_count(key, v);
  else if (key == "p_max") p_max = parse_real(key, v);
  else if (key == "fit_min") fit_min = parse_real(key, v);
  else if (key == "output_dir") output_dir = v;
  else if (key == "prefix") prefix = v;
  else if (key == "pool_threshold") pool_threshold = parse_real(key, v);
  else if (key == "n_induced") n_induced = parse_count(key, v);
  else if (key == "multipliers") {
    multipliers.clear();
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) multipliers.push_back(parse_real(key, detail::trim(item)));
  } else if (key == "pool_size") pool_size = parse_count(key, v);
  else if (key == "keep_inactive") keep_inactive = parse_bool(key, v);
  else if (key == "replications") replications = parse_count(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline std::map<std::string, std::string> RunConfig::entries() const {
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  std::map<std::string, std::string> e{
      {"expression", expression_path},
      {"covariates", covariate_path},
      {"outcome", roles.outcome},
      {"site", roles.site},
      {"sex", roles.sex},
      {"model_set", model_set},
      {"replicates", std::to_string(replicates)},
      {"seed", std::to_string(seed)},
      {"en_method", to_string(en_method)},
      {"pooling", to_string(pooling)},
      {"resampling", to_string(resampling)},
      {"adjust_mode", to_string(adjust_mode)},
      {"central_coverage", csv::format_double(central_coverage)},
      {"min_converged_fraction", csv::format_double(min_converged_fraction)},
      {"impute", b(impute)},
      {"impute_k", std::to_string(impute_k)},
      {"normalize", b(normalize)},
      {"normalize_order", normalize_order == NormalizeOrder::samples_then_genes ? "samples_then_genes" : "genes_then_samples"},
      {"exclude_extreme", std::to_string(exclude_extreme)},
      {"p_max", csv::format_double(p_max)},
      {"fit_min", csv::format_double(fit_min)},
      {"pool_threshold", csv::format_double(pool_threshold)},
      {"n_induced", std::to_string(n_induced)},
      {"multipliers", detail::join_reals(multipliers)},
      {"pool_size", std::to_string(pool_size)},
      {"keep_inactive", b(keep_inactive)},
      {"replications", std::to_string(replications)},
  };
  // Thread count and output location do not change results.
  for (std::size_t i = 0; i < models.size(); ++i) e["model." + std::to_string(i + 1)] = models[i];
  return e;
}

inline void RunConfig::validate(bool need_files) const {
  if (need_files) {
    for (const auto& p : {expression_path, covariate_path}) {
      if (p.empty()) throw ConfigError("expression and covariates paths are required");
      if (!std::filesystem::exists(p)) throw ConfigError("file not found: " + p);
    }
  }
  for (double t : {p_max, fit_min, pool_threshold, central_coverage})
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("thresholds must lie in [0,1]");
  if (impute_k < 1) throw ConfigError("impute_k must be at least 1");
  bagging().validate();
}

inline RunConfig load_config(const std::string& path, RunConfig cfg = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    // model lines carry their own '=' for the id
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

/// 64-bit FNV-1a over the canonical `key=value\n` listing.
inline std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : cfg.entries())
    for (char c : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace ben
