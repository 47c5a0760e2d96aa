#pragma once

// Pseudo-simulation: keep the real residual structure of null genes, add
// known covariate effects on top, and score each p-value adjustment by the
// induced genes it recovers.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ben/adjust.hpp"
#include "ben/bagging.hpp"
#include "ben/dataset.hpp"
#include "ben/design.hpp"
#include "ben/errors.hpp"
#include "ben/glm.hpp"
#include "ben/io.hpp"
#include "ben/models.hpp"
#include "ben/parallel.hpp"
#include "ben/rng.hpp"
#include "ben/stats.hpp"

namespace ben {

/// Coefficient slots of the fully interacted residual model.
enum Coef : int { kIntercept = 0, kOutcome = 1, kSex = 2, kSite = 3, kOutcomeSex = 4, kOutcomeSite = 5, kSexSite = 6 };
inline constexpr int kInteractedColumns = 7;

enum class Tier { strong = 0, moderate = 1, weak = 2 };

inline const char* to_string(Tier t) {
  switch (t) {
    case Tier::strong: return "strong";
    case Tier::moderate: return "moderate";
    case Tier::weak: return "weak";
  }
  return "?";
}

struct InjectionConfig {
  double pool_p_threshold = 0.3;
  std::size_t n_induced = 30;
  std::array<double, 3> multipliers{7.0, 4.0, 2.0};  // strong, moderate, weak
  std::vector<std::vector<int>> patterns{{kOutcome},
                                         {kSex, kOutcomeSex},
                                         {kOutcome, kOutcomeSex},
                                         {kOutcome, kOutcomeSite},
                                         {kOutcome, kOutcomeSex, kOutcomeSite}};
  std::size_t pool_size = 300;  // genes analyzed per replication; 0 = the whole null pool
  bool keep_inactive_terms = false;
  CovariateRoles roles;
  std::uint64_t seed = 1;

  std::size_t genes_per_pattern() const { return n_induced / (multipliers.size() * patterns.size()); }

  void validate() const {
    for (double m : multipliers)
      if (!(m >= 0.0)) throw ConfigError("injection multipliers must be non-negative");
    if (patterns.empty()) throw ConfigError("injection needs at least one pattern");
    const std::size_t cells = multipliers.size() * patterns.size();
    if (n_induced == 0 || n_induced % cells != 0)
      throw ConfigError("n_induced must be a positive multiple of tiers x patterns (" + std::to_string(cells) + ")");
    for (const auto& p : patterns)
      for (int c : p)
        if (c <= kIntercept || c >= kInteractedColumns) throw ConfigError("pattern references an unknown coefficient");
    if (!(pool_p_threshold >= 0.0 && pool_p_threshold <= 1.0)) throw ConfigError("pool threshold must be in [0,1]");
  }
};

/// Per-gene ground truth of an injected dataset.
struct Truth {
  bool induced = false;
  Tier tier = Tier::strong;
  int pattern = -1;
};

/// Genes whose univariate linear outcome-coefficient p-value exceeds `threshold`.
inline std::vector<std::size_t> select_null_pool(const ExpressionDataset& data, double threshold,
                                                 const CovariateRoles& roles = {}) {
  CovariateRoles r = roles;
  r.outcome = data.outcome;
  const auto spec = univariate_linear(r);
  check_spec_against(spec, data);
  const auto fits = detail::fit_all_genes(spec, data, {}, {});
  std::vector<std::size_t> pool;
  for (std::size_t g = 0; g < fits.size(); ++g)
    if (fits[g].converged && fits[g].p > threshold) pool.push_back(g);
  if (pool.empty()) throw DataError("null pool is empty at threshold " + std::to_string(threshold));
  return pool;
}

struct ResidualFit {
  std::vector<std::size_t> genes;   // dataset rows, in output order
  DesignMatrix design;              // columns actually used
  std::vector<int> slot_of_column;  // Coef slot of each design column
  std::vector<std::string> dropped; // interaction columns removed for rank deficiency
  Eigen::MatrixXd coefficients;     // genes x 7, dropped slots are 0
  Eigen::MatrixXd fitted;           // genes x samples
  Eigen::MatrixXd residuals;        // genes x samples
};

/// The fully interacted linear model (outcome, sex, site and their three
/// pairwise interactions) as a spec.
inline ModelSpec interacted_model(const std::string& outcome, const CovariateRoles& r) {
  using T = Term;
  return ModelSpec{"interacted",
                   Family::linear,
                   {T::main(outcome), T::main(r.sex), T::main(r.site), T::interaction(outcome, r.sex),
                    T::interaction(outcome, r.site), T::interaction(r.sex, r.site)},
                   {0}};
}

/// Residuals of each listed gene from the fully interacted linear model.
/// Interaction columns that make the design rank deficient are dropped
/// (last first) and reported in `dropped`.
inline ResidualFit extract_residuals(const ExpressionDataset& data, const std::vector<std::size_t>& genes,
                                     const CovariateRoles& roles = {}) {
  ModelSpec spec = interacted_model(data.outcome, roles);
  check_spec_against(spec, data);
  std::vector<int> slots{kOutcome, kSex, kSite, kOutcomeSex, kOutcomeSite, kSexSite};

  ResidualFit out;
  out.genes = genes;
  auto full_rank = [&](const ModelSpec& s) {
    try {
      out.design = build_design(s, data, 0);
      LinearSolver check(out.design);
      return true;
    } catch (const DegenerateDesignError&) {
      return false;
    }
  };
  auto drop = [&](std::size_t t) {
    out.dropped.push_back(spec.terms[t].label());
    spec.terms.erase(spec.terms.begin() + static_cast<std::ptrdiff_t>(t));
    slots.erase(slots.begin() + static_cast<std::ptrdiff_t>(t));
  };
  while (!full_rank(spec)) {
    if (spec.terms.size() <= 3) throw DegenerateDesignError("residual model is degenerate even without interactions");
    // Prefer removing the single interaction that restores full rank.
    bool fixed = false;
    for (std::size_t t = spec.terms.size(); t-- > 3;) {
      ModelSpec trial = spec;
      trial.terms.erase(trial.terms.begin() + static_cast<std::ptrdiff_t>(t));
      if (full_rank(trial)) {
        drop(t);
        fixed = true;
        break;
      }
    }
    if (!fixed) drop(spec.terms.size() - 1);
  }
  full_rank(spec);
  out.slot_of_column = {kIntercept};
  out.slot_of_column.insert(out.slot_of_column.end(), slots.begin(), slots.end());

  const auto n = static_cast<Eigen::Index>(data.n_samples());
  const auto k = static_cast<Eigen::Index>(genes.size());
  out.coefficients = Eigen::MatrixXd::Zero(k, kInteractedColumns);
  out.fitted.resize(k, n);
  out.residuals.resize(k, n);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::VectorXd y = data.expression.row(static_cast<Eigen::Index>(genes[static_cast<std::size_t>(i)])).transpose();
    // Coefficients only; a constant residual response is not an error here.
    const Eigen::VectorXd beta = out.design.x.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd fit = out.design.x * beta;
    out.fitted.row(i) = fit.transpose();
    out.residuals.row(i) = (y - fit).transpose();
    for (std::size_t c = 0; c < out.slot_of_column.size(); ++c)
      out.coefficients(i, out.slot_of_column[c]) = beta(static_cast<Eigen::Index>(c));
  }
  return out;
}

struct InjectedData {
  ExpressionDataset data;    // the residual fit's genes, in order
  std::vector<Truth> truth;  // parallel to data.gene_ids
};

/// Adds new fitted values X beta* to the residuals of randomly chosen genes.
/// For an induced gene in tier t with pattern P: beta*_0 keeps the original
/// intercept, beta*_j = multiplier_t * beta_hat_j for j in P and the other
/// coefficients are 0 (or kept when keep_inactive_terms). Every other gene
/// keeps its original row, i.e. residual + its own fitted baseline.
inline InjectedData inject_effects(const ExpressionDataset& data, const ResidualFit& fit, const InjectionConfig& cfg,
                                   Rng& rng) {
  cfg.validate();
  const std::size_t k = fit.genes.size();
  if (k < cfg.n_induced) throw ConfigError("pool has fewer genes than n_induced");
  for (const auto& pattern : cfg.patterns)
    for (int c : pattern)
      if (std::find(fit.slot_of_column.begin(), fit.slot_of_column.end(), c) == fit.slot_of_column.end())
        throw ConfigError("injection pattern references a coefficient absent from the residual model");

  InjectedData out;
  out.data.sample_ids = data.sample_ids;
  out.data.outcome = data.outcome;
  out.data.covariates = data.covariates;
  out.data.provenance = data.provenance;
  out.data.expression.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(data.n_samples()));
  out.truth.assign(k, Truth{});
  for (std::size_t i = 0; i < k; ++i) {
    out.data.gene_ids.push_back(data.gene_ids[fit.genes[i]]);
    out.data.expression.row(static_cast<Eigen::Index>(i)) = fit.fitted.row(static_cast<Eigen::Index>(i)) + fit.residuals.row(static_cast<Eigen::Index>(i));
  }

  const auto induced = rng.sample_without_replacement(k, cfg.n_induced);
  const std::size_t per_pattern = cfg.genes_per_pattern();
  const std::size_t per_tier = per_pattern * cfg.patterns.size();
  for (std::size_t j = 0; j < induced.size(); ++j) {
    const std::size_t gene = induced[j];
    const auto tier = static_cast<Tier>(j / per_tier);
    const int pattern = static_cast<int>((j % per_tier) / per_pattern);
    const double mult = cfg.multipliers[static_cast<std::size_t>(tier)];
    const auto& active = cfg.patterns[static_cast<std::size_t>(pattern)];

    Eigen::VectorXd beta(static_cast<Eigen::Index>(fit.slot_of_column.size()));
    for (std::size_t c = 0; c < fit.slot_of_column.size(); ++c) {
      const int slot = fit.slot_of_column[c];
      const double original = fit.coefficients(static_cast<Eigen::Index>(gene), slot);
      double v = 0.0;
      if (slot == kIntercept) v = original;
      else if (std::find(active.begin(), active.end(), slot) != active.end()) v = mult * original;
      else if (cfg.keep_inactive_terms) v = original;
      beta(static_cast<Eigen::Index>(c)) = v;
    }
    out.data.expression.row(static_cast<Eigen::Index>(gene)) =
        (fit.design.x * beta).transpose() + fit.residuals.row(static_cast<Eigen::Index>(gene));
    out.truth[gene] = Truth{true, tier, pattern};
  }
  out.data.provenance.steps.push_back("inject:" + std::to_string(cfg.n_induced));
  return out;
}

// ---------------------------------------------------------------------------
// Experiment grid

enum class Method {
  unadjusted,
  bonferroni,
  bh,
  en,
  en_bonferroni,
  en_bh,
  bagged,
  bagged_bonferroni,
  bagged_bh,
  ben,
  ben_bonferroni,
  ben_bh,
};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::unadjusted: return "Unadjusted";
    case Method::bonferroni: return "Bonferroni";
    case Method::bh: return "B-H";
    case Method::en: return "EN";
    case Method::en_bonferroni: return "EN Bonferroni";
    case Method::en_bh: return "EN B-H";
    case Method::bagged: return "Bagged";
    case Method::bagged_bonferroni: return "Bagged Bonferroni";
    case Method::bagged_bh: return "Bagged B-H";
    case Method::ben: return "BEN";
    case Method::ben_bonferroni: return "BEN Bonferroni";
    case Method::ben_bh: return "BEN B-H";
  }
  return "?";
}

inline std::vector<Method> all_methods() {
  return {Method::en,          Method::unadjusted,  Method::bagged,        Method::ben,
          Method::bagged_bh,   Method::en_bh,       Method::bh,            Method::en_bonferroni,
          Method::bonferroni,  Method::bagged_bonferroni, Method::ben_bh, Method::ben_bonferroni};
}

inline bool is_bagged(Method m) {
  return m == Method::bagged || m == Method::bagged_bonferroni || m == Method::bagged_bh || m == Method::ben ||
         m == Method::ben_bonferroni || m == Method::ben_bh;
}

enum class Rule { p_only, p_and_fit };

inline const char* to_string(Rule r) { return r == Rule::p_only ? "p<=alpha" : "p<=alpha&fit>=min"; }

struct ExperimentConfig {
  std::size_t replications = 25;
  double alpha = 0.05;
  double fit_min = 0.5;
  std::vector<Method> methods = all_methods();
  std::size_t threads = 0;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Discovery counts of one method under one rule in one replication.
struct Discoveries {
  std::array<std::size_t, 3> true_by_tier{0, 0, 0};
  std::size_t false_discoveries = 0;
  std::size_t true_total() const { return true_by_tier[0] + true_by_tier[1] + true_by_tier[2]; }
  std::size_t total() const { return true_total() + false_discoveries; }
  double power(std::size_t induced) const { return static_cast<double>(true_total()) / static_cast<double>(induced); }
  double fdr() const { return total() == 0 ? 0.0 : static_cast<double>(false_discoveries) / static_cast<double>(total()); }
};

struct Summary {
  double median = 0.0, q1 = 0.0, q3 = 0.0;
};

inline Summary summarize(std::vector<double> v) {
  if (v.empty()) return {std::nan(""), std::nan(""), std::nan("")};
  std::sort(v.begin(), v.end());
  return {quantile_sorted(v, 0.5), quantile_sorted(v, 0.25), quantile_sorted(v, 0.75)};
}

struct ReportRow {
  Rule rule = Rule::p_only;
  Method method = Method::unadjusted;
  std::vector<Discoveries> per_replication;
  Summary strong, moderate, weak, all, false_discoveries, power, fdr;
};

struct SimulationReport {
  std::vector<ReportRow> rows;
  std::size_t replications = 0;
  std::size_t failures = 0;
  std::size_t n_induced = 0;
  std::size_t genes_tested = 0;
  std::vector<std::string> log;

  const ReportRow& row(Rule rule, Method m) const {
    for (const auto& r : rows)
      if (r.rule == rule && r.method == m) return r;
    throw DomainError(std::string("report has no row for ") + to_string(m));
  }
};

/// Per-gene p-values and fit statistics of every method for one dataset.
struct MethodPValues {
  std::vector<double> p, fit;
};

inline MethodPValues method_values(Method m, const SingleModelAnalysis& single, const BenRun& bagged) {
  const std::size_t n = single.p.size();
  MethodPValues v;
  v.p.resize(n);
  v.fit.resize(n);
  for (std::size_t g = 0; g < n; ++g) {
    const auto& b = bagged.genes[g];
    switch (m) {
      case Method::unadjusted: v.p[g] = single.p[g]; break;
      case Method::bonferroni: v.p[g] = single.bonferroni_p[g]; break;
      case Method::bh: v.p[g] = single.bh_p[g]; break;
      case Method::en: v.p[g] = single.en_p[g]; break;
      case Method::en_bonferroni: v.p[g] = single.en_bonferroni_p[g]; break;
      case Method::en_bh: v.p[g] = single.en_bh_p[g]; break;
      case Method::bagged: v.p[g] = b.bagged_p; break;
      case Method::bagged_bonferroni: v.p[g] = b.bagged_bonferroni_p; break;
      case Method::bagged_bh: v.p[g] = b.bagged_bh_p; break;
      case Method::ben: v.p[g] = b.ben_p; break;
      case Method::ben_bonferroni: v.p[g] = b.ben_bonferroni_p; break;
      case Method::ben_bh: v.p[g] = b.ben_bh_p; break;
    }
    v.fit[g] = is_bagged(m) ? b.bagged_fit : single.fit[g];
  }
  return v;
}

inline Discoveries count_discoveries(const MethodPValues& v, const std::vector<Truth>& truth, Rule rule, double alpha,
                                     double fit_min) {
  Discoveries d;
  for (std::size_t g = 0; g < truth.size(); ++g) {
    if (std::isnan(v.p[g]) || v.p[g] > alpha) continue;  // NaN: missing result, not discovered
    if (rule == Rule::p_and_fit && !(v.fit[g] >= fit_min)) continue;
    if (truth[g].induced) ++d.true_by_tier[static_cast<std::size_t>(truth[g].tier)];
    else ++d.false_discoveries;
  }
  return d;
}

/// One replication: draw the analyzed genes from the null pool, inject,
/// normalize, then analyze with the univariate comparators and the bagged
/// engine.
struct ReplicationData {
  InjectedData injected;
  SingleModelAnalysis single;
  BenRun bagged;
};

inline ReplicationData run_replication(const ExpressionDataset& data, const std::vector<std::size_t>& pool,
                                       const InjectionConfig& inj, const BaggingConfig& bag, std::size_t r) {
  std::vector<std::size_t> genes;
  if (inj.pool_size == 0 || inj.pool_size >= pool.size()) {
    genes = pool;
  } else {
    Rng subset(inj.seed, r, Purpose::pool_subset);
    for (auto i : subset.sample_without_replacement(pool.size(), inj.pool_size)) genes.push_back(pool[i]);
    std::sort(genes.begin(), genes.end());
  }
  const auto residuals = extract_residuals(data, genes, inj.roles);
  Rng rng(inj.seed, r, Purpose::injection);
  ReplicationData out;
  out.injected = inject_effects(data, residuals, inj, rng);
  out.injected.data = normalize(std::move(out.injected.data));

  CovariateRoles roles = inj.roles;
  roles.outcome = data.outcome;
  out.single = analyze_single_model(out.injected.data, univariate_linear(roles), bag.en_method, bag.null_options);
  BaggingConfig b = bag;
  b.seed = splitmix64(bag.seed ^ splitmix64(r));
  b.threads = 1;
  b.progress = nullptr;
  out.bagged = run_ben(out.injected.data, b);
  return out;
}

/// Runs `cfg.replications` pseudo-simulations and summarizes discoveries,
/// power and FDR for every (rule, method) pair as median and IQR.
inline SimulationReport run_experiment(const ExpressionDataset& data, const InjectionConfig& inj,
                                       const BaggingConfig& bag, const ExperimentConfig& cfg) {
  inj.validate();
  bag.validate();
  const auto pool = select_null_pool(data, inj.pool_p_threshold, inj.roles);

  struct Outcome {
    bool ok = false;
    std::string error;
    std::vector<Discoveries> counts;  // [rule][method] flattened
  };
  std::vector<Outcome> outcomes(cfg.replications);
  const std::size_t threads = resolve_threads(cfg.threads);
  std::size_t done = 0;
  for (std::size_t start = 0; start < cfg.replications; start += threads) {
    const std::size_t count = std::min(threads, cfg.replications - start);
    parallel_for(count, threads, [&](std::size_t k) {
      const std::size_t r = start + k;
      auto& o = outcomes[r];
      try {
        const auto rep = run_replication(data, pool, inj, bag, r);
        for (Rule rule : {Rule::p_only, Rule::p_and_fit})
          for (Method m : cfg.methods)
            o.counts.push_back(count_discoveries(method_values(m, rep.single, rep.bagged), rep.injected.truth, rule,
                                                 cfg.alpha, cfg.fit_min));
        o.ok = true;
      } catch (const Error& e) {
        o.error = "replication " + std::to_string(r) + " failed: " + e.what();
      }
    });
    done += count;
    if (cfg.progress) cfg.progress(done, cfg.replications);
  }

  SimulationReport report;
  report.replications = cfg.replications;
  report.n_induced = inj.n_induced;
  report.genes_tested = inj.pool_size == 0 ? pool.size() : std::min(inj.pool_size, pool.size());
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++report.failures;
      report.log.push_back(o.error);
    }
  }
  std::size_t idx = 0;
  for (Rule rule : {Rule::p_only, Rule::p_and_fit}) {
    for (Method m : cfg.methods) {
      ReportRow row;
      row.rule = rule;
      row.method = m;
      std::vector<double> s, mo, w, all, f, pw, fd;
      for (const auto& o : outcomes) {
        if (!o.ok) continue;
        const auto& d = o.counts[idx];
        row.per_replication.push_back(d);
        s.push_back(static_cast<double>(d.true_by_tier[0]));
        mo.push_back(static_cast<double>(d.true_by_tier[1]));
        w.push_back(static_cast<double>(d.true_by_tier[2]));
        all.push_back(static_cast<double>(d.true_total()));
        f.push_back(static_cast<double>(d.false_discoveries));
        pw.push_back(d.power(inj.n_induced));
        fd.push_back(d.fdr());
      }
      row.strong = summarize(s), row.moderate = summarize(mo), row.weak = summarize(w);
      row.all = summarize(all), row.false_discoveries = summarize(f);
      row.power = summarize(pw), row.fdr = summarize(fd);
      report.rows.push_back(std::move(row));
      ++idx;
    }
  }
  return report;
}

/// Independently permutes each listed gene's row across samples, which
/// destroys both its association with covariates and its correlation with
/// other genes.
inline void permute_rows(ExpressionDataset& data, const std::vector<std::size_t>& genes, Rng& rng) {
  std::vector<std::size_t> perm(data.n_samples());
  for (auto g : genes) {
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    const Eigen::VectorXd row = data.expression.row(static_cast<Eigen::Index>(g)).transpose();
    for (std::size_t i = 0; i < perm.size(); ++i)
      data.expression(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(i)) = row(static_cast<Eigen::Index>(perm[i]));
  }
}

}  // namespace ben
