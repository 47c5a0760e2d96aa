#pragma once

// Bagged empirical-null engine: bootstrap the samples B times, fit every
// working model for every gene, estimate empirical nulls from the resulting
// z-values, keep each gene's best-AIC model and average its statistics.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ben/adjust.hpp"
#include "ben/dataset.hpp"
#include "ben/design.hpp"
#include "ben/empirical_null.hpp"
#include "ben/errors.hpp"
#include "ben/glm.hpp"
#include "ben/parallel.hpp"
#include "ben/rng.hpp"

namespace ben {

enum class NullPooling { principled, best_fit_single_null, pooled_all_models };
enum class Resampling { automatic, plain, stratified, identity };
enum class AdjustMode { adjust_then_average, average_then_adjust };

inline const char* to_string(NullPooling p) {
  switch (p) {
    case NullPooling::principled: return "principled";
    case NullPooling::best_fit_single_null: return "best_fit_single_null";
    case NullPooling::pooled_all_models: return "pooled_all_models";
  }
  return "?";
}

inline const char* to_string(Resampling r) {
  switch (r) {
    case Resampling::automatic: return "automatic";
    case Resampling::plain: return "plain";
    case Resampling::stratified: return "stratified";
    case Resampling::identity: return "identity";
  }
  return "?";
}

inline const char* to_string(AdjustMode m) {
  return m == AdjustMode::adjust_then_average ? "adjust_then_average" : "average_then_adjust";
}

struct BaggingConfig {
  std::size_t replicates = 100;
  std::vector<ModelSpec> models;
  NullMethod en_method = NullMethod::mle;
  NullPooling pooling = NullPooling::principled;
  std::uint64_t seed = 1;
  double min_converged_fraction = 0.5;
  Resampling resampling = Resampling::automatic;
  AdjustMode adjust_mode = AdjustMode::adjust_then_average;
  NullOptions null_options;
  LogisticOptions logistic;
  std::size_t threads = 0;  // 0 = $BEN_THREADS or hardware concurrency
  std::function<void(std::size_t done, std::size_t total)> progress;

  void validate() const {
    if (replicates < 1) throw ConfigError("bagging: B must be at least 1");
    if (models.empty()) throw ConfigError("bagging: model set is empty");
    if (!(min_converged_fraction > 0.0 && min_converged_fraction <= 1.0))
      throw ConfigError("bagging: min_converged_fraction must be in (0,1]");
    for (const auto& m : models) m.validate();
  }
};

/// Per-gene bagged statistics.
struct BenResult {
  std::string gene_id;
  bool missing = false;  // too few effective replicates; statistics are NaN
  double ben_p = std::numeric_limits<double>::quiet_NaN();
  double bagged_p = std::numeric_limits<double>::quiet_NaN();
  double bagged_fit = std::numeric_limits<double>::quiet_NaN();
  double bagged_z = std::numeric_limits<double>::quiet_NaN();
  double bagged_bonferroni_p = std::numeric_limits<double>::quiet_NaN();
  double bagged_bh_p = std::numeric_limits<double>::quiet_NaN();
  double ben_bonferroni_p = std::numeric_limits<double>::quiet_NaN();
  double ben_bh_p = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> model_counts;
  std::size_t n_effective = 0;
};

/// Statistics of the selected model for one gene in one replicate.
struct GeneRecord {
  bool present = false;
  std::size_t model = 0;
  double z = 0.0;
  double p = 0.0;
  double en_p = 0.0;
  double fit = 0.0;
  double bonferroni_p = 0.0;
  double bh_p = 0.0;
  double en_bonferroni_p = 0.0;
  double en_bh_p = 0.0;
};

struct BenRun {
  std::vector<BenResult> genes;
  std::size_t replicates_used = 0;
  std::size_t replicates_skipped = 0;
  std::size_t nulls_estimated = 0;
  std::vector<EmpiricalNull> nulls;  // in (replicate, model) order
  std::vector<std::string> log;
  std::size_t missing() const {
    std::size_t k = 0;
    for (const auto& g : genes) k += g.missing;
    return k;
  }
};

/// n indices drawn uniformly with replacement.
inline std::vector<std::size_t> bootstrap_resample(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
  return idx;
}

/// Resamples within each outcome class, preserving the class sizes.
inline std::vector<std::size_t> stratified_resample(const Eigen::VectorXd& labels, Rng& rng) {
  std::vector<std::size_t> zeros, ones;
  for (Eigen::Index i = 0; i < labels.size(); ++i) (labels(i) == 1.0 ? ones : zeros).push_back(static_cast<std::size_t>(i));
  std::vector<std::size_t> idx;
  idx.reserve(static_cast<std::size_t>(labels.size()));
  for (const auto* group : {&zeros, &ones})
    for (std::size_t k = 0; k < group->size(); ++k) idx.push_back((*group)[rng.below(group->size())]);
  return idx;
}

/// Index of the converged fit with minimal AIC; ties go to fewer
/// parameters, then to the earlier model. Empty when nothing converged.
template <class Fit>
std::optional<std::size_t> select_best(std::span<const Fit> fits) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& f = fits[i];
    if (!f.converged || !f.aic) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = fits[*best];
    if (*f.aic < *b.aic || (*f.aic == *b.aic && f.n_params < b.n_params)) best = i;
  }
  return best;
}

inline std::optional<std::size_t> select_best(std::span<const FitResult> fits) { return select_best<FitResult>(fits); }

/// Running arithmetic means of a gene's records, summed in record order.
class GeneAccumulator {
 public:
  explicit GeneAccumulator(std::size_t n_models = 0) : counts_(n_models, 0) {}

  void add(const GeneRecord& r) {
    if (!r.present) return;
    ++n_;
    z_ += r.z;
    p_ += r.p;
    en_p_ += r.en_p;
    fit_ += r.fit;
    bonf_ += r.bonferroni_p;
    bh_ += r.bh_p;
    en_bonf_ += r.en_bonferroni_p;
    en_bh_ += r.en_bh_p;
    if (r.model >= counts_.size()) counts_.resize(r.model + 1, 0);
    ++counts_[r.model];
  }

  std::size_t n() const { return n_; }

  BenResult result() const {
    BenResult out;
    out.n_effective = n_;
    out.model_counts = counts_;
    if (n_ == 0) {
      out.missing = true;
      return out;
    }
    const double n = static_cast<double>(n_);
    out.bagged_z = z_ / n;
    out.bagged_p = p_ / n;
    out.ben_p = en_p_ / n;
    out.bagged_fit = fit_ / n;
    out.bagged_bonferroni_p = bonf_ / n;
    out.bagged_bh_p = bh_ / n;
    out.ben_bonferroni_p = en_bonf_ / n;
    out.ben_bh_p = en_bh_ / n;
    return out;
  }

 private:
  std::size_t n_ = 0;
  double z_ = 0.0, p_ = 0.0, en_p_ = 0.0, fit_ = 0.0, bonf_ = 0.0, bh_ = 0.0, en_bonf_ = 0.0, en_bh_ = 0.0;
  std::vector<std::size_t> counts_;
};

/// Mean of each statistic over the records present; model selections tallied.
inline BenResult aggregate(std::span<const GeneRecord> records, std::size_t n_models) {
  GeneAccumulator acc(n_models);
  for (const auto& r : records) acc.add(r);
  return acc.result();
}

/// Compact per-(model, gene) fit summary kept inside a replicate.
struct FitSummary {
  bool converged = false;
  std::optional<double> aic;
  std::size_t n_params = 0;
  double z = 0.0;
  double p = 0.0;
  double fit = 0.0;
};

namespace detail {

inline FitSummary summarize(const FitResult& f) {
  FitSummary s;
  s.converged = f.converged && f.target_z.has_value();
  if (!s.converged) return s;
  s.aic = f.aic;
  s.n_params = f.n_params;
  s.z = *f.target_z;
  s.p = *f.target_p;
  s.fit = f.fit_stat;
  return s;
}

/// Fits model `spec` for every gene over `rows`.
inline std::vector<FitSummary> fit_all_genes(const ModelSpec& spec, const ExpressionDataset& data,
                                             std::span<const std::size_t> rows, const LogisticOptions& opt) {
  const std::size_t n_genes = data.n_genes();
  std::vector<FitSummary> out(n_genes);
  if (spec.family == Family::linear && !spec.uses_gene()) {
    // Shared design across genes: factor once.
    std::optional<DesignMatrix> x;
    std::optional<LinearSolver> solver;
    try {
      x.emplace(build_design(spec, data, 0, rows));
      solver.emplace(*x);
    } catch (const DegenerateDesignError&) {
      return out;
    }
    Eigen::VectorXd y(static_cast<Eigen::Index>(x->rows()));
    for (std::size_t g = 0; g < n_genes; ++g) {
      const auto gi = static_cast<Eigen::Index>(g);
      for (Eigen::Index i = 0; i < y.size(); ++i)
        y(i) = data.expression(gi, static_cast<Eigen::Index>(rows.empty() ? static_cast<std::size_t>(i) : rows[static_cast<std::size_t>(i)]));
      try {
        out[g] = summarize(solver->fit(y));
      } catch (const DegenerateDesignError&) {
      }
    }
    return out;
  }
  for (std::size_t g = 0; g < n_genes; ++g) out[g] = summarize(fit_model(spec, data, g, rows, opt));
  return out;
}

struct ReplicateOutput {
  std::vector<GeneRecord> records;
  std::vector<EmpiricalNull> nulls;
  bool skipped = false;
  std::string message;
};

inline std::vector<std::size_t> replicate_rows(const ExpressionDataset& data, const BaggingConfig& cfg, std::size_t b) {
  Resampling mode = cfg.resampling;
  if (mode == Resampling::automatic) {
    const bool logistic = std::any_of(cfg.models.begin(), cfg.models.end(),
                                      [](const ModelSpec& m) { return m.family == Family::logistic; });
    mode = logistic ? Resampling::stratified : Resampling::plain;
  }
  if (mode == Resampling::identity) {
    std::vector<std::size_t> idx(data.n_samples());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }
  Rng rng(cfg.seed, b, Purpose::bootstrap);
  if (mode == Resampling::stratified) return stratified_resample(data.outcome_values(), rng);
  return bootstrap_resample(data.n_samples(), rng);
}

inline ReplicateOutput run_replicate(const ExpressionDataset& data, const BaggingConfig& cfg, std::size_t b) {
  const std::size_t n_genes = data.n_genes();
  const std::size_t n_models = cfg.models.size();
  const auto rows = replicate_rows(data, cfg, b);

  std::vector<std::vector<FitSummary>> fits(n_models);
  for (std::size_t m = 0; m < n_models; ++m) fits[m] = fit_all_genes(cfg.models[m], data, rows, cfg.logistic);

  ReplicateOutput out;
  out.records.resize(n_genes);
  std::vector<FitSummary> per_gene(n_models);
  std::vector<std::optional<std::size_t>> best(n_genes);
  for (std::size_t g = 0; g < n_genes; ++g) {
    for (std::size_t m = 0; m < n_models; ++m) per_gene[m] = fits[m][g];
    best[g] = select_best<FitSummary>(per_gene);
  }

  auto estimate = [&](const std::vector<double>& z) { return estimate_null(z, cfg.en_method, cfg.null_options); };
  // en[m][g]: empirical-null p of gene g under model m's null.
  std::vector<std::vector<double>> en(n_models, std::vector<double>(n_genes, std::numeric_limits<double>::quiet_NaN()));
  try {
    switch (cfg.pooling) {
      case NullPooling::principled:
        for (std::size_t m = 0; m < n_models; ++m) {
          std::vector<double> z;
          for (const auto& f : fits[m])
            if (f.converged) z.push_back(f.z);
          if (z.empty()) continue;  // model never converged in this replicate
          const auto null = estimate(z);
          out.nulls.push_back(null);
          for (std::size_t g = 0; g < n_genes; ++g)
            if (fits[m][g].converged) en[m][g] = en_pvalue(fits[m][g].z, null);
        }
        break;
      case NullPooling::best_fit_single_null: {
        std::vector<double> z;
        for (std::size_t g = 0; g < n_genes; ++g)
          if (best[g]) z.push_back(fits[*best[g]][g].z);
        const auto null = estimate(z);
        out.nulls.push_back(null);
        for (std::size_t g = 0; g < n_genes; ++g)
          if (best[g]) en[*best[g]][g] = en_pvalue(fits[*best[g]][g].z, null);
        break;
      }
      case NullPooling::pooled_all_models: {
        std::vector<double> z;
        for (std::size_t m = 0; m < n_models; ++m)
          for (const auto& f : fits[m])
            if (f.converged) z.push_back(f.z);
        const auto null = estimate(z);
        out.nulls.push_back(null);
        for (std::size_t m = 0; m < n_models; ++m)
          for (std::size_t g = 0; g < n_genes; ++g)
            if (fits[m][g].converged) en[m][g] = en_pvalue(fits[m][g].z, null);
        break;
      }
    }
  } catch (const Error& e) {
    out.skipped = true;
    out.nulls.clear();
    out.message = "replicate " + std::to_string(b) + " skipped: " + e.what();
    out.records.assign(n_genes, GeneRecord{});
    return out;
  }

  std::vector<double> p, enp;
  std::vector<std::size_t> present;
  for (std::size_t g = 0; g < n_genes; ++g) {
    if (!best[g]) continue;
    const std::size_t m = *best[g];
    auto& r = out.records[g];
    r.present = true;
    r.model = m;
    r.z = fits[m][g].z;
    r.p = fits[m][g].p;
    r.en_p = en[m][g];
    r.fit = fits[m][g].fit;
    present.push_back(g);
    p.push_back(r.p);
    enp.push_back(r.en_p);
  }
  if (!present.empty()) {
    const auto bonf = bonferroni(p), bh = bh_adjust(p), en_bonf = bonferroni(enp), en_bh = bh_adjust(enp);
    for (std::size_t k = 0; k < present.size(); ++k) {
      auto& r = out.records[present[k]];
      r.bonferroni_p = bonf[k];
      r.bh_p = bh[k];
      r.en_bonferroni_p = en_bonf[k];
      r.en_bh_p = en_bh[k];
    }
  }
  return out;
}

}  // namespace detail

/// Runs the bagged empirical-null algorithm over all genes of `data`.
/// Results are bit-identical for a given (data, cfg) whatever the thread count.
inline BenRun run_ben(const ExpressionDataset& data, const BaggingConfig& cfg) {
  cfg.validate();
  for (const auto& m : cfg.models) check_spec_against(m, data);
  {
    const auto& y = data.outcome_values();
    const double ones = y.sum();
    if (ones < 2.0 || static_cast<double>(y.size()) - ones < 2.0)
      throw DataError("run_ben: need at least 2 samples per outcome class");
  }

  const std::size_t n_genes = data.n_genes();
  const std::size_t n_models = cfg.models.size();
  const std::size_t threads = resolve_threads(cfg.threads);
  std::vector<GeneAccumulator> acc(n_genes, GeneAccumulator(n_models));

  BenRun run;
  for (std::size_t start = 0; start < cfg.replicates; start += threads) {
    const std::size_t count = std::min(threads, cfg.replicates - start);
    std::vector<detail::ReplicateOutput> outs(count);
    parallel_for(count, threads, [&](std::size_t k) { outs[k] = detail::run_replicate(data, cfg, start + k); });
    for (auto& o : outs) {  // ordered merge keeps sums deterministic
      run.nulls_estimated += o.nulls.size();
      run.nulls.insert(run.nulls.end(), o.nulls.begin(), o.nulls.end());
      if (o.skipped) {
        ++run.replicates_skipped;
        run.log.push_back(o.message);
        continue;
      }
      ++run.replicates_used;
      for (std::size_t g = 0; g < n_genes; ++g) acc[g].add(o.records[g]);
    }
    if (cfg.progress) cfg.progress(start + count, cfg.replicates);
  }

  run.genes.resize(n_genes);
  for (std::size_t g = 0; g < n_genes; ++g) {
    auto r = acc[g].result();
    r.gene_id = data.gene_ids[g];
    if (static_cast<double>(r.n_effective) < cfg.min_converged_fraction * static_cast<double>(cfg.replicates)) {
      const auto counts = r.model_counts;
      const auto n_eff = r.n_effective;
      r = BenResult{};
      r.gene_id = data.gene_ids[g];
      r.missing = true;
      r.model_counts = counts;
      r.n_effective = n_eff;
    }
    run.genes[g] = std::move(r);
  }

  if (cfg.adjust_mode == AdjustMode::average_then_adjust) {
    std::vector<double> p, enp;
    std::vector<std::size_t> idx;
    for (std::size_t g = 0; g < n_genes; ++g)
      if (!run.genes[g].missing) idx.push_back(g), p.push_back(run.genes[g].bagged_p), enp.push_back(run.genes[g].ben_p);
    const auto bonf = bonferroni(p), bh = bh_adjust(p), en_bonf = bonferroni(enp), en_bh = bh_adjust(enp);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto& r = run.genes[idx[k]];
      r.bagged_bonferroni_p = bonf[k];
      r.bagged_bh_p = bh[k];
      r.ben_bonferroni_p = en_bonf[k];
      r.ben_bh_p = en_bh[k];
    }
  }
  return run;
}

/// Single-model analysis on the data as observed: per-gene z, p and fit
/// statistic, the empirical null of the z-vector, and the classical
/// adjustments. Used for the univariate comparators.
struct SingleModelAnalysis {
  std::vector<bool> converged;
  std::vector<double> z, p, fit;
  EmpiricalNull null;
  std::vector<double> en_p, bonferroni_p, bh_p, en_bonferroni_p, en_bh_p;
};

inline SingleModelAnalysis analyze_single_model(const ExpressionDataset& data, const ModelSpec& spec,
                                                NullMethod method, const NullOptions& opt = {},
                                                const LogisticOptions& logistic = {}) {
  check_spec_against(spec, data);
  const std::size_t n = data.n_genes();
  const auto fits = detail::fit_all_genes(spec, data, {}, logistic);
  SingleModelAnalysis a;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  a.converged.resize(n);
  a.z.assign(n, nan), a.p.assign(n, nan), a.fit.assign(n, nan), a.en_p.assign(n, nan);
  a.bonferroni_p.assign(n, nan), a.bh_p.assign(n, nan), a.en_bonferroni_p.assign(n, nan), a.en_bh_p.assign(n, nan);
  std::vector<double> z, p;
  std::vector<std::size_t> idx;
  for (std::size_t g = 0; g < n; ++g) {
    a.converged[g] = fits[g].converged;
    if (!fits[g].converged) continue;
    a.z[g] = fits[g].z, a.p[g] = fits[g].p, a.fit[g] = fits[g].fit;
    idx.push_back(g), z.push_back(fits[g].z), p.push_back(fits[g].p);
  }
  a.null = estimate_null(z, method, opt);
  std::vector<double> enp(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) enp[k] = en_pvalue(z[k], a.null);
  const auto bonf = bonferroni(p), bh = bh_adjust(p), en_bonf = bonferroni(enp), en_bh = bh_adjust(enp);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto g = idx[k];
    a.en_p[g] = enp[k];
    a.bonferroni_p[g] = bonf[k];
    a.bh_p[g] = bh[k];
    a.en_bonferroni_p[g] = en_bonf[k];
    a.en_bh_p[g] = en_bh[k];
  }
  return a;
}

}  // namespace ben
