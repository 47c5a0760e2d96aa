#pragma once

// Synthetic cohorts shaped like a two-class leukemia array study: 72
// samples, unbalanced classes, a two-level tissue site, partly missing sex,
// correlated genes and per-array intensity effects.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ben/dataset.hpp"
#include "ben/errors.hpp"
#include "ben/models.hpp"
#include "ben/rng.hpp"

namespace ben {

struct SyntheticConfig {
  std::size_t n_genes = 1000;
  std::size_t n_class0 = 47;
  std::size_t n_class1 = 25;
  std::size_t n_site1 = 10;
  std::size_t n_sex_missing = 23;
  double de_fraction = 0.3;
  double de_effect_sd = 1.0;
  double covariate_effect_sd = 0.25;  // sex and site effects, all genes
  std::size_t n_factors = 4;
  double factor_sd = 0.6;
  double array_offset_sd = 0.3;
  double array_scale_sd = 0.1;
  double baseline_sd = 1.0;
  std::uint64_t seed = 1;
  CovariateRoles roles;
};

inline std::string padded_id(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i + 1);
  return buf;
}

/// Draws a cohort. The outcome is the covariate named `roles.outcome`;
/// sex has `n_sex_missing` NaN cells. Expression is on the log scale and not
/// normalized.
inline ExpressionDataset make_cohort(const SyntheticConfig& cfg) {
  const std::size_t n = cfg.n_class0 + cfg.n_class1;
  if (cfg.n_class0 == 0 || cfg.n_class1 == 0) throw ConfigError("both classes need samples");
  if (cfg.n_site1 > n || cfg.n_sex_missing > n) throw ConfigError("covariate counts exceed the sample count");
  if (cfg.n_genes == 0) throw ConfigError("n_genes must be positive");
  Rng rng(cfg.seed, 0, Purpose::synthetic);

  ExpressionDataset d;
  d.outcome = cfg.roles.outcome;
  for (std::size_t i = 0; i < n; ++i) d.sample_ids.push_back(padded_id("S", i, 2));
  for (std::size_t g = 0; g < cfg.n_genes; ++g) d.gene_ids.push_back(padded_id("G", g, 5));

  Eigen::VectorXd outcome(static_cast<Eigen::Index>(n)), site = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)),
      sex(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) outcome(static_cast<Eigen::Index>(i)) = i < cfg.n_class0 ? 0.0 : 1.0;
  for (auto i : rng.sample_without_replacement(n, cfg.n_site1)) site(static_cast<Eigen::Index>(i)) = 1.0;
  for (std::size_t i = 0; i < n; ++i) sex(static_cast<Eigen::Index>(i)) = rng.uniform() < 0.5 ? 0.0 : 1.0;

  const auto genes = static_cast<Eigen::Index>(cfg.n_genes);
  const auto samples = static_cast<Eigen::Index>(n);
  const auto k = static_cast<Eigen::Index>(cfg.n_factors);
  Eigen::MatrixXd loadings(genes, k), scores(k, samples);
  for (Eigen::Index g = 0; g < genes; ++g)
    for (Eigen::Index f = 0; f < k; ++f) loadings(g, f) = rng.normal(0.0, cfg.factor_sd);
  for (Eigen::Index f = 0; f < k; ++f)
    for (Eigen::Index i = 0; i < samples; ++i) scores(f, i) = rng.normal();

  Eigen::VectorXd offset(samples), scale(samples);
  for (Eigen::Index i = 0; i < samples; ++i) {
    offset(i) = rng.normal(0.0, cfg.array_offset_sd);
    scale(i) = std::exp(rng.normal(0.0, cfg.array_scale_sd));
  }

  const auto de = rng.sample_without_replacement(cfg.n_genes, static_cast<std::size_t>(std::lround(cfg.de_fraction * static_cast<double>(cfg.n_genes))));
  std::vector<double> de_effect(cfg.n_genes, 0.0);
  for (auto g : de) de_effect[g] = rng.normal(0.0, cfg.de_effect_sd);

  d.expression.resize(genes, samples);
  for (Eigen::Index g = 0; g < genes; ++g) {
    const double base = 6.0 + rng.normal(0.0, cfg.baseline_sd);
    const double b_sex = rng.normal(0.0, cfg.covariate_effect_sd);
    const double b_site = rng.normal(0.0, cfg.covariate_effect_sd);
    const double noise = std::exp(rng.normal(-0.3, 0.25));
    for (Eigen::Index i = 0; i < samples; ++i) {
      const double signal = base + de_effect[static_cast<std::size_t>(g)] * outcome(i) + b_sex * sex(i) +
                            b_site * site(i) + loadings.row(g).dot(scores.col(i)) + rng.normal(0.0, noise);
      d.expression(g, i) = offset(i) + scale(i) * signal;
    }
  }

  for (auto i : rng.sample_without_replacement(n, cfg.n_sex_missing)) sex(static_cast<Eigen::Index>(i)) = std::nan("");
  d.covariates.push_back({cfg.roles.outcome, outcome});
  d.covariates.push_back({cfg.roles.site, site});
  d.covariates.push_back({cfg.roles.sex, sex});
  d.provenance.steps.push_back("synthetic:seed=" + std::to_string(cfg.seed));
  return d;
}

/// Complete-case null cohort: independent N(0,1) expression, a balanced
/// random outcome and no other covariates.
inline ExpressionDataset make_null_cohort(std::size_t n_genes, std::size_t n_samples, std::uint64_t seed,
                                          const std::string& outcome = "outcome") {
  if (n_samples < 4) throw ConfigError("null cohort needs at least 4 samples");
  Rng rng(seed, 1, Purpose::synthetic);
  ExpressionDataset d;
  d.outcome = outcome;
  for (std::size_t i = 0; i < n_samples; ++i) d.sample_ids.push_back(padded_id("S", i, 3));
  for (std::size_t g = 0; g < n_genes; ++g) d.gene_ids.push_back(padded_id("G", g, 5));
  d.expression.resize(static_cast<Eigen::Index>(n_genes), static_cast<Eigen::Index>(n_samples));
  for (Eigen::Index g = 0; g < d.expression.rows(); ++g)
    for (Eigen::Index i = 0; i < d.expression.cols(); ++i) d.expression(g, i) = rng.normal();
  Eigen::VectorXd y(static_cast<Eigen::Index>(n_samples));
  for (std::size_t i = 0; i < n_samples; ++i) y(static_cast<Eigen::Index>(i)) = i < n_samples / 2 ? 0.0 : 1.0;
  std::vector<std::size_t> perm(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) perm[i] = i;
  rng.shuffle(perm);
  Eigen::VectorXd shuffled(y.size());
  for (std::size_t i = 0; i < n_samples; ++i) shuffled(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(perm[i]));
  d.covariates.push_back({outcome, shuffled});
  return d;
}

}  // namespace ben
