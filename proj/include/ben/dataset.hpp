#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ben/errors.hpp"

namespace ben {

struct Covariate {
  std::string name;
  Eigen::VectorXd values;  // NaN marks a missing cell before imputation
};

/// Audit trail of preprocessing steps applied to a dataset.
struct Provenance {
  std::vector<std::string> steps;
  std::map<std::string, std::size_t> imputed;  // covariate -> cells imputed
  std::vector<std::string> excluded_genes;
};

/// Genes x samples expression matrix with per-sample covariates and a binary outcome.
struct ExpressionDataset {
  std::vector<std::string> gene_ids;
  std::vector<std::string> sample_ids;
  Eigen::MatrixXd expression;  // rows = genes, cols = samples
  std::string outcome;
  std::vector<Covariate> covariates;  // includes the outcome column
  Provenance provenance;

  std::size_t n_genes() const { return static_cast<std::size_t>(expression.rows()); }
  std::size_t n_samples() const { return static_cast<std::size_t>(expression.cols()); }

  bool has_covariate(const std::string& name) const {
    for (const auto& c : covariates)
      if (c.name == name) return true;
    return false;
  }

  const Eigen::VectorXd& covariate(const std::string& name) const {
    for (const auto& c : covariates)
      if (c.name == name) return c.values;
    throw SpecError("unknown covariate '" + name + "'");
  }

  Eigen::VectorXd& covariate(const std::string& name) {
    for (auto& c : covariates)
      if (c.name == name) return c.values;
    throw SpecError("unknown covariate '" + name + "'");
  }

  const Eigen::VectorXd& outcome_values() const { return covariate(outcome); }

  /// Checks the post-ingestion invariants: complete data, both outcome
  /// classes present, N >= 1 and n >= 4.
  void validate() const {
    if (n_genes() < 1) throw DataError("dataset has no genes");
    if (n_samples() < 4) throw DataError("dataset needs at least 4 samples");
    if (gene_ids.size() != n_genes() || sample_ids.size() != n_samples())
      throw DataError("dataset id lists do not match matrix shape");
    if (!expression.allFinite()) throw DataError("expression matrix has missing or non-finite cells");
    for (const auto& c : covariates) {
      if (static_cast<std::size_t>(c.values.size()) != n_samples())
        throw DataError("covariate '" + c.name + "' has wrong length");
      if (!c.values.allFinite()) throw DataError("covariate '" + c.name + "' has missing values");
    }
    const auto& y = outcome_values();
    bool zero = false, one = false;
    for (double v : y) {
      if (v == 0.0) zero = true;
      else if (v == 1.0) one = true;
      else throw DataError("outcome '" + outcome + "' must be coded 0/1");
    }
    if (!zero || !one) throw DataError("outcome '" + outcome + "' has a single class");
  }
};

}  // namespace ben
