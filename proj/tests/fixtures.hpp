#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ben/dataset.hpp"
#include "ben/rng.hpp"

namespace fixture {

/// Dataset from literal rows; the first covariate is the outcome.
inline ben::ExpressionDataset dataset(const std::vector<std::vector<double>>& expr,
                                      const std::vector<std::pair<std::string, std::vector<double>>>& covariates) {
  ben::ExpressionDataset d;
  const std::size_t n = expr.empty() ? covariates.front().second.size() : expr.front().size();
  d.expression.resize(static_cast<Eigen::Index>(expr.size()), static_cast<Eigen::Index>(n));
  for (std::size_t g = 0; g < expr.size(); ++g) {
    d.gene_ids.push_back("g" + std::to_string(g + 1));
    for (std::size_t i = 0; i < n; ++i) d.expression(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(i)) = expr[g][i];
  }
  for (std::size_t i = 0; i < n; ++i) d.sample_ids.push_back("s" + std::to_string(i + 1));
  for (const auto& [name, v] : covariates)
    d.covariates.push_back({name, Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))});
  d.outcome = covariates.front().first;
  return d;
}

/// Random design with an intercept column and `p-1` standard normal columns.
inline Eigen::MatrixXd random_design(ben::Rng& rng, Eigen::Index n, Eigen::Index p) {
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) x(i, j) = rng.normal();
  }
  return x;
}

/// Bernoulli responses from a logistic model, redrawn until both classes occur.
inline Eigen::VectorXd logistic_response(ben::Rng& rng, const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  Eigen::VectorXd y(x.rows());
  for (;;) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) y(i) = rng.uniform() < 1.0 / (1.0 + std::exp(-x.row(i).dot(beta))) ? 1.0 : 0.0;
    if (y.sum() > 0.0 && y.sum() < static_cast<double>(y.size())) return y;
  }
}

}  // namespace fixture
