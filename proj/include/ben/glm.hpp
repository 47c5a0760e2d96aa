#pragma once

// Working-model fits: ordinary least squares and IRLS logistic regression,
// with Wald / chunk tests on the target columns, AIC and R^2 / AUC.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ben/design.hpp"
#include "ben/errors.hpp"
#include "ben/stats.hpp"

namespace ben {

enum class FitStatus { ok, degenerate, single_class, not_converged, separated };

inline const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::ok: return "ok";
    case FitStatus::degenerate: return "degenerate";
    case FitStatus::single_class: return "single_class";
    case FitStatus::not_converged: return "not_converged";
    case FitStatus::separated: return "separated";
  }
  return "?";
}

struct FitResult {
  std::string gene_id;
  std::string model_id;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;
  std::optional<double> target_z;
  std::optional<double> target_p;
  std::optional<double> aic;
  double fit_stat = std::numeric_limits<double>::quiet_NaN();  // R^2 or AUC
  double loglik = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_params = 0;  // regression coefficients incl. intercept
  bool converged = false;
  FitStatus status = FitStatus::not_converged;
  int iterations = 0;
};

inline double aic(double loglik, std::size_t n_params) {
  return -2.0 * loglik + 2.0 * static_cast<double>(n_params);
}

/// Mann-Whitney concordance sum U (ties count 1/2) for label-1 vs label-0 scores.
inline double concordance_u(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw DomainError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
  double rank_sum = 0.0;
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1.0) rank_sum += mid;
    i = j + 1;
  }
  for (double l : labels) n1 += (l == 1.0);
  const std::size_t n0 = n - n1;
  if (n1 == 0 || n0 == 0) throw SingleClassError("auc: labels contain a single class");
  return rank_sum - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1);
}

inline double auc(std::span<const double> scores, std::span<const double> labels) {
  const double u = concordance_u(scores, labels);
  std::size_t n1 = 0;
  for (double l : labels) n1 += (l == 1.0);
  return u / (static_cast<double>(n1) * static_cast<double>(labels.size() - n1));
}

/// Joint Wald test that the coefficients in `columns` are all zero.
/// Returns the upper-tail chi-square p-value with |columns| df.
inline double chunk_test(const FitResult& fit, std::span<const std::size_t> columns) {
  if (columns.empty()) throw DomainError("chunk_test: empty target block");
  const auto k = static_cast<Eigen::Index>(columns.size());
  Eigen::VectorXd b(k);
  Eigen::MatrixXd v(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto ci = static_cast<Eigen::Index>(columns[static_cast<std::size_t>(i)]);
    if (ci >= fit.coefficients.size() || ci >= fit.covariance.rows())
      throw DomainError("chunk_test: column outside the coefficient vector");
    b(i) = fit.coefficients(ci);
    for (Eigen::Index j = 0; j < k; ++j)
      v(i, j) = fit.covariance(ci, static_cast<Eigen::Index>(columns[static_cast<std::size_t>(j)]));
  }
  if (k == 1) {
    if (!(v(0, 0) > 0.0)) throw DomainError("chunk_test: singular covariance block");
    return two_sided_p(b(0) / std::sqrt(v(0, 0)));
  }
  Eigen::LLT<Eigen::MatrixXd> llt(v);
  if (llt.info() != Eigen::Success) throw DomainError("chunk_test: singular covariance block");
  const double stat = b.dot(llt.solve(b));
  return chisq_sf(stat, static_cast<double>(k));
}

namespace detail {

/// Fills target_z / target_p from the design's target columns: a signed Wald
/// z for a single column, Phi^{-1}(chunk p) for a block.
inline void set_target(FitResult& fit, const DesignMatrix& x) {
  if (x.target_columns.empty()) return;
  if (x.target_columns.size() == 1) {
    const auto c = static_cast<Eigen::Index>(x.target_columns.front());
    const double se = std::sqrt(fit.covariance(c, c));
    const double beta = fit.coefficients(c);
    double z;
    if (se > 0.0) z = beta / se;
    else z = beta == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), beta);
    fit.target_z = z;
    fit.target_p = two_sided_p(z);
  } else {
    const double p = chunk_test(fit, x.target_columns);
    fit.target_p = p;
    fit.target_z = p_to_z(p);
  }
}

}  // namespace detail

/// Least-squares fit for one design shared by many responses. The QR
/// factorization is computed once; `fit` is then cheap per response.
class LinearSolver {
 public:
  explicit LinearSolver(const DesignMatrix& x) : design_(&x), qr_(x.x) {
    const auto n = x.x.rows(), p = x.x.cols();
    if (n <= p) throw DegenerateDesignError("fit_linear: need more rows than columns");
    qr_.setThreshold(1e-10);
    if (qr_.rank() < p) throw DegenerateDesignError("fit_linear: rank-deficient design");
    const Eigen::MatrixXd r = qr_.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd rinv =
        r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
    const Eigen::MatrixXd xtx_inv_perm = rinv * rinv.transpose();
    const auto& perm = qr_.colsPermutation();
    xtx_inv_ = perm * xtx_inv_perm * perm.transpose();
  }

  FitResult fit(const Eigen::VectorXd& y) const {
    const auto& x = design_->x;
    if (y.size() != x.rows()) throw DomainError("fit_linear: response length differs from design rows");
    const double n = static_cast<double>(x.rows());
    const auto p = x.cols();

    FitResult f;
    f.coefficients = qr_.solve(y);
    const Eigen::VectorXd resid = y - x * f.coefficients;
    const double rss = resid.squaredNorm();
    const double tss = (y.array() - y.mean()).square().sum();
    if (!(tss > 0.0)) throw DegenerateDesignError("fit_linear: constant response");
    const double sigma2 = rss / (n - static_cast<double>(p));
    f.covariance = sigma2 * xtx_inv_;
    f.n_params = static_cast<std::size_t>(p);
    f.loglik = -0.5 * n * (std::log(2.0 * M_PI * rss / n) + 1.0);
    f.aic = aic(f.loglik, f.n_params + 1);  // + residual variance
    f.fit_stat = std::clamp(1.0 - rss / tss, 0.0, 1.0);
    f.converged = true;
    f.status = FitStatus::ok;
    f.iterations = 1;
    detail::set_target(f, *design_);
    return f;
  }

  const DesignMatrix& design() const { return *design_; }

 private:
  const DesignMatrix* design_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::MatrixXd xtx_inv_;
};

/// Ordinary least squares. Throws DegenerateDesignError on rank deficiency.
inline FitResult fit_linear(const DesignMatrix& x, const Eigen::VectorXd& y) {
  return LinearSolver(x).fit(y);
}

struct LogisticOptions {
  double tolerance = 1e-8;          // relative log-likelihood change
  int max_iterations = 50;
  double separation_limit = 15.0;   // |beta| on the standardized-predictor scale
};

namespace detail {

inline double log1pexp(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

inline double logistic_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - log1pexp(eta(i));
  return ll;
}

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace detail

/// Maximum-likelihood logistic regression by IRLS (Newton with step halving).
/// Non-convergence and quasi-separation return converged = false; a
/// single-class response throws SingleClassError.
inline FitResult fit_logistic(const DesignMatrix& x, const Eigen::VectorXd& y, const LogisticOptions& opt = {}) {
  const auto& X = x.x;
  const auto n = X.rows(), p = X.cols();
  if (y.size() != n) throw DomainError("fit_logistic: response length differs from design rows");
  double ones = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw DomainError("fit_logistic: response must be 0/1");
    ones += y(i);
  }
  if (ones == 0.0 || ones == static_cast<double>(n)) throw SingleClassError("fit_logistic: single-class outcome");
  if (n <= p) throw DegenerateDesignError("fit_logistic: need more rows than columns");

  FitResult f;
  f.n_params = static_cast<std::size_t>(p);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  const double ybar = ones / static_cast<double>(n);
  beta(0) = std::log(ybar / (1.0 - ybar));

  Eigen::VectorXd eta = X * beta;
  double ll = detail::logistic_loglik(eta, y);
  Eigen::VectorXd mu(n), w(n), score(p);
  Eigen::MatrixXd info(p, p);

  auto refresh = [&] {
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = detail::sigmoid(eta(i));
      w(i) = mu(i) * (1.0 - mu(i));
    }
    score.noalias() = X.transpose() * (y - mu);
    info.noalias() = X.transpose() * w.asDiagonal() * X;
  };

  bool converged = false;
  refresh();
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    if (score.cwiseAbs().maxCoeff() <= 1e-10) {
      converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) break;
    const Eigen::VectorXd step = ldlt.solve(score);
    double t = 1.0;
    Eigen::VectorXd beta_new, eta_new;
    double ll_new = -std::numeric_limits<double>::infinity();
    for (int halvings = 0; halvings < 30; ++halvings, t *= 0.5) {
      beta_new = beta + t * step;
      eta_new = X * beta_new;
      ll_new = detail::logistic_loglik(eta_new, y);
      if (ll_new >= ll - 1e-12 * std::abs(ll)) break;
    }
    if (!std::isfinite(ll_new)) break;
    const double rel = std::abs(ll_new - ll) / (std::abs(ll) + 1e-300);
    beta = beta_new;
    eta = eta_new;
    ll = ll_new;
    refresh();
    const double max_score = score.cwiseAbs().maxCoeff();
    if (max_score <= 1e-8 || (rel < opt.tolerance && max_score < 1e-6)) {
      converged = true;
      ++it;
      break;
    }
  }
  f.iterations = it;
  f.coefficients = beta;
  f.loglik = ll;

  if (converged) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto col = X.col(j);
      const double m = col.mean();
      const double sd = std::sqrt((col.array() - m).square().sum() / static_cast<double>(n - 1));
      if (sd == 0.0) continue;  // intercept
      if (std::abs(beta(j)) * sd > opt.separation_limit) {
        f.status = FitStatus::separated;
        return f;
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) {
      f.status = FitStatus::separated;
      return f;
    }
    f.covariance = llt.solve(Eigen::MatrixXd::Identity(p, p));
  } else {
    f.status = FitStatus::not_converged;
    return f;
  }

  f.converged = true;
  f.status = FitStatus::ok;
  f.aic = aic(ll, f.n_params);
  const std::vector<double> etav(eta.data(), eta.data() + n);
  const std::vector<double> yv(y.data(), y.data() + n);
  f.fit_stat = auc(etav, yv);
  detail::set_target(f, x);
  return f;
}

/// Fits `spec` for one gene over `rows`. Degenerate designs and single-class
/// resamples come back as non-converged results instead of throwing.
inline FitResult fit_model(const ModelSpec& spec, const ExpressionDataset& data, std::size_t gene,
                           std::span<const std::size_t> rows = {}, const LogisticOptions& opt = {}) {
  FitResult f;
  try {
    const DesignMatrix x = build_design(spec, data, gene, rows);
    const Eigen::VectorXd y = build_response(spec, data, gene, rows);
    f = spec.family == Family::linear ? fit_linear(x, y) : fit_logistic(x, y, opt);
  } catch (const DegenerateDesignError&) {
    f = FitResult{};
    f.status = FitStatus::degenerate;
  } catch (const SingleClassError&) {
    f = FitResult{};
    f.status = FitStatus::single_class;
  }
  f.gene_id = gene < data.gene_ids.size() ? data.gene_ids[gene] : std::string{};
  f.model_id = spec.id;
  if (!f.converged) {
    f.target_z.reset();
    f.target_p.reset();
    f.aic.reset();
  }
  return f;
}

}  // namespace ben
