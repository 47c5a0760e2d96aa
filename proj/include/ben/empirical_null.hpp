#pragma once

// Empirical null N(delta0, sigma0^2) with null proportion pi0, estimated
// from the central bulk of a vector of z-values.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ben/errors.hpp"
#include "ben/optimize.hpp"
#include "ben/stats.hpp"

namespace ben {

enum class NullMethod { mle, central_matching, theoretical };

inline const char* to_string(NullMethod m) {
  switch (m) {
    case NullMethod::mle: return "mle";
    case NullMethod::central_matching: return "central_matching";
    case NullMethod::theoretical: return "theoretical";
  }
  return "?";
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct EmpiricalNull {
  double delta0 = 0.0;
  double sigma0 = 1.0;
  double pi0 = 1.0;
  NullMethod method = NullMethod::theoretical;
  Interval central{-INFINITY, INFINITY};

  static EmpiricalNull theoretical() { return {}; }
};

struct NullOptions {
  double central_coverage = 0.80;  // fraction of z-values inside the default interval
  std::size_t min_central = 50;
  int n_bins = 0;                  // central matching; 0 = ceil(sqrt(N)) capped at 90
  bool zero_mean = false;          // estimate sigma0 only, delta0 fixed at 0
};

namespace detail {

inline std::vector<double> finite_sorted(std::span<const double> z) {
  std::vector<double> s;
  s.reserve(z.size());
  for (double v : z)
    if (std::isfinite(v)) s.push_back(v);
  std::sort(s.begin(), s.end());
  return s;
}

inline std::size_t count_inside(std::span<const double> z, Interval iv) {
  return static_cast<std::size_t>(std::count_if(z.begin(), z.end(), [&](double v) { return v >= iv.lo && v <= iv.hi; }));
}

/// P(lo <= Z <= hi) for Z ~ N(delta, sigma^2), computed on the accurate side.
inline double interval_mass(Interval iv, double delta, double sigma) {
  const double a = (iv.lo - delta) / sigma, b = (iv.hi - delta) / sigma;
  if (a > 0.0) return normal_sf(a) - normal_sf(b);
  return normal_cdf(b) - normal_cdf(a);
}

}  // namespace detail

/// Central interval [q_(1-c)/2, q_(1+c)/2], widened symmetrically until at
/// least a fraction c of the z-values is inside.
inline Interval default_central_interval(std::span<const double> z, double coverage = 0.80) {
  if (!(coverage > 0.0 && coverage <= 1.0)) throw DomainError("central coverage must be in (0,1]");
  const auto s = detail::finite_sorted(z);
  if (s.size() < 2) throw InsufficientDataError("central interval needs at least two finite z-values");
  Interval iv{quantile_sorted(s, 0.5 * (1.0 - coverage)), quantile_sorted(s, 0.5 * (1.0 + coverage))};
  const double need = coverage * static_cast<double>(z.size());
  double width = std::max(iv.hi - iv.lo, 1e-8 * (1.0 + std::abs(iv.lo)));
  while (static_cast<double>(detail::count_inside(z, iv)) < need) {
    iv.lo -= 0.01 * width;
    iv.hi += 0.01 * width;
    if (iv.lo < s.front() && iv.hi > s.back()) break;
  }
  return iv;
}

/// Truncated-normal maximum likelihood over the central interval. Membership
/// in the interval is binomial with probability pi0 * P_null(interval).
inline EmpiricalNull estimate_mle(std::span<const double> z, Interval central, const NullOptions& opt = {}) {
  if (!(central.lo < central.hi)) throw DomainError("estimate_mle: empty central interval");
  std::vector<double> inside;
  std::size_t total = 0;
  for (double v : z) {
    if (std::isnan(v)) continue;
    ++total;
    if (v >= central.lo && v <= central.hi) inside.push_back(v);
  }
  if (inside.size() < opt.min_central)
    throw InsufficientDataError("estimate_mle: " + std::to_string(inside.size()) + " central z-values, need " +
                                std::to_string(opt.min_central));

  // Fit on z standardized by (median, MAD sd) of all finite z-values and map
  // back, so the estimate is equivariant under affine rescaling of z.
  const auto all = detail::finite_sorted(z);
  const double center = opt.zero_mean ? 0.0 : quantile_sorted(all, 0.5);
  double spread = mad_sd(all);
  if (!(spread > 0.0)) spread = stddev(inside);
  if (!(spread > 0.0)) throw InsufficientDataError("estimate_mle: central z-values have no spread");
  const Interval unit{(central.lo - center) / spread, (central.hi - center) / spread};

  const double n0 = static_cast<double>(inside.size());
  double sum = 0.0, sum2 = 0.0;
  for (double v : inside) {
    const double u = (v - center) / spread;
    sum += u, sum2 += u * u;
  }

  auto nll = [&](double delta, double log_sigma) {
    const double sigma = std::exp(log_sigma);
    const double mass = detail::interval_mass(unit, delta, sigma);
    if (!(mass > 0.0)) return std::numeric_limits<double>::infinity();
    const double ss = sum2 - 2.0 * delta * sum + n0 * delta * delta;
    return ss / (2.0 * sigma * sigma) + n0 * log_sigma + n0 * std::log(mass);
  };

  MinimizeResult r;
  double delta = 0.0, sigma = 1.0;
  if (opt.zero_mean) {
    r = nelder_mead([&](const std::vector<double>& x) { return nll(0.0, x[0]); }, {0.0}, {0.1});
    sigma = std::exp(r.x[0]);
  } else {
    r = nelder_mead([&](const std::vector<double>& x) { return nll(x[0], x[1]); }, {0.0, 0.0}, {0.1, 0.1});
    delta = r.x[0];
    sigma = std::exp(r.x[1]);
  }
  delta = center + spread * delta;
  sigma = spread * sigma;
  if (!r.converged || !std::isfinite(r.value))
    throw EstimationError("estimate_mle: optimizer did not converge", {delta, sigma});

  EmpiricalNull out;
  out.delta0 = delta;
  out.sigma0 = sigma;
  const double theta = n0 / static_cast<double>(total);
  out.pi0 = std::clamp(theta / detail::interval_mass(central, delta, sigma), 1e-12, 1.0);
  out.method = NullMethod::mle;
  out.central = central;
  return out;
}

inline EmpiricalNull estimate_mle(std::span<const double> z, const NullOptions& opt = {}) {
  return estimate_mle(z, default_central_interval(z, opt.central_coverage), opt);
}

/// Coefficients of log(count) ~ a*x^2 + b*x + c.
struct LogQuadratic {
  double a = 0.0, b = 0.0, c = 0.0;
};

/// Poisson regression (log link) of counts on (1, x, x^2); the maximum
/// likelihood version of a quadratic fit to log counts. Zero counts are kept
/// in the likelihood but must not be the only data. With `zero_mean`, b = 0.
inline LogQuadratic fit_log_quadratic(std::span<const double> x, std::span<const double> counts, bool zero_mean = false) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (counts[i] > 0.0) xs.push_back(x[i]), ys.push_back(counts[i]);
  const std::size_t p = zero_mean ? 2 : 3;
  if (xs.size() < p) throw InsufficientDataError("central matching: too few non-empty bins");

  const auto n = static_cast<Eigen::Index>(xs.size());
  const double shift = zero_mean ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(p));
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = xs[static_cast<std::size_t>(i)] - shift;
    X(i, 0) = 1.0;
    if (zero_mean) X(i, 1) = u * u;
    else X(i, 1) = u, X(i, 2) = u * u;
    y(i) = ys[static_cast<std::size_t>(i)];
  }
  // Start from weighted least squares on log counts.
  Eigen::VectorXd w = y;
  Eigen::VectorXd beta =
      (X.transpose() * w.asDiagonal() * X).ldlt().solve(X.transpose() * (w.array() * y.array().log()).matrix());
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd mu = (X * beta).array().exp();
    const Eigen::VectorXd score = X.transpose() * (y - mu);
    const Eigen::MatrixXd info = X.transpose() * mu.asDiagonal() * X;
    const Eigen::VectorXd step = info.ldlt().solve(score);
    beta += step;
    if (step.cwiseAbs().maxCoeff() < 1e-12 * (1.0 + beta.cwiseAbs().maxCoeff())) break;
  }
  LogQuadratic q;
  if (zero_mean) {
    q.a = beta(1), q.b = 0.0, q.c = beta(0);
  } else {
    // Undo the centering: a(x-s)^2 + b'(x-s) + c'.
    q.a = beta(2);
    q.b = beta(1) - 2.0 * beta(2) * shift;
    q.c = beta(0) - beta(1) * shift + beta(2) * shift * shift;
  }
  return q;
}

/// Central matching: histogram the z-values, fit a quadratic to the log
/// counts of bins inside the central interval and read the null off the
/// vertex and curvature.
inline EmpiricalNull estimate_central_matching(std::span<const double> z, int n_bins, Interval central,
                                               const NullOptions& opt = {}) {
  const auto s = detail::finite_sorted(z);
  const std::size_t total = static_cast<std::size_t>(
      std::count_if(z.begin(), z.end(), [](double v) { return !std::isnan(v); }));
  if (detail::count_inside(s, central) < opt.min_central)
    throw InsufficientDataError("central matching: fewer than " + std::to_string(opt.min_central) +
                                " central z-values");
  if (n_bins <= 0) n_bins = std::min(90, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(total)))));
  const double lo = s.front(), hi = s.back();
  const double width = (hi - lo) / n_bins;
  if (!(width > 0.0)) throw InsufficientDataError("central matching: z-values have no spread");

  std::vector<double> counts(static_cast<std::size_t>(n_bins), 0.0);
  for (double v : s) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    counts[std::min(b, counts.size() - 1)] += 1.0;
  }
  std::vector<double> centers, central_counts;
  for (int b = 0; b < n_bins; ++b) {
    const double c = lo + (b + 0.5) * width;
    if (c >= central.lo && c <= central.hi) centers.push_back(c), central_counts.push_back(counts[static_cast<std::size_t>(b)]);
  }
  const auto q = fit_log_quadratic(centers, central_counts, opt.zero_mean);
  if (!(q.a < 0.0)) throw EstimationError("central matching: fitted log-density is not concave", {q.a, q.b, q.c});

  EmpiricalNull out;
  out.delta0 = -q.b / (2.0 * q.a);
  out.sigma0 = std::sqrt(-1.0 / (2.0 * q.a));
  const double log_peak = q.c + q.b * out.delta0 + q.a * out.delta0 * out.delta0;
  const double pi0 = std::exp(log_peak) * out.sigma0 * std::sqrt(2.0 * M_PI) / (static_cast<double>(total) * width);
  out.pi0 = std::clamp(pi0, 1e-12, 1.0);
  out.method = NullMethod::central_matching;
  out.central = central;
  return out;
}

inline EmpiricalNull estimate_central_matching(std::span<const double> z, const NullOptions& opt = {}) {
  return estimate_central_matching(z, opt.n_bins, default_central_interval(z, opt.central_coverage), opt);
}

inline EmpiricalNull estimate_null(std::span<const double> z, NullMethod method, const NullOptions& opt = {}) {
  switch (method) {
    case NullMethod::mle: return estimate_mle(z, opt);
    case NullMethod::central_matching: return estimate_central_matching(z, opt);
    case NullMethod::theoretical: return EmpiricalNull::theoretical();
  }
  return EmpiricalNull::theoretical();
}

/// Two-sided p-value of z under the null: 2 * Phi(-|z - delta0| / sigma0).
inline double en_pvalue(double z, const EmpiricalNull& null) {
  return two_sided_p((z - null.delta0) / null.sigma0);
}

inline std::vector<double> en_pvalues(std::span<const double> z, const EmpiricalNull& null) {
  std::vector<double> p(z.size());
  std::transform(z.begin(), z.end(), p.begin(), [&](double v) { return en_pvalue(v, null); });
  return p;
}

/// Two-sided tail-area Fdr under the null,
/// min(1, pi0 * P_null(|Z - delta0|/sigma0 >= c_i) / ecdf(c_i)), made
/// nonincreasing in c_i by a running minimum from the center outwards.
inline std::vector<double> en_fdr(std::span<const double> z, const EmpiricalNull& null) {
  const std::size_t n = z.size();
  if (n < 2) throw InsufficientDataError("en_fdr needs at least two z-values");
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = std::abs(z[i] - null.delta0) / null.sigma0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return c[a] < c[b]; });

  std::vector<double> fdr(n);
  for (std::size_t r = 0; r < n;) {
    std::size_t e = r;
    while (e + 1 < n && c[order[e + 1]] == c[order[r]]) ++e;
    // ranks r..e share c; the number of values >= c is n - r.
    const double ecdf = static_cast<double>(n - r) / static_cast<double>(n);
    const double v = std::min(1.0, null.pi0 * two_sided_p(c[order[r]]) / ecdf);
    for (std::size_t k = r; k <= e; ++k) fdr[order[k]] = v;
    r = e + 1;
  }
  double running = 1.0;
  for (std::size_t r = 0; r < n; ++r) {
    running = std::min(running, fdr[order[r]]);
    fdr[order[r]] = running;
  }
  return fdr;
}

}  // namespace ben
