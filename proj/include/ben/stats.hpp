#pragma once

// Scalar distribution helpers shared by every module.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "ben/errors.hpp"

namespace ben {

inline constexpr double kMinP = 1e-15;
inline constexpr double kMaxP = 1.0 - 1e-15;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Upper tail 1 - Phi(x), accurate far into the tail.
inline double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0,1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

/// Two-sided standard normal p-value 2*Phi(-|z|).
inline double two_sided_p(double z) {
  if (std::isnan(z)) return std::nan("");
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

/// Upper tail of a chi-square with `df` degrees of freedom.
inline double chisq_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

/// z = Phi^{-1}(p); p in {0,1} is clamped to [1e-15, 1-1e-15] first.
inline double p_to_z(double p) {
  if (std::isnan(p) || p < 0.0 || p > 1.0) throw DomainError("p_to_z: p outside [0,1]");
  return normal_quantile(std::clamp(p, kMinP, kMaxP));
}

/// Sample quantile with linear interpolation between order statistics (R type 7).
/// `sorted` must be ascending.
inline double quantile_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) throw InsufficientDataError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::span<const double> x, double prob) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s, prob);
}

inline double median(std::span<const double> x) { return quantile(x, 0.5); }

inline double mean(std::span<const double> x) {
  if (x.empty()) return std::nan("");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample standard deviation (n-1 denominator).
inline double stddev(std::span<const double> x) {
  if (x.size() < 2) return std::nan("");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

/// Median absolute deviation scaled to be consistent for the normal sd.
inline double mad_sd(std::span<const double> x) {
  const double m = median(x);
  std::vector<double> dev(x.size());
  std::transform(x.begin(), x.end(), dev.begin(), [m](double v) { return std::abs(v - m); });
  return 1.482602218505602 * median(dev);
}

}  // namespace ben
