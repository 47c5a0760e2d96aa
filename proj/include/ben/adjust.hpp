#pragma once

// Bonferroni and Benjamini-Hochberg step-up adjustments, and the dual
// p-value / fit-statistic flagging rule.

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "ben/errors.hpp"

namespace ben {

enum class AdjustMethod { none, bonferroni, bh };

inline const char* to_string(AdjustMethod m) {
  switch (m) {
    case AdjustMethod::none: return "none";
    case AdjustMethod::bonferroni: return "bonferroni";
    case AdjustMethod::bh: return "bh";
  }
  return "?";
}

struct AdjustedPValues {
  std::vector<double> raw;
  AdjustMethod method = AdjustMethod::none;
  std::vector<double> adjusted;
  std::vector<std::size_t> order;  // order[k] = original index of the k-th smallest raw p
};

namespace detail {

inline void check_probabilities(std::span<const double> p) {
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("p-values must lie in [0,1]");
}

/// Ascending order of p, ties by original index.
inline std::vector<std::size_t> ascending_order(std::span<const double> p) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  return order;
}

}  // namespace detail

inline std::vector<double> bonferroni(std::span<const double> p) {
  detail::check_probabilities(p);
  const double n = static_cast<double>(p.size());
  std::vector<double> out(p.size());
  std::transform(p.begin(), p.end(), out.begin(), [n](double v) { return std::min(1.0, n * v); });
  return out;
}

/// Benjamini-Hochberg step-up adjusted p-values:
/// q_(i) = min_{j >= i} min(1, N p_(j) / j).
inline std::vector<double> bh_adjust(std::span<const double> p) {
  detail::check_probabilities(p);
  const std::size_t n = p.size();
  const auto order = detail::ascending_order(p);
  std::vector<double> out(n);
  double running = 1.0;
  for (std::size_t k = n; k-- > 0;) {
    const double q = p[order[k]] * (static_cast<double>(n) / static_cast<double>(k + 1));
    running = std::min(running, q);
    out[order[k]] = std::min(1.0, running);
  }
  return out;
}

inline AdjustedPValues adjust(std::span<const double> p, AdjustMethod method) {
  AdjustedPValues a;
  a.raw.assign(p.begin(), p.end());
  a.method = method;
  a.order = detail::ascending_order(p);
  switch (method) {
    case AdjustMethod::none:
      detail::check_probabilities(p);
      a.adjusted = a.raw;
      break;
    case AdjustMethod::bonferroni: a.adjusted = bonferroni(p); break;
    case AdjustMethod::bh: a.adjusted = bh_adjust(p); break;
  }
  return a;
}

/// flag_i = (p_i <= p_max) and (fit_i >= fit_min).
inline std::vector<bool> flag_dual(std::span<const double> p, std::span<const double> fit, double p_max, double fit_min) {
  if (p.size() != fit.size()) throw DomainError("flag_dual: p and fit differ in length");
  std::vector<bool> flags(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) flags[i] = p[i] <= p_max && fit[i] >= fit_min;
  return flags;
}

}  // namespace ben
