#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace ben {

struct MinimizeResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Derivative-free Nelder-Mead simplex minimizer.
inline MinimizeResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                  std::vector<double> start, std::vector<double> step,
                                  double ftol = 1e-12, double xtol = 1e-10, int max_iterations = 5000) {
  const std::size_t d = start.size();
  std::vector<std::vector<double>> simplex(d + 1, start);
  for (std::size_t i = 0; i < d; ++i) simplex[i + 1][i] += step[i];
  std::vector<double> fv(d + 1);
  for (std::size_t i = 0; i <= d; ++i) fv[i] = f(simplex[i]);

  auto value_or_inf = [&](const std::vector<double>& x) {
    const double v = f(x);
    return std::isnan(v) ? INFINITY : v;
  };

  MinimizeResult out;
  std::vector<std::size_t> order(d + 1);
  for (int it = 0; it < max_iterations; ++it) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[d - 1];

    double size = 0.0;
    for (std::size_t i = 0; i <= d; ++i)
      for (std::size_t j = 0; j < d; ++j) size = std::max(size, std::abs(simplex[i][j] - simplex[best][j]));
    if (std::abs(fv[worst] - fv[best]) <= ftol * (std::abs(fv[best]) + ftol) && size <= xtol) {
      out.converged = true;
      out.iterations = it;
      break;
    }
    out.iterations = it + 1;

    std::vector<double> centroid(d, 0.0);
    for (std::size_t i = 0; i <= d; ++i)
      if (i != worst)
        for (std::size_t j = 0; j < d; ++j) centroid[j] += simplex[i][j] / static_cast<double>(d);
    auto along = [&](double t) {
      std::vector<double> p(d);
      for (std::size_t j = 0; j < d; ++j) p[j] = centroid[j] + t * (simplex[worst][j] - centroid[j]);
      return p;
    };

    const auto xr = along(-1.0);
    const double fr = value_or_inf(xr);
    if (fr < fv[best]) {
      const auto xe = along(-2.0);
      const double fe = value_or_inf(xe);
      if (fe < fr) simplex[worst] = xe, fv[worst] = fe;
      else simplex[worst] = xr, fv[worst] = fr;
    } else if (fr < fv[second]) {
      simplex[worst] = xr, fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      const auto xc = along(outside ? -0.5 : 0.5);
      const double fc = value_or_inf(xc);
      if (fc < (outside ? fr : fv[worst])) {
        simplex[worst] = xc, fv[worst] = fc;
      } else {
        for (std::size_t i = 0; i <= d; ++i) {
          if (i == best) continue;
          for (std::size_t j = 0; j < d; ++j) simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
          fv[i] = value_or_inf(simplex[i]);
        }
      }
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  out.x = simplex[best];
  out.value = fv[best];
  return out;
}

}  // namespace ben
