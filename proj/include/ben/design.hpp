#pragma once

// Model specifications and their design matrices: main effects,
// pairwise interactions and restricted cubic splines.

#include <algorithm>
#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ben/dataset.hpp"
#include "ben/errors.hpp"
#include "ben/stats.hpp"

namespace ben {

/// Name that refers to the current gene's expression row inside a model.
inline const std::string kGene = "gene";

enum class Family { linear, logistic };

inline const char* to_string(Family f) { return f == Family::linear ? "linear" : "logistic"; }

struct Term {
  enum class Kind { main, interaction, spline };

  Kind kind = Kind::main;
  std::string a;
  std::string b;  // interaction partner
  int knots = 0;  // spline knot count

  static Term main(std::string name) { return {Kind::main, std::move(name), {}, 0}; }
  static Term interaction(std::string x, std::string y) {
    return {Kind::interaction, std::move(x), std::move(y), 0};
  }
  static Term spline(std::string name, int k) { return {Kind::spline, std::move(name), {}, k}; }

  std::size_t width() const { return kind == Kind::spline ? static_cast<std::size_t>(knots - 1) : 1; }

  std::string label() const {
    switch (kind) {
      case Kind::main: return a;
      case Kind::interaction: return a + ":" + b;
      case Kind::spline: return "rcs(" + a + "," + std::to_string(knots) + ")";
    }
    return a;
  }

  bool same_as(const Term& o) const {
    if (kind != o.kind) return false;
    if (kind == Kind::interaction) return (a == o.a && b == o.b) || (a == o.b && b == o.a);
    return a == o.a && knots == o.knots;
  }

  bool uses(const std::string& name) const { return a == name || b == name; }
};

/// One working GLM: family, ordered terms and the term group under test.
struct ModelSpec {
  std::string id;
  Family family = Family::linear;
  std::vector<Term> terms;
  std::vector<std::size_t> target;  // indices into `terms`

  void validate() const {
    if (terms.empty()) throw SpecError("model '" + id + "' has no terms");
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const auto& t = terms[i];
      if (t.a.empty() || (t.kind == Term::Kind::interaction && t.b.empty()))
        throw SpecError("model '" + id + "' has an unnamed term");
      if (t.kind == Term::Kind::spline && t.knots < 3)
        throw SpecError("model '" + id + "': spline needs at least 3 knots");
      if (t.kind == Term::Kind::interaction && t.a == t.b)
        throw SpecError("model '" + id + "': self-interaction " + t.label());
      for (std::size_t j = 0; j < i; ++j)
        if (t.same_as(terms[j])) throw SpecError("model '" + id + "': duplicate term " + t.label());
    }
    if (target.empty()) throw SpecError("model '" + id + "' has no target term");
    for (std::size_t k = 0; k < target.size(); ++k) {
      if (target[k] >= terms.size()) throw SpecError("model '" + id + "': target outside terms");
      for (std::size_t j = 0; j < k; ++j)
        if (target[j] == target[k]) throw SpecError("model '" + id + "': repeated target");
    }
  }

  bool uses_gene() const {
    return std::any_of(terms.begin(), terms.end(), [](const Term& t) { return t.uses(kGene); });
  }

  /// Columns including the intercept.
  std::size_t n_columns() const {
    std::size_t c = 1;
    for (const auto& t : terms) c += t.width();
    return c;
  }

  std::string formula() const {
    std::ostringstream os;
    os << (family == Family::linear ? "gene ~ " : "logit ~ ");
    for (std::size_t i = 0; i < terms.size(); ++i) os << (i ? " + " : "") << terms[i].label();
    os << " @ ";
    for (std::size_t i = 0; i < target.size(); ++i) os << (i ? " + " : "") << terms[target[i]].label();
    return os.str();
  }
};

struct DesignMatrix {
  Eigen::MatrixXd x;                 // first column is the intercept
  std::vector<std::string> labels;   // one per column
  std::vector<int> term_of_column;   // -1 for the intercept
  std::vector<std::size_t> target_columns;

  std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(x.cols()); }
};

/// Knot quantiles for k knots (Harrell's defaults; k = 3 uses 0.10/0.50/0.90).
/// Wraps a raw matrix whose first column is the intercept as a design.
inline DesignMatrix design_from_matrix(Eigen::MatrixXd x, std::vector<std::size_t> target_columns) {
  DesignMatrix d;
  d.x = std::move(x);
  for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
    d.labels.push_back(j == 0 ? "(intercept)" : "x" + std::to_string(j));
    d.term_of_column.push_back(static_cast<int>(j) - 1);
  }
  d.target_columns = std::move(target_columns);
  return d;
}

inline std::vector<double> rcs_knot_quantiles(int k) {
  switch (k) {
    case 3: return {0.10, 0.50, 0.90};
    case 4: return {0.05, 0.35, 0.65, 0.95};
    case 5: return {0.05, 0.275, 0.50, 0.725, 0.95};
    case 6: return {0.05, 0.23, 0.41, 0.59, 0.77, 0.95};
    case 7: return {0.025, 0.1833, 0.3417, 0.50, 0.6583, 0.8167, 0.975};
    default: break;
  }
  if (k < 3) throw SpecError("spline needs at least 3 knots");
  std::vector<double> q(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) q[static_cast<std::size_t>(i)] = 0.025 + 0.95 * i / (k - 1);
  return q;
}

inline std::vector<double> rcs_knots(std::span<const double> x, int k) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  std::vector<double> knots;
  for (double q : rcs_knot_quantiles(k)) knots.push_back(quantile_sorted(s, q));
  return knots;
}

/// Restricted cubic spline basis in truncated-power form: column 0 is x,
/// the remaining k-2 columns are cubic between the knots and linear beyond
/// the boundary knots, scaled by (t_k - t_1)^2.
inline Eigen::MatrixXd rcs_basis(std::span<const double> x, std::span<const double> knots) {
  const std::size_t k = knots.size();
  if (k < 3) throw SpecError("rcs_basis: need at least 3 knots");
  for (std::size_t i = 1; i < k; ++i)
    if (!(knots[i] > knots[i - 1])) throw DegenerateDesignError("rcs_basis: knots must be strictly increasing");

  const double tk = knots[k - 1];
  const double tk1 = knots[k - 2];
  const double norm = (tk - knots[0]) * (tk - knots[0]);
  auto cube = [](double v) { return v > 0.0 ? v * v * v : 0.0; };

  Eigen::MatrixXd out(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(k - 1));
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double v = x[r];
    out(static_cast<Eigen::Index>(r), 0) = v;
    for (std::size_t j = 0; j + 2 < k; ++j) {
      const double tj = knots[j];
      const double val = cube(v - tj) - cube(v - tk1) * (tk - tj) / (tk - tk1) +
                         cube(v - tk) * (tk1 - tj) / (tk - tk1);
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j + 1)) = val / norm;
    }
  }
  return out;
}

namespace detail {

inline void column_values(const ExpressionDataset& data, const std::string& name, std::size_t gene,
                          std::span<const std::size_t> rows, std::vector<double>& out) {
  const std::size_t n = rows.empty() ? data.n_samples() : rows.size();
  out.resize(n);
  if (name == kGene) {
    const auto g = static_cast<Eigen::Index>(gene);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = data.expression(g, static_cast<Eigen::Index>(rows.empty() ? i : rows[i]));
    return;
  }
  const auto& v = data.covariate(name);
  for (std::size_t i = 0; i < n; ++i) out[i] = v(static_cast<Eigen::Index>(rows.empty() ? i : rows[i]));
}

}  // namespace detail

/// Checks that every name a spec references exists in the dataset.
inline void check_spec_against(const ModelSpec& spec, const ExpressionDataset& data) {
  spec.validate();
  auto known = [&](const std::string& n) { return n == kGene || data.has_covariate(n); };
  for (const auto& t : spec.terms) {
    if (!known(t.a)) throw SpecError("model '" + spec.id + "': unknown covariate '" + t.a + "'");
    if (t.kind == Term::Kind::interaction && !known(t.b))
      throw SpecError("model '" + spec.id + "': unknown covariate '" + t.b + "'");
  }
  if (spec.family == Family::linear && spec.uses_gene())
    throw SpecError("model '" + spec.id + "': linear models take the gene as response, not as a term");
  if (spec.family == Family::logistic)
    for (const auto& t : spec.terms)
      if (t.uses(data.outcome))
        throw SpecError("model '" + spec.id + "': logistic models take the outcome as response");
}

/// Builds the design for `gene` over the given sample rows (all samples when
/// `rows` is empty). Columns: intercept, then the terms in spec order.
inline DesignMatrix build_design(const ModelSpec& spec, const ExpressionDataset& data, std::size_t gene,
                                 std::span<const std::size_t> rows = {}) {
  const std::size_t n = rows.empty() ? data.n_samples() : rows.size();
  DesignMatrix d;
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.n_columns()));
  d.x.col(0).setOnes();
  d.labels.push_back("(intercept)");
  d.term_of_column.push_back(-1);

  std::vector<double> a, b;
  Eigen::Index col = 1;
  for (std::size_t t = 0; t < spec.terms.size(); ++t) {
    const auto& term = spec.terms[t];
    detail::column_values(data, term.a, gene, rows, a);
    const bool is_target = std::find(spec.target.begin(), spec.target.end(), t) != spec.target.end();
    auto push = [&](const std::string& label) {
      d.labels.push_back(label);
      d.term_of_column.push_back(static_cast<int>(t));
      if (is_target) d.target_columns.push_back(static_cast<std::size_t>(col));
      ++col;
    };
    switch (term.kind) {
      case Term::Kind::main:
        for (std::size_t i = 0; i < n; ++i) d.x(static_cast<Eigen::Index>(i), col) = a[i];
        push(term.label());
        break;
      case Term::Kind::interaction:
        detail::column_values(data, term.b, gene, rows, b);
        for (std::size_t i = 0; i < n; ++i) d.x(static_cast<Eigen::Index>(i), col) = a[i] * b[i];
        push(term.label());
        break;
      case Term::Kind::spline: {
        const auto knots = rcs_knots(a, term.knots);
        const Eigen::MatrixXd basis = rcs_basis(a, knots);
        for (Eigen::Index j = 0; j < basis.cols(); ++j) {
          d.x.col(col) = basis.col(j);
          push(j == 0 ? term.label() : term.label() + std::string(static_cast<std::size_t>(j), '\''));
        }
        break;
      }
    }
  }

  for (Eigen::Index j = 1; j < d.x.cols(); ++j) {
    const double lo = d.x.col(j).minCoeff();
    const double hi = d.x.col(j).maxCoeff();
    if (!(hi - lo > 1e-12 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)))))
      throw DegenerateDesignError("constant column '" + d.labels[static_cast<std::size_t>(j)] + "'");
  }
  return d;
}

/// Response vector: gene expression for linear models, outcome for logistic.
inline Eigen::VectorXd build_response(const ModelSpec& spec, const ExpressionDataset& data, std::size_t gene,
                                      std::span<const std::size_t> rows = {}) {
  std::vector<double> v;
  detail::column_values(data, spec.family == Family::linear ? kGene : data.outcome, gene, rows, v);
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace ben
