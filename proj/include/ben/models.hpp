#pragma once

// Built-in working-model sets and a small formula syntax for custom ones:
//
//   [id =] linear|logistic ~ term + term ... [@ target + ...]
//
// where a term is `name`, `a:b` or `rcs(name,k)` and `gene` names the
// current gene. Without `@` the first term is the target.

#include <cctype>
#include <string>
#include <vector>

#include "ben/design.hpp"
#include "ben/errors.hpp"

namespace ben {

/// Names of the covariates the built-in sets refer to.
struct CovariateRoles {
  std::string outcome = "leukemia";
  std::string site = "sample";
  std::string sex = "gender";
};

/// Eight linear models with the gene as response, testing the outcome
/// coefficient; covariate adjustment and interactions vary.
inline std::vector<ModelSpec> linear_model_set(const CovariateRoles& r = {}) {
  using T = Term;
  const auto O = T::main(r.outcome), S = T::main(r.site), G = T::main(r.sex);
  auto spec = [](std::string id, std::vector<Term> terms) {
    return ModelSpec{std::move(id), Family::linear, std::move(terms), {0}};
  };
  return {
      spec("lin1", {O}),
      spec("lin2", {O, S}),
      spec("lin3", {O, G}),
      spec("lin4", {O, S, G}),
      spec("lin5", {O, S, G, T::interaction(r.outcome, r.site)}),
      spec("lin6", {O, S, G, T::interaction(r.outcome, r.sex)}),
      spec("lin7", {O, S, G, T::interaction(r.site, r.sex)}),
      spec("lin8", {O, S, G, T::interaction(r.outcome, r.sex), T::interaction(r.outcome, r.site)}),
  };
}

/// Six logistic models for the outcome: gene expression linear or as a
/// 3-knot restricted cubic spline, with and without site/sex adjustment.
inline std::vector<ModelSpec> logistic_model_set(const CovariateRoles& r = {}) {
  using T = Term;
  const auto X = T::main(kGene), R = T::spline(kGene, 3), S = T::main(r.site), G = T::main(r.sex);
  auto spec = [](std::string id, std::vector<Term> terms) {
    return ModelSpec{std::move(id), Family::logistic, std::move(terms), {0}};
  };
  return {
      spec("logit1", {X}),
      spec("logit2", {X, S}),
      spec("logit3", {X, G}),
      spec("logit4", {X, S, G}),
      spec("logit5", {R}),
      spec("logit6", {R, S, G}),
  };
}

inline ModelSpec univariate_linear(const CovariateRoles& r = {}) { return linear_model_set(r).front(); }
inline ModelSpec univariate_logistic(const CovariateRoles& r = {}) { return logistic_model_set(r).front(); }

namespace detail {

inline std::string trim(std::string s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

/// Splits on '+' outside parentheses.
inline std::vector<std::string> split_terms(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  int depth = 0;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == '+' && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline Term parse_term(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw SpecError("empty term in model formula");
  if (t.rfind("rcs(", 0) == 0) {
    if (t.back() != ')') throw SpecError("bad spline term '" + t + "'");
    const std::string inner = t.substr(4, t.size() - 5);
    const auto comma = inner.find(',');
    if (comma == std::string::npos) throw SpecError("spline term needs a knot count: '" + t + "'");
    int k = 0;
    try {
      k = std::stoi(trim(inner.substr(comma + 1)));
    } catch (...) {
      throw SpecError("bad knot count in '" + t + "'");
    }
    return Term::spline(trim(inner.substr(0, comma)), k);
  }
  if (const auto colon = t.find(':'); colon != std::string::npos)
    return Term::interaction(trim(t.substr(0, colon)), trim(t.substr(colon + 1)));
  return Term::main(t);
}

}  // namespace detail

inline ModelSpec parse_model(const std::string& text, const std::string& default_id = "model") {
  std::string body = text;
  ModelSpec spec;
  spec.id = default_id;
  if (const auto eq = body.find('='); eq != std::string::npos) {
    spec.id = detail::trim(body.substr(0, eq));
    body = body.substr(eq + 1);
  }
  const auto tilde = body.find('~');
  if (tilde == std::string::npos) throw SpecError("model formula needs '~': " + text);
  const std::string fam = detail::trim(body.substr(0, tilde));
  if (fam == "linear") spec.family = Family::linear;
  else if (fam == "logistic") spec.family = Family::logistic;
  else throw SpecError("unknown family '" + fam + "'");

  std::string rhs = body.substr(tilde + 1), target;
  if (const auto at = rhs.find('@'); at != std::string::npos) {
    target = rhs.substr(at + 1);
    rhs = rhs.substr(0, at);
  }
  for (const auto& t : detail::split_terms(rhs)) spec.terms.push_back(detail::parse_term(t));
  if (target.empty()) {
    spec.target = {0};
  } else {
    for (const auto& t : detail::split_terms(target)) {
      const Term want = detail::parse_term(t);
      std::size_t i = 0;
      while (i < spec.terms.size() && !spec.terms[i].same_as(want)) ++i;
      if (i == spec.terms.size()) throw SpecError("target '" + want.label() + "' is not a term of " + spec.id);
      spec.target.push_back(i);
    }
  }
  spec.validate();
  return spec;
}

}  // namespace ben
