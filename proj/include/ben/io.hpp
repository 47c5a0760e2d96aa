#pragma once

// Dataset ingestion and preprocessing: CSV loading, predictive mean matching
// imputation of auxiliary covariates, and two-pass normalization.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ben/dataset.hpp"
#include "ben/errors.hpp"
#include "ben/rng.hpp"

namespace ben {

namespace csv {

inline std::vector<std::string> split_line(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '"') {
      if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else {
        quoted = !quoted;
      }
    } else if (c == sep && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& f : out) {
    std::size_t a = 0, b = f.size();
    while (a < b && (f[a] == ' ' || f[a] == '\t')) ++a;
    while (b > a && (f[b - 1] == ' ' || f[b - 1] == '\t')) --b;
    f = f.substr(a, b - a);
  }
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline Table read(const std::string& path, char sep = ',') {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  Table t;
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (!line.empty() && line[0] == '#') continue;
    auto fields = split_line(line, sep);
    if (first) {
      if (fields.size() >= 1 && fields[0].size() >= 3 && fields[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
        fields[0] = fields[0].substr(3);  // UTF-8 BOM
      t.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != t.header.size())
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (first) throw DataError("'" + path + "' is empty");
  return t;
}

inline bool is_missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "." || s == "?";
}

/// Parses a decimal number; returns false for anything else.
inline bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e;
}

/// Shortest representation that round-trips (printf %.17g fallback).
inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  }
  return std::string(buf, ptr);
}

}  // namespace csv

/// Loads a genes x samples expression CSV (header: id column then sample
/// ids) and a per-sample covariate CSV (first column sample id). Samples are
/// aligned to the expression header; the id sets must match exactly.
inline ExpressionDataset load_dataset(const std::string& expr_path, const std::string& covar_path,
                                      const std::string& outcome) {
  const auto expr = csv::read(expr_path);
  if (expr.header.size() < 2) throw DataError(expr_path + ": need a gene id column and at least one sample");
  ExpressionDataset d;
  d.outcome = outcome;
  d.sample_ids.assign(expr.header.begin() + 1, expr.header.end());
  {
    std::set<std::string> seen;
    for (const auto& s : d.sample_ids)
      if (!seen.insert(s).second) throw DataError(expr_path + ": duplicate sample id '" + s + "'");
  }
  const auto n = static_cast<Eigen::Index>(d.sample_ids.size());
  d.expression.resize(static_cast<Eigen::Index>(expr.rows.size()), n);
  std::set<std::string> genes;
  for (std::size_t r = 0; r < expr.rows.size(); ++r) {
    const auto& row = expr.rows[r];
    if (!genes.insert(row[0]).second)
      throw DataError(expr_path + ": duplicate gene id '" + row[0] + "' at row " + std::to_string(r + 2));
    d.gene_ids.push_back(row[0]);
    for (Eigen::Index c = 0; c < n; ++c) {
      double v;
      if (!csv::parse_double(row[static_cast<std::size_t>(c) + 1], v) || !std::isfinite(v))
        throw DataError(expr_path + ": non-numeric cell '" + row[static_cast<std::size_t>(c) + 1] + "' at row " +
                        std::to_string(r + 2) + ", column " + std::to_string(c + 2));
      d.expression(static_cast<Eigen::Index>(r), c) = v;
    }
  }

  const auto cov = csv::read(covar_path);
  if (cov.header.size() < 2) throw DataError(covar_path + ": need a sample id column and covariates");
  std::map<std::string, std::size_t> cov_row;
  for (std::size_t r = 0; r < cov.rows.size(); ++r)
    if (!cov_row.emplace(cov.rows[r][0], r).second)
      throw DataError(covar_path + ": duplicate sample id '" + cov.rows[r][0] + "'");
  for (const auto& s : d.sample_ids)
    if (!cov_row.count(s)) throw DataError("sample '" + s + "' missing from " + covar_path);
  if (cov_row.size() != d.sample_ids.size()) {
    const std::set<std::string> ids(d.sample_ids.begin(), d.sample_ids.end());
    for (const auto& [s, r] : cov_row)
      if (!ids.count(s)) throw DataError("sample '" + s + "' in " + covar_path + " is not in " + expr_path);
  }
  for (std::size_t c = 1; c < cov.header.size(); ++c) {
    Covariate cv{cov.header[c], Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::size_t r = cov_row.at(d.sample_ids[static_cast<std::size_t>(i)]);
      const auto& cell = cov.rows[r][c];
      double v;
      if (csv::is_missing_token(cell)) v = std::numeric_limits<double>::quiet_NaN();
      else if (!csv::parse_double(cell, v))
        throw DataError(covar_path + ": non-numeric cell '" + cell + "' at row " + std::to_string(r + 2) +
                        ", column " + std::to_string(c + 1));
      cv.values(i) = v;
    }
    d.covariates.push_back(std::move(cv));
  }
  if (!d.has_covariate(outcome)) throw DataError(covar_path + ": no outcome column '" + outcome + "'");
  for (double v : d.outcome_values())
    if (std::isnan(v)) throw DataError("outcome '" + outcome + "' has missing values");
  d.provenance.steps.push_back("load:" + expr_path + "," + covar_path);
  return d;
}

/// Predictive mean matching, one imputation per missing cell: regress the
/// covariate on the fully observed covariates over its observed rows, then
/// copy the value of a random donor among the k observed rows whose
/// predicted means are nearest. Only missing cells are written.
inline std::vector<Covariate> impute_pmm(std::vector<Covariate> covariates, const std::string& outcome,
                                         std::uint64_t seed, std::size_t k = 5,
                                         std::map<std::string, std::size_t>* imputed = nullptr) {
  std::vector<std::size_t> complete;
  for (std::size_t c = 0; c < covariates.size(); ++c) {
    const auto& v = covariates[c].values;
    if (covariates[c].name == outcome && !v.allFinite()) throw DataError("outcome has missing values; cannot impute");
    if (v.allFinite()) complete.push_back(c);
  }
  for (std::size_t c = 0; c < covariates.size(); ++c) {
    auto& target = covariates[c].values;
    const auto n = target.size();
    std::vector<Eigen::Index> obs, miss;
    for (Eigen::Index i = 0; i < n; ++i) (std::isnan(target(i)) ? miss : obs).push_back(i);
    if (miss.empty()) continue;
    if (2 * miss.size() > static_cast<std::size_t>(n))
      throw DataError("covariate '" + covariates[c].name + "' is more than 50% missing");

    Eigen::MatrixXd x(n, static_cast<Eigen::Index>(complete.size()) + 1);
    x.col(0).setOnes();
    for (std::size_t j = 0; j < complete.size(); ++j) x.col(static_cast<Eigen::Index>(j) + 1) = covariates[complete[j]].values;
    Eigen::MatrixXd xo(static_cast<Eigen::Index>(obs.size()), x.cols());
    Eigen::VectorXd yo(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i) {
      xo.row(static_cast<Eigen::Index>(i)) = x.row(obs[i]);
      yo(static_cast<Eigen::Index>(i)) = target(obs[i]);
    }
    const Eigen::VectorXd beta = xo.colPivHouseholderQr().solve(yo);
    const Eigen::VectorXd pred = x * beta;

    Rng rng(seed, c, Purpose::imputation);
    const std::size_t pool = std::min(k, obs.size());
    std::vector<std::size_t> order(obs.size());
    for (const auto i : miss) {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(pred(obs[a]) - pred(i)) < std::abs(pred(obs[b]) - pred(i));
      });
      target(i) = yo(static_cast<Eigen::Index>(order[rng.below(pool)]));
    }
    if (imputed) (*imputed)[covariates[c].name] = miss.size();
  }
  return covariates;
}

inline ExpressionDataset impute_pmm(ExpressionDataset d, std::uint64_t seed, std::size_t k = 5) {
  d.covariates = impute_pmm(std::move(d.covariates), d.outcome, seed, k, &d.provenance.imputed);
  std::size_t total = 0;
  for (const auto& [name, count] : d.provenance.imputed) total += count;
  d.provenance.steps.push_back("impute_pmm:k=" + std::to_string(k) + ",cells=" + std::to_string(total));
  return d;
}

enum class NormalizeOrder { samples_then_genes, genes_then_samples };

namespace detail {

inline void standardize_columns(Eigen::MatrixXd& m, const std::vector<std::string>& names, const char* what) {
  const double n = static_cast<double>(m.rows());
  if (m.rows() < 2) throw DataError(std::string("cannot standardize ") + what + "s over fewer than 2 values");
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double mu = m.col(j).mean();
    const double sd = std::sqrt((m.col(j).array() - mu).square().sum() / (n - 1.0));
    if (!(sd > 0.0)) throw DataError(std::string("zero-variance ") + what + " '" + names[static_cast<std::size_t>(j)] + "'");
    m.col(j) = (m.col(j).array() - mu) / sd;
  }
}

}  // namespace detail

/// Two-pass standardization: every sample column to mean 0 / sd 1, then
/// every gene row to mean 0 / sd 1 (or the reverse order).
inline ExpressionDataset normalize(ExpressionDataset d, NormalizeOrder order = NormalizeOrder::samples_then_genes) {
  auto samples = [&] { detail::standardize_columns(d.expression, d.sample_ids, "sample"); };
  auto genes = [&] {
    Eigen::MatrixXd t = d.expression.transpose();
    detail::standardize_columns(t, d.gene_ids, "gene");
    d.expression = t.transpose();
  };
  if (order == NormalizeOrder::samples_then_genes) {
    samples();
    genes();
    d.provenance.steps.push_back("normalize:samples,genes");
  } else {
    genes();
    samples();
    d.provenance.steps.push_back("normalize:genes,samples");
  }
  return d;
}

/// Removes the `count` genes with the largest absolute expression value.
inline ExpressionDataset exclude_most_extreme(ExpressionDataset d, std::size_t count) {
  for (std::size_t k = 0; k < count && d.n_genes() > 1; ++k) {
    Eigen::Index gene = 0, col = 0;
    d.expression.cwiseAbs().maxCoeff(&gene, &col);
    d.provenance.excluded_genes.push_back(d.gene_ids[static_cast<std::size_t>(gene)]);
    d.provenance.steps.push_back("exclude_extreme:" + d.gene_ids[static_cast<std::size_t>(gene)]);
    d.gene_ids.erase(d.gene_ids.begin() + gene);
    Eigen::MatrixXd m(d.expression.rows() - 1, d.expression.cols());
    m.topRows(gene) = d.expression.topRows(gene);
    m.bottomRows(m.rows() - gene) = d.expression.bottomRows(d.expression.rows() - gene - 1);
    d.expression = std::move(m);
  }
  return d;
}

/// Writes the dataset back out in the same CSV dialect load_dataset reads.
inline void write_dataset(const ExpressionDataset& d, const std::string& expr_path, const std::string& covar_path) {
  std::ofstream e(expr_path);
  if (!e) throw DataError("cannot write '" + expr_path + "'");
  e << "gene_id";
  for (const auto& s : d.sample_ids) e << ',' << s;
  e << '\n';
  for (std::size_t g = 0; g < d.n_genes(); ++g) {
    e << d.gene_ids[g];
    for (std::size_t i = 0; i < d.n_samples(); ++i)
      e << ',' << csv::format_double(d.expression(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(i)));
    e << '\n';
  }
  std::ofstream c(covar_path);
  if (!c) throw DataError("cannot write '" + covar_path + "'");
  c << "sample_id";
  for (const auto& cv : d.covariates) c << ',' << cv.name;
  c << '\n';
  for (std::size_t i = 0; i < d.n_samples(); ++i) {
    c << d.sample_ids[i];
    for (const auto& cv : d.covariates) c << ',' << csv::format_double(cv.values(static_cast<Eigen::Index>(i)));
    c << '\n';
  }
}

}  // namespace ben
