#pragma once

// Report emission: the ranked gene table, plot-data tables and a JSON run
// manifest. TSV files carry a `#` manifest block with no timestamp so that
// reruns are byte-identical; the timestamp lives in the JSON file only.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ben/adjust.hpp"
#include "ben/bagging.hpp"
#include "ben/config.hpp"
#include "ben/io.hpp"

namespace ben {

inline constexpr const char* kVersion = "1.0.0";

struct ReportPaths {
  std::string ranked, fig1, fig2, fig3, manifest;
};

inline ReportPaths report_paths(const std::string& dir, const std::string& prefix) {
  const auto base = (std::filesystem::path(dir) / prefix).string();
  return {base + "_ranked.tsv", base + "_fig1_sorted_p.tsv", base + "_fig2_p_vs_p.tsv", base + "_fig3_p_vs_fit.tsv",
          base + "_manifest.json"};
}

struct ReportCounts {
  std::size_t raw = 0, en = 0, bonferroni = 0, bh = 0, bagged = 0, ben = 0, flagged = 0, missing = 0;
};

namespace detail {

inline std::string fmt(double v) { return std::isnan(v) ? "NA" : csv::format_double(v); }

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

inline std::size_t count_le(const std::vector<double>& v, double a) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [a](double x) { return x <= a; }));
}

}  // namespace detail

/// All per-gene series the reports draw on, parallel to the dataset genes.
struct ReportTable {
  std::vector<std::string> gene_id;
  std::vector<double> raw_p, en_p, bonferroni_p, bh_p, raw_fit;
  std::vector<double> bagged_p, ben_p, bagged_bonferroni_p, bagged_bh_p, bagged_fit;
  std::vector<std::string> model_counts;
  std::vector<std::size_t> n_effective;
  std::vector<bool> missing, flag;
};

inline ReportTable make_table(const ExpressionDataset& data, const SingleModelAnalysis& raw, const BenRun& run,
                              double p_max, double fit_min) {
  const std::size_t n = data.n_genes();
  if (n == 0) throw DomainError("no results to report");
  ReportTable t;
  t.gene_id = data.gene_ids;
  t.raw_p = raw.p, t.en_p = raw.en_p, t.bonferroni_p = raw.bonferroni_p, t.bh_p = raw.bh_p, t.raw_fit = raw.fit;
  for (const auto& g : run.genes) {
    t.bagged_p.push_back(g.bagged_p);
    t.ben_p.push_back(g.ben_p);
    t.bagged_bonferroni_p.push_back(g.bagged_bonferroni_p);
    t.bagged_bh_p.push_back(g.bagged_bh_p);
    t.bagged_fit.push_back(g.bagged_fit);
    t.n_effective.push_back(g.n_effective);
    t.missing.push_back(g.missing);
    std::string mc;
    for (std::size_t m = 0; m < g.model_counts.size(); ++m) mc += (m ? ";" : "") + std::to_string(g.model_counts[m]);
    t.model_counts.push_back(mc);
  }
  t.flag = flag_dual(t.ben_p, t.bagged_fit, p_max, fit_min);
  return t;
}

inline ReportCounts count_table(const ReportTable& t, double alpha = 0.05) {
  ReportCounts c;
  c.raw = detail::count_le(t.raw_p, alpha);
  c.en = detail::count_le(t.en_p, alpha);
  c.bonferroni = detail::count_le(t.bonferroni_p, alpha);
  c.bh = detail::count_le(t.bh_p, alpha);
  c.bagged = detail::count_le(t.bagged_p, alpha);
  c.ben = detail::count_le(t.ben_p, alpha);
  c.flagged = static_cast<std::size_t>(std::count(t.flag.begin(), t.flag.end(), true));
  c.missing = static_cast<std::size_t>(std::count(t.missing.begin(), t.missing.end(), true));
  return c;
}

/// Genes with a result, ordered by ben_p (then input order).
inline std::vector<std::size_t> ranked_order(const ReportTable& t) {
  std::vector<std::size_t> idx;
  for (std::size_t g = 0; g < t.gene_id.size(); ++g)
    if (!t.missing[g]) idx.push_back(g);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return t.ben_p[a] < t.ben_p[b]; });
  return idx;
}

inline void write_manifest_block(std::ostream& out, const RunConfig& cfg, const BenRun& run, const ReportCounts& c) {
  out << "# ben " << kVersion << '\n';
  out << "# seed: " << cfg.seed << '\n';
  out << "# config_hash: " << hex64(config_hash(cfg)) << '\n';
  out << "# replicates_used: " << run.replicates_used << " skipped: " << run.replicates_skipped << '\n';
  out << "# counts(p<=0.05): raw=" << c.raw << " en=" << c.en << " bonferroni=" << c.bonferroni << " bh=" << c.bh
      << " bagged=" << c.bagged << " ben=" << c.ben << '\n';
  out << "# flagged(ben_p<=" << detail::fmt(cfg.p_max) << ",fit>=" << detail::fmt(cfg.fit_min) << "): " << c.flagged << '\n';
  out << "# missing: " << c.missing << '\n';
}

/// Writes the ranked table, the three plot-data tables and the JSON
/// manifest. Returns the paths written.
inline ReportPaths emit_reports(const ReportTable& t, const BenRun& run, const RunConfig& cfg,
                                const std::vector<std::string>& provenance = {}) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  const auto paths = report_paths(cfg.output_dir, cfg.prefix);
  const auto counts = count_table(t);
  using detail::fmt;

  {
    auto out = detail::open_out(paths.ranked);
    write_manifest_block(out, cfg, run, counts);
    out << "gene_id\traw_p\ten_p\tbagged_p\tben_p\tbonferroni_p\tbh_p\tbagged_bonferroni_p\tbagged_bh_p\tbagged_fit\traw_"
           "fit\tn_effective\tmodel_counts\tflag\n";
    for (auto g : ranked_order(t)) {
      out << t.gene_id[g] << '\t' << fmt(t.raw_p[g]) << '\t' << fmt(t.en_p[g]) << '\t' << fmt(t.bagged_p[g]) << '\t'
          << fmt(t.ben_p[g]) << '\t' << fmt(t.bonferroni_p[g]) << '\t' << fmt(t.bh_p[g]) << '\t'
          << fmt(t.bagged_bonferroni_p[g]) << '\t' << fmt(t.bagged_bh_p[g]) << '\t' << fmt(t.bagged_fit[g]) << '\t'
          << fmt(t.raw_fit[g]) << '\t' << t.n_effective[g] << '\t' << t.model_counts[g] << '\t' << (t.flag[g] ? 1 : 0)
          << '\n';
    }
  }
  {
    // Each series sorted on its own: rank against sorted p.
    const std::vector<const std::vector<double>*> series{&t.raw_p, &t.en_p, &t.bonferroni_p, &t.bh_p, &t.bagged_p, &t.ben_p};
    std::vector<std::vector<double>> sorted;
    for (const auto* s : series) {
      std::vector<double> v;
      for (double x : *s)
        if (!std::isnan(x)) v.push_back(x);
      std::sort(v.begin(), v.end());
      sorted.push_back(std::move(v));
    }
    std::size_t rows = 0;
    for (const auto& v : sorted) rows = std::max(rows, v.size());
    auto out = detail::open_out(paths.fig1);
    write_manifest_block(out, cfg, run, counts);
    out << "rank\traw_p\ten_p\tbonferroni_p\tbh_p\tbagged_p\tben_p\n";
    for (std::size_t r = 0; r < rows; ++r) {
      out << r + 1;
      for (const auto& v : sorted) out << '\t' << (r < v.size() ? fmt(v[r]) : "NA");
      out << '\n';
    }
  }
  {
    auto out = detail::open_out(paths.fig2);
    write_manifest_block(out, cfg, run, counts);
    out << "gene_id\traw_p\ten_p\tbonferroni_p\tbh_p\tbagged_p\tben_p\n";
    for (std::size_t g = 0; g < t.gene_id.size(); ++g)
      out << t.gene_id[g] << '\t' << fmt(t.raw_p[g]) << '\t' << fmt(t.en_p[g]) << '\t' << fmt(t.bonferroni_p[g]) << '\t'
          << fmt(t.bh_p[g]) << '\t' << fmt(t.bagged_p[g]) << '\t' << fmt(t.ben_p[g]) << '\n';
  }
  {
    auto out = detail::open_out(paths.fig3);
    write_manifest_block(out, cfg, run, counts);
    out << "gene_id\traw_p\traw_fit\tbagged_p\tben_p\tbagged_fit\tflag\n";
    for (std::size_t g = 0; g < t.gene_id.size(); ++g)
      out << t.gene_id[g] << '\t' << fmt(t.raw_p[g]) << '\t' << fmt(t.raw_fit[g]) << '\t' << fmt(t.bagged_p[g]) << '\t'
          << fmt(t.ben_p[g]) << '\t' << fmt(t.bagged_fit[g]) << '\t' << (t.flag[g] ? 1 : 0) << '\n';
  }
  {
    nlohmann::ordered_json j;
    j["version"] = kVersion;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char ts[32];
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["timestamp"] = ts;
    j["seed"] = cfg.seed;
    j["config_hash"] = hex64(config_hash(cfg));
    j["config"] = cfg.entries();
    j["genes"] = t.gene_id.size();
    j["missing"] = counts.missing;
    j["replicates_used"] = run.replicates_used;
    j["replicates_skipped"] = run.replicates_skipped;
    j["counts_p_le_0.05"] = {{"raw", counts.raw},       {"en", counts.en},         {"bonferroni", counts.bonferroni},
                             {"bh", counts.bh},         {"bagged", counts.bagged}, {"ben", counts.ben}};
    j["flagged"] = counts.flagged;
    j["provenance"] = provenance;
    j["log"] = run.log;
    j["files"] = {paths.ranked, paths.fig1, paths.fig2, paths.fig3};
    auto out = detail::open_out(paths.manifest);
    out << j.dump(2) << '\n';
  }
  return paths;
}

/// Pseudo-simulation summary as TSV (one row per rule and method) and JSON.
inline void write_simulation_report(const SimulationReport& r, const std::string& tsv_path, const std::string& json_path) {
  using detail::fmt;
  auto out = detail::open_out(tsv_path);
  out << "# replications: " << r.replications << " failures: " << r.failures << " induced: " << r.n_induced
      << " genes: " << r.genes_tested << '\n';
  out << "rule\tmethod\tstrong\tstrong_iqr\tmoderate\tmoderate_iqr\tweak\tweak_iqr\tall\tall_iqr\tfalse\tfalse_iqr\tpower\tp"
         "ower_iqr\tfdr\tfdr_iqr\n";
  auto cell = [&](const Summary& s) { return fmt(s.median) + '\t' + fmt(s.q1) + '-' + fmt(s.q3); };
  for (const auto& row : r.rows)
    out << to_string(row.rule) << '\t' << to_string(row.method) << '\t' << cell(row.strong) << '\t' << cell(row.moderate)
        << '\t' << cell(row.weak) << '\t' << cell(row.all) << '\t' << cell(row.false_discoveries) << '\t' << cell(row.power)
        << '\t' << cell(row.fdr) << '\n';

  nlohmann::ordered_json j;
  j["replications"] = r.replications;
  j["failures"] = r.failures;
  j["n_induced"] = r.n_induced;
  j["genes_tested"] = r.genes_tested;
  auto js = [](const Summary& s) { return nlohmann::ordered_json{{"median", s.median}, {"q1", s.q1}, {"q3", s.q3}}; };
  for (const auto& row : r.rows)
    j["rows"].push_back({{"rule", to_string(row.rule)},
                         {"method", to_string(row.method)},
                         {"strong", js(row.strong)},
                         {"moderate", js(row.moderate)},
                         {"weak", js(row.weak)},
                         {"all", js(row.all)},
                         {"false", js(row.false_discoveries)},
                         {"power", js(row.power)},
                         {"fdr", js(row.fdr)}});
  j["log"] = r.log;
  auto jo = detail::open_out(json_path);
  jo << j.dump(2) << '\n';
}

}  // namespace ben
