// ben: bagged empirical-null analysis of gene expression data.
//
//   ben run       --config FILE [flags]   full pipeline, ranked report
//   ben simulate  --config FILE [flags]   pseudo-simulation grid
//   ben adjust    --input FILE            Bonferroni / B-H / EN on a p or z list
//   ben plotdata  --ranked FILE           plot tables from an existing ranked TSV
//   ben synth     --out-dir DIR           synthetic cohort CSVs
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ben/ben.hpp"

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;

struct Overrides {
  std::vector<std::string> pairs;  // key=value
};

void apply(ben::RunConfig& cfg, const Overrides& o) {
  for (const auto& kv : o.pairs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ben::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

ben::ExpressionDataset prepare(const ben::RunConfig& cfg, std::vector<std::string>& log) {
  auto d = ben::load_dataset(cfg.expression_path, cfg.covariate_path, cfg.roles.outcome);
  if (cfg.impute) d = ben::impute_pmm(std::move(d), cfg.seed, cfg.impute_k);
  d.validate();
  if (cfg.exclude_extreme > 0) d = ben::exclude_most_extreme(std::move(d), cfg.exclude_extreme);
  if (cfg.normalize) d = ben::normalize(std::move(d), cfg.normalize_order);
  log = d.provenance.steps;
  return d;
}

void progress(std::size_t done, std::size_t total) {
  std::cerr << "\r" << done << "/" << total << std::flush;
  if (done == total) std::cerr << '\n';
}

int cmd_run(ben::RunConfig cfg, bool quiet) {
  cfg.validate();
  std::vector<std::string> steps;
  const auto data = prepare(cfg, steps);
  auto bag = cfg.bagging();
  if (!quiet) bag.progress = progress;
  ben::NullOptions nopt;
  nopt.central_coverage = cfg.central_coverage;
  const auto raw = ben::analyze_single_model(data, cfg.comparator(), cfg.en_method, nopt);
  const auto run = ben::run_ben(data, bag);
  const auto table = ben::make_table(data, raw, run, cfg.p_max, cfg.fit_min);
  const auto paths = ben::emit_reports(table, run, cfg, steps);
  if (!quiet) {
    const auto c = ben::count_table(table);
    std::cout << "genes " << data.n_genes() << ", missing " << c.missing << ", flagged " << c.flagged << "\n"
              << "p<=0.05: raw " << c.raw << ", EN " << c.en << ", Bonferroni " << c.bonferroni << ", B-H " << c.bh
              << ", bagged " << c.bagged << ", BEN " << c.ben << "\n"
              << "wrote " << paths.ranked << '\n';
  }
  return 0;
}

int cmd_simulate(ben::RunConfig cfg, bool quiet) {
  if (cfg.model_set == "logistic") cfg.model_set = "linear";
  cfg.validate();
  std::vector<std::string> steps;
  auto d = ben::load_dataset(cfg.expression_path, cfg.covariate_path, cfg.roles.outcome);
  if (cfg.impute) d = ben::impute_pmm(std::move(d), cfg.seed, cfg.impute_k);
  d.validate();
  if (cfg.exclude_extreme > 0) d = ben::exclude_most_extreme(std::move(d), cfg.exclude_extreme);
  if (cfg.normalize) d = ben::normalize(std::move(d), cfg.normalize_order);

  ben::ExperimentConfig exp;
  exp.replications = cfg.replications;
  exp.threads = cfg.threads;
  if (!quiet) exp.progress = progress;
  const auto report = ben::run_experiment(d, cfg.injection(), cfg.bagging(), exp);
  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  const auto base = (std::filesystem::path(cfg.output_dir) / cfg.prefix).string();
  ben::write_simulation_report(report, base + "_simulation.tsv", base + "_simulation.json");
  if (!quiet) {
    std::cout << "replications " << report.replications << ", failures " << report.failures << '\n';
    for (const auto& row : report.rows)
      std::cout << ben::to_string(row.rule) << "  " << ben::to_string(row.method) << ": power " << row.power.median
                << ", FDR " << row.fdr.median << '\n';
    std::cout << "wrote " << base << "_simulation.tsv\n";
  }
  return 0;
}

std::vector<std::pair<std::string, double>> read_values(const std::string& path, const std::string& column) {
  const auto table = ben::csv::read(path, path.ends_with(".tsv") ? '\t' : ',');
  std::size_t col = table.header.size();
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (table.header[c] == column) col = c;
  if (col == table.header.size()) throw ben::DataError("column '" + column + "' not found in " + path);
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    double v = 0.0;
    if (!ben::csv::parse_double(table.rows[r][col], v))
      throw ben::DataError(path + ": row " + std::to_string(r + 2) + ", column " + column + ": not numeric");
    out.emplace_back(col == 0 ? std::to_string(r + 1) : table.rows[r][0], v);
  }
  return out;
}

int cmd_adjust(const std::string& input, const std::string& column, bool is_z, const std::string& en,
               double coverage, const std::string& output) {
  const auto values = read_values(input, column);
  std::vector<double> p, z;
  for (const auto& [id, v] : values) {
    if (is_z) {
      z.push_back(v);
      p.push_back(ben::two_sided_p(v));
    } else {
      p.push_back(v);
      z.push_back(ben::p_to_z(v));
    }
  }
  ben::NullOptions opt;
  opt.central_coverage = coverage;
  const auto method = en == "central_matching" ? ben::NullMethod::central_matching
                      : en == "theoretical"    ? ben::NullMethod::theoretical
                                               : ben::NullMethod::mle;
  const auto null = ben::estimate_null(z, method, opt);
  const auto enp = ben::en_pvalues(z, null);
  const auto bonf = ben::bonferroni(p), bh = ben::bh_adjust(p);
  const auto en_bonf = ben::bonferroni(enp), en_bh = ben::bh_adjust(enp);

  std::ofstream file;
  if (!output.empty()) {
    file.open(output);
    if (!file) throw ben::DataError("cannot write '" + output + "'");
  }
  std::ostream& out = output.empty() ? std::cout : file;
  using ben::csv::format_double;
  out << "# null: " << ben::to_string(null.method) << " delta0=" << format_double(null.delta0)
      << " sigma0=" << format_double(null.sigma0) << " pi0=" << format_double(null.pi0) << '\n';
  out << "id\tp\tz\tbonferroni_p\tbh_p\ten_p\ten_bonferroni_p\ten_bh_p\n";
  for (std::size_t i = 0; i < p.size(); ++i)
    out << values[i].first << '\t' << format_double(p[i]) << '\t' << format_double(z[i]) << '\t' << format_double(bonf[i])
        << '\t' << format_double(bh[i]) << '\t' << format_double(enp[i]) << '\t' << format_double(en_bonf[i]) << '\t'
        << format_double(en_bh[i]) << '\n';
  return 0;
}

// Rebuilds the plot tables from a ranked TSV written by `run`.
int cmd_plotdata(const std::string& ranked, const std::string& out_dir, const std::string& prefix) {
  const auto table = ben::csv::read(ranked, '\t');
  auto col = [&](const std::string& name) {
    for (std::size_t c = 0; c < table.header.size(); ++c)
      if (table.header[c] == name) return c;
    throw ben::DataError("column '" + name + "' not found in " + ranked);
  };
  ben::ReportTable t;
  const auto gid = col("gene_id");
  auto num = [&](std::size_t r, std::size_t c) {
    double v = std::nan("");
    ben::csv::parse_double(table.rows[r][c], v);
    return v;
  };
  const auto c_raw = col("raw_p"), c_en = col("en_p"), c_bonf = col("bonferroni_p"), c_bh = col("bh_p"),
             c_bag = col("bagged_p"), c_ben = col("ben_p"), c_bbonf = col("bagged_bonferroni_p"),
             c_bbh = col("bagged_bh_p"), c_bfit = col("bagged_fit"), c_rfit = col("raw_fit"), c_neff = col("n_effective"),
             c_mc = col("model_counts"), c_flag = col("flag");
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    t.gene_id.push_back(table.rows[r][gid]);
    t.raw_p.push_back(num(r, c_raw)), t.en_p.push_back(num(r, c_en)), t.bonferroni_p.push_back(num(r, c_bonf));
    t.bh_p.push_back(num(r, c_bh)), t.raw_fit.push_back(num(r, c_rfit)), t.bagged_p.push_back(num(r, c_bag));
    t.ben_p.push_back(num(r, c_ben)), t.bagged_bonferroni_p.push_back(num(r, c_bbonf));
    t.bagged_bh_p.push_back(num(r, c_bbh)), t.bagged_fit.push_back(num(r, c_bfit));
    t.n_effective.push_back(static_cast<std::size_t>(num(r, c_neff)));
    t.model_counts.push_back(table.rows[r][c_mc]);
    t.missing.push_back(false);
    t.flag.push_back(table.rows[r][c_flag] == "1");
  }
  ben::RunConfig cfg;
  cfg.output_dir = out_dir;
  cfg.prefix = prefix;
  ben::BenRun run;
  ben::emit_reports(t, run, cfg, {"plotdata:" + ranked});
  return 0;
}

int cmd_synth(const std::string& out_dir, std::size_t genes, std::uint64_t seed) {
  ben::SyntheticConfig sc;
  sc.n_genes = genes;
  sc.seed = seed;
  const auto d = ben::make_cohort(sc);
  std::filesystem::create_directories(out_dir);
  const auto base = std::filesystem::path(out_dir);
  ben::write_dataset(d, (base / "expression.csv").string(), (base / "covariates.csv").string());
  std::cout << "wrote " << (base / "expression.csv").string() << " and " << (base / "covariates.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bagged empirical-null p-values for gene expression studies"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  bool quiet = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "key = value configuration file");
    sub->add_option("-s,--set", overrides.pairs, "override a config key (key=value), repeatable");
    sub->add_flag("-q,--quiet", quiet, "no progress or summary output");
  };
  auto* run = app.add_subcommand("run", "bagged empirical-null pipeline");
  add_common(run);
  auto* sim = app.add_subcommand("simulate", "pseudo-simulation grid");
  add_common(sim);

  std::string input, column = "p", en = "mle", output;
  bool is_z = false;
  double coverage = 0.80;
  auto* adj = app.add_subcommand("adjust", "stand-alone adjustments of a p-value (or z-value) list");
  adj->add_option("-i,--input", input, "CSV/TSV file with a header row")->required();
  adj->add_option("--column", column, "column holding the values");
  adj->add_flag("--z", is_z, "values are z-statistics rather than p-values");
  adj->add_option("--en", en, "empirical null: mle, central_matching or theoretical");
  adj->add_option("--coverage", coverage, "central interval coverage");
  adj->add_option("-o,--output", output, "output TSV (default stdout)");

  std::string ranked, out_dir = ".", prefix = "ben";
  auto* plot = app.add_subcommand("plotdata", "plot tables from a ranked TSV");
  plot->add_option("--ranked", ranked, "ranked TSV written by run")->required();
  plot->add_option("--out-dir", out_dir, "output directory");
  plot->add_option("--prefix", prefix, "output file prefix");

  std::size_t genes = 1000;
  std::uint64_t seed = 1;
  auto* synth = app.add_subcommand("synth", "write a synthetic cohort");
  synth->add_option("--out-dir", out_dir, "output directory")->required();
  synth->add_option("--genes", genes, "number of genes");
  synth->add_option("--seed", seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*run || *sim) {
      ben::RunConfig cfg;
      if (!config_path.empty()) cfg = ben::load_config(config_path);
      apply(cfg, overrides);
      return *run ? cmd_run(cfg, quiet) : cmd_simulate(cfg, quiet);
    }
    if (*adj) return cmd_adjust(input, column, is_z, en, coverage, output);
    if (*plot) return cmd_plotdata(ranked, out_dir, prefix);
    if (*synth) return cmd_synth(out_dir, genes, seed);
  } catch (const ben::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ben::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
