// mlmoe: simulate data, fit models, run convergence-rate sweeps and render
// their reports.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mlmoe/config.hpp"
#include "mlmoe/estimation.hpp"
#include "mlmoe/experiments.hpp"
#include "mlmoe/metrics.hpp"
#include "mlmoe/report.hpp"
#include "mlmoe/sampling.hpp"
#include "mlmoe/verify.hpp"

namespace fs = std::filesystem;
using namespace mlmoe;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + dir + "': " + ec.message());
}

// Summary, plots and manifest entries from records; shared by sweep and report.
std::vector<std::string> write_reports(const std::vector<SweepRecord>& records, RegressionMode mode, int trim,
                                       const std::string& dir, const std::string& stem) {
  const std::vector<RateFit> fits = fit_all(records, mode, trim);
  std::vector<int> ks;
  for (const auto& f : fits) {
    if (std::find(ks.begin(), ks.end(), f.k_fit) == ks.end()) ks.push_back(f.k_fit);
  }
  // Render every plot before writing anything.
  std::vector<std::pair<std::string, std::string>> plots;
  for (int k : ks) {
    std::vector<RateFit> per_k;
    for (const auto& f : fits) {
      if (f.k_fit == k) per_k.push_back(f);
    }
    plots.emplace_back(join_path(dir, stem + "_k" + std::to_string(k) + ".svg"),
                       render_loglog_svg(per_k, stem + ", k = " + std::to_string(k)));
  }
  const std::string summary_path = join_path(dir, stem + "_summary.json");
  write_summary(fits, mode, trim, summary_path);
  std::vector<std::string> written{summary_path};
  for (const auto& [path, svg] : plots) {
    write_text_file(path, svg);
    written.push_back(path);
  }
  for (const auto& f : fits) {
    std::cout << to_string(f.gate) << " k=" << f.k_fit << " " << f.loss_name << ": slope " << f.slope
              << " (r^2 " << f.r_squared << ", " << f.failure_count << " failed of " << f.record_count << ")\n";
  }
  return written;
}

int failures(const std::vector<SweepRecord>& records) {
  int n = 0;
  for (const auto& r : records) n += r.converged ? 0 : 1;
  return n;
}

int run(int argc, char** argv) {
  CLI::App app{"Sigmoid-gated mixture-of-experts simulation and estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string config_path;
  int sim_n = 1000;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  auto* simulate = app.add_subcommand("simulate", "Write a dataset sampled from the configured truth");
  simulate->add_option("-c,--config", config_path, "Run configuration (YAML)")->required();
  simulate->add_option("-n,--samples", sim_n, "Sample size")->check(CLI::PositiveNumber);
  simulate->add_option("-s,--seed", sim_seed, "Dataset seed");
  simulate->add_option("-o,--out", sim_out, "Output CSV")->required();

  std::string fit_data;
  int fit_k = 3;
  auto* fit = app.add_subcommand("fit", "Fit one model by EM and print its loss against the truth");
  fit->add_option("-c,--config", config_path, "Run configuration (YAML)")->required();
  fit->add_option("-d,--data", fit_data, "Dataset CSV (default: sample from the truth)");
  fit->add_option("-n,--samples", sim_n, "Sample size when no dataset is given")->check(CLI::PositiveNumber);
  fit->add_option("-s,--seed", sim_seed, "Dataset seed when no dataset is given");
  fit->add_option("-k,--experts", fit_k, "Number of fitted experts")->check(CLI::PositiveNumber);

  std::vector<std::string> sweep_configs;
  std::string out_dir;
  std::string stem;
  int threads = -1;
  bool quiet = false;
  auto* sweep = app.add_subcommand("sweep", "Run replicated fits over the sample-size grid");
  sweep->add_option("-c,--config", sweep_configs, "One or more run configurations; overlaid in the plots")
      ->required();
  sweep->add_option("-o,--out-dir", out_dir, "Output directory (default: output.directory of the first config)");
  sweep->add_option("--stem", stem, "Output file stem (default: stems of the configs joined by '_vs_')");
  sweep->add_option("-j,--threads", threads, "Worker threads (default: sweep.threads)")->check(CLI::NonNegativeNumber);
  sweep->add_flag("-q,--quiet", quiet, "No progress output");

  std::string records_path;
  std::string regression = "log_of_mean";
  int trim = 0;
  auto* report = app.add_subcommand("report", "Regenerate summary and plots from a records CSV");
  report->add_option("-r,--records", records_path, "Records CSV")->required();
  report->add_option("-o,--out-dir", out_dir, "Output directory")->required();
  report->add_option("--stem", stem, "Output file stem")->required();
  report->add_option("--regression", regression, "log_of_mean or mean_of_log");
  report->add_option("--trim", trim, "Leading n values left out of the fit")->check(CLI::NonNegativeNumber);

  std::uint64_t verify_seed = 1;
  auto* verify = app.add_subcommand("verify", "Run the built-in property checks");
  verify->add_option("-s,--seed", verify_seed, "Seed of the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  if (*simulate) {
    const RunConfig cfg = parse_config(config_path);
    const Dataset data = sample_dataset(SampleConfig{sim_n, sim_seed, cfg.sweep.truth});
    write_dataset_csv(data, sim_out);
    std::cout << "wrote " << data.size() << " rows to " << sim_out << "\n";
    return 0;
  }

  if (*fit) {
    const RunConfig cfg = parse_config(config_path);
    const MixingMeasure& truth = cfg.sweep.truth;
    const Dataset data = fit_data.empty() ? sample_dataset(SampleConfig{sim_n, sim_seed, truth})
                                          : read_dataset_csv(fit_data, truth.classes());
    if (data.dim() != truth.dim()) throw UsageError("dataset dimension does not match the configured truth");
    if (fit_k < truth.size()) throw UsageError("--experts must be at least the number of truth atoms");
    const FitResult res = em_fit(data, fit_k, truth, cfg.sweep.init, cfg.sweep.em);
    const double loss = evaluate_loss(cfg.sweep.loss, res.estimate, truth);
    std::cout.precision(17);
    std::cout << "status " << to_string(res.status) << "\n";
    std::cout << "iterations " << res.iterations << "\n";
    std::cout << "loglik " << res.loglik_trace.back() << "\n";
    std::cout << cfg.sweep.loss.name() << " " << loss << "\n";
    return res.converged ? 0 : 1;
  }

  if (*sweep) {
    RunManifest manifest;
    manifest.start_time = utc_timestamp_now();
    std::vector<RunConfig> cfgs;
    for (const auto& p : sweep_configs) cfgs.push_back(parse_config(p));
    if (out_dir.empty()) out_dir = cfgs.front().output.directory;
    if (stem.empty()) {
      for (std::size_t i = 0; i < cfgs.size(); ++i) stem += (i ? "_vs_" : "") + cfgs[i].output.stem;
    }
    const RegressionMode mode = cfgs.front().sweep.regression;
    const int sweep_trim = cfgs.front().sweep.trim;
    for (const auto& c : cfgs) {
      if (c.sweep.regression != mode || c.sweep.trim != sweep_trim) {
        throw UsageError("configs passed to one sweep must agree on sweep.regression and sweep.trim");
      }
    }
    ensure_dir(out_dir);
    std::vector<SweepRecord> records;
    for (auto& c : cfgs) {
      if (threads >= 0) c.sweep.threads = threads;
      manifest.config_digests.push_back(config_digest(c));
      ProgressFn progress;
      if (!quiet) {
        progress = [&](std::size_t done, std::size_t total) {
          std::cerr << "\r" << c.output.stem << ": " << done << "/" << total << std::flush;
          if (done == total) std::cerr << "\n";
        };
      }
      auto part = run_sweep(c.sweep, progress);
      records.insert(records.end(), part.begin(), part.end());
    }
    const std::string records_file = join_path(out_dir, stem + "_records.csv");
    write_records_csv(records, records_file);
    std::vector<std::string> written{records_file};
    for (const auto& p : write_reports(records, mode, sweep_trim, out_dir, stem)) written.push_back(p);
    manifest.end_time = utc_timestamp_now();
    manifest.record_count = static_cast<int>(records.size());
    manifest.failure_count = failures(records);
    for (const auto& p : written) manifest.files.push_back(manifest_entry(p));
    write_manifest(manifest, join_path(out_dir, stem + "_manifest.json"));
    return 0;
  }

  if (*report) {
    RegressionMode mode;
    try {
      mode = parse_regression_mode(regression);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    RunManifest manifest;
    manifest.start_time = utc_timestamp_now();
    const std::vector<SweepRecord> records = read_records_csv(records_path);
    ensure_dir(out_dir);
    const auto written = write_reports(records, mode, trim, out_dir, stem);
    manifest.config_digests.push_back(sha256_hex(read_text_file(records_path)));
    manifest.end_time = utc_timestamp_now();
    manifest.record_count = static_cast<int>(records.size());
    manifest.failure_count = failures(records);
    for (const auto& p : written) manifest.files.push_back(manifest_entry(p));
    write_manifest(manifest, join_path(out_dir, stem + "_report_manifest.json"));
    return 0;
  }

  if (*verify) {
    bool ok = true;
    for (const auto& c : run_property_suite(verify_seed)) {
      std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
      ok = ok && c.passed;
    }
    return ok ? 0 : 1;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
