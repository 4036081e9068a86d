#include "mlmoe/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "mlmoe/random.hpp"
#include "mlmoe/sampling.hpp"

namespace mlmoe {

std::string_view to_string(RegressionMode mode) {
  return mode == RegressionMode::LogOfMean ? "log_of_mean" : "mean_of_log";
}

RegressionMode parse_regression_mode(std::string_view name) {
  if (name == "log_of_mean") return RegressionMode::LogOfMean;
  if (name == "mean_of_log") return RegressionMode::MeanOfLog;
  throw std::invalid_argument("unknown regression mode '" + std::string(name) + "'");
}

void SweepConfig::validate() const {
  if (k_fit.empty()) throw std::invalid_argument("sweep.k_fit must not be empty");
  for (int k : k_fit) {
    if (k < truth.size()) throw std::invalid_argument("sweep.k_fit entries must be >= number of truth atoms");
  }
  if (n_grid.empty()) throw std::invalid_argument("sweep.n_grid must not be empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 1) throw std::invalid_argument("sweep.n_grid entries must be positive");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) {
      throw std::invalid_argument("sweep.n_grid must be strictly increasing");
    }
  }
  if (replications < 1) throw std::invalid_argument("sweep.replications must be at least 1");
  if (threads < 0) throw std::invalid_argument("sweep.threads must be non-negative");
  if (trim < 0) throw std::invalid_argument("sweep.trim must be non-negative");
  if (!loss.compatible_with(truth.gate())) {
    throw std::invalid_argument("loss " + loss.name() + " is incompatible with gate " +
                                std::string(to_string(truth.gate())));
  }
  em.validate();
  init.validate();
  validate_truth(truth);
}

std::vector<int> log_spaced_grid(int lo, int hi, int count) {
  if (lo < 1 || hi < lo || count < 1) throw std::invalid_argument("log_spaced_grid: bad range");
  if (count == 1) return {lo};
  std::vector<int> grid;
  const double a = std::log(static_cast<double>(lo));
  const double b = std::log(static_cast<double>(hi));
  for (int i = 0; i < count; ++i) {
    const double t = a + (b - a) * i / (count - 1);
    grid.push_back(static_cast<int>(std::lround(std::exp(t))));
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) throw std::invalid_argument("log_spaced_grid: grid collapses after rounding");
  }
  return grid;
}

std::uint64_t replication_seed(std::uint64_t master_seed, int n, int rep) {
  return mix_seed(mix_seed(master_seed, static_cast<std::uint64_t>(n)), static_cast<std::uint64_t>(rep));
}

SweepRecord run_replication(const SweepConfig& cfg, int k, int n, int rep) {
  SweepRecord rec;
  rec.gate = cfg.gate();
  rec.k_fit = k;
  rec.n = n;
  rec.replication = rep;
  rec.seed = replication_seed(cfg.master_seed, n, rep);
  rec.loss_name = cfg.loss.name();

  const Dataset data = sample_dataset(SampleConfig{n, rec.seed, cfg.truth});
  InitConfig init = cfg.init;
  init.cell_seed = mix_seed(mix_seed(rec.seed, cfg.init.cell_seed), static_cast<std::uint64_t>(k));
  const FitResult fit = em_fit(data, k, cfg.truth, init, cfg.em);

  rec.em_iterations = fit.iterations;
  rec.final_loglik = fit.loglik_trace.back();
  rec.converged = fit.converged;
  rec.wall_ms = fit.wall_time_ms;
  for (std::size_t t = 1; t < fit.loglik_trace.size(); ++t) {
    rec.max_loglik_drop = std::max(rec.max_loglik_drop, fit.loglik_trace[t - 1] - fit.loglik_trace[t]);
  }
  rec.loss_value = evaluate_loss(cfg.loss, fit.estimate, cfg.truth);
  return rec;
}

std::vector<SweepRecord> run_sweep(const SweepConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  struct Job {
    int k, n, rep;
  };
  std::vector<Job> jobs;
  for (int k : cfg.k_fit) {
    for (int n : cfg.n_grid) {
      for (int rep = 0; rep < cfg.replications; ++rep) jobs.push_back({k, n, rep});
    }
  }
  std::vector<SweepRecord> out(jobs.size());
  // Largest jobs first so the pool drains evenly.
  std::vector<std::size_t> order(jobs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return jobs[a].n > jobs[b].n; });

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= order.size()) return;
      const Job& job = jobs[order[slot]];
      try {
        out[order[slot]] = run_replication(cfg, job.k, job.n, job.rep);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(order.size());
        return;
      }
      const std::size_t d = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(d, order.size());
      }
    }
  };
  unsigned threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads)
                                     : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

RateFit fit_loglog(const std::vector<SweepRecord>& records, RegressionMode mode, int trim) {
  if (records.empty()) throw std::invalid_argument("fit_loglog: no records");
  RateFit fit;
  fit.gate = records.front().gate;
  fit.k_fit = records.front().k_fit;
  fit.loss_name = records.front().loss_name;
  fit.record_count = static_cast<int>(records.size());

  std::vector<int> ns;
  for (const auto& r : records) ns.push_back(r.n);
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());

  std::vector<double> lx, ly;
  for (int n : ns) {
    std::vector<double> vals;
    for (const auto& r : records) {
      if (r.n != n) continue;
      if (!r.converged || !std::isfinite(r.loss_value)) {
        ++fit.failure_count;
        continue;
      }
      vals.push_back(r.loss_value);
    }
    if (vals.empty()) continue;
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var = vals.size() > 1 ? var / static_cast<double>(vals.size() - 1) : 0.0;
    fit.n_values.push_back(n);
    fit.per_n_mean.push_back(mean);
    fit.per_n_two_std.push_back(2.0 * std::sqrt(var));
    fit.per_n_count.push_back(static_cast<int>(vals.size()));
    if (static_cast<int>(fit.n_values.size()) <= trim) continue;
    double y;
    if (mode == RegressionMode::LogOfMean) {
      y = std::log(mean);
    } else {
      y = 0.0;
      for (double v : vals) y += std::log(v);
      y /= static_cast<double>(vals.size());
    }
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(y);
  }
  if (lx.size() < 2) throw std::invalid_argument("fit_loglog: need at least two sample sizes with usable records");

  const double m = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - (fit.intercept + fit.slope * lx[i]);
    ss_res += e * e;
  }
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return fit;
}

std::vector<std::pair<SeriesKey, std::vector<SweepRecord>>> group_series(
    const std::vector<SweepRecord>& records) {
  std::vector<std::pair<SeriesKey, std::vector<SweepRecord>>> out;
  for (const auto& r : records) {
    SeriesKey key{r.gate, r.k_fit, r.loss_name};
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == key; });
    if (it == out.end()) {
      out.emplace_back(key, std::vector<SweepRecord>{});
      it = std::prev(out.end());
    }
    it->second.push_back(r);
  }
  return out;
}

}  // namespace mlmoe
