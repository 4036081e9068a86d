#pragma once

// Convergence-rate sweeps: replicated fits over a grid of sample sizes,
// Voronoi loss per fit, and log-log least-squares rate estimates.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mlmoe/estimation.hpp"
#include "mlmoe/metrics.hpp"
#include "mlmoe/model.hpp"

namespace mlmoe {

enum class RegressionMode { LogOfMean, MeanOfLog };
std::string_view to_string(RegressionMode mode);
RegressionMode parse_regression_mode(std::string_view name);

// `count` log-spaced integers from lo to hi inclusive, rounded; throws unless
// the rounded grid is strictly increasing.
std::vector<int> log_spaced_grid(int lo, int hi, int count);

struct SweepConfig {
  explicit SweepConfig(MixingMeasure t) : truth(std::move(t)), loss(default_loss_for(truth.gate())) {}

  MixingMeasure truth;
  std::vector<int> k_fit{3, 4};
  std::vector<int> n_grid = log_spaced_grid(10000, 100000, 20);
  int replications = 20;
  std::uint64_t master_seed = 0;
  LossSpec loss;
  EMConfig em;
  InitConfig init;
  int threads = 0;  // 0 = hardware concurrency
  int trim = 0;     // leading grid points left out of the regression
  RegressionMode regression = RegressionMode::LogOfMean;

  GateKind gate() const { return truth.gate(); }
  void validate() const;
};

struct SweepRecord {
  GateKind gate = GateKind::ModifiedSigmoid;
  int k_fit = 0;
  int n = 0;
  int replication = 0;
  std::uint64_t seed = 0;
  std::string loss_name;
  double loss_value = 0.0;
  int em_iterations = 0;
  double final_loglik = 0.0;
  bool converged = false;
  std::int64_t wall_ms = 0;
  // Largest decrease between consecutive log-likelihoods of the EM trace.
  // Not persisted.
  double max_loglik_drop = 0.0;
};

// Replication seed: hash of (master seed, n, rep); independent of k.
std::uint64_t replication_seed(std::uint64_t master_seed, int n, int rep);

SweepRecord run_replication(const SweepConfig& cfg, int k, int n, int rep);

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

// All (k, n, rep) cells, sorted by k, then n, then rep.
std::vector<SweepRecord> run_sweep(const SweepConfig& cfg, const ProgressFn& progress = {});

struct RateFit {
  GateKind gate = GateKind::ModifiedSigmoid;
  int k_fit = 0;
  std::string loss_name;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<int> n_values;
  std::vector<double> per_n_mean;
  std::vector<double> per_n_two_std;
  std::vector<int> per_n_count;
  int record_count = 0;
  int failure_count = 0;  // records left out because EM did not converge
};

// Ordinary least squares of log(mean loss) (or mean log loss) on log n, over
// the records of a single series. Records with converged == false are left
// out. Throws std::invalid_argument with fewer than two usable n values.
RateFit fit_loglog(const std::vector<SweepRecord>& records,
                   RegressionMode mode = RegressionMode::LogOfMean, int trim = 0);

struct SeriesKey {
  GateKind gate;
  int k_fit;
  std::string loss_name;
  bool operator==(const SeriesKey&) const = default;
};

// Splits records into series in order of first appearance.
std::vector<std::pair<SeriesKey, std::vector<SweepRecord>>> group_series(
    const std::vector<SweepRecord>& records);

}  // namespace mlmoe
