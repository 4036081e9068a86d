#include <gtest/gtest.h>

#include <cmath>

#include "mlmoe/experiments.hpp"
#include "mlmoe/presets.hpp"

using namespace mlmoe;

namespace {

std::vector<SweepRecord> power_law(double c, double slope, const std::vector<int>& ns, int reps) {
  std::vector<SweepRecord> out;
  for (int n : ns) {
    for (int r = 0; r < reps; ++r) {
      SweepRecord rec;
      rec.k_fit = 3;
      rec.n = n;
      rec.replication = r;
      rec.loss_name = "D1";
      rec.loss_value = c * std::pow(n, slope);
      rec.converged = true;
      out.push_back(rec);
    }
  }
  return out;
}

SweepConfig small_config() {
  SweepConfig cfg{preset_truth("sigmoid_comparison")};
  cfg.k_fit = {3};
  cfg.n_grid = {200, 400};
  cfg.replications = 2;
  cfg.master_seed = 99;
  cfg.loss = default_loss_for(cfg.truth.gate());
  cfg.em.max_iter = 15;
  return cfg;
}

}  // namespace

TEST(LogSpacedGrid, DefaultGrid) {
  const auto g = log_spaced_grid(10000, 100000, 20);
  ASSERT_EQ(g.size(), 20u);
  EXPECT_EQ(g.front(), 10000);
  EXPECT_EQ(g.back(), 100000);
  EXPECT_EQ(g[1], static_cast<int>(std::lround(std::pow(10.0, 4.0 + 1.0 / 19))));
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_GT(g[i], g[i - 1]);
  EXPECT_THROW(log_spaced_grid(1, 3, 10), std::invalid_argument);
  EXPECT_EQ(SweepConfig{preset_truth("temp_inner")}.n_grid, g);
}

TEST(FitLogLog, RecoversExactPowerLaw) {
  const auto recs = power_law(3.0, -0.5, log_spaced_grid(10000, 100000, 20), 4);
  const RateFit f = fit_loglog(recs);
  EXPECT_NEAR(f.slope, -0.5, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-10);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  EXPECT_EQ(f.n_values.size(), 20u);
  for (double s : f.per_n_two_std) EXPECT_NEAR(s, 0.0, 1e-15);
  const RateFit g = fit_loglog(recs, RegressionMode::MeanOfLog);
  EXPECT_NEAR(g.slope, -0.5, 1e-12);
}

TEST(FitLogLog, ScalingShiftsInterceptOnly) {
  const auto ns = log_spaced_grid(1000, 10000, 10);
  auto a = power_law(1.0, -0.3, ns, 3);
  for (std::size_t i = 0; i < a.size(); ++i) a[i].loss_value *= 1.0 + 0.1 * static_cast<double>(i % 3);
  auto b = a;
  for (auto& r : b) r.loss_value *= 10.0;
  const RateFit fa = fit_loglog(a), fb = fit_loglog(b);
  EXPECT_NEAR(fa.slope, fb.slope, 1e-12);
  EXPECT_NEAR(fb.intercept - fa.intercept, std::log(10.0), 1e-12);
}

TEST(FitLogLog, ErrorBarsAreTwoSampleStd) {
  std::vector<SweepRecord> recs = power_law(1.0, 0.0, {10, 20}, 3);
  recs[0].loss_value = 1.0;
  recs[1].loss_value = 2.0;
  recs[2].loss_value = 3.0;
  const RateFit f = fit_loglog(recs);
  EXPECT_DOUBLE_EQ(f.per_n_mean[0], 2.0);
  EXPECT_DOUBLE_EQ(f.per_n_two_std[0], 2.0);
}

TEST(FitLogLog, ExcludesFailuresAndRejectsDegenerateInput) {
  auto recs = power_law(2.0, -1.0, {100, 200, 400}, 2);
  recs[0].converged = false;
  recs[0].loss_value = 1e6;
  const RateFit f = fit_loglog(recs);
  EXPECT_EQ(f.failure_count, 1);
  EXPECT_NEAR(f.slope, -1.0, 1e-12);
  EXPECT_THROW(fit_loglog(power_law(1.0, -0.5, {100}, 5)), std::invalid_argument);
  EXPECT_THROW(fit_loglog({}), std::invalid_argument);
  auto trimmed = power_law(1.0, -0.5, {100, 200, 400}, 1);
  trimmed[0].loss_value = 50.0;
  EXPECT_NEAR(fit_loglog(trimmed, RegressionMode::LogOfMean, 1).slope, -0.5, 1e-12);
}

TEST(ReplicationSeed, DependsOnNAndRepOnly) {
  EXPECT_EQ(replication_seed(1, 100, 2), replication_seed(1, 100, 2));
  EXPECT_NE(replication_seed(1, 100, 2), replication_seed(1, 100, 3));
  EXPECT_NE(replication_seed(1, 100, 2), replication_seed(1, 101, 2));
  EXPECT_NE(replication_seed(1, 100, 2), replication_seed(2, 100, 2));
}

TEST(RunSweep, DeterministicCanonicalAndThreadIndependent) {
  SweepConfig cfg = small_config();
  cfg.k_fit = {3, 4};
  cfg.threads = 1;
  const auto seq = run_sweep(cfg);
  cfg.threads = 3;
  const auto par = run_sweep(cfg);
  ASSERT_EQ(seq.size(), 8u);
  ASSERT_EQ(par.size(), 8u);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    EXPECT_EQ(seq[i].k_fit, par[i].k_fit);
    EXPECT_EQ(seq[i].n, par[i].n);
    EXPECT_EQ(seq[i].replication, par[i].replication);
    EXPECT_EQ(seq[i].seed, par[i].seed);
    EXPECT_EQ(seq[i].loss_value, par[i].loss_value);
    EXPECT_EQ(seq[i].final_loglik, par[i].final_loglik);
    EXPECT_GE(seq[i].loss_value, 0.0);
    EXPECT_TRUE(std::isfinite(seq[i].loss_value));
  }
  EXPECT_EQ(seq[0].k_fit, 3);
  EXPECT_EQ(seq[4].k_fit, 4);
  EXPECT_EQ(seq[1].replication, 1);
  EXPECT_EQ(seq[2].n, 400);
}

TEST(RunSweep, AddingGridPointsKeepsRecords) {
  SweepConfig cfg = small_config();
  const auto base = run_sweep(cfg);
  cfg.n_grid = {100, 200, 400};
  const auto more = run_sweep(cfg);
  ASSERT_EQ(more.size(), 6u);
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_EQ(base[i].seed, more[i + 2].seed);
    EXPECT_EQ(base[i].loss_value, more[i + 2].loss_value);
  }
}

TEST(RunReplication, SameInputsSameRecord) {
  const SweepConfig cfg = small_config();
  const SweepRecord a = run_replication(cfg, 3, 200, 1);
  const SweepRecord b = run_replication(cfg, 3, 200, 1);
  EXPECT_EQ(a.loss_value, b.loss_value);
  EXPECT_EQ(a.em_iterations, b.em_iterations);
  EXPECT_EQ(a.seed, replication_seed(cfg.master_seed, 200, 1));
}

TEST(SweepConfig, ValidatesInvariants) {
  SweepConfig cfg = small_config();
  EXPECT_NO_THROW(cfg.validate());
  cfg.n_grid = {400, 200};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.replications = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.loss = {LossKind::D3, 2};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.k_fit = {1};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(GroupSeries, FirstAppearanceOrder) {
  auto a = power_law(1.0, -0.5, {10, 20}, 1);
  auto b = a;
  for (auto& r : b) {
    r.gate = GateKind::SoftmaxBaseline;
    r.loss_name = "softmax_baseline";
  }
  std::vector<SweepRecord> all = b;
  all.insert(all.end(), a.begin(), a.end());
  const auto groups = group_series(all);
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].first.gate, GateKind::SoftmaxBaseline);
  EXPECT_EQ(groups[1].first.gate, GateKind::ModifiedSigmoid);
}
