#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "mlmoe/estimation.hpp"
#include "mlmoe/metrics.hpp"
#include "mlmoe/presets.hpp"
#include "mlmoe/sampling.hpp"
#include "mlmoe/verify.hpp"
#include "oracles.hpp"

using namespace mlmoe;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const GateKind kGates[] = {GateKind::ModifiedSigmoid, GateKind::TempSigmoidInner,
                           GateKind::TempSigmoidEuclidean, GateKind::SoftmaxBaseline};

Dataset draw_data(const MixingMeasure& m, int n, std::uint64_t seed) {
  return sample_dataset(SampleConfig{n, seed, m});
}

MatrixXd random_resp(int n, int k, RandomStream& rng) {
  MatrixXd r(n, k);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < k; ++i) r(j, i) = 0.05 + rng.uniform();
    r.row(j) /= r.row(j).sum();
  }
  return r;
}

// Q / n transcribed directly from the densities.
long double oracle_q(const MixingMeasure& m, const MatrixXd& resp, const Dataset& data) {
  const double tau = m.tau().value_or(1.0);
  long double q = 0;
  for (int j = 0; j < data.size(); ++j) {
    const VectorXd x = data.x().row(j).transpose();
    long double total = 0;
    for (const auto& at : m.atoms()) total += oracle::gate_numerator(m.gate(), at, tau, x);
    for (int i = 0; i < m.size(); ++i) {
      const long double w = oracle::gate_numerator(m.gate(), m.atom(i), tau, x) / total;
      const long double f = oracle::expert_prob(m.atom(i), x, data.labels()[static_cast<std::size_t>(j)]);
      q += resp(j, i) * (std::log(w) + std::log(f));
    }
  }
  return q / data.size();
}

}  // namespace

TEST(Packing, RoundTrip) {
  RandomStream rng(1);
  for (GateKind g : kGates) {
    const MixingMeasure m = random_measure(g, 3, 2, 3, rng);
    const ParameterLayout lay(m);
    const VectorXd th = pack_parameters(m);
    ASSERT_EQ(th.size(), lay.total());
    const MixingMeasure back = unpack_parameters(m, th);
    EXPECT_EQ(pack_parameters(back), th);
    EXPECT_LT((conditional_density(back, VectorXd::Constant(2, 0.4)) -
               conditional_density(m, VectorXd::Constant(2, 0.4))).norm(), 1e-15);
  }
}

TEST(ExpectedCompleteLoglik, MatchesOracleValue) {
  RandomStream rng(2);
  for (GateKind g : kGates) {
    const MixingMeasure m = random_measure(g, 3, 2, 3, rng);
    const Dataset data = draw_data(m, 40, 5);
    const MatrixXd resp = random_resp(40, 3, rng);
    EXPECT_NEAR(expected_complete_loglik(m, resp, data), static_cast<double>(oracle_q(m, resp, data)), 1e-12);
  }
}

TEST(ExpectedCompleteLoglik, GradientMatchesFiniteDifferences) {
  RandomStream rng(3);
  for (int t = 0; t < 20; ++t) {
    const GateKind g = kGates[t % 4];
    const int k = 2 + static_cast<int>(rng.below(3));
    const int d = 1 + static_cast<int>(rng.below(2));
    const MixingMeasure m = random_measure(g, k, d, 2 + static_cast<int>(rng.below(2)), rng);
    const Dataset data = draw_data(m, 60, 100 + static_cast<std::uint64_t>(t));
    const MatrixXd resp = random_resp(60, k, rng);
    VectorXd grad;
    expected_complete_loglik(m, resp, data, &grad);
    const VectorXd th = pack_parameters(m);
    VectorXd fd(th.size());
    const double h = 1e-6;
    for (Eigen::Index c = 0; c < th.size(); ++c) {
      VectorXd up = th, dn = th;
      up(c) += h;
      dn(c) -= h;
      fd(c) = (expected_complete_loglik(unpack_parameters(m, up), resp, data) -
               expected_complete_loglik(unpack_parameters(m, dn), resp, data)) / (2 * h);
    }
    EXPECT_LT((grad - fd).norm() / std::max(fd.norm(), 1e-8), 1e-5) << to_string(g);
  }
}

TEST(EStep, RowsAreStochastic) {
  RandomStream rng(4);
  for (GateKind g : kGates) {
    const MixingMeasure m = random_measure(g, 3, 1, 2, rng);
    const Dataset data = draw_data(m, 100, 6);
    const MatrixXd r = e_step(m, data);
    EXPECT_LT((r.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_GE(r.minCoeff(), 0.0);
  }
}

TEST(MStep, DoesNotDecreaseQ) {
  RandomStream rng(5);
  for (GateKind g : kGates) {
    const MixingMeasure m = random_measure(g, 3, 1, 2, rng);
    const Dataset data = draw_data(m, 300, 7);
    const MatrixXd resp = e_step(m, data);
    EMConfig cfg;
    const MStepResult ms = m_step(resp, data, m, cfg);
    EXPECT_GE(ms.q_after, ms.q_before - 1e-15);
    EXPECT_NEAR(ms.q_before, expected_complete_loglik(m, resp, data), 1e-12);
    EXPECT_NEAR(ms.q_after, expected_complete_loglik(ms.estimate, resp, data), 1e-12);
    EXPECT_GE(log_likelihood(ms.estimate, data), log_likelihood(m, data) - 1e-9 * data.size());
  }
}

TEST(CellAssignment, UniformOverSurjections) {
  // 14 surjections of 4 atoms onto 2 cells: cell sizes (1,3) x4, (2,2) x6,
  // (3,1) x4.
  RandomStream rng(6);
  std::map<std::vector<int>, int> counts;
  std::map<int, int> first_cell_size;
  const int draws = 28000;
  for (int t = 0; t < draws; ++t) {
    const auto cell = random_cell_assignment(4, 2, rng);
    ++counts[cell];
    ++first_cell_size[static_cast<int>(std::count(cell.begin(), cell.end(), 0))];
  }
  EXPECT_EQ(counts.size(), 14u);
  double chi2 = 0.0;
  for (const auto& [cell, c] : counts) chi2 += (c - draws / 14.0) * (c - draws / 14.0) / (draws / 14.0);
  EXPECT_LT(chi2, 34.53);  // chi-square(13) upper 0.001 quantile
  EXPECT_NEAR(first_cell_size[1] / double(draws), 4.0 / 14, 0.015);
  EXPECT_NEAR(first_cell_size[2] / double(draws), 6.0 / 14, 0.015);
  EXPECT_NEAR(first_cell_size[3] / double(draws), 4.0 / 14, 0.015);
}

TEST(Init, PerturbationKeepsCellMassesAndBox) {
  const MixingMeasure truth = preset_truth("sigmoid_comparison");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    InitConfig cfg;
    cfg.cell_seed = seed;
    cfg.perturb_std = 1e-14;
    const MixingMeasure m = init_perturbed(truth, 4, cfg);
    EXPECT_EQ(m.size(), 4);
    EXPECT_NEAR(evaluate_loss(default_loss_for(truth.gate()), m, truth), 0.0, 1e-12);
    EXPECT_NEAR(m.total_mass(), truth.total_mass(), 1e-12);
  }
  InitConfig wide;
  wide.perturb_std = 100.0;
  const MixingMeasure clamped = init_perturbed(truth, 3, wide);
  for (const auto& at : clamped.atoms()) EXPECT_TRUE(clamped.bounds().alpha.contains(at.alpha(0)));
  EXPECT_THROW(init_perturbed(truth, 2, InitConfig{}), std::invalid_argument);
}

TEST(Init, SoftmaxInterceptStaysFixed) {
  const MixingMeasure truth = preset_truth("softmax_comparison");
  InitConfig cfg;
  cfg.perturb_std = 0.5;
  const MixingMeasure m = init_perturbed(truth, 4, cfg);
  for (const auto& at : m.atoms()) EXPECT_EQ(at.beta, 0.0);
}

TEST(EmFit, MonotoneTraceAndDeterministic) {
  for (const auto& name : preset_names()) {
    const MixingMeasure truth = preset_truth(name);
    const Dataset data = draw_data(truth, 2000, 8);
    EMConfig em;
    em.max_iter = 40;
    InitConfig init;
    init.cell_seed = 3;
    const FitResult a = em_fit(data, 3, truth, init, em);
    const FitResult b = em_fit(data, 3, truth, init, em);
    EXPECT_EQ(a.loglik_trace, b.loglik_trace);
    EXPECT_EQ(a.iterations + 1, static_cast<int>(a.loglik_trace.size()));
    for (std::size_t t = 1; t < a.loglik_trace.size(); ++t) {
      EXPECT_GE(a.loglik_trace[t], a.loglik_trace[t - 1] - 1e-9 * data.size()) << name;
    }
    EXPECT_NE(a.status, FitStatus::NumericalFailure);
    EXPECT_NEAR(a.estimate.total_mass(), truth.total_mass(), 1e-9) << name;
  }
}

TEST(EmFit, ExactlySpecifiedAndArgumentChecks) {
  const MixingMeasure truth = preset_truth("temp_euclidean");
  const Dataset data = draw_data(truth, 500, 9);
  EMConfig em;
  em.max_iter = 5;
  const FitResult r = em_fit(data, 2, truth, InitConfig{}, em);
  EXPECT_EQ(r.estimate.size(), 2);
  EXPECT_THROW(em_fit(data, 1, truth, InitConfig{}, em), std::invalid_argument);
  EMConfig bad;
  bad.tol = 0.0;
  EXPECT_THROW(em_fit(data, 3, truth, InitConfig{}, bad), std::invalid_argument);
  bad = EMConfig{};
  bad.backtrack_shrink = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(EmFit, GradientAscentSolverAlsoAscends) {
  const MixingMeasure truth = preset_truth("sigmoid_comparison");
  const Dataset data = draw_data(truth, 1000, 10);
  EMConfig em;
  em.m_step_solver = AscentMethod::GradientAscent;
  em.max_iter = 10;
  const FitResult r = em_fit(data, 3, truth, InitConfig{}, em);
  for (std::size_t t = 1; t < r.loglik_trace.size(); ++t) {
    EXPECT_GE(r.loglik_trace[t], r.loglik_trace[t - 1] - 1e-9 * data.size());
  }
}
