#include "mlmoe/verify.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mlmoe/estimation.hpp"
#include "mlmoe/metrics.hpp"
#include "mlmoe/sampling.hpp"

namespace mlmoe {

namespace {

double between(RandomStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

const GateKind kAllGates[] = {GateKind::ModifiedSigmoid, GateKind::TempSigmoidInner,
                              GateKind::TempSigmoidEuclidean, GateKind::SoftmaxBaseline};

CheckResult make(std::string name, bool ok, const std::string& detail) { return {std::move(name), ok, detail}; }

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

// Moves every parameter by a small random amount.
MixingMeasure nudge(const MixingMeasure& m, double delta, RandomStream& rng) {
  std::vector<ExpertAtom> atoms = m.atoms();
  for (auto& at : atoms) {
    at.gamma += delta * between(rng, -1, 1);
    for (int u = 0; u < at.dim(); ++u) at.alpha(u) += delta * between(rng, -1, 1);
    at.beta += delta * between(rng, -1, 1);
    for (int l = 0; l + 1 < at.classes(); ++l) {
      for (int u = 0; u < at.dim(); ++u) at.a(u, l) += delta * between(rng, -1, 1);
      at.b(l) += delta * between(rng, -1, 1);
    }
  }
  std::optional<double> tau = m.tau();
  if (tau) *tau += delta * between(rng, -1, 1);
  return MixingMeasure(std::move(atoms), m.gate(), tau, m.bounds());
}

}  // namespace

MixingMeasure random_measure(GateKind gate, int k, int d, int classes, RandomStream& rng) {
  std::vector<ExpertAtom> atoms;
  for (int i = 0; i < k; ++i) {
    ExpertAtom at;
    at.gamma = between(rng, -1, 1);
    at.alpha.resize(d);
    for (int u = 0; u < d; ++u) at.alpha(u) = between(rng, -2, 2);
    at.beta = gate == GateKind::SoftmaxBaseline ? 0.0 : between(rng, -1, 1);
    at.a = Eigen::MatrixXd::Zero(d, classes);
    at.b = Eigen::VectorXd::Zero(classes);
    for (int l = 0; l + 1 < classes; ++l) {
      for (int u = 0; u < d; ++u) at.a(u, l) = between(rng, -2, 2);
      at.b(l) = between(rng, -1, 1);
    }
    atoms.push_back(at);
  }
  std::optional<double> tau;
  if (requires_temperature(gate)) tau = between(rng, 0.5, 2.0);
  return MixingMeasure(std::move(atoms), gate, tau);
}

Eigen::VectorXd random_point(int d, RandomStream& rng) {
  Eigen::VectorXd x(d);
  for (int u = 0; u < d; ++u) x(u) = rng.uniform();
  return x;
}

double pde_observed_order(const MixingMeasure& m, int atom, const Eigen::VectorXd& x, int s, double h) {
  const double r1 = std::abs(pde_residual(m, atom, x, s, h));
  const double r2 = std::abs(pde_residual(m, atom, x, s, h / 2));
  return std::log2(r1 / r2);
}

std::vector<CheckResult> run_property_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;
  RandomStream rng(seed);

  {
    double worst = 0.0;
    bool nonneg = true;
    for (GateKind g : kAllGates) {
      for (int t = 0; t < 50; ++t) {
        const int k = 1 + static_cast<int>(rng.below(4));
        const int d = 1 + static_cast<int>(rng.below(2));
        const int K = 2 + static_cast<int>(rng.below(2));
        const MixingMeasure m = random_measure(g, k, d, K, rng);
        const Eigen::VectorXd x = random_point(d, rng);
        const Eigen::VectorXd p = conditional_density(m, x);
        const Eigen::VectorXd w = gate_weights(m, x);
        worst = std::max({worst, std::abs(p.sum() - 1.0), std::abs(w.sum() - 1.0)});
        nonneg = nonneg && p.minCoeff() >= 0.0 && w.minCoeff() >= 0.0;
      }
    }
    out.push_back(make("density normalization", worst < 1e-12 && nonneg, "max |sum - 1| = " + sci(worst)));
  }

  {
    double min_order = INFINITY;
    for (int t = 0; t < 50; ++t) {
      const int d = 1 + static_cast<int>(rng.below(2));
      const MixingMeasure m = random_measure(GateKind::TempSigmoidInner, 1, d, 2, rng);
      const Eigen::VectorXd x = random_point(d, rng);
      min_order = std::min(min_order, pde_observed_order(m, 0, x, 0, 1e-3));
    }
    out.push_back(make("inner-product PDE residual vanishes as O(h^2)", min_order >= 1.8,
                       "min observed order " + sci(min_order)));
  }

  {
    double min_mag = INFINITY, max_change = 0.0;
    int tried = 0;
    while (tried < 50) {
      const int d = 1 + static_cast<int>(rng.below(2));
      const MixingMeasure m = random_measure(GateKind::TempSigmoidEuclidean, 1, d, 2, rng);
      const Eigen::VectorXd x = random_point(d, rng);
      const Eigen::VectorXd diff = m.atom(0).alpha - x;
      const double norm = diff.norm();
      if (norm <= 0.1 || std::abs(x.dot(diff)) / norm < 0.05) continue;
      ++tried;
      const double r1 = pde_residual(m, 0, x, 0, 1e-3);
      const double r2 = pde_residual(m, 0, x, 0, 5e-4);
      min_mag = std::min(min_mag, std::abs(r2));
      max_change = std::max(max_change, std::abs(r1 - r2) / std::abs(r2));
    }
    out.push_back(make("Euclidean PDE residual has a nonzero limit", min_mag > 1e-4 && max_change < 1e-3,
                       "min |R| " + sci(min_mag) + ", max relative change " + sci(max_change)));
  }

  {
    bool ok = true;
    std::string detail = "zero at truth, positive off truth, permutation invariant";
    for (GateKind g : kAllGates) {
      const LossSpec spec = default_loss_for(g);
      for (int t = 0; t < 20 && ok; ++t) {
        const int d = 1 + static_cast<int>(rng.below(2));
        const MixingMeasure truth = random_measure(g, 2, d, 2, rng);
        const MixingMeasure near = nudge(truth, 0.05, rng);
        std::vector<ExpertAtom> rev(near.atoms().rbegin(), near.atoms().rend());
        const MixingMeasure permuted(rev, near.gate(), near.tau(), near.bounds());
        const double l0 = evaluate_loss(spec, truth, truth);
        const double l1 = evaluate_loss(spec, near, truth);
        const double l2 = evaluate_loss(spec, permuted, truth);
        if (l0 != 0.0 || !(l1 > 0.0) || std::abs(l1 - l2) > 1e-12 * (1.0 + l1)) {
          ok = false;
          detail = std::string(to_string(g)) + ": loss(truth)=" + sci(l0) + ", loss(near)=" + sci(l1) +
                   ", permuted=" + sci(l2);
        }
      }
    }
    out.push_back(make("loss axioms", ok, detail));
  }

  {
    bool ok = true;
    double worst = 0.0;
    for (GateKind g : kAllGates) {
      RandomStream local(mix_seed(seed, static_cast<std::uint64_t>(g) + 10));
      const MixingMeasure truth = random_measure(g, 2, 1, 2, local);
      const Dataset data = sample_dataset(SampleConfig{400, mix_seed(seed, 77), truth});
      EMConfig em;
      em.max_iter = 30;
      const FitResult fit = em_fit(data, 3, truth, InitConfig{}, em);
      for (std::size_t t = 1; t < fit.loglik_trace.size(); ++t) {
        worst = std::max(worst, fit.loglik_trace[t - 1] - fit.loglik_trace[t]);
      }
      ok = ok && fit.status != FitStatus::NumericalFailure;
    }
    out.push_back(make("EM log-likelihood is non-decreasing", ok && worst <= 1e-9 * 400,
                       "largest decrease " + sci(worst)));
  }
  return out;
}

}  // namespace mlmoe
