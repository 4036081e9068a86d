#pragma once

// Built-in property checks run by `mlmoe verify`: density normalization, the
// temperature PDE residual, loss axioms and EM monotonicity on small random
// instances.

#include <cstdint>
#include <string>
#include <vector>

#include "mlmoe/model.hpp"
#include "mlmoe/random.hpp"

namespace mlmoe {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Random measure with moderate parameters: gamma in [-1, 1], alpha and a in
// [-2, 2], beta and b in [-1, 1], tau in [0.5, 2] when the gate needs one.
// Experts are canonical.
MixingMeasure random_measure(GateKind gate, int k, int d, int classes, RandomStream& rng);

// Random point of [0, 1]^d.
Eigen::VectorXd random_point(int d, RandomStream& rng);

// Observed order of the PDE residual decay between step sizes h and h/2:
// log2(|R(h)| / |R(h/2)|).
double pde_observed_order(const MixingMeasure& m, int atom, const Eigen::VectorXd& x, int s, double h);

std::vector<CheckResult> run_property_suite(std::uint64_t seed = 1);

}  // namespace mlmoe
