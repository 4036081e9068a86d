#pragma once

// Maximum likelihood fitting by generalized EM.
//
// The E-step computes posterior responsibilities in closed form. The M-step
// has no closed form for the gate, so it numerically ascends the expected
// complete-data log-likelihood: the gate parameters (and the shared
// temperature) jointly, and each expert as a weighted multinomial logistic
// regression. Experts are fitted in the canonical gauge where the last class
// has the zero logit; for the softmax gate the intercept beta stays fixed and
// gamma plays its role.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlmoe/model.hpp"
#include "mlmoe/optimize.hpp"
#include "mlmoe/random.hpp"

namespace mlmoe {

struct EMConfig {
  double tol = 1e-6;
  int max_iter = 1000;
  AscentMethod m_step_solver = AscentMethod::QuasiNewton;
  double m_step_inner_tol = 1e-8;
  int m_step_inner_max_iter = 200;
  double backtrack_shrink = 0.5;

  void validate() const;
  bool operator==(const EMConfig&) const = default;
};

enum class InitScheme { PerturbTruth };

struct InitConfig {
  InitScheme scheme = InitScheme::PerturbTruth;
  double perturb_std = 0.01;
  std::uint64_t cell_seed = 0;

  void validate() const;
  bool operator==(const InitConfig&) const = default;
};

enum class FitStatus { Converged, Stalled, MaxIterations, NumericalFailure };
std::string_view to_string(FitStatus status);

struct FitResult {
  explicit FitResult(MixingMeasure m) : estimate(std::move(m)) {}

  MixingMeasure estimate;
  std::vector<double> loglik_trace;  // initial value first
  int iterations = 0;
  bool converged = false;
  FitStatus status = FitStatus::MaxIterations;
  std::int64_t wall_time_ms = 0;
  std::string diagnostics;
};

// Layout of the free parameters: per atom gamma, alpha (d), beta (not for the
// softmax gate), then the temperature if present; followed by one expert block
// per atom holding the first K-1 columns of a and entries of b.
struct ParameterLayout {
  GateKind gate;
  int atoms;
  int dim;
  int classes;

  explicit ParameterLayout(const MixingMeasure& m)
      : gate(m.gate()), atoms(m.size()), dim(m.dim()), classes(m.classes()) {}

  bool has_beta() const { return gate != GateKind::SoftmaxBaseline; }
  bool has_tau() const { return requires_temperature(gate); }
  int gate_per_atom() const { return 1 + dim + (has_beta() ? 1 : 0); }
  int gate_size() const { return atoms * gate_per_atom() + (has_tau() ? 1 : 0); }
  int expert_size() const { return (dim + 1) * (classes - 1); }
  int total() const { return gate_size() + atoms * expert_size(); }
};

Eigen::VectorXd pack_parameters(const MixingMeasure& m);
// Rebuilds a measure shaped like `like` from packed parameters. Fixed
// coordinates (softmax beta, last-class expert entries) are taken from `like`.
MixingMeasure unpack_parameters(const MixingMeasure& like, const Eigen::VectorXd& theta);
// Box bounds in packed layout.
void packed_bounds(const MixingMeasure& m, Eigen::VectorXd& lo, Eigen::VectorXd& hi);

// Expected complete-data log-likelihood divided by n, with its gradient in the
// packed layout.
double expected_complete_loglik(const MixingMeasure& m, const Eigen::MatrixXd& resp,
                                const Dataset& data, Eigen::VectorXd* grad = nullptr);

// Uniformly random surjection of k fitted atoms onto k_star cells: entry i is
// the cell of atom i.
std::vector<int> random_cell_assignment(int k, int k_star, RandomStream& rng);

MixingMeasure init_perturbed(const MixingMeasure& truth, int k, const InitConfig& cfg);

// Responsibilities, n x k'. Rows sum to one.
Eigen::MatrixXd e_step(const MixingMeasure& measure, const Dataset& data);

struct MStepResult {
  explicit MStepResult(MixingMeasure m) : estimate(std::move(m)) {}

  MixingMeasure estimate;
  double q_before = 0.0;  // per-sample objective
  double q_after = 0.0;
  double grad_norm = 0.0;  // projected, over all blocks
  int inner_iterations = 0;
  bool stalled = false;  // some block found no ascent step
};

// BFGS inverse-Hessian approximations carried between M-steps of one fit.
struct MStepState {
  Eigen::MatrixXd gate;
  std::vector<Eigen::MatrixXd> experts;
};

MStepResult m_step(const Eigen::MatrixXd& resp, const Dataset& data,
                   const MixingMeasure& current, const EMConfig& cfg,
                   MStepState* state = nullptr);

// Requires k >= number of truth atoms. With k equal to it the initialization
// keeps one fitted atom per truth atom. The returned estimate is put in the
// truth's gauge (see align_gauge).
FitResult em_fit(const Dataset& data, int k, const MixingMeasure& truth,
                 const InitConfig& init_cfg, const EMConfig& em_cfg);

}  // namespace mlmoe
