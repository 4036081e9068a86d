#pragma once

// Box-constrained ascent used by the M-step: BFGS or plain gradient ascent,
// both with Armijo backtracking and projection onto the box by clamping.

#include <functional>

#include <Eigen/Dense>

namespace mlmoe {

enum class AscentMethod { GradientAscent, QuasiNewton };

// Returns the objective value; writes the gradient when `grad` is non-null.
using ObjectiveFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct AscentOptions {
  AscentMethod method = AscentMethod::QuasiNewton;
  double grad_tol = 1e-8;
  int max_iter = 200;
  double shrink = 0.5;
  double armijo = 1e-4;
  double min_step = 1e-14;
};

struct AscentResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double start_value = 0.0;
  double grad_norm = 0.0;  // projected gradient norm at x
  int iterations = 0;
  bool converged = false;  // projected gradient norm <= grad_tol
  bool stalled = false;    // line search found no ascent step
};

// Projected gradient: components that push out of an active bound are zeroed.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                                   const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

// Maximizes `f` over the box [lo, hi] starting from the clamped x0. When
// `inverse_hessian` is non-null and correctly sized it seeds BFGS and receives
// the final approximation.
AscentResult maximize_in_box(const ObjectiveFn& f, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                             const AscentOptions& opts,
                             Eigen::MatrixXd* inverse_hessian = nullptr);

}  // namespace mlmoe
