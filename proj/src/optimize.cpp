#include "mlmoe/optimize.hpp"

#include <cmath>

namespace mlmoe {

Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                                   const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  Eigen::VectorXd pg = grad;
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    if ((x(c) <= lo(c) && grad(c) < 0.0) || (x(c) >= hi(c) && grad(c) > 0.0)) pg(c) = 0.0;
  }
  return pg;
}

AscentResult maximize_in_box(const ObjectiveFn& f, const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                             const AscentOptions& opts, Eigen::MatrixXd* inverse_hessian) {
  const Eigen::Index p = x0.size();
  AscentResult res;
  res.x = x0.cwiseMax(lo).cwiseMin(hi);
  Eigen::VectorXd g(p);
  res.value = f(res.x, &g);
  res.start_value = res.value;

  const bool quasi_newton = opts.method == AscentMethod::QuasiNewton;
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(p, p);
  bool h_scaled = false;
  if (quasi_newton && inverse_hessian && inverse_hessian->rows() == p &&
      inverse_hessian->cols() == p && inverse_hessian->allFinite()) {
    h = *inverse_hessian;
    h_scaled = true;
  }
  double ga_step = 1.0;

  Eigen::VectorXd pg = projected_gradient(res.x, g, lo, hi);
  res.grad_norm = pg.norm();
  Eigen::VectorXd g_new(p);

  while (res.grad_norm > opts.grad_tol && res.iterations < opts.max_iter) {
    bool use_gradient = !quasi_newton;
    bool accepted = false;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      Eigen::VectorXd dir = use_gradient ? pg : Eigen::VectorXd(h * pg);
      // Freeze coordinates held at a bound.
      for (Eigen::Index c = 0; c < p; ++c) {
        if (pg(c) == 0.0 && g(c) != 0.0) dir(c) = 0.0;
      }
      if (dir.dot(pg) <= 0.0) {
        if (use_gradient) break;
        use_gradient = true;
        h = Eigen::MatrixXd::Identity(p, p);
        h_scaled = false;
        continue;
      }
      double step = use_gradient && !quasi_newton ? ga_step : 1.0;
      if (quasi_newton && !h_scaled) step = std::min(1.0, 1.0 / dir.norm());
      while (step >= opts.min_step) {
        Eigen::VectorXd trial = (res.x + step * dir).cwiseMax(lo).cwiseMin(hi);
        const double v = f(trial, &g_new);
        if (std::isfinite(v) && v >= res.value + opts.armijo * g.dot(trial - res.x) &&
            v > res.value) {
          const Eigen::VectorXd s = trial - res.x;
          const Eigen::VectorXd y = g - g_new;  // curvature of -f
          res.x = std::move(trial);
          res.value = v;
          g.swap(g_new);
          accepted = true;
          if (!quasi_newton) {
            ga_step = step * 2.0;
          } else {
            const double sy = s.dot(y);
            if (sy > 1e-12 * s.norm() * y.norm()) {
              if (!h_scaled) {
                h = Eigen::MatrixXd::Identity(p, p) * (sy / y.squaredNorm());
                h_scaled = true;
              }
              const double rho = 1.0 / sy;
              const Eigen::VectorXd hy = h * y;
              h += rho * rho * (y.dot(hy) + sy) * (s * s.transpose()) -
                   rho * (hy * s.transpose() + s * hy.transpose());
            }
          }
          break;
        }
        step *= opts.shrink;
      }
      if (!accepted) {
        if (use_gradient) break;
        use_gradient = true;
        h = Eigen::MatrixXd::Identity(p, p);
        h_scaled = false;
      }
    }
    if (!accepted) {
      res.stalled = true;
      break;
    }
    ++res.iterations;
    pg = projected_gradient(res.x, g, lo, hi);
    res.grad_norm = pg.norm();
  }
  res.converged = res.grad_norm <= opts.grad_tol;
  if (quasi_newton && inverse_hessian) *inverse_hessian = h_scaled ? h : Eigen::MatrixXd();
  return res;
}

}  // namespace mlmoe
