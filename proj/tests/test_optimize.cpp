#include <gtest/gtest.h>

#include "mlmoe/optimize.hpp"

using namespace mlmoe;
using Eigen::VectorXd;

namespace {

// Concave quadratic with maximum at c.
ObjectiveFn quadratic(const VectorXd& c, const VectorXd& scale) {
  return [=](const VectorXd& x, VectorXd* g) {
    const VectorXd d = x - c;
    if (g) *g = -2.0 * scale.cwiseProduct(d);
    return -d.cwiseProduct(scale).dot(d);
  };
}

VectorXd v2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

}  // namespace

class AscentMethods : public ::testing::TestWithParam<AscentMethod> {};

TEST_P(AscentMethods, FindsInteriorMaximum) {
  AscentOptions opts;
  opts.method = GetParam();
  opts.max_iter = 5000;
  const auto f = quadratic(v2(0.3, -0.7), v2(1.0, 4.0));
  const AscentResult r = maximize_in_box(f, v2(2.0, 2.0), v2(-5, -5), v2(5, 5), opts);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x(0), 0.3, 1e-8);
  EXPECT_NEAR(r.x(1), -0.7, 1e-8);
  EXPECT_GE(r.value, r.start_value);
  EXPECT_LE(r.grad_norm, opts.grad_tol);
}

TEST_P(AscentMethods, StopsOnActiveBound) {
  AscentOptions opts;
  opts.method = GetParam();
  opts.max_iter = 5000;
  const auto f = quadratic(v2(3.0, 0.5), v2(1.0, 1.0));
  const AscentResult r = maximize_in_box(f, v2(0.0, 0.0), v2(-1, -1), v2(1, 1), opts);
  EXPECT_DOUBLE_EQ(r.x(0), 1.0);
  EXPECT_NEAR(r.x(1), 0.5, 1e-8);
  EXPECT_TRUE(r.converged);
}

TEST_P(AscentMethods, NeverDecreases) {
  AscentOptions opts;
  opts.method = GetParam();
  opts.max_iter = 3;
  // Negated Rosenbrock.
  const ObjectiveFn f = [](const VectorXd& x, VectorXd* g) {
    const double a = 1 - x(0), b = x(1) - x(0) * x(0);
    if (g) *g = v2(2 * a + 400 * x(0) * b, -200 * b);
    return -(a * a + 100 * b * b);
  };
  const AscentResult r = maximize_in_box(f, v2(-1.2, 1.0), v2(-3, -3), v2(3, 3), opts);
  EXPECT_GE(r.value, r.start_value);
  EXPECT_LE(r.iterations, 3);
}

INSTANTIATE_TEST_SUITE_P(Methods, AscentMethods,
                         ::testing::Values(AscentMethod::GradientAscent, AscentMethod::QuasiNewton));

TEST(Bfgs, SolvesRosenbrock) {
  AscentOptions opts;
  opts.max_iter = 2000;
  opts.grad_tol = 1e-9;
  const ObjectiveFn f = [](const VectorXd& x, VectorXd* g) {
    const double a = 1 - x(0), b = x(1) - x(0) * x(0);
    if (g) *g = v2(2 * a + 400 * x(0) * b, -200 * b);
    return -(a * a + 100 * b * b);
  };
  const AscentResult r = maximize_in_box(f, v2(-1.2, 1.0), v2(-3, -3), v2(3, 3), opts);
  EXPECT_NEAR(r.x(0), 1.0, 1e-6);
  EXPECT_NEAR(r.x(1), 1.0, 1e-6);
}

TEST(ProjectedGradient, ZeroesOutwardComponents) {
  const VectorXd pg = projected_gradient(v2(1.0, 0.0), v2(2.0, -3.0), v2(-1, -1), v2(1, 1));
  EXPECT_EQ(pg(0), 0.0);
  EXPECT_EQ(pg(1), -3.0);
  const VectorXd inward = projected_gradient(v2(1.0, -1.0), v2(-2.0, 3.0), v2(-1, -1), v2(1, 1));
  EXPECT_EQ(inward, v2(-2.0, 3.0));
}

TEST(Bfgs, WarmStartKeepsHessianShape) {
  AscentOptions opts;
  Eigen::MatrixXd h;
  const auto f = quadratic(v2(0.1, 0.2), v2(1.0, 10.0));
  maximize_in_box(f, v2(1.0, 1.0), v2(-5, -5), v2(5, 5), opts, &h);
  ASSERT_EQ(h.rows(), 2);
  const AscentResult r = maximize_in_box(f, v2(0.5, 0.5), v2(-5, -5), v2(5, 5), opts, &h);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x(1), 0.2, 1e-8);
}
