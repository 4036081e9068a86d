#pragma once

// Voronoi losses between a fitted mixing measure and the truth, and Monte
// Carlo divergences between conditional densities.
//
// Fitted atoms are assigned to the cell of the nearest truth atom, distance
// taken on theta = (alpha, beta, a, b); gamma and the temperature are left out
// and ties go to the lowest truth index. Every loss has the shape
//
//   sum_j | sum_{i in A_j} exp(gamma_i) - exp(gamma*_j) |
//     + sum_j sum_{i in A_j} exp(gamma_i) * sum of |delta|^p over coordinates
//
// where the exponent p depends on the loss and on the cell size.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mlmoe/model.hpp"

namespace mlmoe {

struct VoronoiAssignment {
  std::vector<std::vector<int>> cells;  // one per truth atom
  std::vector<int> owner;               // owner[i] = cell of fitted atom i
  Eigen::MatrixXd distances;            // k' x k*
};

VoronoiAssignment voronoi_cells(const MixingMeasure& fitted, const MixingMeasure& truth);

struct AtomDelta {
  double d_alpha = 0.0;
  double d_beta = 0.0;
  double d_tau = 0.0;
  Eigen::VectorXd d_a;  // per class, norm over the d slope coordinates
  Eigen::VectorXd d_b;  // per class

  // |d_alpha|^p + |d_beta|^p + (|d_tau|^p when `with_tau`) + sum_l (d_a^p + d_b^p)
  double sum_powers(int p, bool with_tau) const;
};

AtomDelta atom_delta(const ExpertAtom& fitted, const ExpertAtom& truth, double d_tau = 0.0);

double loss_D1(const MixingMeasure& fitted, const MixingMeasure& truth);
double loss_D2r(const MixingMeasure& fitted, const MixingMeasure& truth, int r);
double loss_D3(const MixingMeasure& fitted, const MixingMeasure& truth);
// Structural analog of the softmax-gate Voronoi loss: the D1 shape over the
// softmax parameterization.
double loss_softmax_baseline(const MixingMeasure& fitted, const MixingMeasure& truth);

enum class LossKind { D1, D2r, D3, SoftmaxBaseline };

struct LossSpec {
  LossKind kind = LossKind::D1;
  int r = 2;  // only used by D2r

  std::string name() const;  // "D1", "D2_2", "D3", "softmax_baseline"
  bool compatible_with(GateKind gate) const;
  bool operator==(const LossSpec&) const = default;
};

LossSpec parse_loss(std::string_view name, int r = 2);
LossSpec loss_from_name(std::string_view name);  // accepts name() output
double evaluate_loss(const LossSpec& spec, const MixingMeasure& fitted, const MixingMeasure& truth);

// The loss that matches a gate's estimation theory.
LossSpec default_loss_for(GateKind gate);

// Puts a fitted measure into the truth's gauge. Gate weights are invariant to
// a common shift of every gamma, so fitted gammas are shifted until the total
// mass sum exp(gamma_i) equals the truth's. For the softmax gate a common
// shift of the slopes is also invisible; it is chosen to minimize the
// exp(gamma)-weighted squared distance of slopes to their Voronoi truth atoms.
// Conditional densities are unchanged.
MixingMeasure align_gauge(const MixingMeasure& fitted, const MixingMeasure& truth);

enum class DivergenceKind { TV, Hellinger };

struct DivergenceEstimate {
  double mean = 0.0;
  double sample_std = 0.0;  // across covariate draws
  int draws = 0;
};

DivergenceEstimate divergence_mc_detail(const MixingMeasure& g1, const MixingMeasure& g2, int m,
                                        std::uint64_t seed, DivergenceKind kind);
double divergence_mc(const MixingMeasure& g1, const MixingMeasure& g2, int m, std::uint64_t seed,
                     DivergenceKind kind);

// Pointwise distances between two discrete distributions.
double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q);
double hellinger(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

}  // namespace mlmoe
