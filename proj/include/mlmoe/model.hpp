#pragma once

// Sigmoid-gated multinomial logistic mixture-of-experts models.
//
// A model is described by a MixingMeasure: a list of expert atoms, each
// carrying gate parameters (gamma, alpha, beta) and expert parameters (a, b),
// plus the gate kind and, for the temperature gates, one shared temperature.
//
// Class indices are zero-based in memory. Files and the CLI use 1-based
// labels.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mlmoe {

enum class GateKind {
  ModifiedSigmoid,       // exp(gamma) * sigmoid(alpha.x + beta)
  TempSigmoidInner,      // exp(gamma) * sigmoid((alpha.x + beta) / tau)
  TempSigmoidEuclidean,  // exp(gamma) * sigmoid((|alpha - x| + beta) / tau)
  SoftmaxBaseline,       // exp(alpha.x + beta + gamma)
};

bool requires_temperature(GateKind gate);
std::string_view to_string(GateKind gate);
GateKind parse_gate_kind(std::string_view name);

struct Interval {
  double lo;
  double hi;

  bool contains(double v) const { return v >= lo && v <= hi; }
  double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
};

// Compact parameter space. Every coordinate of every atom must lie in the
// corresponding interval.
struct ParameterBox {
  Interval gamma{-10.0, 10.0};
  Interval alpha{-20.0, 20.0};
  Interval beta{-20.0, 20.0};
  Interval tau{0.01, 20.0};
  Interval a{-20.0, 20.0};
  Interval b{-20.0, 20.0};

  void validate() const;
  bool operator==(const ParameterBox&) const = default;
};

struct ExpertAtom {
  double gamma = 0.0;
  Eigen::VectorXd alpha;  // d
  double beta = 0.0;
  Eigen::MatrixXd a;  // d x K, column l holds the slope of class l
  Eigen::VectorXd b;  // K

  int dim() const { return static_cast<int>(alpha.size()); }
  int classes() const { return static_cast<int>(b.size()); }

  // True when the last class carries the zero logit (a_{.K} = 0, b_K = 0).
  bool is_canonical() const;
};

// Subtracts the last class's logit from every class. Expert probabilities are
// unchanged.
ExpertAtom canonicalize_expert(ExpertAtom atom);

class MixingMeasure {
 public:
  // Throws std::invalid_argument when atoms are empty, shapes disagree,
  // entries are non-finite or outside the box, or the temperature does not
  // match the gate.
  MixingMeasure(std::vector<ExpertAtom> atoms, GateKind gate,
                std::optional<double> tau = std::nullopt,
                ParameterBox bounds = {});

  const std::vector<ExpertAtom>& atoms() const { return atoms_; }
  const ExpertAtom& atom(int i) const { return atoms_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(atoms_.size()); }
  GateKind gate() const { return gate_; }
  const std::optional<double>& tau() const { return tau_; }
  double tau_or(double fallback) const { return tau_.value_or(fallback); }
  const ParameterBox& bounds() const { return bounds_; }
  int dim() const { return atoms_.front().dim(); }
  int classes() const { return atoms_.front().classes(); }

  // Sum of exp(gamma_i).
  double total_mass() const;

 private:
  std::vector<ExpertAtom> atoms_;
  GateKind gate_;
  std::optional<double> tau_;
  ParameterBox bounds_;
};

// Covariates in rows; labels are zero-based class indices.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd x, std::vector<int> labels, int num_classes);

  const Eigen::MatrixXd& x() const { return x_; }
  const std::vector<int>& labels() const { return labels_; }
  int size() const { return static_cast<int>(labels_.size()); }
  int dim() const { return static_cast<int>(x_.cols()); }
  int classes() const { return num_classes_; }

 private:
  Eigen::MatrixXd x_;
  std::vector<int> labels_;
  int num_classes_;
};

double sigmoid(double t);
double log_sigmoid(double t);

// Scalar fed to the sigmoid (or, for the softmax gate, the exponent without
// gamma) for one atom at one covariate.
double affinity(GateKind gate, const ExpertAtom& atom, double tau,
                const Eigen::Ref<const Eigen::VectorXd>& x);

// log(exp(gamma) * sigmoid(affinity)), or gamma + affinity for softmax.
double log_gate_numerator(GateKind gate, const ExpertAtom& atom, double tau,
                          const Eigen::Ref<const Eigen::VectorXd>& x);

Eigen::VectorXd gate_weights(const MixingMeasure& measure,
                             const Eigen::Ref<const Eigen::VectorXd>& x);

Eigen::VectorXd expert_probs(const ExpertAtom& atom,
                             const Eigen::Ref<const Eigen::VectorXd>& x);

Eigen::VectorXd conditional_density(const MixingMeasure& measure,
                                    const Eigen::Ref<const Eigen::VectorXd>& x);

double log_likelihood(const MixingMeasure& measure, const Dataset& data);

// Batched log-space pieces used by estimation: entry (j, i) is the log gate
// numerator of atom i at row j, respectively log f(y_j | x_j; a_i, b_i).
Eigen::MatrixXd log_gate_numerators(const MixingMeasure& measure,
                                    const Eigen::MatrixXd& x);
Eigen::MatrixXd log_expert_likelihoods(const MixingMeasure& measure,
                                       const Dataset& data);

// Per-row log densities log p(y_j | x_j).
Eigen::VectorXd log_densities(const MixingMeasure& measure, const Dataset& data);

// Central finite-difference residual of the temperature/gate interaction on
// u(s|x) = sigmoid(affinity / tau) * f(s|x; a, b):
//   R = du/dtau + (1/tau) * (alpha . du/dalpha + beta * du/dbeta).
// R vanishes identically for the inner-product affinity.
double pde_residual(const MixingMeasure& measure, int atom_index,
                    const Eigen::Ref<const Eigen::VectorXd>& x, int class_s,
                    double h);

void check_dimension(const MixingMeasure& measure,
                     const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace mlmoe
