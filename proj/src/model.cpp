#include "mlmoe/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mlmoe {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_interval(const Interval& iv, const char* name) {
  require(std::isfinite(iv.lo) && std::isfinite(iv.hi) && iv.lo < iv.hi,
          std::string("parameter box: empty or non-finite interval for ") + name);
}

void check_in(const Interval& iv, double v, const char* name, std::size_t atom) {
  require(std::isfinite(v), "atom " + std::to_string(atom) + ": non-finite " + name);
  require(iv.contains(v), "atom " + std::to_string(atom) + ": " + name + " = " +
                              std::to_string(v) + " outside parameter box");
}

// log(sum(exp(v))) with max subtraction.
template <typename Vec>
double log_sum_exp(const Vec& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

bool requires_temperature(GateKind gate) {
  return gate == GateKind::TempSigmoidInner || gate == GateKind::TempSigmoidEuclidean;
}

std::string_view to_string(GateKind gate) {
  switch (gate) {
    case GateKind::ModifiedSigmoid: return "modified_sigmoid";
    case GateKind::TempSigmoidInner: return "temp_sigmoid_inner";
    case GateKind::TempSigmoidEuclidean: return "temp_sigmoid_euclidean";
    case GateKind::SoftmaxBaseline: return "softmax";
  }
  return "unknown";
}

GateKind parse_gate_kind(std::string_view name) {
  for (GateKind g : {GateKind::ModifiedSigmoid, GateKind::TempSigmoidInner,
                     GateKind::TempSigmoidEuclidean, GateKind::SoftmaxBaseline}) {
    if (to_string(g) == name) return g;
  }
  throw std::invalid_argument("unknown gate kind '" + std::string(name) + "'");
}

void ParameterBox::validate() const {
  check_interval(gamma, "gamma");
  check_interval(alpha, "alpha");
  check_interval(beta, "beta");
  check_interval(tau, "tau");
  check_interval(a, "a");
  check_interval(b, "b");
  require(tau.lo > 0.0, "parameter box: tau lower bound must be positive");
}

bool ExpertAtom::is_canonical() const {
  const int k = classes();
  return k > 0 && b(k - 1) == 0.0 && a.col(k - 1).isZero(0.0);
}

ExpertAtom canonicalize_expert(ExpertAtom atom) {
  const int k = atom.classes();
  const Eigen::VectorXd last_a = atom.a.col(k - 1);
  const double last_b = atom.b(k - 1);
  atom.a.colwise() -= last_a;
  atom.b.array() -= last_b;
  return atom;
}

MixingMeasure::MixingMeasure(std::vector<ExpertAtom> atoms, GateKind gate,
                             std::optional<double> tau, ParameterBox bounds)
    : atoms_(std::move(atoms)), gate_(gate), tau_(tau), bounds_(bounds) {
  bounds_.validate();
  require(!atoms_.empty(), "mixing measure needs at least one atom");
  const int d = atoms_.front().dim();
  const int k = atoms_.front().classes();
  require(d >= 1, "atom dimension must be positive");
  require(k >= 1, "number of classes must be positive");
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    const ExpertAtom& at = atoms_[i];
    require(at.dim() == d && at.classes() == k && at.a.rows() == d && at.a.cols() == k,
            "atom " + std::to_string(i) + ": inconsistent shape");
    check_in(bounds_.gamma, at.gamma, "gamma", i);
    check_in(bounds_.beta, at.beta, "beta", i);
    for (int u = 0; u < d; ++u) check_in(bounds_.alpha, at.alpha(u), "alpha", i);
    for (int l = 0; l < k; ++l) {
      check_in(bounds_.b, at.b(l), "b", i);
      for (int u = 0; u < d; ++u) check_in(bounds_.a, at.a(u, l), "a", i);
    }
  }
  if (requires_temperature(gate_)) {
    require(tau_.has_value(), std::string(to_string(gate_)) + " gate requires a temperature");
    require(std::isfinite(*tau_) && bounds_.tau.contains(*tau_),
            "temperature outside parameter box");
  } else {
    require(!tau_.has_value(), std::string(to_string(gate_)) + " gate forbids a temperature");
  }
}

double MixingMeasure::total_mass() const {
  double m = 0.0;
  for (const auto& at : atoms_) m += std::exp(at.gamma);
  return m;
}

Dataset::Dataset(Eigen::MatrixXd x, std::vector<int> labels, int num_classes)
    : x_(std::move(x)), labels_(std::move(labels)), num_classes_(num_classes) {
  require(num_classes_ >= 1, "dataset: number of classes must be positive");
  require(x_.rows() == static_cast<Eigen::Index>(labels_.size()),
          "dataset: covariate rows and label count differ");
  require(x_.cols() >= 1, "dataset: covariate dimension must be positive");
  for (Eigen::Index j = 0; j < x_.rows(); ++j) {
    for (Eigen::Index u = 0; u < x_.cols(); ++u) {
      const double v = x_(j, u);
      require(v >= 0.0 && v <= 1.0, "dataset: covariate outside [0,1] at row " +
                                        std::to_string(j));
    }
    const int y = labels_[static_cast<std::size_t>(j)];
    require(y >= 0 && y < num_classes_, "dataset: label out of range at row " +
                                            std::to_string(j));
  }
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double log_sigmoid(double t) {
  if (t >= 0.0) return -std::log1p(std::exp(-t));
  return t - std::log1p(std::exp(t));
}

void check_dimension(const MixingMeasure& measure,
                     const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != measure.dim()) {
    throw std::invalid_argument("covariate has dimension " + std::to_string(x.size()) +
                                ", model expects " + std::to_string(measure.dim()));
  }
}

double affinity(GateKind gate, const ExpertAtom& atom, double tau,
                const Eigen::Ref<const Eigen::VectorXd>& x) {
  switch (gate) {
    case GateKind::ModifiedSigmoid:
    case GateKind::SoftmaxBaseline:
      return atom.alpha.dot(x) + atom.beta;
    case GateKind::TempSigmoidInner:
      return (atom.alpha.dot(x) + atom.beta) / tau;
    case GateKind::TempSigmoidEuclidean:
      return ((atom.alpha - x).norm() + atom.beta) / tau;
  }
  return 0.0;
}

double log_gate_numerator(GateKind gate, const ExpertAtom& atom, double tau,
                          const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double z = affinity(gate, atom, tau, x);
  if (gate == GateKind::SoftmaxBaseline) return atom.gamma + z;
  return atom.gamma + log_sigmoid(z);
}

Eigen::VectorXd gate_weights(const MixingMeasure& measure,
                             const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_dimension(measure, x);
  const double tau = measure.tau_or(1.0);
  Eigen::VectorXd eta(measure.size());
  for (int i = 0; i < measure.size(); ++i) {
    eta(i) = log_gate_numerator(measure.gate(), measure.atom(i), tau, x);
  }
  const double m = eta.maxCoeff();
  Eigen::VectorXd w = (eta.array() - m).exp().matrix();
  return w / w.sum();
}

Eigen::VectorXd expert_probs(const ExpertAtom& atom,
                             const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != atom.dim()) {
    throw std::invalid_argument("covariate has dimension " + std::to_string(x.size()) +
                                ", expert expects " + std::to_string(atom.dim()));
  }
  Eigen::VectorXd logits = atom.a.transpose() * x + atom.b;
  const double m = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - m).exp().matrix();
  return p / p.sum();
}

Eigen::VectorXd conditional_density(const MixingMeasure& measure,
                                    const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::VectorXd w = gate_weights(measure, x);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(measure.classes());
  for (int i = 0; i < measure.size(); ++i) p += w(i) * expert_probs(measure.atom(i), x);
  return p;
}

Eigen::MatrixXd log_gate_numerators(const MixingMeasure& measure, const Eigen::MatrixXd& x) {
  if (x.cols() != measure.dim()) {
    throw std::invalid_argument("covariate matrix has " + std::to_string(x.cols()) +
                                " columns, model expects " + std::to_string(measure.dim()));
  }
  const Eigen::Index n = x.rows();
  const double tau = measure.tau_or(1.0);
  Eigen::MatrixXd eta(n, measure.size());
  for (int i = 0; i < measure.size(); ++i) {
    const ExpertAtom& at = measure.atom(i);
    Eigen::ArrayXd z;
    switch (measure.gate()) {
      case GateKind::ModifiedSigmoid:
      case GateKind::SoftmaxBaseline:
        z = (x * at.alpha).array() + at.beta;
        break;
      case GateKind::TempSigmoidInner:
        z = ((x * at.alpha).array() + at.beta) / tau;
        break;
      case GateKind::TempSigmoidEuclidean:
        z = ((x.rowwise() - at.alpha.transpose()).rowwise().norm().array() + at.beta) / tau;
        break;
    }
    if (measure.gate() == GateKind::SoftmaxBaseline) {
      eta.col(i) = (z + at.gamma).matrix();
    } else {
      eta.col(i) = (z.min(0.0) - (-z.abs()).exp().log1p() + at.gamma).matrix();
    }
  }
  return eta;
}

Eigen::MatrixXd log_expert_likelihoods(const MixingMeasure& measure, const Dataset& data) {
  if (data.dim() != measure.dim() || data.classes() != measure.classes()) {
    throw std::invalid_argument("dataset shape does not match the model");
  }
  const Eigen::Index n = data.size();
  Eigen::MatrixXd out(n, measure.size());
  for (int i = 0; i < measure.size(); ++i) {
    const ExpertAtom& at = measure.atom(i);
    Eigen::MatrixXd logits = data.x() * at.a;
    logits.rowwise() += at.b.transpose();
    const Eigen::VectorXd m = logits.rowwise().maxCoeff();
    const Eigen::VectorXd lse =
        m.array() + (logits.colwise() - m).array().exp().rowwise().sum().log();
    for (Eigen::Index j = 0; j < n; ++j) {
      out(j, i) = logits(j, data.labels()[static_cast<std::size_t>(j)]) - lse(j);
    }
  }
  return out;
}

Eigen::VectorXd log_densities(const MixingMeasure& measure, const Dataset& data) {
  const Eigen::MatrixXd eta = log_gate_numerators(measure, data.x());
  const Eigen::MatrixXd joint = eta + log_expert_likelihoods(measure, data);
  Eigen::VectorXd out(data.size());
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    out(j) = log_sum_exp(joint.row(j)) - log_sum_exp(eta.row(j));
  }
  return out;
}

double log_likelihood(const MixingMeasure& measure, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("log_likelihood: empty dataset");
  return log_densities(measure, data).sum();
}

double pde_residual(const MixingMeasure& measure, int atom_index,
                    const Eigen::Ref<const Eigen::VectorXd>& x, int class_s, double h) {
  if (!requires_temperature(measure.gate())) {
    throw std::invalid_argument("pde_residual: gate has no temperature");
  }
  if (!(h > 0.0 && h <= 1e-3)) throw std::invalid_argument("pde_residual: h must be in (0, 1e-3]");
  if (atom_index < 0 || atom_index >= measure.size()) {
    throw std::invalid_argument("pde_residual: atom index out of range");
  }
  check_dimension(measure, x);
  const ExpertAtom& at = measure.atom(atom_index);
  if (class_s < 0 || class_s >= at.classes()) {
    throw std::invalid_argument("pde_residual: class out of range");
  }
  const GateKind gate = measure.gate();
  if (gate == GateKind::TempSigmoidEuclidean && (at.alpha - x).norm() <= 10.0 * h) {
    throw std::invalid_argument("pde_residual: alpha too close to x for the Euclidean score");
  }

  const double f = expert_probs(at, x)(class_s);
  const double tau = *measure.tau();
  auto u = [&](const Eigen::VectorXd& alpha, double beta, double t) {
    ExpertAtom probe = at;
    probe.alpha = alpha;
    probe.beta = beta;
    return sigmoid(affinity(gate, probe, t, x)) * f;
  };

  const double du_dtau = (u(at.alpha, at.beta, tau + h) - u(at.alpha, at.beta, tau - h)) / (2 * h);
  const double du_dbeta = (u(at.alpha, at.beta + h, tau) - u(at.alpha, at.beta - h, tau)) / (2 * h);
  double alpha_dot = 0.0;
  for (int c = 0; c < at.dim(); ++c) {
    Eigen::VectorXd up = at.alpha, dn = at.alpha;
    up(c) += h;
    dn(c) -= h;
    alpha_dot += at.alpha(c) * (u(up, at.beta, tau) - u(dn, at.beta, tau)) / (2 * h);
  }
  return du_dtau + (alpha_dot + at.beta * du_dbeta) / tau;
}

}  // namespace mlmoe
