#include "mlmoe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mlmoe/random.hpp"

namespace mlmoe {

namespace {

Eigen::VectorXd theta_vector(const ExpertAtom& at) {
  const int d = at.dim();
  const int k = at.classes();
  Eigen::VectorXd v(d + 1 + d * k + k);
  v.head(d) = at.alpha;
  v(d) = at.beta;
  v.segment(d + 1, d * k) = Eigen::Map<const Eigen::VectorXd>(at.a.data(), d * k);
  v.tail(k) = at.b;
  return v;
}

void check_shapes(const MixingMeasure& fitted, const MixingMeasure& truth) {
  if (fitted.dim() != truth.dim() || fitted.classes() != truth.classes()) {
    throw std::invalid_argument("fitted and true measures have different shapes");
  }
}

void require_gate(const MixingMeasure& fitted, const MixingMeasure& truth, bool ok,
                  const char* loss) {
  if (!ok || fitted.gate() != truth.gate()) {
    throw std::invalid_argument(std::string(loss) + " is not defined for the " +
                                std::string(to_string(fitted.gate())) + "/" +
                                std::string(to_string(truth.gate())) + " gates");
  }
}

// exponent(cell_size) gives the power applied to the deltas of that cell.
template <typename ExponentFn>
double voronoi_loss(const MixingMeasure& fitted, const MixingMeasure& truth, bool with_tau,
                    ExponentFn exponent) {
  check_shapes(fitted, truth);
  const VoronoiAssignment va = voronoi_cells(fitted, truth);
  const double d_tau = with_tau ? std::abs(*fitted.tau() - *truth.tau()) : 0.0;
  double weight_term = 0.0;
  double delta_term = 0.0;
  for (int j = 0; j < truth.size(); ++j) {
    const auto& cell = va.cells[static_cast<std::size_t>(j)];
    double mass = 0.0;
    const int p = exponent(static_cast<int>(cell.size()));
    for (int i : cell) {
      const double w = std::exp(fitted.atom(i).gamma);
      mass += w;
      delta_term += w * atom_delta(fitted.atom(i), truth.atom(j), d_tau).sum_powers(p, with_tau);
    }
    weight_term += std::abs(mass - std::exp(truth.atom(j).gamma));
  }
  return weight_term + delta_term;
}

int split_exponent(int cell_size) { return cell_size > 1 ? 2 : 1; }

}  // namespace

VoronoiAssignment voronoi_cells(const MixingMeasure& fitted, const MixingMeasure& truth) {
  check_shapes(fitted, truth);
  VoronoiAssignment va;
  va.cells.resize(static_cast<std::size_t>(truth.size()));
  va.owner.resize(static_cast<std::size_t>(fitted.size()));
  va.distances.resize(fitted.size(), truth.size());
  std::vector<Eigen::VectorXd> truth_theta;
  for (const auto& at : truth.atoms()) truth_theta.push_back(theta_vector(at));
  for (int i = 0; i < fitted.size(); ++i) {
    const Eigen::VectorXd th = theta_vector(fitted.atom(i));
    int best = 0;
    for (int j = 0; j < truth.size(); ++j) {
      va.distances(i, j) = (th - truth_theta[static_cast<std::size_t>(j)]).norm();
      if (va.distances(i, j) < va.distances(i, best)) best = j;
    }
    va.owner[static_cast<std::size_t>(i)] = best;
    va.cells[static_cast<std::size_t>(best)].push_back(i);
  }
  return va;
}

double AtomDelta::sum_powers(int p, bool with_tau) const {
  double s = std::pow(d_alpha, p) + std::pow(d_beta, p);
  if (with_tau) s += std::pow(d_tau, p);
  for (Eigen::Index l = 0; l < d_a.size(); ++l) s += std::pow(d_a(l), p) + std::pow(d_b(l), p);
  return s;
}

AtomDelta atom_delta(const ExpertAtom& fitted, const ExpertAtom& truth, double d_tau) {
  AtomDelta d;
  d.d_alpha = (fitted.alpha - truth.alpha).norm();
  d.d_beta = std::abs(fitted.beta - truth.beta);
  d.d_tau = std::abs(d_tau);
  d.d_a = (fitted.a - truth.a).colwise().norm().transpose();
  d.d_b = (fitted.b - truth.b).cwiseAbs();
  return d;
}

double loss_D1(const MixingMeasure& fitted, const MixingMeasure& truth) {
  require_gate(fitted, truth, fitted.gate() == GateKind::ModifiedSigmoid, "D1");
  return voronoi_loss(fitted, truth, false, split_exponent);
}

double loss_D2r(const MixingMeasure& fitted, const MixingMeasure& truth, int r) {
  if (r < 1) throw std::invalid_argument("D2r: r must be at least 1");
  require_gate(fitted, truth, requires_temperature(fitted.gate()), "D2r");
  return voronoi_loss(fitted, truth, true, [r](int) { return r; });
}

double loss_D3(const MixingMeasure& fitted, const MixingMeasure& truth) {
  require_gate(fitted, truth, requires_temperature(fitted.gate()), "D3");
  return voronoi_loss(fitted, truth, true, split_exponent);
}

double loss_softmax_baseline(const MixingMeasure& fitted, const MixingMeasure& truth) {
  require_gate(fitted, truth, fitted.gate() == GateKind::SoftmaxBaseline, "softmax baseline loss");
  return voronoi_loss(fitted, truth, false, split_exponent);
}

std::string LossSpec::name() const {
  switch (kind) {
    case LossKind::D1: return "D1";
    case LossKind::D2r: return "D2_" + std::to_string(r);
    case LossKind::D3: return "D3";
    case LossKind::SoftmaxBaseline: return "softmax_baseline";
  }
  return "unknown";
}

bool LossSpec::compatible_with(GateKind gate) const {
  switch (kind) {
    case LossKind::D1: return gate == GateKind::ModifiedSigmoid;
    case LossKind::D2r:
    case LossKind::D3: return requires_temperature(gate);
    case LossKind::SoftmaxBaseline: return gate == GateKind::SoftmaxBaseline;
  }
  return false;
}

LossSpec parse_loss(std::string_view name, int r) {
  if (name == "D1") return {LossKind::D1, 2};
  if (name == "D2r") {
    if (r < 1) throw std::invalid_argument("loss r must be at least 1");
    return {LossKind::D2r, r};
  }
  if (name == "D3") return {LossKind::D3, 2};
  if (name == "softmax_baseline") return {LossKind::SoftmaxBaseline, 2};
  throw std::invalid_argument("unknown loss '" + std::string(name) + "'");
}

LossSpec loss_from_name(std::string_view name) {
  if (name.starts_with("D2_")) return parse_loss("D2r", std::stoi(std::string(name.substr(3))));
  return parse_loss(name);
}

double evaluate_loss(const LossSpec& spec, const MixingMeasure& fitted, const MixingMeasure& truth) {
  switch (spec.kind) {
    case LossKind::D1: return loss_D1(fitted, truth);
    case LossKind::D2r: return loss_D2r(fitted, truth, spec.r);
    case LossKind::D3: return loss_D3(fitted, truth);
    case LossKind::SoftmaxBaseline: return loss_softmax_baseline(fitted, truth);
  }
  throw std::invalid_argument("unknown loss kind");
}

LossSpec default_loss_for(GateKind gate) {
  switch (gate) {
    case GateKind::ModifiedSigmoid: return {LossKind::D1, 2};
    case GateKind::TempSigmoidInner: return {LossKind::D2r, 2};
    case GateKind::TempSigmoidEuclidean: return {LossKind::D3, 2};
    case GateKind::SoftmaxBaseline: return {LossKind::SoftmaxBaseline, 2};
  }
  return {};
}

MixingMeasure align_gauge(const MixingMeasure& fitted, const MixingMeasure& truth) {
  check_shapes(fitted, truth);
  const ParameterBox& box = fitted.bounds();
  std::vector<ExpertAtom> atoms = fitted.atoms();

  double shift = std::log(truth.total_mass()) - std::log(fitted.total_mass());
  for (const auto& at : atoms) {
    shift = std::min(shift, box.gamma.hi - at.gamma);
    shift = std::max(shift, box.gamma.lo - at.gamma);
  }
  for (auto& at : atoms) at.gamma += shift;

  if (fitted.gate() == GateKind::SoftmaxBaseline) {
    const VoronoiAssignment va = voronoi_cells(fitted, truth);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(fitted.dim());
    double wsum = 0.0;
    for (int i = 0; i < fitted.size(); ++i) {
      const double w = std::exp(atoms[static_cast<std::size_t>(i)].gamma);
      v += w * (truth.atom(va.owner[static_cast<std::size_t>(i)]).alpha - atoms[static_cast<std::size_t>(i)].alpha);
      wsum += w;
    }
    v /= wsum;
    for (auto& at : atoms) {
      for (int u = 0; u < at.dim(); ++u) v(u) = std::clamp(v(u), box.alpha.lo - at.alpha(u), box.alpha.hi - at.alpha(u));
    }
    for (auto& at : atoms) at.alpha += v;
  }
  return MixingMeasure(std::move(atoms), fitted.gate(), fitted.tau(), box);
}

double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

double hellinger(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  const double h2 = 0.5 * (p.cwiseSqrt() - q.cwiseSqrt()).squaredNorm();
  return std::sqrt(std::max(0.0, h2));
}

DivergenceEstimate divergence_mc_detail(const MixingMeasure& g1, const MixingMeasure& g2, int m,
                                        std::uint64_t seed, DivergenceKind kind) {
  if (g1.dim() != g2.dim() || g1.classes() != g2.classes()) {
    throw std::invalid_argument("divergence_mc: measures have different shapes");
  }
  if (m < 1) throw std::invalid_argument("divergence_mc: m must be positive");
  RandomStream rng(mix_seed(seed, 3));
  Eigen::VectorXd x(g1.dim());
  double sum = 0.0, sum_sq = 0.0;
  for (int t = 0; t < m; ++t) {
    for (int u = 0; u < x.size(); ++u) x(u) = rng.uniform();
    const Eigen::VectorXd p = conditional_density(g1, x);
    const Eigen::VectorXd q = conditional_density(g2, x);
    const double v = kind == DivergenceKind::TV ? total_variation(p, q) : hellinger(p, q);
    sum += v;
    sum_sq += v * v;
  }
  DivergenceEstimate est;
  est.draws = m;
  est.mean = sum / m;
  est.sample_std = m > 1 ? std::sqrt(std::max(0.0, (sum_sq - m * est.mean * est.mean) / (m - 1))) : 0.0;
  return est;
}

double divergence_mc(const MixingMeasure& g1, const MixingMeasure& g2, int m, std::uint64_t seed,
                     DivergenceKind kind) {
  return divergence_mc_detail(g1, g2, m, seed, kind).mean;
}

}  // namespace mlmoe
