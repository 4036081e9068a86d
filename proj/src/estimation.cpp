#include "mlmoe/estimation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "mlmoe/metrics.hpp"
#include "mlmoe/random.hpp"

namespace mlmoe {

void EMConfig::validate() const {
  if (!(tol > 0.0)) throw std::invalid_argument("em.tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("em.max_iter must be at least 1");
  if (!(m_step_inner_tol > 0.0)) throw std::invalid_argument("em.m_step_inner_tol must be positive");
  if (m_step_inner_max_iter < 1) {
    throw std::invalid_argument("em.m_step_inner_max_iter must be at least 1");
  }
  if (!(backtrack_shrink > 0.0 && backtrack_shrink < 1.0)) {
    throw std::invalid_argument("em.backtrack_shrink must lie in (0,1)");
  }
}

void InitConfig::validate() const {
  if (!(perturb_std > 0.0)) throw std::invalid_argument("init.perturb_std must be positive");
}

std::string_view to_string(FitStatus status) {
  switch (status) {
    case FitStatus::Converged: return "converged";
    case FitStatus::Stalled: return "stalled";
    case FitStatus::MaxIterations: return "max_iterations";
    case FitStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

namespace {

using Eigen::ArrayXd;
using Eigen::ArrayXXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct GateParams {
  double gamma;
  VectorXd alpha;
  double beta;
};

// Gate block of the per-sample expected complete-data log-likelihood.
class GateObjective {
 public:
  GateObjective(const ParameterLayout& layout, const MatrixXd& x, const MatrixXd& resp,
                std::vector<double> fixed_beta)
      : layout_(layout), x_(x), resp_(resp), fixed_beta_(std::move(fixed_beta)),
        resp_rowsum_(resp.rowwise().sum()) {}

  double operator()(const VectorXd& th, VectorXd* grad) const {
    const int k = layout_.atoms;
    const int d = layout_.dim;
    const Eigen::Index n = x_.rows();
    const int per = layout_.gate_per_atom();
    const GateKind gate = layout_.gate;
    const double tau = layout_.has_tau() ? th(th.size() - 1) : 1.0;
    const bool sig = gate != GateKind::SoftmaxBaseline;

    ArrayXXd z(n, k), eta(n, k), dsig(n, k);
    std::vector<GateParams> params(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      const int o = i * per;
      GateParams& gp = params[static_cast<std::size_t>(i)];
      gp.gamma = th(o);
      gp.alpha = th.segment(o + 1, d);
      gp.beta = layout_.has_beta() ? th(o + 1 + d) : fixed_beta_[static_cast<std::size_t>(i)];
      if (gate == GateKind::TempSigmoidEuclidean) {
        z.col(i) = ((x_.rowwise() - gp.alpha.transpose()).rowwise().norm().array() + gp.beta) / tau;
      } else {
        z.col(i) = (x_ * gp.alpha).array() + gp.beta;
        if (gate == GateKind::TempSigmoidInner) z.col(i) /= tau;
      }
      if (sig) {
        const ArrayXd e = (-z.col(i).abs()).exp();
        const ArrayXd onepe = 1.0 + e;
        eta.col(i) = z.col(i).min(0.0) - onepe.log() + gp.gamma;
        dsig.col(i) = (z.col(i) >= 0.0).select(e / onepe, 1.0 / onepe);
      } else {
        eta.col(i) = z.col(i) + gp.gamma;
      }
    }
    const ArrayXd m = eta.rowwise().maxCoeff();
    ArrayXXd w = (eta.colwise() - m).exp();
    const ArrayXd s = w.rowwise().sum();
    const ArrayXd lse = m + s.log();
    const double q = ((resp_.array() * eta).sum() - (lse * resp_rowsum_.array()).sum()) /
                     static_cast<double>(n);
    if (!grad) return q;

    w.colwise() /= s;
    ArrayXXd g = resp_.array() - w.colwise() * resp_rowsum_.array();
    grad->setZero(th.size());
    const double inv_n = 1.0 / static_cast<double>(n);
    double dtau = 0.0;
    for (int i = 0; i < k; ++i) {
      const int o = i * per;
      (*grad)(o) = g.col(i).sum() * inv_n;
      const ArrayXd gz = sig ? ArrayXd(g.col(i) * dsig.col(i)) : ArrayXd(g.col(i));
      const double scale = layout_.has_tau() ? inv_n / tau : inv_n;
      if (gate == GateKind::TempSigmoidEuclidean) {
        const GateParams& gp = params[static_cast<std::size_t>(i)];
        // d|alpha - x|/dalpha = (alpha - x)/|alpha - x|, taken as 0 at alpha = x.
        const MatrixXd diff = (-x_).rowwise() + gp.alpha.transpose();
        const ArrayXd nrm = diff.rowwise().norm().array();
        const ArrayXd wz = (nrm > 0.0).select(gz / nrm, 0.0);
        grad->segment(o + 1, d) = (diff.transpose() * wz.matrix()) * scale;
      } else {
        grad->segment(o + 1, d) = (x_.transpose() * gz.matrix()) * scale;
      }
      if (layout_.has_beta()) (*grad)(o + 1 + d) = gz.sum() * scale;
      if (layout_.has_tau()) dtau -= (gz * z.col(i)).sum();
    }
    if (layout_.has_tau()) (*grad)(th.size() - 1) = dtau * inv_n / tau;
    return q;
  }

 private:
  const ParameterLayout& layout_;
  const MatrixXd& x_;
  const MatrixXd& resp_;
  std::vector<double> fixed_beta_;
  VectorXd resp_rowsum_;
};

// One expert block: weighted multinomial logistic regression with the last
// class pinned to the zero logit.
class ExpertObjective {
 public:
  ExpertObjective(const ParameterLayout& layout, const Dataset& data, const MatrixXd& onehot,
                  const Eigen::Ref<const VectorXd>& weights)
      : layout_(layout), data_(data), onehot_(onehot), weights_(weights) {}

  double operator()(const VectorXd& th, VectorXd* grad) const {
    const int d = layout_.dim;
    const int kc = layout_.classes;
    const Eigen::Index n = data_.size();
    MatrixXd a = MatrixXd::Zero(d, kc);
    VectorXd b = VectorXd::Zero(kc);
    for (int l = 0; l < kc - 1; ++l) {
      a.col(l) = th.segment(l * d, d);
      b(l) = th(d * (kc - 1) + l);
    }
    MatrixXd logits = data_.x() * a;
    logits.rowwise() += b.transpose();
    const VectorXd m = logits.rowwise().maxCoeff();
    MatrixXd p = (logits.colwise() - m).array().exp().matrix();
    const VectorXd s = p.rowwise().sum();
    const VectorXd lse = m.array() + s.array().log();
    const VectorXd picked = (logits.array() * onehot_.array()).rowwise().sum().matrix();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double q = weights_.dot(picked - lse) * inv_n;
    if (!grad) return q;
    p.array().colwise() /= s.array();
    MatrixXd diff = onehot_ - p;
    diff.array().colwise() *= weights_.array();
    grad->resize(th.size());
    for (int l = 0; l < kc - 1; ++l) {
      grad->segment(l * d, d) = data_.x().transpose() * diff.col(l) * inv_n;
      (*grad)(d * (kc - 1) + l) = diff.col(l).sum() * inv_n;
    }
    return q;
  }

 private:
  const ParameterLayout& layout_;
  const Dataset& data_;
  const MatrixXd& onehot_;
  Eigen::Ref<const VectorXd> weights_;
};

MatrixXd one_hot(const Dataset& data) {
  MatrixXd y = MatrixXd::Zero(data.size(), data.classes());
  for (int j = 0; j < data.size(); ++j) y(j, data.labels()[static_cast<std::size_t>(j)]) = 1.0;
  return y;
}

std::vector<double> atom_betas(const MixingMeasure& m) {
  std::vector<double> out;
  for (const auto& at : m.atoms()) out.push_back(at.beta);
  return out;
}

void check_compatible(const MixingMeasure& m, const Dataset& data) {
  if (m.dim() != data.dim() || m.classes() != data.classes()) {
    throw std::invalid_argument("model and dataset shapes differ");
  }
}

}  // namespace

Eigen::VectorXd pack_parameters(const MixingMeasure& m) {
  const ParameterLayout lay(m);
  VectorXd th(lay.total());
  const int per = lay.gate_per_atom();
  for (int i = 0; i < lay.atoms; ++i) {
    const ExpertAtom& at = m.atom(i);
    th(i * per) = at.gamma;
    th.segment(i * per + 1, lay.dim) = at.alpha;
    if (lay.has_beta()) th(i * per + 1 + lay.dim) = at.beta;
    const int o = lay.gate_size() + i * lay.expert_size();
    for (int l = 0; l < lay.classes - 1; ++l) {
      th.segment(o + l * lay.dim, lay.dim) = at.a.col(l);
      th(o + lay.dim * (lay.classes - 1) + l) = at.b(l);
    }
  }
  if (lay.has_tau()) th(lay.gate_size() - 1) = *m.tau();
  return th;
}

MixingMeasure unpack_parameters(const MixingMeasure& like, const Eigen::VectorXd& th) {
  const ParameterLayout lay(like);
  if (th.size() != lay.total()) throw std::invalid_argument("packed parameter size mismatch");
  std::vector<ExpertAtom> atoms = like.atoms();
  const int per = lay.gate_per_atom();
  for (int i = 0; i < lay.atoms; ++i) {
    ExpertAtom& at = atoms[static_cast<std::size_t>(i)];
    at.gamma = th(i * per);
    at.alpha = th.segment(i * per + 1, lay.dim);
    if (lay.has_beta()) at.beta = th(i * per + 1 + lay.dim);
    const int o = lay.gate_size() + i * lay.expert_size();
    for (int l = 0; l < lay.classes - 1; ++l) {
      at.a.col(l) = th.segment(o + l * lay.dim, lay.dim);
      at.b(l) = th(o + lay.dim * (lay.classes - 1) + l);
    }
  }
  std::optional<double> tau;
  if (lay.has_tau()) tau = th(lay.gate_size() - 1);
  return MixingMeasure(std::move(atoms), like.gate(), tau, like.bounds());
}

void packed_bounds(const MixingMeasure& m, Eigen::VectorXd& lo, Eigen::VectorXd& hi) {
  const ParameterLayout lay(m);
  const ParameterBox& box = m.bounds();
  lo.resize(lay.total());
  hi.resize(lay.total());
  const int per = lay.gate_per_atom();
  for (int i = 0; i < lay.atoms; ++i) {
    lo(i * per) = box.gamma.lo;
    hi(i * per) = box.gamma.hi;
    lo.segment(i * per + 1, lay.dim).setConstant(box.alpha.lo);
    hi.segment(i * per + 1, lay.dim).setConstant(box.alpha.hi);
    if (lay.has_beta()) {
      lo(i * per + 1 + lay.dim) = box.beta.lo;
      hi(i * per + 1 + lay.dim) = box.beta.hi;
    }
    const int o = lay.gate_size() + i * lay.expert_size();
    const int na = lay.dim * (lay.classes - 1);
    lo.segment(o, na).setConstant(box.a.lo);
    hi.segment(o, na).setConstant(box.a.hi);
    lo.segment(o + na, lay.classes - 1).setConstant(box.b.lo);
    hi.segment(o + na, lay.classes - 1).setConstant(box.b.hi);
  }
  if (lay.has_tau()) {
    lo(lay.gate_size() - 1) = box.tau.lo;
    hi(lay.gate_size() - 1) = box.tau.hi;
  }
}

double expected_complete_loglik(const MixingMeasure& m, const Eigen::MatrixXd& resp,
                                const Dataset& data, Eigen::VectorXd* grad) {
  check_compatible(m, data);
  if (resp.rows() != data.size() || resp.cols() != m.size()) {
    throw std::invalid_argument("responsibility matrix shape mismatch");
  }
  const ParameterLayout lay(m);
  const VectorXd th = pack_parameters(m);
  const GateObjective gate_fn(lay, data.x(), resp, atom_betas(m));
  VectorXd g;
  double q = gate_fn(th.head(lay.gate_size()), grad ? &g : nullptr);
  if (grad) {
    grad->resize(lay.total());
    grad->head(lay.gate_size()) = g;
  }
  const MatrixXd onehot = one_hot(data);
  for (int i = 0; i < lay.atoms; ++i) {
    const ExpertObjective ex(lay, data, onehot, resp.col(i));
    const int o = lay.gate_size() + i * lay.expert_size();
    q += ex(th.segment(o, lay.expert_size()), grad ? &g : nullptr);
    if (grad) grad->segment(o, lay.expert_size()) = g;
  }
  return q;
}

namespace {

MixingMeasure perturb_assignment(const MixingMeasure& truth, const std::vector<int>& cell,
                                 double std_dev, RandomStream& rng) {
  const int k = static_cast<int>(cell.size());
  std::vector<int> cell_size(static_cast<std::size_t>(truth.size()), 0);
  for (int c : cell) ++cell_size[static_cast<std::size_t>(c)];
  const ParameterBox& box = truth.bounds();
  const bool softmax = truth.gate() == GateKind::SoftmaxBaseline;
  std::vector<ExpertAtom> atoms;
  atoms.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const int c = cell[static_cast<std::size_t>(i)];
    ExpertAtom at = truth.atom(c);
    const int kc = at.classes();
    at.gamma += std_dev * rng.normal() - std::log(static_cast<double>(cell_size[static_cast<std::size_t>(c)]));
    at.gamma = box.gamma.clamp(at.gamma);
    for (int u = 0; u < at.dim(); ++u) at.alpha(u) = box.alpha.clamp(at.alpha(u) + std_dev * rng.normal());
    if (!softmax) at.beta = box.beta.clamp(at.beta + std_dev * rng.normal());
    for (int l = 0; l < kc - 1; ++l) {
      for (int u = 0; u < at.dim(); ++u) at.a(u, l) = box.a.clamp(at.a(u, l) + std_dev * rng.normal());
      at.b(l) = box.b.clamp(at.b(l) + std_dev * rng.normal());
    }
    atoms.push_back(std::move(at));
  }
  std::optional<double> tau = truth.tau();
  if (tau) tau = box.tau.clamp(*tau + std_dev * rng.normal());
  return MixingMeasure(std::move(atoms), truth.gate(), tau, box);
}

}  // namespace

MixingMeasure init_perturbed(const MixingMeasure& truth, int k, const InitConfig& cfg) {
  cfg.validate();
  const int k_star = truth.size();
  if (k <= k_star) {
    throw std::invalid_argument("init_perturbed: k must exceed the number of truth atoms");
  }
  RandomStream rng(cfg.cell_seed);
  const std::vector<int> cell = random_cell_assignment(k, k_star, rng);
  return perturb_assignment(truth, cell, cfg.perturb_std, rng);
}

std::vector<int> random_cell_assignment(int k, int k_star, RandomStream& rng) {
  if (k_star < 1 || k < k_star) throw std::invalid_argument("random_cell_assignment: need k >= k_star >= 1");
  // Uniform surjection by rejection.
  std::vector<int> cell(static_cast<std::size_t>(k));
  for (;;) {
    std::vector<bool> hit(static_cast<std::size_t>(k_star), false);
    for (int i = 0; i < k; ++i) {
      cell[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k_star)));
      hit[static_cast<std::size_t>(cell[static_cast<std::size_t>(i)])] = true;
    }
    if (std::all_of(hit.begin(), hit.end(), [](bool h) { return h; })) return cell;
  }
}

Eigen::MatrixXd e_step(const MixingMeasure& measure, const Dataset& data) {
  check_compatible(measure, data);
  MatrixXd joint = log_gate_numerators(measure, data.x()) + log_expert_likelihoods(measure, data);
  const VectorXd m = joint.rowwise().maxCoeff();
  joint = (joint.colwise() - m).array().exp().matrix();
  const VectorXd s = joint.rowwise().sum();
  joint.array().colwise() /= s.array();
  return joint;
}

MStepResult m_step(const Eigen::MatrixXd& resp, const Dataset& data,
                   const MixingMeasure& current, const EMConfig& cfg, MStepState* state) {
  check_compatible(current, data);
  if (resp.rows() != data.size() || resp.cols() != current.size()) {
    throw std::invalid_argument("responsibility matrix shape mismatch");
  }
  const ParameterLayout lay(current);
  VectorXd th = pack_parameters(current);
  VectorXd lo, hi;
  packed_bounds(current, lo, hi);

  AscentOptions opts;
  opts.method = cfg.m_step_solver;
  opts.grad_tol = cfg.m_step_inner_tol;
  opts.max_iter = cfg.m_step_inner_max_iter;
  opts.shrink = cfg.backtrack_shrink;

  MStepResult out{current};
  if (state && static_cast<int>(state->experts.size()) != lay.atoms) {
    state->experts.assign(static_cast<std::size_t>(lay.atoms), MatrixXd());
  }

  double grad_sq = 0.0;
  const int gs = lay.gate_size();
  {
    const GateObjective gate_fn(lay, data.x(), resp, atom_betas(current));
    AscentResult r = maximize_in_box(
        [&](const VectorXd& v, VectorXd* g) { return gate_fn(v, g); }, th.head(gs),
        lo.head(gs), hi.head(gs), opts, state ? &state->gate : nullptr);
    th.head(gs) = r.x;
    out.q_before += r.start_value;
    out.q_after += r.value;
    out.inner_iterations += r.iterations;
    out.stalled = out.stalled || r.stalled;
    grad_sq += r.grad_norm * r.grad_norm;
  }
  const MatrixXd onehot = one_hot(data);
  const int es = lay.expert_size();
  for (int i = 0; i < lay.atoms; ++i) {
    const ExpertObjective ex(lay, data, onehot, resp.col(i));
    const int o = gs + i * es;
    AscentResult r = maximize_in_box(
        [&](const VectorXd& v, VectorXd* g) { return ex(v, g); }, th.segment(o, es),
        lo.segment(o, es), hi.segment(o, es), opts,
        state ? &state->experts[static_cast<std::size_t>(i)] : nullptr);
    th.segment(o, es) = r.x;
    out.q_before += r.start_value;
    out.q_after += r.value;
    out.inner_iterations += r.iterations;
    out.stalled = out.stalled || r.stalled;
    grad_sq += r.grad_norm * r.grad_norm;
  }
  out.grad_norm = std::sqrt(grad_sq);
  out.estimate = unpack_parameters(current, th);
  return out;
}

FitResult em_fit(const Dataset& data, int k, const MixingMeasure& truth,
                 const InitConfig& init_cfg, const EMConfig& em_cfg) {
  em_cfg.validate();
  init_cfg.validate();
  check_compatible(truth, data);
  if (data.size() == 0) throw std::invalid_argument("em_fit: empty dataset");
  if (k < truth.size()) throw std::invalid_argument("em_fit: k is smaller than the truth size");
  const auto start = std::chrono::steady_clock::now();

  MixingMeasure measure = [&] {
    if (k > truth.size()) return init_perturbed(truth, k, init_cfg);
    RandomStream rng(init_cfg.cell_seed);
    std::vector<int> identity(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) identity[static_cast<std::size_t>(i)] = i;
    return perturb_assignment(truth, identity, init_cfg.perturb_std, rng);
  }();

  FitResult res{measure};
  double ll = log_likelihood(measure, data);
  res.loglik_trace.push_back(ll);
  MStepState state;
  res.status = FitStatus::MaxIterations;
  if (!std::isfinite(ll)) {
    res.status = FitStatus::NumericalFailure;
    res.diagnostics = "non-finite log-likelihood at initialization";
  }
  while (res.status == FitStatus::MaxIterations && res.iterations < em_cfg.max_iter) {
    const MatrixXd resp = e_step(measure, data);
    MStepResult ms = m_step(resp, data, measure, em_cfg, &state);
    ++res.iterations;
    const double ll_new = log_likelihood(ms.estimate, data);
    if (!std::isfinite(ll_new) || !std::isfinite(ms.q_after)) {
      res.status = FitStatus::NumericalFailure;
      res.diagnostics = "non-finite log-likelihood at iteration " + std::to_string(res.iterations);
      break;
    }
    measure = std::move(ms.estimate);
    res.loglik_trace.push_back(ll_new);
    if (ms.stalled && !(ms.q_after > ms.q_before)) {
      res.status = FitStatus::Stalled;
      res.diagnostics = "M-step found no ascent step";
    } else if (std::abs(ll_new - ll) <= em_cfg.tol * (1.0 + std::abs(ll))) {
      res.status = FitStatus::Converged;
    }
    ll = ll_new;
  }
  res.converged = res.status == FitStatus::Converged || res.status == FitStatus::Stalled;
  res.estimate = align_gauge(measure, truth);
  res.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace mlmoe
