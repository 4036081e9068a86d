#pragma once

// Straight-line transcriptions of the model formulas, written independently of
// the library's log-space and batched code paths. Used as test oracles.

#include <cmath>
#include <vector>

#include "mlmoe/model.hpp"

namespace oracle {

using mlmoe::ExpertAtom;
using mlmoe::GateKind;
using mlmoe::MixingMeasure;

inline long double dot(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  long double s = 0;
  for (Eigen::Index i = 0; i < u.size(); ++i) s += static_cast<long double>(u(i)) * v(i);
  return s;
}

inline long double euclid(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  long double s = 0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const long double d = static_cast<long double>(u(i)) - v(i);
    s += d * d;
  }
  return std::sqrt(s);
}

inline long double gate_numerator(GateKind gate, const ExpertAtom& at, double tau, const Eigen::VectorXd& x) {
  const long double eg = std::exp(static_cast<long double>(at.gamma));
  switch (gate) {
    case GateKind::ModifiedSigmoid:
      return eg / (1 + std::exp(-(dot(at.alpha, x) + at.beta)));
    case GateKind::TempSigmoidInner:
      return eg / (1 + std::exp(-(dot(at.alpha, x) + at.beta) / tau));
    case GateKind::TempSigmoidEuclidean:
      return eg / (1 + std::exp(-(euclid(at.alpha, x) + at.beta) / tau));
    case GateKind::SoftmaxBaseline:
      return std::exp(dot(at.alpha, x) + at.beta + at.gamma);
  }
  return 0;
}

inline long double expert_prob(const ExpertAtom& at, const Eigen::VectorXd& x, int s) {
  long double den = 0;
  for (int l = 0; l < at.classes(); ++l) den += std::exp(dot(at.a.col(l), x) + at.b(l));
  return std::exp(dot(at.a.col(s), x) + at.b(s)) / den;
}

inline std::vector<long double> density(const MixingMeasure& m, const Eigen::VectorXd& x) {
  const double tau = m.tau().value_or(1.0);
  long double total = 0;
  for (const auto& at : m.atoms()) total += gate_numerator(m.gate(), at, tau, x);
  std::vector<long double> p(static_cast<std::size_t>(m.classes()), 0);
  for (const auto& at : m.atoms()) {
    const long double w = gate_numerator(m.gate(), at, tau, x) / total;
    for (int s = 0; s < m.classes(); ++s) p[static_cast<std::size_t>(s)] += w * expert_prob(at, x, s);
  }
  return p;
}

// Nearest truth atom on (alpha, beta, a, b); the first minimum wins.
inline std::vector<int> owners(const MixingMeasure& fitted, const MixingMeasure& truth) {
  std::vector<int> out;
  for (const auto& f : fitted.atoms()) {
    int best = -1;
    long double best_d = 0;
    for (int j = 0; j < truth.size(); ++j) {
      const ExpertAtom& t = truth.atom(j);
      long double d2 = 0;
      for (int u = 0; u < f.dim(); ++u) d2 += std::pow(static_cast<long double>(f.alpha(u)) - t.alpha(u), 2);
      d2 += std::pow(static_cast<long double>(f.beta) - t.beta, 2);
      for (int l = 0; l < f.classes(); ++l) {
        for (int u = 0; u < f.dim(); ++u) d2 += std::pow(static_cast<long double>(f.a(u, l)) - t.a(u, l), 2);
        d2 += std::pow(static_cast<long double>(f.b(l)) - t.b(l), 2);
      }
      if (best < 0 || d2 < best_d) {
        best = j;
        best_d = d2;
      }
    }
    out.push_back(best);
  }
  return out;
}

// Generic Voronoi loss: `split_power` on cells with more than one atom,
// `single_power` on singletons; tau deltas included when with_tau.
inline long double voronoi_loss(const MixingMeasure& fitted, const MixingMeasure& truth, int single_power,
                                int split_power, bool with_tau) {
  const std::vector<int> own = owners(fitted, truth);
  long double total = 0;
  for (int j = 0; j < truth.size(); ++j) {
    long double mass = 0;
    int count = 0;
    for (int i = 0; i < fitted.size(); ++i) {
      if (own[static_cast<std::size_t>(i)] != j) continue;
      mass += std::exp(static_cast<long double>(fitted.atom(i).gamma));
      ++count;
    }
    total += std::fabs(mass - std::exp(static_cast<long double>(truth.atom(j).gamma)));
    const int p = count > 1 ? split_power : single_power;
    const ExpertAtom& t = truth.atom(j);
    for (int i = 0; i < fitted.size(); ++i) {
      if (own[static_cast<std::size_t>(i)] != j) continue;
      const ExpertAtom& f = fitted.atom(i);
      long double r = std::pow(euclid(f.alpha, t.alpha), p) + std::pow(std::fabs(static_cast<long double>(f.beta) - t.beta), p);
      if (with_tau) r += std::pow(std::fabs(static_cast<long double>(*fitted.tau()) - *truth.tau()), p);
      for (int l = 0; l < f.classes(); ++l) {
        r += std::pow(euclid(f.a.col(l), t.a.col(l)), p);
        r += std::pow(std::fabs(static_cast<long double>(f.b(l)) - t.b(l)), p);
      }
      total += std::exp(static_cast<long double>(f.gamma)) * r;
    }
  }
  return total;
}

inline long double D1(const MixingMeasure& f, const MixingMeasure& t) { return voronoi_loss(f, t, 1, 2, false); }
inline long double D2(const MixingMeasure& f, const MixingMeasure& t, int r) { return voronoi_loss(f, t, r, r, true); }
inline long double D3(const MixingMeasure& f, const MixingMeasure& t) { return voronoi_loss(f, t, 1, 2, true); }
inline long double softmax_baseline(const MixingMeasure& f, const MixingMeasure& t) {
  return voronoi_loss(f, t, 1, 2, false);
}

}  // namespace oracle
