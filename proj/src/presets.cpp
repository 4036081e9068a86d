#include "mlmoe/presets.hpp"

#include <stdexcept>

namespace mlmoe {

ExpertAtom make_atom_1d(double gamma, double alpha, double beta, const std::vector<double>& a,
                        const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("make_atom_1d: bad class count");
  ExpertAtom at;
  at.gamma = gamma;
  at.alpha = Eigen::VectorXd::Constant(1, alpha);
  at.beta = beta;
  const auto k = static_cast<Eigen::Index>(a.size());
  at.a = Eigen::Map<const Eigen::MatrixXd>(a.data(), 1, k);
  at.b = Eigen::Map<const Eigen::VectorXd>(b.data(), k);
  return at;
}

std::vector<std::string> preset_names() {
  return {"sigmoid_comparison", "softmax_comparison", "temp_inner", "temp_euclidean"};
}

MixingMeasure preset_truth_raw(std::string_view name) {
  // Expert columns are (class 1, class 2).
  if (name == "sigmoid_comparison") {
    return MixingMeasure({make_atom_1d(0.2, -1.0, -0.5, {0.0, -1.0}, {-1.0, 1.0}),
                          make_atom_1d(-0.3, 1.0, 0.5, {0.0, 0.0}, {0.0, 2.0})},
                         GateKind::ModifiedSigmoid);
  }
  if (name == "softmax_comparison") {
    // Gate (intercept, slope) = (gamma, alpha); beta stays zero.
    return MixingMeasure({make_atom_1d(0.2, -1.0, 0.0, {0.0, -1.0}, {-1.0, 1.0}),
                          make_atom_1d(-0.3, 1.0, 0.0, {0.0, 0.0}, {0.0, 2.0})},
                         GateKind::SoftmaxBaseline);
  }
  if (name == "temp_inner") {
    return MixingMeasure({make_atom_1d(0.0, 1.0, 0.0, {0.0, 1.86}, {0.0, 0.963}),
                          make_atom_1d(0.0, 1.001, 0.0, {0.0, 1.87}, {0.0, 0.964})},
                         GateKind::TempSigmoidInner, 0.1);
  }
  if (name == "temp_euclidean") {
    return MixingMeasure({make_atom_1d(1.0, -5.0, -0.5, {-1.0, 0.0}, {2.0, 0.0}),
                          make_atom_1d(-1.0, 5.0, 0.5, {1.0, 0.0}, {-1.0, 0.0})},
                         GateKind::TempSigmoidEuclidean, 2.0);
  }
  throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

MixingMeasure preset_truth(std::string_view name) {
  const MixingMeasure raw = preset_truth_raw(name);
  std::vector<ExpertAtom> atoms;
  for (const auto& at : raw.atoms()) atoms.push_back(canonicalize_expert(at));
  return MixingMeasure(std::move(atoms), raw.gate(), raw.tau(), raw.bounds());
}

}  // namespace mlmoe
