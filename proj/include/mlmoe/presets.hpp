#pragma once

// Ground-truth configurations of the reference experiments (k* = 2 experts,
// K = 2 classes, d = 1).

#include <string>
#include <string_view>
#include <vector>

#include "mlmoe/model.hpp"

namespace mlmoe {

// One-dimensional atom from per-class expert slopes and intercepts.
ExpertAtom make_atom_1d(double gamma, double alpha, double beta, const std::vector<double>& a,
                        const std::vector<double>& b);

std::vector<std::string> preset_names();

// Table values as published; experts are not necessarily canonical.
MixingMeasure preset_truth_raw(std::string_view name);

// Same measure with every expert canonicalized (last class logit zero).
MixingMeasure preset_truth(std::string_view name);

}  // namespace mlmoe
