#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include <Eigen/Dense>

#include "mlmoe/model.hpp"

namespace mlmoe {

struct SampleConfig {
  int n = 1;
  std::uint64_t seed = 0;
  MixingMeasure truth;
};

// Sub-stream salts derived from the sample seed.
inline constexpr std::uint64_t kCovariateStream = 1;
inline constexpr std::uint64_t kLabelStream = 2;

// Checks the ground-truth conventions: canonical experts and at least one
// nonzero gate slope. Throws std::invalid_argument.
void validate_truth(const MixingMeasure& truth);

// i.i.d. Uniform[0,1) covariates, row by row, so row j does not depend on n.
Eigen::MatrixXd sample_covariates(int n, int d, std::uint64_t seed);

// Zero-based labels drawn by inverse CDF from the truth's conditional density.
std::vector<int> sample_labels(const MixingMeasure& truth, const Eigen::MatrixXd& x,
                               std::uint64_t seed);

Dataset sample_dataset(const SampleConfig& cfg);

// CSV with header x_0,...,x_{d-1},y; y is 1-based.
void write_dataset_csv(const Dataset& data, const std::string& path);
Dataset read_dataset_csv(const std::string& path, int num_classes);

}  // namespace mlmoe
