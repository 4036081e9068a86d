#include "mlmoe/sampling.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mlmoe/random.hpp"

namespace mlmoe {

void validate_truth(const MixingMeasure& truth) {
  bool any_slope = false;
  for (int i = 0; i < truth.size(); ++i) {
    const ExpertAtom& at = truth.atom(i);
    if (!at.is_canonical()) {
      throw std::invalid_argument("truth atom " + std::to_string(i) +
                                  ": last class must have zero slope and intercept");
    }
    if (!at.alpha.isZero(0.0)) any_slope = true;
  }
  if (!any_slope) throw std::invalid_argument("truth: at least one gate slope must be nonzero");
}

Eigen::MatrixXd sample_covariates(int n, int d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("sample_covariates: n and d must be positive");
  RandomStream rng(mix_seed(seed, kCovariateStream));
  Eigen::MatrixXd x(n, d);
  for (int j = 0; j < n; ++j) {
    for (int u = 0; u < d; ++u) x(j, u) = rng.uniform();
  }
  return x;
}

std::vector<int> sample_labels(const MixingMeasure& truth, const Eigen::MatrixXd& x,
                               std::uint64_t seed) {
  if (x.cols() != truth.dim()) {
    throw std::invalid_argument("sample_labels: covariate dimension does not match the truth");
  }
  RandomStream rng(mix_seed(seed, kLabelStream));
  std::vector<int> y(static_cast<std::size_t>(x.rows()));
  const int k = truth.classes();
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    const Eigen::VectorXd p = conditional_density(truth, x.row(j).transpose());
    const double u = rng.uniform();
    double acc = 0.0;
    int s = k - 1;
    for (int c = 0; c < k - 1; ++c) {
      acc += p(c);
      if (u < acc) {
        s = c;
        break;
      }
    }
    y[static_cast<std::size_t>(j)] = s;
  }
  return y;
}

Dataset sample_dataset(const SampleConfig& cfg) {
  validate_truth(cfg.truth);
  Eigen::MatrixXd x = sample_covariates(cfg.n, cfg.truth.dim(), cfg.seed);
  std::vector<int> y = sample_labels(cfg.truth, x, cfg.seed);
  return Dataset(std::move(x), std::move(y), cfg.truth.classes());
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (int u = 0; u < data.dim(); ++u) out << "x_" << u << ',';
  out << "y\n";
  char buf[64];
  for (int j = 0; j < data.size(); ++j) {
    for (int u = 0; u < data.dim(); ++u) {
      auto res = std::to_chars(buf, buf + sizeof buf, data.x()(j, u), std::chars_format::general, 17);
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << data.labels()[static_cast<std::size_t>(j)] + 1 << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

Dataset read_dataset_csv(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
  const int d = static_cast<int>(std::count(line.begin(), line.end(), ','));
  if (d < 1) throw std::runtime_error(path + ": header needs at least one covariate column");
  std::vector<double> xs;
  std::vector<int> ys;
  int row = 1;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(row) + ": " + what);
  };
  auto parse = [&](const std::string& cell, auto& out) {
    const char* end = cell.data() + cell.size();
    auto res = std::from_chars(cell.data(), end, out);
    if (res.ec != std::errc() || res.ptr != end) fail("cannot parse '" + cell + "'");
  };
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (int u = 0; u < d; ++u) {
      if (!std::getline(ss, cell, ',')) fail("too few columns");
      double v = 0.0;
      parse(cell, v);
      xs.push_back(v);
    }
    if (!std::getline(ss, cell, ',')) fail("missing label");
    int y = 0;
    parse(cell, y);
    if (y < 1 || y > num_classes) fail("label " + cell + " outside 1.." + std::to_string(num_classes));
    ys.push_back(y - 1);
    if (std::getline(ss, cell, ',')) fail("too many columns");
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(ys.size()), d);
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    for (int u = 0; u < d; ++u) x(j, u) = xs[static_cast<std::size_t>(j * d + u)];
  }
  return Dataset(std::move(x), std::move(ys), num_classes);
}

}  // namespace mlmoe
