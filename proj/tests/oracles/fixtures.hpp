#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "gpabc/history_match.hpp"
#include "gpabc/surrogate.hpp"

namespace fixture {

/// Smooth test surface on [0,1]^p with optional noise: n points, targets
/// sum_j sin(3 x_j + j) + (x_0 - 0.5)^2, nuggets `nugget` (0 for exact data).
inline gpabc::TrainingData smooth(std::size_t n, std::size_t p, double nugget, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u;
  std::normal_distribution<double> z;
  gpabc::TrainingData d;
  d.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  d.targets.resize(static_cast<Eigen::Index>(n));
  d.nuggets = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), nugget);
  for (Eigen::Index i = 0; i < d.inputs.rows(); ++i) {
    double y = 0;
    for (Eigen::Index j = 0; j < d.inputs.cols(); ++j) {
      d.inputs(i, j) = u(rng);
      y += std::sin(3 * d.inputs(i, j) + static_cast<double>(j));
    }
    y += (d.inputs(i, 0) - 0.5) * (d.inputs(i, 0) - 0.5);
    d.targets[i] = y + std::sqrt(nugget) * z(rng);
  }
  return d;
}

inline Eigen::MatrixXd uniform_points(std::size_t n, std::size_t p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (auto& v : x.reshaped()) v = u(rng);
  return x;
}

/// A one-wave sequence on U[lo, hi] whose GP reproduces f exactly (zero noise,
/// quadratic trend), so its realisations carry essentially no variance.
inline gpabc::WaveSequence exact_surrogate(double lo, double hi, const std::function<double(double)>& f) {
  gpabc::WaveSequence seq(gpabc::ParameterSpace({"x"}, {gpabc::Marginal::uniform(lo, hi)}));
  gpabc::TrainingData d;
  const int n = 15;
  d.inputs.resize(n, 1);
  d.targets.resize(n);
  for (int i = 0; i < n; ++i) {
    d.inputs(i, 0) = lo + (hi - lo) * i / (n - 1.0);
    d.targets[i] = f(d.inputs(i, 0));
  }
  d.nuggets = Eigen::VectorXd::Zero(n);
  gpabc::Wave w{gpabc::FittedGp::from_hyperparameters(d, gpabc::MeanBasis::quadratic(), gpabc::KernelFamily::squared_exponential,
                                        Eigen::VectorXd::Constant(1, 2 * (hi - lo) / (n - 1)), 1.0, 0.0)};
  w.max_ll = d.targets.maxCoeff();
  w.threshold = 1e6;
  seq.push(std::move(w), {});
  return seq;
}

}  // namespace fixture
