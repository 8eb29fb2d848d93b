#pragma once

#include <functional>

#include <Eigen/Dense>

namespace gpabc {

struct NelderMeadOptions {
  int max_evaluations = 400;
  double initial_step = 0.5;
  /// Stop when the simplex's objective spread falls below this.
  double f_tolerance = 1e-8;
  double x_tolerance = 1e-6;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Minimises f over the box [lower, upper]. Trial points are clamped into the box.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& start, const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper, const NelderMeadOptions& options = {});

}  // namespace gpabc
