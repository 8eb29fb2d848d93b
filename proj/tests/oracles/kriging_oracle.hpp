#pragma once

// Dense 50-digit evaluation of the integrated-prior kriging predictor, written
// straight from the textbook equations with explicit inverses.

#include <vector>

#include "gpabc/surrogate.hpp"
#include "oracles/dense.hpp"

namespace oracle {

struct KrigingPoint {
  double mean = 0;
  double variance = 0;
};

inline Real kernel_correlation(gpabc::KernelFamily family, const Eigen::VectorXd& lengthscales,
                        const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  Real d2 = 0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const Real d = (Real(x[j]) - Real(y[j])) / Real(lengthscales[j]);
    d2 += d * d;
  }
  if (family == gpabc::KernelFamily::squared_exponential) return boost::multiprecision::exp(-d2 / 2);
  const Real r = boost::multiprecision::sqrt(5 * d2);
  return (1 + r + r * r / 3) * boost::multiprecision::exp(-r);
}

inline std::vector<Real> basis_row(const gpabc::MeanBasis& basis, const Eigen::VectorXd& x) {
  std::vector<Real> h{Real(1)};
  for (Eigen::Index j = 0; j < x.size() && basis.degree() > 0; ++j) {
    const Real z = (Real(x[j]) - Real(basis.centre()[j])) / Real(basis.half_width()[j]);
    Real power = 1;
    for (int k = 1; k <= basis.degree(); ++k) {
      power *= z;
      h.push_back(power);
    }
  }
  return h;
}

/// Predictive mean and variance of `gp`'s hyperparameters at each row of `test`.
inline std::vector<KrigingPoint> kriging(const gpabc::FittedGp& gp, const Eigen::MatrixXd& test) {
  const auto& d = gp.data();
  const std::size_t n = static_cast<std::size_t>(d.size());
  const std::size_t t = static_cast<std::size_t>(test.rows());
  const Real tau2 = gp.tau2();
  bool nuggets = false;

  Matrix a(n, std::vector<Real>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      a[i][j] = kernel_correlation(gp.family(), gp.lengthscales(), d.inputs.row(static_cast<Eigen::Index>(i)),
                            d.inputs.row(static_cast<Eigen::Index>(j)));
    }
    const double v = d.nuggets[static_cast<Eigen::Index>(i)];
    nuggets = nuggets || v != 0;
    a[i][i] += Real(v) / tau2;
  }
  Matrix h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = basis_row(gp.basis(), d.inputs.row(static_cast<Eigen::Index>(i)));
  const std::size_t q = h[0].size();

  // Right-hand sides: [H | y | a(x_1) ... a(x_t)].
  Matrix rhs(n, std::vector<Real>(q + 1 + t));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < q; ++k) rhs[i][k] = h[i][k];
    rhs[i][q] = Real(d.targets[static_cast<Eigen::Index>(i)]);
    for (std::size_t s = 0; s < t; ++s) {
      rhs[i][q + 1 + s] = kernel_correlation(gp.family(), gp.lengthscales(), d.inputs.row(static_cast<Eigen::Index>(i)),
                                      test.row(static_cast<Eigen::Index>(s)));
    }
  }
  const Matrix sol = solve(a, rhs);  // A^-1 [H | y | a]

  Matrix g(q, std::vector<Real>(q, Real(0)));
  Matrix hty(q, std::vector<Real>(1, Real(0)));
  for (std::size_t r = 0; r < q; ++r) {
    for (std::size_t c = 0; c < q; ++c) {
      for (std::size_t i = 0; i < n; ++i) g[r][c] += h[i][r] * sol[i][c];
    }
    for (std::size_t i = 0; i < n; ++i) hty[r][0] += h[i][r] * sol[i][q];
  }
  const Matrix beta = solve(g, hty);

  // A^-1 e = A^-1 y - A^-1 H beta
  std::vector<Real> ainv_e(n);
  Real quad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Real v = sol[i][q];
    for (std::size_t k = 0; k < q; ++k) v -= sol[i][k] * beta[k][0];
    ainv_e[i] = v;
    Real e = Real(d.targets[static_cast<Eigen::Index>(i)]);
    for (std::size_t k = 0; k < q; ++k) e -= h[i][k] * beta[k][0];
    quad += e * v;
  }
  const Real sigma2 = quad / (Real(n) - Real(q) - 2);
  const Real scale = nuggets ? tau2 : sigma2;

  std::vector<KrigingPoint> out;
  for (std::size_t s = 0; s < t; ++s) {
    const std::vector<Real> hx = basis_row(gp.basis(), test.row(static_cast<Eigen::Index>(s)));
    Real mean = 0, a_ainv_a = 0;
    for (std::size_t k = 0; k < q; ++k) mean += hx[k] * beta[k][0];
    for (std::size_t i = 0; i < n; ++i) {
      mean += rhs[i][q + 1 + s] * ainv_e[i];
      a_ainv_a += rhs[i][q + 1 + s] * sol[i][q + 1 + s];
    }
    Matrix u(q, std::vector<Real>(1));
    for (std::size_t k = 0; k < q; ++k) {
      u[k][0] = hx[k];
      for (std::size_t i = 0; i < n; ++i) u[k][0] -= h[i][k] * sol[i][q + 1 + s];
    }
    const Matrix ginv_u = solve(g, u);
    Real c = 1 - a_ainv_a;
    for (std::size_t k = 0; k < q; ++k) c += u[k][0] * ginv_u[k][0];
    out.push_back({static_cast<double>(mean), static_cast<double>(scale * c)});
  }
  return out;
}

}  // namespace oracle
