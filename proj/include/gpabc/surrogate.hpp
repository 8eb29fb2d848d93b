#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gpabc/optimize.hpp"
#include "gpabc/rng.hpp"

namespace gpabc {

enum class KernelFamily { squared_exponential, matern52 };

std::string to_string(KernelFamily f);
KernelFamily kernel_family_from_string(const std::string& s);

/// Correlation c_lambda(x, x') for the given family and length scales.
double correlation(KernelFamily family, const Eigen::VectorXd& lengthscales,
                   const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Additive polynomial trend h(theta) = [1, z_j^k for j = 1..p, k = 1..degree],
/// where z = (theta - centre) / half_width standardises inputs to roughly [-1, 1].
/// constant, linear and quadratic are degrees 0, 1 and 2; quadratic spans
/// 1, theta and diag(theta theta^T).
class MeanBasis {
 public:
  enum class Kind { constant, linear, quadratic, polynomial };

  static MeanBasis constant() { return MeanBasis(Kind::constant, 0); }
  static MeanBasis linear() { return MeanBasis(Kind::linear, 1); }
  static MeanBasis quadratic() { return MeanBasis(Kind::quadratic, 2); }
  static MeanBasis polynomial(int degree);
  static MeanBasis from_string(const std::string& s);

  Kind kind() const { return kind_; }
  int degree() const { return degree_; }
  std::string name() const;
  Eigen::Index size(Eigen::Index dims) const { return 1 + dims * degree_; }

  /// Sets the input standardisation from the bounding box of `inputs` (rows are points).
  void standardise_to(const Eigen::MatrixXd& inputs);
  void set_standardisation(Eigen::VectorXd centre, Eigen::VectorXd half_width);
  const Eigen::VectorXd& centre() const { return centre_; }
  const Eigen::VectorXd& half_width() const { return half_width_; }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd evaluate_rows(const Eigen::MatrixXd& inputs) const;

 private:
  MeanBasis(Kind kind, int degree) : kind_(kind), degree_(degree) {}
  Kind kind_;
  int degree_;
  Eigen::VectorXd centre_;
  Eigen::VectorXd half_width_;
};

/// Training ensemble as the GP sees it: inputs (rows), targets on the modelled
/// scale, and fixed per-point nugget variances on the same scale.
struct TrainingData {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd targets;
  Eigen::VectorXd nuggets;

  Eigen::Index size() const { return inputs.rows(); }
  Eigen::Index dims() const { return inputs.cols(); }
};

struct GpOptions {
  KernelFamily family = KernelFamily::squared_exponential;
  bool optimize = true;
  int starts = 8;
  /// Initial length scales; also used as-is when optimize is false.
  std::optional<Eigen::VectorXd> lengthscales;
  /// Length-scale box as multiples of each input dimension's design range.
  double lower_factor = 1e-2;
  double upper_factor = 1e2;
  NelderMeadOptions optimizer{1000, 0.5, 1e-7, 1e-5};
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;  ///< scale of the Student-t marginal, latent (no nugget)
  double dof = 0.0;
  double sd() const { return std::sqrt(variance); }
};

struct LooResult {
  Eigen::VectorXd predicted;   ///< leave-one-out predictive mean at each training point
  Eigen::VectorXd residuals;   ///< standardised leave-one-out residuals
  Eigen::VectorXd variance;    ///< latent predictive variance without point i
  double rmse = 0.0;
  double coverage = 0.0;       ///< fraction inside the central 95% t interval
};

struct SliceRow {
  double value = 0.0;  ///< coordinate along the sliced dimension
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double variance = 0.0;
};

/// Gaussian process with an improper prior pi(beta, tau^2) ~ 1/tau^2 integrated
/// out analytically (universal kriging with a Student-t predictive) and plug-in
/// maximum-likelihood length scales.
///
/// With A = C_lambda + diag(v^2 / tau^2):
///   beta_hat = (H^T A^-1 H)^-1 H^T A^-1 y
///   m*(x)    = h(x)^T beta_hat + a(x)^T A^-1 (y - H beta_hat)
///   sigma^2  = (y - H beta_hat)^T A^-1 (y - H beta_hat) / (N - q - 2)
///   c*(x)    = 1 - a^T A^-1 a + u^T (H^T A^-1 H)^-1 u,  u = h(x) - H^T A^-1 a
///   var(x)   = s^2 c*(x),  dof = N - q
/// The scale s^2 is sigma^2 when every nugget is zero. With nuggets it is the
/// plug-in tau^2, estimated jointly with the length scales, which keeps the
/// variance monotone in the nuggets.
class FittedGp {
 public:
  /// Builds the predictor for fixed hyperparameters. jitter is added to A's diagonal
  /// before factorisation; pass nullopt to run the jitter ladder.
  static FittedGp from_hyperparameters(TrainingData data, MeanBasis basis, KernelFamily family,
                                       Eigen::VectorXd lengthscales, double tau2,
                                       std::optional<double> jitter = std::nullopt);

  Prediction predict(const Eigen::VectorXd& theta) const;
  double sample(const Eigen::VectorXd& theta, Rng& rng) const;
  LooResult loo() const;

  const TrainingData& data() const { return data_; }
  const MeanBasis& basis() const { return basis_; }
  KernelFamily family() const { return family_; }
  const Eigen::VectorXd& lengthscales() const { return lengthscales_; }
  double tau2() const { return tau2_; }
  double sigma2() const { return sigma2_; }
  double scale() const { return scale_; }
  double dof() const { return static_cast<double>(data_.size() - basis_.size(data_.dims())); }
  double jitter() const { return jitter_; }
  const Eigen::VectorXd& beta() const { return beta_; }
  double profile_loglik() const { return profile_loglik_; }
  /// Set when the optimiser stopped without converging; the best point found is used.
  bool optimizer_warning() const { return optimizer_warning_; }
  void set_optimizer_warning(bool w) { optimizer_warning_ = w; }

  nlohmann::json to_json() const;
  static FittedGp from_json(const nlohmann::json& j);

 private:
  FittedGp() = default;

  TrainingData data_;
  MeanBasis basis_ = MeanBasis::constant();
  KernelFamily family_ = KernelFamily::squared_exponential;
  Eigen::VectorXd lengthscales_;
  double tau2_ = 1.0;
  double jitter_ = 0.0;

  Eigen::MatrixXd h_;                 // N x q trend matrix
  Eigen::LLT<Eigen::MatrixXd> chol_;  // A = L L^T
  Eigen::MatrixXd q_;                 // L^-1 H
  Eigen::LLT<Eigen::MatrixXd> gram_;  // H^T A^-1 H
  Eigen::VectorXd beta_;
  Eigen::VectorXd alpha_;             // A^-1 (y - H beta)
  double sigma2_ = 0.0;
  double scale_ = 0.0;
  double quad_ = 0.0;                 // e^T A^-1 e
  double profile_loglik_ = 0.0;
  bool optimizer_warning_ = false;
};

/// Minimum ensemble size for a basis of q functions: q + 3.
Eigen::Index min_training_size(const MeanBasis& basis, Eigen::Index dims);

/// Restricted (beta integrated out) log likelihood of K = tau^2 C + diag(v^2),
/// up to an additive constant. With A = K / tau^2:
///   -(N - q)/2 log tau^2 - 1/2 log|A| - 1/2 log|H^T A^-1 H| - e^T A^-1 e / (2 tau^2).
/// Returns -inf when A cannot be factorised without jitter.
double restricted_log_likelihood(const TrainingData& data, const MeanBasis& basis,
                                 KernelFamily family, const Eigen::VectorXd& lengthscales,
                                 double tau2);

/// The restricted likelihood maximised over tau^2. With zero nuggets this is
/// closed form: -1/2 log|A| - 1/2 log|H^T A^-1 H| - (N - q)/2 log(e^T A^-1 e) + const.
double profile_log_likelihood(const TrainingData& data, const MeanBasis& basis,
                              KernelFamily family, const Eigen::VectorXd& lengthscales);

/// Multi-start Nelder-Mead over log length scales, jointly with log tau^2 when
/// any nugget is nonzero. Throws std::invalid_argument when N < q + 3.
FittedGp fit_gp(TrainingData data, MeanBasis basis, const GpOptions& options = {});

inline Prediction predict(const FittedGp& gp, const Eigen::VectorXd& theta) {
  return gp.predict(theta);
}

/// Draw from the Student-t marginal at theta.
inline double sample_realization(const FittedGp& gp, const Eigen::VectorXd& theta, Rng& rng) {
  return gp.sample(theta, rng);
}

/// Requires N >= q + 4.
LooResult loo_diagnostics(const FittedGp& gp);

/// Predictions along dimension `dim` through `anchor`, with 95% t bounds.
std::vector<SliceRow> slice_prediction(const FittedGp& gp, const Eigen::VectorXd& anchor,
                                       std::size_t dim, const std::vector<double>& grid);

/// Two-sided Student-t quantile t_{dof, p}.
double student_t_quantile(double dof, double p);

void save_gp(const FittedGp& gp, const std::string& path);
FittedGp load_gp(const std::string& path);

}  // namespace gpabc
