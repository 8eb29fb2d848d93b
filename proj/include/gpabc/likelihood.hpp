#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gpabc/model.hpp"
#include "gpabc/rng.hpp"

namespace gpabc {

/// Scale on which a log-likelihood is modelled.
enum class Transform {
  identity,      ///< l(theta)
  log_negative,  ///< log(offset - l(theta)); offset 0 gives log(-l)
};

std::string to_string(Transform t);
Transform transform_from_string(const std::string& s);

/// Monte Carlo estimate of a log-likelihood at one parameter point.
struct LikelihoodEstimate {
  double loglik = 0.0;
  /// Bootstrap variance of loglik; NaN when not computed.
  double noise_var = std::numeric_limits<double>::quiet_NaN();
  std::size_t replicates = 0;
  Transform transform = Transform::identity;
  /// Zero acceptance or otherwise undefined estimate.
  bool degenerate = false;
  /// Bootstrap re-estimates of loglik (identity scale), kept so the caller can
  /// derive the variance on a transformed scale.
  std::vector<double> bootstrap;
};

using Metric = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;

double euclidean_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// pi(D|X) proportional to 1{rho(D, X) <= epsilon}.
struct IndicatorKernel {
  Eigen::VectorXd observed;
  Metric metric = euclidean_distance;
  double epsilon = 1.0;
};

/// Gaussian synthetic likelihood on summary vectors.
struct SyntheticGaussianKernel {
  Eigen::VectorXd observed;
};

/// Arbitrary acceptance density given as log pi(D|X).
struct SmoothKernel {
  std::function<double(const Eigen::VectorXd&)> log_density;
};

using AcceptanceKernel = std::variant<IndicatorKernel, SyntheticGaussianKernel, SmoothKernel>;

/// Gaussian acceptance kernel N(observed; X, diag(scale^2)).
SmoothKernel gaussian_kernel(Eigen::VectorXd observed, Eigen::VectorXd scale);

/// log((1/n) sum exp(a_i)) evaluated after shifting by max a_i.
/// Returns nullopt when every term is -inf (zero likelihood).
std::optional<double> log_mean_exp(std::span<const double> a);

struct BootstrapResult {
  double variance = 0.0;
  std::vector<double> estimates;
  std::size_t skipped = 0;
};

/// Resamples per-replicate log-kernel terms with replacement and recomputes
/// log_mean_exp. Degenerate resamples are skipped; more than half skipped is an error.
BootstrapResult bootstrap_log_terms(std::span<const double> log_terms, std::size_t resamples,
                                    Rng& rng);

/// Resamples rows of the summary matrix and recomputes the synthetic log-likelihood.
BootstrapResult bootstrap_synthetic(const Eigen::VectorXd& observed,
                                    const Eigen::MatrixXd& summaries, std::size_t resamples,
                                    Rng& rng);

/// Log multivariate-normal density of `observed` under the sample mean and
/// covariance (divisor M-1) of the rows of `summaries`. A singular covariance gets
/// one diagonal jitter of 1e-8 trace/k; nullopt if it is still not positive definite.
std::optional<double> synthetic_loglik_from(const Eigen::VectorXd& observed,
                                            const Eigen::MatrixXd& summaries);

/// Per-call bootstrap setting; resamples == 0 skips the noise variance.
struct BootstrapOptions {
  std::size_t resamples = 1000;
};

LikelihoodEstimate gabc_loglik(const Eigen::VectorXd& theta, const AcceptanceKernel& kernel,
                               Simulator& sim, std::size_t replicates, Rng& rng,
                               BootstrapOptions boot = {});

LikelihoodEstimate synthetic_loglik(const Eigen::VectorXd& observed, const Eigen::VectorXd& theta,
                                    Simulator& sim, std::size_t replicates, Rng& rng,
                                    BootstrapOptions boot = {});

LikelihoodEstimate abc_indicator_loglik(const Eigen::VectorXd& observed,
                                        const Eigen::VectorXd& theta, const Metric& metric,
                                        double epsilon, Simulator& sim, std::size_t replicates,
                                        Rng& rng, BootstrapOptions boot = {});

/// Dispatches on the kernel kind.
LikelihoodEstimate estimate_loglik(const Eigen::VectorXd& theta, const AcceptanceKernel& kernel,
                                   Simulator& sim, std::size_t replicates, Rng& rng,
                                   BootstrapOptions boot = {});

/// Nugget floor applied to every bootstrap variance before it enters a GP.
inline constexpr double kMinNoiseVariance = 1e-10;

}  // namespace gpabc
