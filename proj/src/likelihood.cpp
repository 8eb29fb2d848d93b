#include "gpabc/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gpabc/errors.hpp"

namespace gpabc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size() - 1);
}

void check_skipped(std::size_t skipped, std::size_t resamples) {
  if (2 * skipped > resamples) {
    throw NumericalError("bootstrap: " + std::to_string(skipped) + " of " +
                         std::to_string(resamples) + " resamples were degenerate");
  }
}

LikelihoodEstimate from_log_terms(const std::vector<double>& terms, Rng& rng,
                                  BootstrapOptions boot) {
  LikelihoodEstimate est;
  est.replicates = terms.size();
  const auto value = log_mean_exp(terms);
  if (!value) {
    est.degenerate = true;
    est.loglik = kNegInf;
    return est;
  }
  est.loglik = *value;
  if (boot.resamples >= 2 && terms.size() >= 2) {
    try {
      BootstrapResult b = bootstrap_log_terms(terms, boot.resamples, rng);
      est.noise_var = b.variance;
      est.bootstrap = std::move(b.estimates);
    } catch (const NumericalError&) {
      // Too few accepted replicates for a stable bootstrap; leave the variance unset.
      est.noise_var = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return est;
}

}  // namespace

std::string to_string(Transform t) {
  return t == Transform::identity ? "identity" : "log_negative";
}

Transform transform_from_string(const std::string& s) {
  if (s == "identity") return Transform::identity;
  if (s == "log_negative") return Transform::log_negative;
  throw ConfigError("unknown transform '" + s + "' (expected identity or log_negative)");
}

double euclidean_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm();
}

SmoothKernel gaussian_kernel(Eigen::VectorXd observed, Eigen::VectorXd scale) {
  if (observed.size() != scale.size() || (scale.array() <= 0).any()) {
    throw ConfigError("gaussian kernel needs one positive scale per observed value");
  }
  const double log_norm =
      -scale.array().log().sum() - 0.5 * static_cast<double>(scale.size()) * std::log(2 * M_PI);
  return SmoothKernel{[observed = std::move(observed), scale = std::move(scale),
                       log_norm](const Eigen::VectorXd& x) {
    return log_norm - 0.5 * ((observed - x).array() / scale.array()).square().sum();
  }};
}

std::optional<double> log_mean_exp(std::span<const double> a) {
  if (a.empty()) throw std::invalid_argument("log_mean_exp of an empty vector");
  const double shift = *std::max_element(a.begin(), a.end());
  if (shift == kNegInf) return std::nullopt;
  if (std::isnan(shift)) throw NumericalError("log_mean_exp: NaN term");
  if (shift == std::numeric_limits<double>::infinity()) return shift;
  double sum = 0.0;
  for (double v : a) sum += std::exp(v - shift);
  return shift + std::log(sum / static_cast<double>(a.size()));
}

BootstrapResult bootstrap_log_terms(std::span<const double> log_terms, std::size_t resamples,
                                    Rng& rng) {
  if (resamples < 2) throw std::invalid_argument("bootstrap needs at least 2 resamples");
  if (log_terms.empty()) throw std::invalid_argument("bootstrap of an empty replicate set");
  BootstrapResult out;
  out.estimates.reserve(resamples);
  std::uniform_int_distribution<std::size_t> pick(0, log_terms.size() - 1);
  std::vector<double> resample(log_terms.size());
  for (std::size_t b = 0; b < resamples; ++b) {
    for (auto& v : resample) v = log_terms[pick(rng)];
    const auto value = log_mean_exp(resample);
    if (value) {
      out.estimates.push_back(*value);
    } else {
      ++out.skipped;
    }
  }
  check_skipped(out.skipped, resamples);
  out.variance = sample_variance(out.estimates);
  return out;
}

std::optional<double> synthetic_loglik_from(const Eigen::VectorXd& observed,
                                            const Eigen::MatrixXd& summaries) {
  const Eigen::Index m = summaries.rows();
  const Eigen::Index k = summaries.cols();
  if (observed.size() != k) throw std::invalid_argument("observed summary length mismatch");
  if (m < 2) throw std::invalid_argument("synthetic likelihood needs at least 2 replicates");
  if (!summaries.allFinite()) return std::nullopt;

  const Eigen::RowVectorXd mean = summaries.colwise().mean();
  const Eigen::MatrixXd centred = summaries.rowwise() - mean;
  Eigen::MatrixXd cov = (centred.adjoint() * centred) / static_cast<double>(m - 1);

  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-8 * cov.trace() / static_cast<double>(k);
    cov.diagonal().array() += jitter;
    llt.compute(cov);
    if (llt.info() != Eigen::Success || !(jitter > 0)) return std::nullopt;
  }
  const Eigen::VectorXd r = observed - mean.transpose();
  const Eigen::VectorXd z = llt.matrixL().solve(r);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double value =
      -0.5 * static_cast<double>(k) * std::log(2 * M_PI) - 0.5 * log_det - 0.5 * z.squaredNorm();
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

BootstrapResult bootstrap_synthetic(const Eigen::VectorXd& observed,
                                    const Eigen::MatrixXd& summaries, std::size_t resamples,
                                    Rng& rng) {
  if (resamples < 2) throw std::invalid_argument("bootstrap needs at least 2 resamples");
  const Eigen::Index m = summaries.rows();
  BootstrapResult out;
  out.estimates.reserve(resamples);
  std::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
  Eigen::MatrixXd resample(m, summaries.cols());
  for (std::size_t b = 0; b < resamples; ++b) {
    for (Eigen::Index i = 0; i < m; ++i) resample.row(i) = summaries.row(pick(rng));
    const auto value = synthetic_loglik_from(observed, resample);
    if (value) {
      out.estimates.push_back(*value);
    } else {
      ++out.skipped;
    }
  }
  check_skipped(out.skipped, resamples);
  out.variance = sample_variance(out.estimates);
  return out;
}

LikelihoodEstimate gabc_loglik(const Eigen::VectorXd& theta, const AcceptanceKernel& kernel,
                               Simulator& sim, std::size_t replicates, Rng& rng,
                               BootstrapOptions boot) {
  if (replicates < 1) throw std::invalid_argument("gabc_loglik needs at least one replicate");
  std::function<double(const Eigen::VectorXd&)> log_kernel;
  if (const auto* smooth = std::get_if<SmoothKernel>(&kernel)) {
    log_kernel = smooth->log_density;
  } else if (const auto* ind = std::get_if<IndicatorKernel>(&kernel)) {
    log_kernel = [ind](const Eigen::VectorXd& x) {
      return ind->metric(ind->observed, x) <= ind->epsilon ? 0.0 : kNegInf;
    };
  } else {
    throw std::invalid_argument("gabc_loglik: synthetic kernel has no per-replicate density");
  }
  std::vector<double> terms(replicates);
  for (auto& t : terms) t = log_kernel(sim.sample(theta, rng));
  return from_log_terms(terms, rng, boot);
}

LikelihoodEstimate synthetic_loglik(const Eigen::VectorXd& observed, const Eigen::VectorXd& theta,
                                    Simulator& sim, std::size_t replicates, Rng& rng,
                                    BootstrapOptions boot) {
  const auto k = static_cast<std::size_t>(observed.size());
  if (replicates < k + 2) {
    throw std::invalid_argument("synthetic likelihood needs at least k+2 replicates");
  }
  Eigen::MatrixXd summaries(static_cast<Eigen::Index>(replicates), observed.size());
  for (Eigen::Index i = 0; i < summaries.rows(); ++i) {
    summaries.row(i) = sim.sample(theta, rng).transpose();
  }
  LikelihoodEstimate est;
  est.replicates = replicates;
  const auto value = synthetic_loglik_from(observed, summaries);
  if (!value) {
    est.degenerate = true;
    est.loglik = kNegInf;
    return est;
  }
  est.loglik = *value;
  if (boot.resamples >= 2) {
    try {
      BootstrapResult b = bootstrap_synthetic(observed, summaries, boot.resamples, rng);
      est.noise_var = b.variance;
      est.bootstrap = std::move(b.estimates);
    } catch (const NumericalError&) {
      est.noise_var = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return est;
}

LikelihoodEstimate abc_indicator_loglik(const Eigen::VectorXd& observed,
                                        const Eigen::VectorXd& theta, const Metric& metric,
                                        double epsilon, Simulator& sim, std::size_t replicates,
                                        Rng& rng, BootstrapOptions boot) {
  return gabc_loglik(theta, IndicatorKernel{observed, metric, epsilon}, sim, replicates, rng, boot);
}

LikelihoodEstimate estimate_loglik(const Eigen::VectorXd& theta, const AcceptanceKernel& kernel,
                                   Simulator& sim, std::size_t replicates, Rng& rng,
                                   BootstrapOptions boot) {
  if (const auto* syn = std::get_if<SyntheticGaussianKernel>(&kernel)) {
    return synthetic_loglik(syn->observed, theta, sim, replicates, rng, boot);
  }
  return gabc_loglik(theta, kernel, sim, replicates, rng, boot);
}

}  // namespace gpabc
