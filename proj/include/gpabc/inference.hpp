#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpabc/history_match.hpp"
#include "gpabc/likelihood.hpp"
#include "gpabc/model.hpp"

namespace gpabc {

struct TargetValue {
  double log_target = 0.0;  ///< log-likelihood draw plus log prior
  double loglik = 0.0;
};

/// Log target for random-walk Metropolis. nullopt rejects the proposal outright.
using LogTarget = std::function<std::optional<TargetValue>(const Eigen::VectorXd&, Rng&)>;

struct MhOptions {
  std::size_t n_iter = 10'000;
  double burn_in_fraction = 0.2;
  std::size_t thin = 1;
  /// Rescale proposals every adapt_interval burn-in iterations towards the
  /// acceptance band; frozen afterwards.
  bool adapt = true;
  std::size_t adapt_interval = 100;
  double accept_low = 0.2;
  double accept_high = 0.4;
  /// Reflect proposals into [lower, upper] instead of proposing outside.
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> reflect;
};

struct Chain {
  Eigen::MatrixXd draws;   ///< retained states, one row per draw
  Eigen::VectorXd loglik;  ///< stored log-likelihood value of each retained state
  double acceptance_rate = 0.0;  ///< over retained iterations
  double burn_in_acceptance = 0.0;
  Eigen::VectorXd scales;  ///< proposal scales used after burn-in
  std::size_t burn_in = 0;
  std::size_t iterations = 0;
  std::vector<std::string> warnings;
};

/// Gaussian random-walk Metropolis. The current state's target value is stored
/// and reused; only proposals are evaluated.
Chain random_walk_metropolis(const LogTarget& target, const Eigen::VectorXd& init,
                             const Eigen::VectorXd& scales, const MhOptions& options, Rng& rng);

/// 10% of each marginal's width.
Eigen::VectorXd default_proposal_scales(const ParameterSpace& prior);

/// Log-likelihood draw at theta from the last wave, mapped back to the l scale.
double realization_loglik(const Wave& wave, const Eigen::VectorXd& theta, Rng& rng);

/// MCMC on the surrogate cascade: proposals outside the prior support or ruled
/// out by waves 1..I-1 are rejected; others are scored with a fresh draw from
/// wave I. Calls no simulator. Throws ConfigError if init is not in Theta_{I-1}.
Chain mh_sample(const WaveSequence& seq, const Eigen::VectorXd& init,
                const Eigen::VectorXd& scales, const MhOptions& options, Rng& rng);

/// Synthetic-likelihood MCMC with a fresh estimate at every proposal. Proposals
/// reflect at the prior box, so exactly (n_iter + 1) * replicates simulator calls are made.
Chain wood_mcmc(const Eigen::VectorXd& observed, const ParameterSpace& prior, Simulator& sim,
                std::size_t replicates, const Eigen::VectorXd& init,
                const Eigen::VectorXd& scales, MhOptions options, Rng& rng);

struct RejectionRun {
  std::vector<Eigen::VectorXd> accepted;
  double epsilon = 0.0;
  std::uint64_t calls = 0;
  std::size_t target = 0;
  bool complete = false;
  std::vector<std::string> warnings;
};

/// Prior draw, simulate, accept iff rho(observed, X) <= epsilon; until n_accept
/// acceptances or max_calls simulator calls.
RejectionRun rejection_abc(const Eigen::VectorXd& observed, const ParameterSpace& prior,
                           Simulator& sim, const Metric& metric, double epsilon,
                           std::size_t n_accept, Rng& rng,
                           std::uint64_t max_calls = 100'000'000);

struct MarginalSummary {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  std::vector<double> hist_edges;    ///< bins + 1 edges
  std::vector<double> hist_density;  ///< normalised to integrate to one
  double bandwidth = 0.0;            ///< Silverman: 0.9 min(sd, IQR/1.34) n^(-1/5)
  std::vector<double> kde_x;
  std::vector<double> kde_density;
};

/// Sample quantile with linear interpolation between order statistics
/// (h = (n - 1) p; the default in R and NumPy).
double quantile(std::vector<double> values, double p);

/// Per-column summaries of samples (one row per draw). Needs at least 100 rows.
std::vector<MarginalSummary> posterior_summaries(const Eigen::MatrixXd& samples,
                                                 std::size_t bins = 40,
                                                 std::size_t kde_points = 200);

/// Standard error of the mean from non-overlapping batch means.
double batch_means_se(std::span<const double> x, std::size_t batches = 30);

/// Split-R-hat for one dimension across chains (each chain split in half).
double split_rhat(const std::vector<std::vector<double>>& chains);

}  // namespace gpabc
