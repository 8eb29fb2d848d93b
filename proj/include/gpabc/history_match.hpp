#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gpabc/design.hpp"
#include "gpabc/likelihood.hpp"
#include "gpabc/model.hpp"
#include "gpabc/surrogate.hpp"

namespace gpabc {

/// How the threshold is applied when a wave models g = log(offset - l).
enum class LogNegativeRule {
  /// T is measured on the g scale: implausible iff m_g - k sd_g > log(offset - max_ll) + T.
  modelled_scale,
  /// The optimistic g bound is mapped back to l: implausible iff
  /// offset - exp(m_g - k sd_g) < max_ll - T.
  l_scale,
};

std::string to_string(LogNegativeRule r);
LogNegativeRule log_negative_rule_from_string(const std::string& s);

struct Wave {
  FittedGp gp;
  double threshold = 10.0;
  double sigma_mult = 3.0;
  /// Largest l-hat in the wave's ensemble, always on the l scale.
  double max_ll = 0.0;
  Transform transform = Transform::identity;
  /// g = log(offset - l) under the log-negative transform.
  double offset = 0.0;
  LogNegativeRule rule = LogNegativeRule::l_scale;
  /// Compare l + log prior instead of l (identity transform only); max_ll then
  /// holds the ensemble maximum of l-hat + log prior.
  bool prior_weighted = false;
};

/// The bare criterion m + k sd < max_ll - T.
inline bool implausible_values(double mean, double sd, double max_ll, double threshold,
                               double sigma_mult = 3.0) {
  return mean + sigma_mult * sd < max_ll - threshold;
}

bool implausible(const Wave& wave, const Eigen::VectorXd& theta,
                 const ParameterSpace* prior = nullptr);

/// Wave index (0-based) that rules theta out, or nullopt when theta survives
/// waves 0..upto-1. Later waves are never evaluated once a point is ruled out.
std::optional<std::size_t> cascade_membership(const std::vector<Wave>& waves,
                                              const Eigen::VectorXd& theta, std::size_t upto,
                                              const ParameterSpace* prior = nullptr);

struct VolumeEstimate {
  double fraction = 1.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
};

/// A training point with its likelihood estimate.
struct EnsemblePoint {
  Eigen::VectorXd theta;
  std::uint64_t sobol_index = 0;
  LikelihoodEstimate estimate;
  /// Introduced by the floor policy rather than estimated.
  bool floored = false;
};

using TrainingEnsemble = std::vector<EnsemblePoint>;

class WaveSequence {
 public:
  explicit WaveSequence(ParameterSpace prior) : prior_(std::move(prior)) {}

  const ParameterSpace& prior() const { return prior_; }
  const std::vector<Wave>& waves() const { return waves_; }
  std::size_t size() const { return waves_.size(); }
  const Wave& wave(std::size_t i) const { return waves_.at(i); }

  void push(Wave w, VolumeEstimate volume) {
    waves_.push_back(std::move(w));
    volumes_.push_back(volume);
  }
  const std::vector<VolumeEstimate>& volumes() const { return volumes_; }
  void set_volume(std::size_t i, VolumeEstimate v) { volumes_.at(i) = v; }

  /// In Theta_upto, i.e. not ruled out by waves 1..upto.
  bool member(const Eigen::VectorXd& theta, std::size_t upto) const;
  bool member(const Eigen::VectorXd& theta) const { return member(theta, size()); }

  /// Latest training ensemble, carried into the next wave.
  TrainingEnsemble ensemble;

 private:
  ParameterSpace prior_;
  std::vector<Wave> waves_;
  std::vector<VolumeEstimate> volumes_;
};

/// Monte Carlo estimate of |Theta_upto| / |Theta_0| from prior draws, with the
/// binomial standard error sqrt(f (1 - f) / n).
VolumeEstimate volume_fraction(const WaveSequence& seq, std::size_t upto, std::size_t n_mc,
                               Rng& rng);

enum class DegeneratePolicy { exclude, floor };

DegeneratePolicy degenerate_policy_from_string(const std::string& s);
std::string to_string(DegeneratePolicy p);

struct EstimatorConfig {
  AcceptanceKernel kernel;
  std::size_t replicates = 500;
  BootstrapOptions bootstrap;
  DegeneratePolicy degenerate = DegeneratePolicy::exclude;
  std::size_t threads = 1;
};

struct WavePlan {
  std::size_t n_new = 100;
  ExtendMode mode = ExtendMode::target;
  double inflation = 1.0;
  std::uint64_t max_draws = 1'000'000;
  double threshold = 10.0;
  double sigma_mult = 3.0;
  Transform transform = Transform::identity;
  LogNegativeRule rule = LogNegativeRule::l_scale;
  bool prior_weighted = false;
  MeanBasis basis = MeanBasis::quadratic();
  GpOptions gp;
  std::size_t volume_samples = 10'000;
};

struct WaveReport {
  std::size_t wave = 0;  ///< 1-based
  std::uint64_t draws = 0;
  std::uint64_t first_sobol_index = 0;
  std::uint64_t next_sobol_index = 0;
  std::size_t new_points = 0;
  std::size_t degenerate = 0;
  std::size_t survivors = 0;  ///< earlier ensemble points carried forward
  std::size_t ensemble_size = 0;
  std::uint64_t simulator_calls = 0;
  double max_ll = 0.0;
  double offset = 0.0;
  LooResult loo;
  VolumeEstimate volume;
  bool optimizer_warning = false;
};

/// Transformed GP target and nugget for one estimate.
std::pair<double, double> transformed_target(const LikelihoodEstimate& est, Transform transform,
                                             double offset);

/// Offset making offset - l positive for every estimate and bootstrap value.
double log_negative_offset(const TrainingEnsemble& ensemble);

/// Evaluates the likelihood at each point in parallel; point i uses the stream
/// ("sim", sobol_index[i]) so results are independent of scheduling.
TrainingEnsemble estimate_points(const std::vector<Eigen::VectorXd>& points,
                                 const std::vector<std::uint64_t>& sobol_index, Simulator& sim,
                                 const EstimatorConfig& estimator, std::uint64_t seed);

/// One wave: extend the design through the cascade, estimate l at the new
/// points, merge the surviving ensemble, fit the GP, run LOO and measure the
/// remaining volume. Appends the wave to seq and replaces seq.ensemble.
WaveReport run_wave(WaveSequence& seq, Simulator& sim, const EstimatorConfig& estimator,
                    SobolStream& stream, const WavePlan& plan, std::uint64_t seed);

/// Builds and fits a wave from an already-estimated ensemble.
Wave build_wave(const TrainingEnsemble& ensemble, const WavePlan& plan,
                const ParameterSpace& prior);

}  // namespace gpabc
