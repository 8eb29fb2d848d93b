#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gpabc/history_match.hpp"
#include "gpabc/model.hpp"

namespace gpabc {

struct PriorEntry {
  std::string name;
  Marginal marginal;
};

struct ModelConfig {
  std::string kind = "ricker";  ///< "ricker" or "subprocess"
  // ricker
  int length = 50;
  double initial_population = 1.0;
  double power = 0.3;
  std::vector<double> truth{3.8, 0.3, 10.0};  ///< parameters the observed series is simulated at
  // subprocess
  std::vector<std::string> command;
  std::size_t output_dim = 0;
  std::vector<double> observed;  ///< observed summary vector for external simulators
};

struct EstimatorSettings {
  std::string kind = "synthetic";  ///< synthetic | gabc | abc_indicator
  std::size_t replicates = 500;
  std::size_t bootstrap = 1000;
  double epsilon = 1.0;              ///< abc_indicator tolerance
  std::vector<double> kernel_scale;  ///< gabc Gaussian kernel scales, one per summary
  DegeneratePolicy degenerate = DegeneratePolicy::exclude;
};

struct WaveSettings {
  std::size_t n_new = 100;
  ExtendMode mode = ExtendMode::target;
  double threshold = 10.0;
  double sigma_mult = 3.0;
  Transform transform = Transform::identity;
  LogNegativeRule rule = LogNegativeRule::l_scale;
  std::string basis = "quadratic";
  bool prior_weighted = false;
};

struct GpSettings {
  KernelFamily family = KernelFamily::squared_exponential;
  bool optimize = true;
  int starts = 8;
  int max_evaluations = 1000;
};

struct McmcSettings {
  std::size_t n_iter = 20'000;
  double burn_in = 0.2;
  std::size_t thin = 1;
  bool adapt = true;
  std::size_t chains = 1;
  std::vector<double> scales;  ///< empty: 10% of each prior width
};

struct BaselineSettings {
  std::string kind = "wood_mcmc";  ///< wood_mcmc | rejection
  std::size_t n_iter = 10'000;
  std::size_t replicates = 500;
  double burn_in = 0.2;
  bool adapt = true;
  std::vector<double> scales;
  double epsilon = std::numeric_limits<double>::infinity();
  std::size_t n_accept = 1000;
  std::uint64_t max_calls = 100'000'000;
};

struct DiagnoseSettings {
  std::vector<double> anchor;  ///< empty: (3.8, 0.3, 10) for ricker, prior centre otherwise
  std::size_t grid = 25;
  std::size_t truth_replicates = 0;  ///< 0 omits the truth columns
};

struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  std::vector<PriorEntry> prior;  ///< empty: the Ricker prior
  EstimatorSettings estimator;
  double inflation = 1.0;
  std::uint64_t max_draws = 1'000'000;
  GpSettings gp;
  std::vector<WaveSettings> waves;
  std::size_t volume_samples = 10'000;
  McmcSettings mcmc;
  BaselineSettings baseline;
  DiagnoseSettings diagnose;
  std::size_t parallel = 1;
  std::optional<std::uint64_t> max_calls;
};

/// Wave plan used when a config omits "waves": a log(offset - l) first wave
/// with T = 3 on 16 raw points, then three target-mode waves of 100 with T = 10,
/// the last with a sixth-order trend.
std::vector<WaveSettings> default_waves();

/// Parses and validates a config. Unknown keys and out-of-range values are ConfigErrors.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

/// Fully populated form including defaults; parse_config(to_json(c)) == c.
nlohmann::json to_json(const RunConfig& config);

/// FNV-1a of the normalised config, excluding fields that cannot change results
/// (thread count).
std::uint64_t config_hash(const RunConfig& config);

ParameterSpace make_prior(const RunConfig& config);
WavePlan make_wave_plan(const RunConfig& config, std::size_t wave);

}  // namespace gpabc
