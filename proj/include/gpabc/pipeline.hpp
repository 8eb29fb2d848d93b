#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gpabc/config.hpp"
#include "gpabc/history_match.hpp"
#include "gpabc/inference.hpp"
#include "gpabc/model.hpp"

namespace gpabc {

/// Everything a run needs besides the plan: prior, simulator, observed summaries
/// and the acceptance kernel built from them.
struct Problem {
  ParameterSpace prior;
  std::unique_ptr<Simulator> sim;
  Eigen::VectorXd observed;
  Series observed_series;  ///< Ricker only
  AcceptanceKernel kernel;
};

/// Builds the problem. For the Ricker model the observed series is simulated at
/// the configured truth from the ("observed") stream, outside the call counter.
Problem build_problem(const RunConfig& config);

struct RunOptions {
  std::string out_dir = "run";
  bool resume = false;
  std::optional<std::uint64_t> max_calls;
  std::size_t parallel = 1;
  std::function<void(const std::string&)> log;
};

struct StageRecord {
  std::string name;
  std::uint64_t calls = 0;
  double seconds = 0.0;
};

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<StageRecord> stages;
  std::vector<nlohmann::json> waves;
  std::uint64_t total_calls = 0;
  std::vector<std::string> artifacts;
  nlohmann::json extra;

  nlohmann::json to_json() const;
};

/// Design, waves, diagnostics, surrogate MCMC and summaries. With resume set,
/// waves whose record and artifacts already exist are reloaded instead of rerun.
RunManifest cmd_run(const RunConfig& config, const RunOptions& options);

/// Synthetic-likelihood MCMC or rejection ABC, written under out_dir/baseline.
RunManifest cmd_baseline(const RunConfig& config, const RunOptions& options);

struct DiagnoseOptions {
  std::size_t wave = 1;  ///< 1-based
  std::optional<Eigen::VectorXd> anchor;
  std::optional<std::size_t> grid;
  std::optional<std::size_t> truth_replicates;
  std::optional<std::uint64_t> max_calls;
  std::size_t parallel = 1;
};

/// Slice tables per dimension and the LOO report for one wave of a finished run,
/// written under run_dir/diagnose.
RunManifest cmd_diagnose(const std::string& run_dir, const DiagnoseOptions& options);

/// Recomputes summary.json from the chain files of a run directory.
nlohmann::json cmd_summarize(const std::string& run_dir);

/// Per-wave records from waves.jsonl; when a wave was recomputed the latest record wins.
std::vector<nlohmann::json> load_wave_records(const std::string& run_dir);

/// Rebuilds the fitted wave sequence and final ensemble from a run directory.
WaveSequence load_waves(const std::string& run_dir, const ParameterSpace& prior,
                        std::size_t count);

nlohmann::json summaries_json(const std::vector<MarginalSummary>& s,
                              const std::vector<std::string>& names);

}  // namespace gpabc
