#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpabc/errors.hpp"
#include "gpabc/rng.hpp"

namespace gpabc {

// ---------------------------------------------------------------------------
// Prior / parameter space
// ---------------------------------------------------------------------------

/// One-dimensional prior marginal. Uniform marginals define a bounded box;
/// normal marginals are supported for design dispersion through the inverse CDF.
class Marginal {
 public:
  enum class Kind { uniform, normal };

  static Marginal uniform(double lower, double upper);
  static Marginal normal(double mean, double sd);

  Kind kind() const { return kind_; }
  double density(double x) const;
  double log_density(double x) const;
  double quantile(double u) const;
  bool contains(double x) const;

  /// Widens the marginal about its centre by `factor` (>= 1).
  Marginal inflated(double factor) const;

  double lower() const;
  double upper() const;
  double mean() const;
  double sd() const;
  /// Width used for scale heuristics: hi - lo for uniform, 6 sd for normal.
  double width() const;

  // Parameters as stored: (lo, hi) for uniform, (mean, sd) for normal.
  double a() const { return a_; }
  double b() const { return b_; }

 private:
  Marginal(Kind kind, double a, double b) : kind_(kind), a_(a), b_(b) {}
  Kind kind_;
  double a_;
  double b_;
};

/// Product prior over a p-dimensional parameter vector.
class ParameterSpace {
 public:
  ParameterSpace(std::vector<std::string> names, std::vector<Marginal> marginals);

  std::size_t dims() const { return marginals_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Marginal>& marginals() const { return marginals_; }
  const Marginal& marginal(std::size_t j) const { return marginals_[j]; }

  bool contains(const Eigen::VectorXd& theta) const;
  double density(const Eigen::VectorXd& theta) const;
  double log_density(const Eigen::VectorXd& theta) const;

  /// Maps u in [0,1)^p through the per-coordinate inverse CDFs.
  Eigen::VectorXd from_unit(const Eigen::VectorXd& u) const;
  Eigen::VectorXd sample(Rng& rng) const;
  Eigen::VectorXd centre() const;
  Eigen::VectorXd widths() const;

 private:
  std::vector<std::string> names_;
  std::vector<Marginal> marginals_;
};

inline double prior_density(const ParameterSpace& space, const Eigen::VectorXd& theta) {
  return space.density(theta);
}

// ---------------------------------------------------------------------------
// Simulator contract
// ---------------------------------------------------------------------------

/// A stochastic simulator theta -> output vector. Every invocation through
/// sample() is counted; a call budget can be imposed across the whole run.
class Simulator {
 public:
  virtual ~Simulator() = default;

  virtual std::size_t output_dim() const = 0;
  /// Whether sample() may be called concurrently from several threads.
  virtual bool concurrent() const { return true; }

  Eigen::VectorXd sample(const Eigen::VectorXd& theta, Rng& rng);

  std::uint64_t calls() const { return calls_.load(); }
  void set_call_budget(std::optional<std::uint64_t> budget) { budget_ = budget; }
  std::optional<std::uint64_t> call_budget() const { return budget_; }

 protected:
  virtual Eigen::VectorXd simulate(const Eigen::VectorXd& theta, Rng& rng) = 0;

 private:
  std::atomic<std::uint64_t> calls_{0};
  std::optional<std::uint64_t> budget_;
};

// ---------------------------------------------------------------------------
// Ricker model
// ---------------------------------------------------------------------------

struct RickerParams {
  double log_r = 3.8;
  double sigma = 0.3;
  double phi = 10.0;
  int length = 50;
  double initial_population = 1.0;

  void validate() const;
};

/// Thrown when the latent population leaves the representable range.
class RickerOverflow : public NumericalError {
 public:
  RickerOverflow(int step, const std::string& what) : NumericalError(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

using Series = std::vector<std::int64_t>;

/// Simulates y_1..y_T. The latent recursion runs on the log scale:
/// log N_{t+1} = log r + log N_t - N_t + e_t, and y_t ~ Poisson(phi N_t).
/// When `latent` is given it receives N_1..N_T.
Series ricker_simulate(const RickerParams& params, Rng& rng,
                       std::vector<double>* latent = nullptr);

/// Fixed set of phase-invariant Ricker summaries, in this order:
///   0      mean of y
///   1      number of zeros
///   2..7   autocovariances at lags 0..5 (divisor T)
///   8..9   coefficients of y_{t+1}^c on (y_t^c, y_t^{2c}), no intercept, c = power
///   10..12 coefficients of the cubic regression (no intercept) of the sorted
///          differences of y on the sorted differences of the observed series
/// Degenerate regressions yield zero coefficients.
class RickerSummaries {
 public:
  static constexpr std::size_t kCount = 13;
  static constexpr std::size_t kMinLength = 8;

  RickerSummaries(std::span<const std::int64_t> observed, double power = 0.3);

  Eigen::VectorXd operator()(std::span<const std::int64_t> y) const;
  static std::vector<std::string> names();
  double power() const { return power_; }

 private:
  double power_;
  Eigen::VectorXd reference_diffs_;  // sorted observed differences, scaled by diff_scale_
  double diff_scale_;
};

/// Ricker simulator emitting summary vectors against a fixed observed series.
class RickerSimulator final : public Simulator {
 public:
  RickerSimulator(int length, double initial_population, RickerSummaries summaries);

  std::size_t output_dim() const override { return RickerSummaries::kCount; }
  const RickerSummaries& summaries() const { return summaries_; }

  /// theta = (log r, sigma, phi)
  RickerParams params(const Eigen::VectorXd& theta) const;

 protected:
  Eigen::VectorXd simulate(const Eigen::VectorXd& theta, Rng& rng) override;

 private:
  int length_;
  double initial_population_;
  RickerSummaries summaries_;
};

/// The three-parameter Ricker prior: log r ~ U[3,5], sigma ~ U[0,0.8], phi ~ U[4,20].
ParameterSpace ricker_prior();

// ---------------------------------------------------------------------------
// External simulators
// ---------------------------------------------------------------------------

/// Drives an external process over a line protocol: one request
/// "theta_1 ... theta_p seed\n" on its stdin, one response line of
/// output_dim space-separated decimals on its stdout. The process is started
/// lazily and kept alive across calls; a closed pipe or non-zero exit is a
/// SimulatorError.
class SubprocessSimulator final : public Simulator {
 public:
  SubprocessSimulator(std::vector<std::string> command, std::size_t output_dim);
  ~SubprocessSimulator() override;

  SubprocessSimulator(const SubprocessSimulator&) = delete;
  SubprocessSimulator& operator=(const SubprocessSimulator&) = delete;

  std::size_t output_dim() const override { return output_dim_; }
  bool concurrent() const override { return false; }

 protected:
  Eigen::VectorXd simulate(const Eigen::VectorXd& theta, Rng& rng) override;

 private:
  void start();
  void stop();
  [[noreturn]] void fail(const std::string& what);

  std::vector<std::string> command_;
  std::size_t output_dim_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

}  // namespace gpabc
