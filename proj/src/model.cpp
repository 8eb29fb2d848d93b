#include "gpabc/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

namespace gpabc {

// ---------------------------------------------------------------------------
// Marginal
// ---------------------------------------------------------------------------

Marginal Marginal::uniform(double lower, double upper) {
  if (!(lower < upper) || !std::isfinite(lower) || !std::isfinite(upper)) {
    std::ostringstream msg;
    msg << "uniform marginal needs finite lower < upper, got [" << lower << ", " << upper << "]";
    throw ConfigError(msg.str());
  }
  return {Kind::uniform, lower, upper};
}

Marginal Marginal::normal(double mean, double sd) {
  if (!(sd > 0) || !std::isfinite(mean) || !std::isfinite(sd)) {
    throw ConfigError("normal marginal needs finite mean and sd > 0");
  }
  return {Kind::normal, mean, sd};
}

double Marginal::density(double x) const {
  if (kind_ == Kind::uniform) return contains(x) ? 1.0 / (b_ - a_) : 0.0;
  return boost::math::pdf(boost::math::normal(a_, b_), x);
}

double Marginal::log_density(double x) const {
  if (kind_ == Kind::uniform) {
    return contains(x) ? -std::log(b_ - a_) : -std::numeric_limits<double>::infinity();
  }
  const double z = (x - a_) / b_;
  return -0.5 * z * z - std::log(b_) - 0.5 * std::log(2.0 * M_PI);
}

double Marginal::quantile(double u) const {
  if (kind_ == Kind::uniform) return a_ + u * (b_ - a_);
  // Keep the normal quantile finite at the closed end of [0,1).
  const double eps = 1e-300;
  return boost::math::quantile(boost::math::normal(a_, b_), std::clamp(u, eps, 1.0 - 1e-16));
}

bool Marginal::contains(double x) const {
  if (kind_ == Kind::uniform) return x >= a_ && x <= b_;
  return std::isfinite(x);
}

Marginal Marginal::inflated(double factor) const {
  if (!(factor >= 1.0)) throw ConfigError("inflation factor must be >= 1");
  if (kind_ == Kind::uniform) {
    const double c = 0.5 * (a_ + b_);
    const double h = 0.5 * (b_ - a_) * factor;
    return {Kind::uniform, c - h, c + h};
  }
  return {Kind::normal, a_, b_ * factor};
}

double Marginal::lower() const {
  return kind_ == Kind::uniform ? a_ : -std::numeric_limits<double>::infinity();
}

double Marginal::upper() const {
  return kind_ == Kind::uniform ? b_ : std::numeric_limits<double>::infinity();
}

double Marginal::mean() const { return kind_ == Kind::uniform ? 0.5 * (a_ + b_) : a_; }

double Marginal::sd() const {
  return kind_ == Kind::uniform ? (b_ - a_) / std::sqrt(12.0) : b_;
}

double Marginal::width() const { return kind_ == Kind::uniform ? b_ - a_ : 6.0 * b_; }

// ---------------------------------------------------------------------------
// ParameterSpace
// ---------------------------------------------------------------------------

ParameterSpace::ParameterSpace(std::vector<std::string> names, std::vector<Marginal> marginals)
    : names_(std::move(names)), marginals_(std::move(marginals)) {
  if (marginals_.empty()) throw ConfigError("parameter space needs at least one dimension");
  if (names_.size() != marginals_.size()) {
    throw ConfigError("parameter names and marginals differ in length");
  }
}

bool ParameterSpace::contains(const Eigen::VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != dims()) return false;
  for (std::size_t j = 0; j < dims(); ++j) {
    if (!marginals_[j].contains(theta[j])) return false;
  }
  return true;
}

double ParameterSpace::density(const Eigen::VectorXd& theta) const {
  if (!contains(theta)) return 0.0;
  double d = 1.0;
  for (std::size_t j = 0; j < dims(); ++j) d *= marginals_[j].density(theta[j]);
  return d;
}

double ParameterSpace::log_density(const Eigen::VectorXd& theta) const {
  if (!contains(theta)) return -std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t j = 0; j < dims(); ++j) d += marginals_[j].log_density(theta[j]);
  return d;
}

Eigen::VectorXd ParameterSpace::from_unit(const Eigen::VectorXd& u) const {
  Eigen::VectorXd theta(dims());
  for (std::size_t j = 0; j < dims(); ++j) theta[j] = marginals_[j].quantile(u[j]);
  return theta;
}

Eigen::VectorXd ParameterSpace::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd u(dims());
  for (std::size_t j = 0; j < dims(); ++j) u[j] = unif(rng);
  return from_unit(u);
}

Eigen::VectorXd ParameterSpace::centre() const {
  Eigen::VectorXd c(dims());
  for (std::size_t j = 0; j < dims(); ++j) c[j] = marginals_[j].mean();
  return c;
}

Eigen::VectorXd ParameterSpace::widths() const {
  Eigen::VectorXd w(dims());
  for (std::size_t j = 0; j < dims(); ++j) w[j] = marginals_[j].width();
  return w;
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

Eigen::VectorXd Simulator::sample(const Eigen::VectorXd& theta, Rng& rng) {
  if (budget_) {
    const std::uint64_t used = calls_.fetch_add(1);
    if (used >= *budget_) {
      calls_.fetch_sub(1);
      throw BudgetExhausted("simulator call budget of " + std::to_string(*budget_) +
                            " exhausted");
    }
  } else {
    calls_.fetch_add(1);
  }
  return simulate(theta, rng);
}

// ---------------------------------------------------------------------------
// Ricker
// ---------------------------------------------------------------------------

void RickerParams::validate() const {
  if (!(sigma >= 0)) throw ConfigError("Ricker sigma must be >= 0");
  if (!(phi > 0)) throw ConfigError("Ricker phi must be > 0");
  if (length < 1) throw ConfigError("Ricker series length must be >= 1");
  if (!(initial_population > 0)) throw ConfigError("Ricker initial population must be > 0");
}

Series ricker_simulate(const RickerParams& params, Rng& rng, std::vector<double>* latent) {
  params.validate();
  std::normal_distribution<double> noise(0.0, 1.0);
  Series y(static_cast<std::size_t>(params.length));
  if (latent) latent->assign(static_cast<std::size_t>(params.length), 0.0);
  double log_n = std::log(params.initial_population);
  double n = params.initial_population;
  for (int t = 0; t < params.length; ++t) {
    const double e = params.sigma > 0 ? params.sigma * noise(rng) : 0.0;
    log_n = params.log_r + log_n - n + e;
    n = std::exp(log_n);
    const double rate = params.phi * n;
    if (!std::isfinite(log_n) || !std::isfinite(rate) || rate > 1e15) {
      std::ostringstream msg;
      msg << "Ricker latent population overflowed at t=" << t + 1;
      throw RickerOverflow(t + 1, msg.str());
    }
    if (latent) (*latent)[static_cast<std::size_t>(t)] = n;
    y[static_cast<std::size_t>(t)] =
        rate > 0 ? std::poisson_distribution<std::int64_t>(rate)(rng) : 0;
  }
  return y;
}

namespace {

// Least squares without intercept; zeros when the design is rank deficient.
Eigen::VectorXd least_squares_or_zero(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) return Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd beta = qr.solve(y);
  if (!beta.allFinite()) return Eigen::VectorXd::Zero(x.cols());
  return beta;
}

Eigen::VectorXd sorted_differences(std::span<const std::int64_t> y) {
  Eigen::VectorXd d(static_cast<Eigen::Index>(y.size() - 1));
  for (std::size_t t = 1; t < y.size(); ++t) {
    d[static_cast<Eigen::Index>(t - 1)] = static_cast<double>(y[t] - y[t - 1]);
  }
  std::sort(d.begin(), d.end());
  return d;
}

}  // namespace

RickerSummaries::RickerSummaries(std::span<const std::int64_t> observed, double power)
    : power_(power) {
  if (observed.size() < kMinLength) {
    throw ConfigError("Ricker summaries need a series of length >= 8");
  }
  if (!(power > 0)) throw ConfigError("summary power transform exponent must be > 0");
  reference_diffs_ = sorted_differences(observed);
  const double max_abs = reference_diffs_.cwiseAbs().maxCoeff();
  diff_scale_ = max_abs > 0 ? max_abs : 1.0;
  reference_diffs_ /= diff_scale_;
}

Eigen::VectorXd RickerSummaries::operator()(std::span<const std::int64_t> y) const {
  if (y.size() < kMinLength) throw ConfigError("Ricker summaries need a series of length >= 8");
  if (y.size() != static_cast<std::size_t>(reference_diffs_.size() + 1)) {
    throw ConfigError("series length differs from the observed series");
  }
  const auto n = static_cast<Eigen::Index>(y.size());
  Eigen::VectorXd v(n);
  for (Eigen::Index t = 0; t < n; ++t) v[t] = static_cast<double>(y[static_cast<std::size_t>(t)]);

  Eigen::VectorXd s(kCount);
  const double mean = v.mean();
  s[0] = mean;
  s[1] = static_cast<double>((v.array() == 0.0).count());

  const Eigen::VectorXd centred = v.array() - mean;
  for (Eigen::Index lag = 0; lag <= 5; ++lag) {
    s[2 + lag] = centred.head(n - lag).dot(centred.tail(n - lag)) / static_cast<double>(n);
  }

  Eigen::MatrixXd ar(n - 1, 2);
  Eigen::VectorXd next(n - 1);
  for (Eigen::Index t = 0; t + 1 < n; ++t) {
    const double z = std::pow(v[t], power_);
    ar(t, 0) = z;
    ar(t, 1) = z * z;
    next[t] = std::pow(v[t + 1], power_);
  }
  s.segment(8, 2) = least_squares_or_zero(ar, next);

  const Eigen::VectorXd diffs = sorted_differences(y) / diff_scale_;
  Eigen::MatrixXd cubic(n - 1, 3);
  cubic.col(0) = reference_diffs_;
  cubic.col(1) = reference_diffs_.array().square();
  cubic.col(2) = reference_diffs_.array().cube();
  s.segment(10, 3) = least_squares_or_zero(cubic, diffs);
  return s;
}

std::vector<std::string> RickerSummaries::names() {
  return {"mean",   "zeros",  "acov0",  "acov1",  "acov2",  "acov3",  "acov4",
          "acov5",  "ar_b1",  "ar_b2",  "cubic1", "cubic2", "cubic3"};
}

RickerSimulator::RickerSimulator(int length, double initial_population, RickerSummaries summaries)
    : length_(length), initial_population_(initial_population), summaries_(std::move(summaries)) {}

RickerParams RickerSimulator::params(const Eigen::VectorXd& theta) const {
  if (theta.size() != 3) throw ConfigError("Ricker theta must be (log r, sigma, phi)");
  RickerParams p;
  p.log_r = theta[0];
  p.sigma = theta[1];
  p.phi = theta[2];
  p.length = length_;
  p.initial_population = initial_population_;
  return p;
}

Eigen::VectorXd RickerSimulator::simulate(const Eigen::VectorXd& theta, Rng& rng) {
  const Series y = ricker_simulate(params(theta), rng);
  return summaries_(y);
}

ParameterSpace ricker_prior() {
  return ParameterSpace({"log_r", "sigma", "phi"},
                        {Marginal::uniform(3.0, 5.0), Marginal::uniform(0.0, 0.8),
                         Marginal::uniform(4.0, 20.0)});
}

}  // namespace gpabc
