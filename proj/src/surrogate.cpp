#include "gpabc/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "gpabc/design.hpp"
#include "gpabc/errors.hpp"

namespace gpabc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kJitterLadder[] = {0.0, 1e-10, 1e-8, 1e-6};
constexpr double kMinTau2 = 1e-300;
// Length-scale search stays where A's reciprocal condition estimate is above this;
// past it predictions lose more than about eight digits.
constexpr double kMinRcond = 1e-6;

double correlation_from_scaled(KernelFamily family, double d2) {
  if (family == KernelFamily::squared_exponential) return std::exp(-0.5 * d2);
  const double r = std::sqrt(5.0 * d2);
  return (1.0 + r + r * r / 3.0) * std::exp(-r);
}

Eigen::MatrixXd correlation_matrix(KernelFamily family, const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& lengthscales) {
  const Eigen::Index n = x.rows();
  const Eigen::MatrixXd z = x.array().rowwise() / lengthscales.transpose().array();
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    c(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = correlation_from_scaled(family, (z.row(i) - z.row(j)).squaredNorm());
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  return c;
}

Eigen::VectorXd correlation_vector(KernelFamily family, const Eigen::MatrixXd& x,
                                   const Eigen::VectorXd& lengthscales,
                                   const Eigen::VectorXd& theta) {
  Eigen::VectorXd a(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    a[i] = correlation_from_scaled(
        family, ((x.row(i).transpose() - theta).array() / lengthscales.array()).square().sum());
  }
  return a;
}

bool all_zero(const Eigen::VectorXd& v) { return (v.array() == 0.0).all(); }

/// Everything that depends on (lambda, tau^2): factorisations, GLS trend and the
/// residual quadratic form.
struct Core {
  Eigen::LLT<Eigen::MatrixXd> chol;
  Eigen::MatrixXd q;  // L^-1 H
  Eigen::LLT<Eigen::MatrixXd> gram;
  Eigen::VectorXd beta;
  Eigen::VectorXd alpha;
  double quad = 0.0;
  double jitter = 0.0;
};

Eigen::MatrixXd build_a(const TrainingData& data, KernelFamily family,
                        const Eigen::VectorXd& lengthscales, double tau2) {
  Eigen::MatrixXd a = correlation_matrix(family, data.inputs, lengthscales);
  a.diagonal() += data.nuggets / tau2;
  return a;
}

bool finish_core(Core& core, const Eigen::MatrixXd& h, const Eigen::VectorXd& y) {
  const auto& l = core.chol.matrixL();
  core.q = l.solve(h);
  core.gram.compute(core.q.transpose() * core.q);
  if (core.gram.info() != Eigen::Success) return false;
  const Eigen::VectorXd ly = l.solve(y);
  core.beta = core.gram.solve(core.q.transpose() * ly);
  const Eigen::VectorXd e = y - h * core.beta;
  core.alpha = core.chol.solve(e);
  core.quad = e.dot(core.alpha);
  return std::isfinite(core.quad) && core.beta.allFinite();
}

/// Factorises A with the given jitter, or walks the jitter ladder when none is given.
std::optional<Core> build_core(const TrainingData& data, const Eigen::MatrixXd& h,
                               KernelFamily family, const Eigen::VectorXd& lengthscales,
                               double tau2, std::optional<double> jitter) {
  Eigen::MatrixXd a = build_a(data, family, lengthscales, tau2);
  const double mean_diag = a.diagonal().mean();
  Core core;
  auto attempt = [&](double j) {
    Eigen::MatrixXd aj = a;
    aj.diagonal().array() += j;
    core.chol.compute(aj);
    if (core.chol.info() != Eigen::Success) return false;
    if (!(core.chol.matrixLLT().diagonal().array() > 0).all()) return false;
    core.jitter = j;
    return finish_core(core, h, data.targets);
  };
  if (jitter) {
    if (attempt(*jitter)) return core;
    return std::nullopt;
  }
  for (double factor : kJitterLadder) {
    if (attempt(factor * mean_diag)) return core;
  }
  return std::nullopt;
}

double condition_estimate(const TrainingData& data, KernelFamily family,
                          const Eigen::VectorXd& lengthscales, double tau2) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(build_a(data, family, lengthscales, tau2),
                                                    Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return ev.maxCoeff() / std::max(std::abs(ev.minCoeff()), std::numeric_limits<double>::min());
}

/// Restricted log likelihood for K = tau^2 A, up to a constant.
double restricted_from_core(const Core& core, Eigen::Index n, Eigen::Index q, double tau2) {
  const double log_det_a = 2.0 * core.chol.matrixLLT().diagonal().array().log().sum();
  const double log_det_g = 2.0 * core.gram.matrixLLT().diagonal().array().log().sum();
  const double value = -0.5 * static_cast<double>(n - q) * std::log(tau2) - 0.5 * log_det_a -
                       0.5 * log_det_g - 0.5 * core.quad / tau2;
  return std::isfinite(value) ? value : kNegInf;
}

/// Zero nuggets: tau^2 profiles out in closed form at e^T A^-1 e / (N - q).
double profile_from_core(const Core& core, Eigen::Index n, Eigen::Index q) {
  const double tau2 =
      std::max(core.quad, std::numeric_limits<double>::min()) / static_cast<double>(n - q);
  return restricted_from_core(core, n, q, tau2);
}

void check_training(const TrainingData& data, const MeanBasis& basis) {
  const Eigen::Index n = data.size();
  if (data.targets.size() != n || data.nuggets.size() != n) {
    throw std::invalid_argument("training data: inputs, targets and nuggets differ in length");
  }
  if (n < min_training_size(basis, data.dims())) {
    throw std::invalid_argument("GP fit needs at least " +
                                std::to_string(min_training_size(basis, data.dims())) +
                                " points for a " + basis.name() + " basis, got " +
                                std::to_string(n));
  }
  if (!data.targets.allFinite() || !data.inputs.allFinite()) {
    throw std::invalid_argument("GP training data contains non-finite values");
  }
  if ((data.nuggets.array() < 0).any() || !data.nuggets.allFinite()) {
    throw std::invalid_argument("GP nuggets must be finite and nonnegative");
  }
}

Eigen::VectorXd design_range(const Eigen::MatrixXd& x) {
  Eigen::VectorXd r = x.colwise().maxCoeff() - x.colwise().minCoeff();
  for (auto& v : r) {
    if (!(v > 0)) v = 1.0;
  }
  return r;
}

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string to_string(KernelFamily f) {
  return f == KernelFamily::squared_exponential ? "squared_exponential" : "matern52";
}

KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "squared_exponential" || s == "se") return KernelFamily::squared_exponential;
  if (s == "matern52") return KernelFamily::matern52;
  throw ConfigError("unknown kernel family '" + s + "' (expected squared_exponential or matern52)");
}

double correlation(KernelFamily family, const Eigen::VectorXd& lengthscales,
                   const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return correlation_from_scaled(family, ((x - y).array() / lengthscales.array()).square().sum());
}

MeanBasis MeanBasis::polynomial(int degree) {
  if (degree < 0 || degree > 12) throw ConfigError("polynomial basis degree must be in [0, 12]");
  return MeanBasis(Kind::polynomial, degree);
}

MeanBasis MeanBasis::from_string(const std::string& s) {
  if (s == "constant") return constant();
  if (s == "linear") return linear();
  if (s == "quadratic") return quadratic();
  const std::string prefix = "polynomial";
  if (s.rfind(prefix, 0) == 0) {
    const std::string rest = s.substr(prefix.size());
    std::size_t used = 0;
    int degree = -1;
    try {
      degree = std::stoi(rest, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == rest.size() && !rest.empty()) return polynomial(degree);
  }
  throw ConfigError("unknown mean basis '" + s +
                    "' (expected constant, linear, quadratic or polynomialN)");
}

std::string MeanBasis::name() const {
  switch (kind_) {
    case Kind::constant: return "constant";
    case Kind::linear: return "linear";
    case Kind::quadratic: return "quadratic";
    case Kind::polynomial: return "polynomial" + std::to_string(degree_);
  }
  return "unknown";
}

void MeanBasis::standardise_to(const Eigen::MatrixXd& inputs) {
  const Eigen::VectorXd lo = inputs.colwise().minCoeff();
  const Eigen::VectorXd hi = inputs.colwise().maxCoeff();
  Eigen::VectorXd half = 0.5 * (hi - lo);
  for (auto& v : half) {
    if (!(v > 0)) v = 1.0;
  }
  set_standardisation(0.5 * (lo + hi), half);
}

void MeanBasis::set_standardisation(Eigen::VectorXd centre, Eigen::VectorXd half_width) {
  if (centre.size() != half_width.size() || (half_width.array() <= 0).any()) {
    throw std::invalid_argument("mean basis standardisation needs positive half widths");
  }
  centre_ = std::move(centre);
  half_width_ = std::move(half_width);
}

Eigen::VectorXd MeanBasis::evaluate(const Eigen::VectorXd& theta) const {
  const Eigen::Index p = theta.size();
  Eigen::VectorXd h(size(p));
  h[0] = 1.0;
  if (degree_ == 0) return h;
  if (centre_.size() != p) throw std::logic_error("mean basis used before standardisation");
  Eigen::Index col = 1;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double z = (theta[j] - centre_[j]) / half_width_[j];
    double power = 1.0;
    for (int k = 1; k <= degree_; ++k) {
      power *= z;
      h[col++] = power;
    }
  }
  return h;
}

Eigen::MatrixXd MeanBasis::evaluate_rows(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd h(inputs.rows(), size(inputs.cols()));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    h.row(i) = evaluate(inputs.row(i).transpose()).transpose();
  }
  return h;
}

Eigen::Index min_training_size(const MeanBasis& basis, Eigen::Index dims) {
  return basis.size(dims) + 3;
}

FittedGp FittedGp::from_hyperparameters(TrainingData data, MeanBasis basis, KernelFamily family,
                                        Eigen::VectorXd lengthscales, double tau2,
                                        std::optional<double> jitter) {
  check_training(data, basis);
  if (lengthscales.size() != data.dims() || (lengthscales.array() <= 0).any()) {
    throw std::invalid_argument("length scales must be positive, one per input dimension");
  }
  if (!(tau2 > 0) || !std::isfinite(tau2)) throw std::invalid_argument("tau^2 must be positive");
  if (basis.degree() > 0 && basis.centre().size() != data.dims()) {
    basis.standardise_to(data.inputs);
  }

  FittedGp gp;
  gp.h_ = basis.evaluate_rows(data.inputs);
  auto core = build_core(data, gp.h_, family, lengthscales, tau2, jitter);
  if (!core) {
    std::ostringstream msg;
    msg << "GP covariance is not positive definite after the jitter ladder (condition estimate "
        << condition_estimate(data, family, lengthscales, tau2) << ")";
    throw NumericalError(msg.str());
  }
  const Eigen::Index n = data.size();
  const Eigen::Index q = basis.size(data.dims());
  gp.profile_loglik_ = all_zero(data.nuggets) ? profile_from_core(*core, n, q)
                                              : restricted_from_core(*core, n, q, tau2);
  gp.chol_ = std::move(core->chol);
  gp.q_ = std::move(core->q);
  gp.gram_ = std::move(core->gram);
  gp.beta_ = std::move(core->beta);
  gp.alpha_ = std::move(core->alpha);
  gp.quad_ = core->quad;
  gp.jitter_ = core->jitter;
  gp.sigma2_ = core->quad / static_cast<double>(n - q - 2);
  gp.scale_ = all_zero(data.nuggets) ? gp.sigma2_ : tau2;
  gp.data_ = std::move(data);
  gp.basis_ = std::move(basis);
  gp.family_ = family;
  gp.lengthscales_ = std::move(lengthscales);
  gp.tau2_ = tau2;
  return gp;
}

Prediction FittedGp::predict(const Eigen::VectorXd& theta) const {
  if (theta.size() != data_.dims()) throw std::invalid_argument("predict: dimension mismatch");
  const Eigen::VectorXd a = correlation_vector(family_, data_.inputs, lengthscales_, theta);
  const Eigen::VectorXd h = basis_.evaluate(theta);
  Prediction out;
  out.mean = h.dot(beta_) + a.dot(alpha_);
  const Eigen::VectorXd w = chol_.matrixL().solve(a);
  const Eigen::VectorXd u = h - q_.transpose() * w;
  const double c = 1.0 - w.squaredNorm() + u.dot(gram_.solve(u));
  out.variance = scale_ * std::max(c, 0.0);
  out.dof = dof();
  return out;
}

double FittedGp::sample(const Eigen::VectorXd& theta, Rng& rng) const {
  const Prediction p = predict(theta);
  std::student_t_distribution<double> t(p.dof);
  return p.mean + p.sd() * t(rng);
}

LooResult FittedGp::loo() const {
  const Eigen::Index n = data_.size();
  const Eigen::Index q = basis_.size(data_.dims());
  if (n < q + 4) {
    throw std::invalid_argument("leave-one-out diagnostics need at least q + 4 = " +
                                std::to_string(q + 4) + " points");
  }
  // P = A^-1 - A^-1 H (H^T A^-1 H)^-1 H^T A^-1, and P y = alpha.
  const Eigen::MatrixXd a_inv = chol_.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd b = a_inv * h_;
  const Eigen::VectorXd p_diag =
      a_inv.diagonal() - (b.array() * gram_.solve(b.transpose()).transpose().array())
                             .rowwise()
                             .sum()
                             .matrix();
  const bool zero_nuggets = all_zero(data_.nuggets);
  const double loo_dof = static_cast<double>(n - 1 - q);
  const double t975 = student_t_quantile(loo_dof, 0.975);

  LooResult out;
  out.predicted.resize(n);
  out.residuals.resize(n);
  out.variance.resize(n);
  double sse = 0.0;
  Eigen::Index covered = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pii = p_diag[i];
    const double err = alpha_[i] / pii;
    out.predicted[i] = data_.targets[i] - err;
    const double s2 =
        zero_nuggets ? (quad_ - alpha_[i] * err) / static_cast<double>(n - 1 - q - 2) : scale_;
    const double ratio_nugget = data_.nuggets[i] / tau2_;
    out.variance[i] = s2 * std::max(1.0 / pii - ratio_nugget - jitter_, 0.0);
    const double denom = std::sqrt(out.variance[i] + s2 * ratio_nugget);
    out.residuals[i] = err / denom;
    sse += err * err;
    if (std::abs(out.residuals[i]) <= t975) ++covered;
  }
  out.rmse = std::sqrt(sse / static_cast<double>(n));
  out.coverage = static_cast<double>(covered) / static_cast<double>(n);
  return out;
}

nlohmann::json FittedGp::to_json() const {
  nlohmann::json j;
  j["format"] = "gpabc-gp/1";
  j["family"] = to_string(family_);
  j["basis"] = {{"kind", basis_.name()},
                {"centre", vec_json(basis_.centre())},
                {"half_width", vec_json(basis_.half_width())}};
  j["lengthscales"] = vec_json(lengthscales_);
  j["tau2"] = tau2_;
  j["jitter"] = jitter_;
  j["beta"] = vec_json(beta_);
  j["sigma2"] = sigma2_;
  j["scale"] = scale_;
  j["dof"] = dof();
  j["profile_loglik"] = profile_loglik_;
  j["optimizer_warning"] = optimizer_warning_;
  nlohmann::json inputs = nlohmann::json::array();
  for (Eigen::Index i = 0; i < data_.size(); ++i) {
    inputs.push_back(vec_json(data_.inputs.row(i).transpose()));
  }
  j["inputs"] = std::move(inputs);
  j["targets"] = vec_json(data_.targets);
  j["nuggets"] = vec_json(data_.nuggets);
  return j;
}

FittedGp FittedGp::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "gpabc-gp/1") throw ConfigError("unrecognised GP snapshot format");
    TrainingData data;
    const auto& rows = j.at("inputs");
    const auto n = static_cast<Eigen::Index>(rows.size());
    if (n == 0) throw ConfigError("GP snapshot has no training points");
    const auto p = static_cast<Eigen::Index>(rows.at(0).size());
    data.inputs.resize(n, p);
    for (Eigen::Index i = 0; i < n; ++i) data.inputs.row(i) = json_vec(rows.at(i)).transpose();
    data.targets = json_vec(j.at("targets"));
    data.nuggets = json_vec(j.at("nuggets"));
    MeanBasis basis = MeanBasis::from_string(j.at("basis").at("kind").get<std::string>());
    const Eigen::VectorXd centre = json_vec(j.at("basis").at("centre"));
    if (centre.size() > 0) {
      basis.set_standardisation(centre, json_vec(j.at("basis").at("half_width")));
    }
    FittedGp gp = from_hyperparameters(std::move(data), std::move(basis),
                                       kernel_family_from_string(j.at("family")),
                                       json_vec(j.at("lengthscales")), j.at("tau2").get<double>(),
                                       j.at("jitter").get<double>());
    gp.optimizer_warning_ = j.value("optimizer_warning", false);
    return gp;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed GP snapshot: ") + e.what());
  }
}

double restricted_log_likelihood(const TrainingData& data, const MeanBasis& basis,
                                 KernelFamily family, const Eigen::VectorXd& lengthscales,
                                 double tau2) {
  const Eigen::MatrixXd h = basis.evaluate_rows(data.inputs);
  const auto core = build_core(data, h, family, lengthscales, tau2, 0.0);
  if (!core) return kNegInf;
  return restricted_from_core(*core, data.size(), basis.size(data.dims()), tau2);
}

namespace {

struct LogTau2Range {
  double lo, centre, hi;
};

/// Search range for log tau^2 around the OLS residual variance of the trend.
LogTau2Range log_tau2_range(const TrainingData& data, const Eigen::MatrixXd& h) {
  const Eigen::VectorXd ols = h.colPivHouseholderQr().solve(data.targets);
  const double n = static_cast<double>(data.size());
  const double resid = (data.targets - h * ols).squaredNorm() / n;
  const double spread = std::max({resid, data.nuggets.maxCoeff(),
                                   1e-12 * (1.0 + data.targets.squaredNorm() / n)});
  return {std::log(std::max(spread * 1e-8, kMinTau2)), std::log(spread), std::log(spread * 1e4)};
}

}  // namespace

double profile_log_likelihood(const TrainingData& data, const MeanBasis& basis,
                              KernelFamily family, const Eigen::VectorXd& lengthscales) {
  const Eigen::MatrixXd h = basis.evaluate_rows(data.inputs);
  const Eigen::Index n = data.size();
  const Eigen::Index q = basis.size(data.dims());
  if (all_zero(data.nuggets)) {
    const auto core = build_core(data, h, family, lengthscales, 1.0, 0.0);
    return core ? profile_from_core(*core, n, q) : kNegInf;
  }
  const auto [lo, centre, hi] = log_tau2_range(data, h);
  auto objective = [&](const Eigen::VectorXd& x) {
    const double tau2 = std::exp(x[0]);
    const auto core = build_core(data, h, family, lengthscales, tau2, 0.0);
    return core ? -restricted_from_core(*core, n, q, tau2) : std::numeric_limits<double>::infinity();
  };
  double best = std::numeric_limits<double>::infinity();
  for (double shift : {-4.0, 0.0, 4.0}) {
    const Eigen::VectorXd start = Eigen::VectorXd::Constant(1, centre + shift);
    const auto r = nelder_mead(objective, start, Eigen::VectorXd::Constant(1, lo),
                               Eigen::VectorXd::Constant(1, hi), {400, 1.0, 1e-10, 1e-8});
    best = std::min(best, r.value);
  }
  return -best;
}

FittedGp fit_gp(TrainingData data, MeanBasis basis, const GpOptions& options) {
  check_training(data, basis);
  basis.standardise_to(data.inputs);
  const Eigen::Index p = data.dims();
  const Eigen::Index n = data.size();
  const Eigen::Index q = basis.size(p);
  const Eigen::MatrixXd h = basis.evaluate_rows(data.inputs);
  const Eigen::VectorXd range = design_range(data.inputs);
  const bool zero_nuggets = all_zero(data.nuggets);
  const auto [tau_lo, tau_mid, tau_hi] = log_tau2_range(data, h);

  // Search space: log length scales, plus log tau^2 when nuggets are present.
  const Eigen::Index dims = zero_nuggets ? p : p + 1;
  Eigen::VectorXd lower(dims), upper(dims);
  lower.head(p) = (range * options.lower_factor).array().log();
  upper.head(p) = (range * options.upper_factor).array().log();
  if (!zero_nuggets) {
    lower[p] = tau_lo;
    upper[p] = tau_hi;
  }
  auto clamp = [&](Eigen::VectorXd x) { return x.cwiseMax(lower).cwiseMin(upper).eval(); };

  std::optional<Eigen::VectorXd> init;
  if (options.lengthscales) {
    if (options.lengthscales->size() != p || (options.lengthscales->array() <= 0).any()) {
      throw std::invalid_argument("initial length scales must be positive, one per dimension");
    }
    Eigen::VectorXd x(dims);
    x.head(p) = options.lengthscales->array().log();
    if (!zero_nuggets) x[p] = tau_mid;
    init = clamp(x);
  }

  std::vector<Eigen::VectorXd> starts;
  if (init) starts.push_back(*init);
  if (options.optimize) {
    SobolStream sobol(static_cast<std::size_t>(dims), 1);
    const double lo = std::log(0.05), hi = std::log(2.0);
    for (int s = 0; s < options.starts; ++s) {
      const Eigen::VectorXd u = sobol.next_point();
      Eigen::VectorXd x(dims);
      x.head(p) = range.array().log() + lo + u.head(p).array() * (hi - lo);
      if (!zero_nuggets) x[p] = tau_mid + std::log(0.1) + u[p] * std::log(100.0);
      starts.push_back(clamp(x));
    }
  } else if (!init) {
    Eigen::VectorXd x(dims);
    x.head(p) = (0.5 * range).array().log();
    if (!zero_nuggets) x[p] = tau_mid;
    starts.push_back(clamp(x));
  }

  auto objective = [&](const Eigen::VectorXd& x) {
    const double tau2 = zero_nuggets ? 1.0 : std::exp(x[p]);
    // Only exact factorisations count; a jittered A is a different model.
    const auto core =
        build_core(data, h, options.family, x.head(p).array().exp().matrix(), tau2, 0.0);
    if (!core || core->chol.rcond() < kMinRcond) return std::numeric_limits<double>::infinity();
    return zero_nuggets ? -profile_from_core(*core, n, q)
                        : -restricted_from_core(*core, n, q, tau2);
  };

  Eigen::VectorXd best = starts.front();
  bool warning = false;
  if (options.optimize) {
    double best_value = std::numeric_limits<double>::infinity();
    for (Eigen::VectorXd s : starts) {
      // Pull ill-conditioned starts towards shorter length scales so the simplex
      // begins on finite values.
      for (int k = 0; k < 60 && !std::isfinite(objective(s)); ++k) {
        const Eigen::VectorXd shorter = clamp((s.array() - std::log(2.0)).matrix());
        if (shorter.head(p) == s.head(p)) break;
        s.head(p) = shorter.head(p);
      }
      const NelderMeadResult r = nelder_mead(objective, s, lower, upper, options.optimizer);
      if (r.value < best_value) {
        best_value = r.value;
        best = r.x;
        warning = !r.converged;
      }
    }
    if (!std::isfinite(best_value)) {
      throw NumericalError("GP hyperparameter optimisation found no factorisable point");
    }
  } else if (!zero_nuggets && !options.lengthscales) {
    best[p] = tau_mid;
  }

  const Eigen::VectorXd lengthscales = best.head(p).array().exp();
  double tau2 = 1.0;
  if (zero_nuggets) {
    const auto core = build_core(data, h, options.family, lengthscales, 1.0, std::nullopt);
    if (core) tau2 = std::max(core->quad / static_cast<double>(n - q), kMinTau2);
  } else {
    tau2 = std::exp(best[p]);
  }
  FittedGp gp = FittedGp::from_hyperparameters(std::move(data), std::move(basis), options.family,
                                               lengthscales, tau2);
  gp.set_optimizer_warning(warning);
  return gp;
}

LooResult loo_diagnostics(const FittedGp& gp) { return gp.loo(); }

std::vector<SliceRow> slice_prediction(const FittedGp& gp, const Eigen::VectorXd& anchor,
                                       std::size_t dim, const std::vector<double>& grid) {
  if (anchor.size() != gp.data().dims() || static_cast<Eigen::Index>(dim) >= anchor.size()) {
    throw std::invalid_argument("slice_prediction: anchor/dimension mismatch");
  }
  const double t = student_t_quantile(gp.dof(), 0.975);
  std::vector<SliceRow> rows;
  rows.reserve(grid.size());
  Eigen::VectorXd theta = anchor;
  for (double v : grid) {
    theta[static_cast<Eigen::Index>(dim)] = v;
    const Prediction pr = gp.predict(theta);
    rows.push_back({v, pr.mean, pr.mean - t * pr.sd(), pr.mean + t * pr.sd(), pr.variance});
  }
  return rows;
}

double student_t_quantile(double dof, double p) {
  boost::math::students_t dist(dof);
  return boost::math::quantile(dist, p);
}

void save_gp(const FittedGp& gp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write GP snapshot " + path);
  out << gp.to_json().dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing GP snapshot " + path);
}

FittedGp load_gp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read GP snapshot " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed GP snapshot " + path + ": " + e.what());
  }
  return FittedGp::from_json(j);
}

}  // namespace gpabc
