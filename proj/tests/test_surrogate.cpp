#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "gpabc/surrogate.hpp"
#include "oracles/fixtures.hpp"
#include "oracles/kriging_oracle.hpp"

using namespace gpabc;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

TrainingData quadratic_data(std::size_t n, std::uint64_t seed) {
  TrainingData d;
  d.inputs = fixture::uniform_points(n, 2, seed) * 4.0;
  d.targets.resize(d.inputs.rows());
  for (Eigen::Index i = 0; i < d.inputs.rows(); ++i) {
    const double x = d.inputs(i, 0), y = d.inputs(i, 1);
    d.targets[i] = 1 + 2 * x - 3 * y + 0.5 * x * x + y * y;
  }
  d.nuggets = Eigen::VectorXd::Zero(d.inputs.rows());
  return d;
}

TrainingData gp_draw(std::size_t n, double lengthscale, std::mt19937_64& rng) {
  TrainingData d;
  d.inputs.resize(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index i = 0; i < d.inputs.rows(); ++i) d.inputs(i, 0) = static_cast<double>(i) / static_cast<double>(n - 1);
  Eigen::MatrixXd c(d.inputs.rows(), d.inputs.rows());
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double r = (d.inputs(i, 0) - d.inputs(j, 0)) / lengthscale;
      c(i, j) = std::exp(-0.5 * r * r);
    }
  }
  c.diagonal().array() += 1e-9;
  const Eigen::MatrixXd l = c.llt().matrixL();
  std::normal_distribution<double> z;
  Eigen::VectorXd e(c.rows());
  for (auto& v : e) v = z(rng);
  d.targets = (l * e).array() + 3.0;
  d.nuggets = Eigen::VectorXd::Zero(c.rows());
  return d;
}

}  // namespace

TEST_SUITE("surrogate") {

TEST_CASE("quadratic trend reproduces quadratic data") {
  const FittedGp gp = fit_gp(quadratic_data(30, 1), MeanBasis::quadratic());
  const Eigen::MatrixXd test = fixture::uniform_points(20, 2, 2) * 4.0;
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    const double x = test(i, 0), y = test(i, 1);
    const double truth = 1 + 2 * x - 3 * y + 0.5 * x * x + y * y;
    CHECK(std::abs(gp.predict(test.row(i)).mean - truth) <= 1e-6 * std::max(1.0, std::abs(truth)));
  }
}

TEST_CASE("minimum ensemble size") {
  const MeanBasis b = MeanBasis::quadratic();
  CHECK(min_training_size(b, 1) == 6);
  auto one_d = [](std::size_t n) {
    return fixture::smooth(n, 1, 0.0, 4);
  };
  CHECK_NOTHROW(fit_gp(one_d(6), b));
  CHECK_THROWS_AS(fit_gp(one_d(5), b), std::invalid_argument);
}

TEST_CASE("predictions match the extended-precision kriging oracle") {
  struct Case {
    std::size_t n, p;
    double nugget;
    MeanBasis basis;
  };
  const Case cases[] = {{5, 1, 0.0, MeanBasis::constant()},
                        {20, 2, 0.0, MeanBasis::quadratic()},
                        {20, 2, 1e-3, MeanBasis::linear()},
                        {100, 3, 1e-2, MeanBasis::quadratic()}};
  for (const auto& c : cases) {
    CAPTURE(c.n);
    CAPTURE(c.nugget);
    const FittedGp gp = fit_gp(fixture::smooth(c.n, c.p, c.nugget, 10 + c.n), c.basis);
    REQUIRE(gp.jitter() == 0.0);
    const Eigen::MatrixXd test = fixture::uniform_points(20, c.p, 99);
    const auto ref = oracle::kriging(gp, test);
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
      const Prediction pr = gp.predict(test.row(i));
      CHECK(rel(pr.mean, ref[static_cast<std::size_t>(i)].mean) <= 1e-8);
      CHECK(rel(pr.variance, ref[static_cast<std::size_t>(i)].variance) <= 1e-8);
      CHECK(pr.dof == static_cast<double>(c.n) - static_cast<double>(gp.basis().size(static_cast<Eigen::Index>(c.p))));
    }
  }
}

TEST_CASE("interpolation at training points without nuggets") {
  const TrainingData d = fixture::smooth(15, 2, 0.0, 3);
  const FittedGp gp = fit_gp(d, MeanBasis::linear());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const Prediction p = gp.predict(d.inputs.row(i));
    CHECK(p.mean == doctest::Approx(d.targets[i]).epsilon(1e-8));
    CHECK(p.variance <= 1e-8 * gp.scale());
  }
}

TEST_CASE("far-field limit with a constant basis") {
  const TrainingData d = fixture::smooth(12, 1, 0.0, 5);
  const FittedGp gp = fit_gp(d, MeanBasis::constant());
  double last = -1;
  for (double x = 1.0; x < 1.0 + 40 * gp.lengthscales()[0]; x += 0.25 * gp.lengthscales()[0]) {
    const double v = gp.predict(Eigen::VectorXd::Constant(1, x)).variance;
    CHECK(v >= last - 1e-12 * gp.scale());
    last = v;
  }
  const Prediction far = gp.predict(Eigen::VectorXd::Constant(1, 1e6));
  CHECK(far.mean == doctest::Approx(gp.beta()[0]).epsilon(1e-12));
  // Ceiling: scale * (1 + 1 / (1^T A^-1 1)), from the oracle with the same hyperparameters.
  const auto ref = oracle::kriging(gp, Eigen::MatrixXd::Constant(1, 1, 1e6));
  CHECK(rel(far.variance, ref[0].variance) <= 1e-8);
}

TEST_CASE("constant shift moves the mean by exactly the shift") {
  const TrainingData d = fixture::smooth(25, 2, 0.0, 8);
  TrainingData shifted = d;
  shifted.targets.array() += 123.5;
  const FittedGp a = fit_gp(d, MeanBasis::quadratic());
  const FittedGp b = FittedGp::from_hyperparameters(shifted, a.basis(), a.family(), a.lengthscales(), a.tau2(), 0.0);
  const Eigen::MatrixXd test = fixture::uniform_points(10, 2, 6);
  for (Eigen::Index i = 0; i < test.rows(); ++i) {
    const Prediction pa = a.predict(test.row(i)), pb = b.predict(test.row(i));
    CHECK(pb.mean - pa.mean == doctest::Approx(123.5).epsilon(1e-10));
    CHECK(pb.variance == doctest::Approx(pa.variance).epsilon(1e-8));
  }
}

TEST_CASE("nested bases do not increase the generalised residual sum of squares") {
  const TrainingData d = fixture::smooth(30, 2, 0.0, 13);
  const Eigen::Vector2d lambda(0.4, 0.6);
  double last = std::numeric_limits<double>::infinity();
  for (const MeanBasis& b : {MeanBasis::constant(), MeanBasis::linear(), MeanBasis::quadratic(), MeanBasis::polynomial(3)}) {
    const FittedGp gp = FittedGp::from_hyperparameters(d, b, KernelFamily::squared_exponential, lambda, 1.0, 0.0);
    const double rss = gp.sigma2() * static_cast<double>(d.size() - b.size(2) - 2);
    CHECK(rss <= last * (1 + 1e-10));
    last = rss;
  }
}

TEST_CASE("larger nuggets never shrink the predictive variance") {
  TrainingData d = fixture::smooth(20, 2, 1e-3, 21);
  const Eigen::Vector2d lambda(0.3, 0.5);
  const Eigen::MatrixXd test = fixture::uniform_points(30, 2, 4);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<Eigen::Index> pick(0, d.size() - 1);
  FittedGp before = FittedGp::from_hyperparameters(d, MeanBasis::linear(), KernelFamily::squared_exponential, lambda, 0.8, 0.0);
  for (int step = 0; step < 10; ++step) {
    d.nuggets[pick(rng)] *= 5.0;
    const FittedGp after = FittedGp::from_hyperparameters(d, MeanBasis::linear(), KernelFamily::squared_exponential, lambda, 0.8, 0.0);
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
      CHECK(after.predict(test.row(i)).variance >= before.predict(test.row(i)).variance * (1 - 1e-10));
    }
    before = after;
  }
}

TEST_CASE("fitted length scales do not lower the profile likelihood") {
  for (double nugget : {0.0, 1e-3}) {
    const TrainingData d = fixture::smooth(25, 2, nugget, 31);
    GpOptions opt;
    opt.lengthscales = Eigen::Vector2d(0.05, 3.0);
    const FittedGp gp = fit_gp(d, MeanBasis::linear(), opt);
    const double fitted = profile_log_likelihood(d, gp.basis(), gp.family(), gp.lengthscales());
    const double init = profile_log_likelihood(d, gp.basis(), gp.family(), *opt.lengthscales);
    CHECK(fitted >= init);
    CHECK(gp.profile_loglik() >= restricted_log_likelihood(d, gp.basis(), gp.family(), gp.lengthscales(), gp.tau2()) - 1e-9);
  }
}

TEST_CASE("realisations follow the Student-t marginal") {
  const FittedGp gp = fit_gp(fixture::smooth(12, 1, 0.0, 40), MeanBasis::constant());
  const Eigen::VectorXd at = Eigen::VectorXd::Constant(1, 0.37);
  const Prediction p = gp.predict(at);
  Rng rng(3);
  const int n = 100000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double v = gp.sample(at, rng);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean - p.mean) < 4 * std::sqrt(p.variance / n));
  CHECK(var == doctest::Approx(p.variance * p.dof / (p.dof - 2)).epsilon(0.05));

  const TrainingData d = fixture::smooth(12, 1, 0.0, 40);
  const Prediction at_train = gp.predict(d.inputs.row(0));
  if (at_train.variance == 0.0) CHECK(gp.sample(d.inputs.row(0), rng) == at_train.mean);
}

TEST_CASE("zero variance realisation equals the mean") {
  // With interpolation a training point has variance clamped to zero or near it.
  const TrainingData d = fixture::smooth(8, 1, 0.0, 41);
  const FittedGp gp = FittedGp::from_hyperparameters(d, MeanBasis::constant(), KernelFamily::squared_exponential,
                                                     Eigen::VectorXd::Constant(1, 0.05), 1.0, 0.0);
  Rng rng(1);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const Prediction p = gp.predict(d.inputs.row(i));
    if (p.variance == 0.0) CHECK(gp.sample(d.inputs.row(i), rng) == p.mean);
    CHECK(std::abs(gp.sample(d.inputs.row(i), rng) - d.targets[i]) < 1e-6);
  }
}

TEST_CASE("leave-one-out identities match explicit refits") {
  for (double nugget : {0.0, 1e-2}) {
    const TrainingData d = fixture::smooth(18, 2, nugget, 50);
    const FittedGp gp = fit_gp(d, MeanBasis::linear());
    const LooResult loo = gp.loo();
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      TrainingData minus;
      minus.inputs.resize(d.size() - 1, d.dims());
      minus.targets.resize(d.size() - 1);
      minus.nuggets.resize(d.size() - 1);
      for (Eigen::Index r = 0, k = 0; r < d.size(); ++r) {
        if (r == i) continue;
        minus.inputs.row(k) = d.inputs.row(r);
        minus.targets[k] = d.targets[r];
        minus.nuggets[k] = d.nuggets[r];
        ++k;
      }
      const FittedGp refit = FittedGp::from_hyperparameters(minus, gp.basis(), gp.family(), gp.lengthscales(), gp.tau2(), 0.0);
      const Prediction p = refit.predict(d.inputs.row(i));
      const double residual = (d.targets[i] - p.mean) / std::sqrt(p.variance + d.nuggets[i]);
      CHECK(loo.predicted[i] == doctest::Approx(p.mean).epsilon(1e-8));
      CHECK(loo.variance[i] == doctest::Approx(p.variance).epsilon(1e-8));
      CHECK(loo.residuals[i] == doctest::Approx(residual).epsilon(1e-8));
    }
  }
}

TEST_CASE("leave-one-out coverage is calibrated when data come from the GP") {
  std::mt19937_64 rng(7);
  double total = 0;
  const int trials = 60;
  GpOptions opt;
  opt.optimize = false;
  opt.lengthscales = Eigen::VectorXd::Constant(1, 0.05);
  for (int t = 0; t < trials; ++t) total += fit_gp(gp_draw(40, 0.05, rng), MeanBasis::constant(), opt).loo().coverage;
  const double coverage = total / trials;
  CHECK(coverage >= 0.90);
  CHECK(coverage <= 0.99);
}

TEST_CASE("leave-one-out flags a misspecified trend") {
  // A steep quadratic sampled densely near the middle and once at each end: a
  // constant trend learnt from the flat interior cannot anticipate the ends.
  TrainingData d;
  const int n = 30;
  d.inputs.resize(n, 1);
  d.targets.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x = i == 0 ? -1.0 : i == n - 1 ? 1.0 : -0.3 + 0.6 * (i - 1) / (n - 3.0);
    d.inputs(i, 0) = x;
    d.targets[i] = 50 * x * x;
  }
  d.nuggets = Eigen::VectorXd::Zero(n);
  const LooResult loo = fit_gp(d, MeanBasis::constant()).loo();
  CHECK(std::abs(loo.residuals[0]) > 3);
  CHECK(std::abs(loo.residuals[n - 1]) > 3);
}

TEST_CASE("slices use the t bounds") {
  const FittedGp gp = fit_gp(fixture::smooth(20, 2, 0.0, 60), MeanBasis::linear());
  const Eigen::Vector2d anchor(0.4, 0.6);
  const auto one = slice_prediction(gp, anchor, 1, {0.3});
  REQUIRE(one.size() == 1);
  const Prediction p = gp.predict(Eigen::Vector2d(0.4, 0.3));
  CHECK(one[0].mean == p.mean);
  CHECK(one[0].variance == p.variance);
  const double t = student_t_quantile(p.dof, 0.975);
  const auto rows = slice_prediction(gp, anchor, 0, {0.0, 0.25, 0.5, 0.75, 1.0});
  for (const auto& r : rows) {
    CHECK(r.upper == doctest::Approx(r.mean + t * std::sqrt(r.variance)));
    CHECK(r.lower == doctest::Approx(r.mean - t * std::sqrt(r.variance)));
  }
  CHECK(student_t_quantile(1e9, 0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK(student_t_quantile(5, 0.975) == doctest::Approx(2.570582).epsilon(1e-6));
}

TEST_CASE("snapshot round trip predicts identically") {
  for (double nugget : {0.0, 1e-3}) {
    const FittedGp gp = fit_gp(fixture::smooth(20, 3, nugget, 70), MeanBasis::quadratic());
    const std::filesystem::path path = std::filesystem::path(GPABC_TEST_TMP) / "gp_roundtrip.json";
    std::filesystem::create_directories(path.parent_path());
    save_gp(gp, path.string());
    const FittedGp back = load_gp(path.string());
    const Eigen::MatrixXd test = fixture::uniform_points(10, 3, 71);
    for (Eigen::Index i = 0; i < test.rows(); ++i) {
      const Prediction a = gp.predict(test.row(i)), b = back.predict(test.row(i));
      CHECK(a.mean == b.mean);
      CHECK(a.variance == b.variance);
      CHECK(a.dof == b.dof);
    }
    CHECK(FittedGp::from_json(gp.to_json()).to_json() == gp.to_json());
  }
}

}  // TEST_SUITE
