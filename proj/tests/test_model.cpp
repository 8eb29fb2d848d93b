#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gpabc/model.hpp"

using namespace gpabc;

namespace {

// Straight-line reimplementation of each summary formula, in long double.
std::vector<long double> summaries_oracle(const Series& y, const Series& observed, double power) {
  const std::size_t n = y.size();
  std::vector<long double> s;
  long double mean = 0;
  for (auto v : y) mean += v;
  mean /= n;
  s.push_back(mean);
  long double zeros = 0;
  for (auto v : y) zeros += (v == 0);
  s.push_back(zeros);
  for (std::size_t lag = 0; lag <= 5; ++lag) {
    long double acc = 0;
    for (std::size_t t = 0; t + lag < n; ++t) acc += (y[t] - mean) * (y[t + lag] - mean);
    s.push_back(acc / n);
  }
  // y_{t+1}^c on (y_t^c, y_t^2c) through the 2x2 normal equations.
  long double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    const long double z = std::pow(static_cast<long double>(y[t]), static_cast<long double>(power));
    const long double z2 = z * z;
    const long double r = std::pow(static_cast<long double>(y[t + 1]), static_cast<long double>(power));
    a11 += z * z;
    a12 += z * z2;
    a22 += z2 * z2;
    b1 += z * r;
    b2 += z2 * r;
  }
  const long double det = a11 * a22 - a12 * a12;
  s.push_back((b1 * a22 - a12 * b2) / det);
  s.push_back((a11 * b2 - a12 * b1) / det);
  // Sorted differences, both scaled by the observed max |difference|.
  auto diffs = [](const Series& x) {
    std::vector<long double> d;
    for (std::size_t t = 1; t < x.size(); ++t) d.push_back(static_cast<long double>(x[t] - x[t - 1]));
    std::sort(d.begin(), d.end());
    return d;
  };
  auto ref = diffs(observed);
  auto cur = diffs(y);
  long double scale = 0;
  for (auto v : ref) scale = std::max(scale, std::fabs(v));
  for (auto& v : ref) v /= scale;
  for (auto& v : cur) v /= scale;
  long double m[3][4] = {};
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const long double x[3] = {ref[i], ref[i] * ref[i], ref[i] * ref[i] * ref[i]};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[r][c] += x[r] * x[c];
      m[r][3] += x[r] * cur[i];
    }
  }
  for (int c = 0; c < 3; ++c) {
    int piv = c;
    for (int r = c + 1; r < 3; ++r) {
      if (std::fabs(m[r][c]) > std::fabs(m[piv][c])) piv = r;
    }
    for (int k = 0; k < 4; ++k) std::swap(m[c][k], m[piv][k]);
    for (int r = 0; r < 3; ++r) {
      if (r == c) continue;
      const long double f = m[r][c] / m[c][c];
      for (int k = c; k < 4; ++k) m[r][k] -= f * m[c][k];
    }
  }
  for (int r = 0; r < 3; ++r) s.push_back(m[r][3] / m[r][r]);
  return s;
}

class CountingSimulator final : public Simulator {
 public:
  std::size_t output_dim() const override { return 1; }

 protected:
  Eigen::VectorXd simulate(const Eigen::VectorXd& theta, Rng& rng) override {
    return Eigen::VectorXd::Constant(1, theta[0] + std::normal_distribution<double>()(rng));
  }
};

}  // namespace

TEST_SUITE("model") {

TEST_CASE("uniform marginals and the Ricker prior density") {
  const ParameterSpace prior = ricker_prior();
  CHECK(prior.dims() == 3);
  CHECK(prior.density(Eigen::Vector3d(3.8, 0.3, 10.0)) ==
        doctest::Approx(1.0 / (2.0 * 0.8 * 16.0)).epsilon(1e-15));
  CHECK(prior.density(Eigen::Vector3d(5.5, 0.3, 10.0)) == 0.0);
  CHECK(prior.density(Eigen::Vector3d(3.8, -0.1, 10.0)) == 0.0);
  CHECK(std::isinf(prior.log_density(Eigen::Vector3d(3.8, 0.3, 3.0))));
  CHECK_THROWS(Marginal::uniform(1.0, 1.0));
  CHECK_THROWS(ParameterSpace({"a"}, {}));
}

TEST_CASE("prior density integrates to one on a tensor grid") {
  const ParameterSpace space({"a", "b"}, {Marginal::uniform(-1.0, 2.0), Marginal::normal(1.0, 0.5)});
  const int n = 400;
  const double lo_b = 1.0 - 10 * 0.5, hi_b = 1.0 + 10 * 0.5;
  const double ha = 3.0 / n, hb = (hi_b - lo_b) / n;
  long double total = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      total += space.density(Eigen::Vector2d(-1.0 + (i + 0.5) * ha, lo_b + (j + 0.5) * hb));
    }
  }
  CHECK(static_cast<double>(total * ha * hb) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("ricker latent path is deterministic without process noise") {
  RickerParams p;
  p.sigma = 0.0;
  p.log_r = 3.8;
  p.initial_population = 1.0;
  Rng rng(1);
  std::vector<double> latent;
  ricker_simulate(p, rng, &latent);
  CHECK(latent[0] == doctest::Approx(std::exp(2.8)).epsilon(1e-14));
  CHECK(std::log(latent[1]) == doctest::Approx(3.8 + 2.8 - std::exp(2.8)).epsilon(1e-12));
  for (double n : latent) CHECK(n > 0);
}

TEST_CASE("ricker observations vanish when phi N_t underflows to zero") {
  RickerParams p;
  p.log_r = 3.0;
  p.sigma = 0.0;
  p.phi = 1e-300;
  p.initial_population = 1e-10;
  Rng rng(2);
  const Series y = ricker_simulate(p, rng);
  for (auto v : y) CHECK(v == 0);
}

TEST_CASE("ricker simulation is reproducible and validates its parameters") {
  RickerParams p;
  Rng a(7), b(7);
  CHECK(ricker_simulate(p, a) == ricker_simulate(p, b));
  p.phi = 0.0;
  CHECK_THROWS(ricker_simulate(p, a));
  p.phi = 10;
  p.sigma = -1;
  CHECK_THROWS(ricker_simulate(p, a));
}

TEST_CASE("ricker overflow reports the failing step") {
  RickerParams p;
  p.log_r = 700.0;
  p.sigma = 0.0;
  Rng rng(3);
  try {
    ricker_simulate(p, rng);
    FAIL("expected overflow");
  } catch (const RickerOverflow& e) {
    CHECK(e.step() >= 1);
    CHECK(std::string(e.what()).find("t=") != std::string::npos);
  }
}

TEST_CASE("mean observation matches phi E[N_t] from a latent-path Monte Carlo") {
  RickerParams p;  // log r 3.8, sigma 0.3, phi 10
  const int reps = 100000, t_fixed = 10;
  Rng rng(11);
  double sum = 0, sum2 = 0;
  for (int r = 0; r < reps; ++r) {
    const double y = static_cast<double>(ricker_simulate(p, rng)[t_fixed - 1]);
    sum += y;
    sum2 += y * y;
  }
  const double mean_y = sum / reps;
  const double var_y = sum2 / reps - mean_y * mean_y;

  std::mt19937_64 other(99);
  std::normal_distribution<double> e(0.0, p.sigma);
  double sn = 0, sn2 = 0;
  for (int r = 0; r < reps; ++r) {
    double log_n = 0.0;
    for (int t = 0; t < t_fixed; ++t) log_n = p.log_r + log_n - std::exp(log_n) + e(other);
    const double v = p.phi * std::exp(log_n);
    sn += v;
    sn2 += v * v;
  }
  const double mean_n = sn / reps;
  const double var_n = sn2 / reps - mean_n * mean_n;
  const double se = std::sqrt(var_y / reps + var_n / reps);
  CHECK(std::abs(mean_y - mean_n) < 3 * se);
}

TEST_CASE("summaries match an independent per-formula oracle") {
  RickerParams p;
  Rng rng(5);
  const Series observed = ricker_simulate(p, rng);
  RickerSummaries summaries(observed);
  for (int rep = 0; rep < 5; ++rep) {
    p.log_r = 3.5 + 0.2 * rep;
    const Series y = ricker_simulate(p, rng);
    const Eigen::VectorXd s = summaries(y);
    const auto o = summaries_oracle(y, observed, 0.3);
    REQUIRE(s.size() == static_cast<Eigen::Index>(RickerSummaries::kCount));
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      CHECK(s[i] == doctest::Approx(static_cast<double>(o[static_cast<std::size_t>(i)]))
                        .epsilon(1e-9)
                        .scale(1.0));
    }
  }
}

TEST_CASE("constant and permuted series") {
  Series observed(50);
  for (std::size_t t = 0; t < observed.size(); ++t) observed[t] = static_cast<std::int64_t>(t % 7);
  RickerSummaries summaries(observed);
  for (std::int64_t c : {0, 4}) {
    const Series y(50, c);
    const Eigen::VectorXd s = summaries(y);
    CHECK(s.allFinite());
    CHECK(s[0] == doctest::Approx(static_cast<double>(c)));
    CHECK(s[1] == doctest::Approx(c == 0 ? 50.0 : 0.0));
    for (int lag = 1; lag <= 5; ++lag) CHECK(s[2 + lag] == doctest::Approx(0.0));
  }
  Series y = observed;
  std::reverse(y.begin(), y.end());
  std::swap(y[3], y[40]);
  const Eigen::VectorXd a = summaries(observed), b = summaries(y);
  CHECK(a[0] == doctest::Approx(b[0]));
  CHECK(a[1] == doctest::Approx(b[1]));
  CHECK(a[2] == doctest::Approx(b[2]));
  CHECK((a.segment(3, 5) - b.segment(3, 5)).norm() > 1e-6);
  CHECK_THROWS_AS(RickerSummaries(Series(7, 1)), ConfigError);
}

TEST_CASE("autocovariances are phase invariant on a two-cycle") {
  Series cycle(50), shifted(50);
  for (std::size_t t = 0; t < 50; ++t) {
    cycle[t] = t % 2 ? 20 : 5;
    shifted[t] = t % 2 ? 5 : 20;
  }
  RickerSummaries summaries(cycle);
  const Eigen::VectorXd a = summaries(cycle), b = summaries(shifted);
  for (int i = 0; i < 8; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("simulator calls are counted and budgeted") {
  CountingSimulator sim;
  Rng a(1), b(1);
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 2.0);
  CHECK(sim.sample(theta, a)[0] == sim.sample(theta, b)[0]);
  CHECK(sim.calls() == 2);
  sim.set_call_budget(3);
  sim.sample(theta, a);
  CHECK_THROWS_AS(sim.sample(theta, a), BudgetExhausted);
  CHECK(sim.calls() == 3);
}

TEST_CASE("ricker simulator counts exactly one call per series") {
  RickerParams p;
  Rng rng(4);
  RickerSimulator sim(50, 1.0, RickerSummaries(ricker_simulate(p, rng)));
  for (int i = 0; i < 17; ++i) sim.sample(Eigen::Vector3d(3.8, 0.3, 10.0), rng);
  CHECK(sim.calls() == 17);
  CHECK(sim.output_dim() == 13);
  CHECK_THROWS_AS(sim.sample(Eigen::Vector2d(3.8, 0.3), rng), ConfigError);
}

TEST_CASE("subprocess simulator speaks the line protocol") {
  SubprocessSimulator sim({GPABC_ECHO_SIMULATOR, "0.5"}, 2);
  Rng a(3), b(3);
  const Eigen::Vector2d theta(1.5, -2.0);
  const Eigen::VectorXd x = sim.sample(theta, a);
  const Eigen::VectorXd y = sim.sample(theta, b);
  CHECK(x.size() == 2);
  CHECK(x == y);
  CHECK((x - theta).norm() < 5.0);
  CHECK(sim.calls() == 2);

  SubprocessSimulator failing({GPABC_ECHO_SIMULATOR, "--fail-after", "1"}, 2);
  failing.sample(theta, a);
  CHECK_THROWS_AS(failing.sample(theta, a), SimulatorError);

  SubprocessSimulator short_reply({GPABC_ECHO_SIMULATOR, "--short"}, 2);
  CHECK_THROWS_AS(short_reply.sample(theta, a), SimulatorError);

  SubprocessSimulator missing({"/nonexistent/simulator"}, 1);
  CHECK_THROWS_AS(missing.sample(Eigen::VectorXd::Zero(1), a), SimulatorError);
}

}  // TEST_SUITE
