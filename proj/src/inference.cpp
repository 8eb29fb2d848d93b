#include "gpabc/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "gpabc/errors.hpp"

namespace gpabc {

namespace {

double reflect_into(double x, double lo, double hi) {
  const double width = hi - lo;
  if (!(width > 0)) return lo;
  double y = std::fmod(x - lo, 2.0 * width);
  if (y < 0) y += 2.0 * width;
  return y <= width ? lo + y : lo + 2.0 * width - y;
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

}  // namespace

Chain random_walk_metropolis(const LogTarget& target, const Eigen::VectorXd& init,
                             const Eigen::VectorXd& scales, const MhOptions& options, Rng& rng) {
  if (options.n_iter == 0) throw std::invalid_argument("MCMC needs n_iter >= 1");
  if (scales.size() != init.size() || (scales.array() <= 0).any()) {
    throw std::invalid_argument("proposal scales must be positive, one per dimension");
  }
  if (options.thin == 0) throw std::invalid_argument("thinning must be >= 1");
  if (options.burn_in_fraction < 0 || options.burn_in_fraction >= 1) {
    throw std::invalid_argument("burn-in fraction must be in [0, 1)");
  }

  Chain chain;
  chain.iterations = options.n_iter;
  chain.burn_in = static_cast<std::size_t>(std::floor(options.burn_in_fraction *
                                                      static_cast<double>(options.n_iter)));
  Eigen::VectorXd current = init;
  auto current_value = target(current, rng);
  if (!current_value) throw ConfigError("MCMC initial point has zero target density");
  Eigen::VectorXd s = scales;

  const std::size_t kept = (options.n_iter - chain.burn_in + options.thin - 1) / options.thin;
  chain.draws.resize(static_cast<Eigen::Index>(kept), init.size());
  chain.loglik.resize(static_cast<Eigen::Index>(kept));

  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  std::size_t accepted_after = 0, accepted_burn = 0, batch_accepted = 0, batch_size = 0;
  std::size_t early_accepted = 0;
  Eigen::Index row = 0;
  Eigen::VectorXd proposal(init.size());

  for (std::size_t it = 0; it < options.n_iter; ++it) {
    for (Eigen::Index j = 0; j < init.size(); ++j) proposal[j] = current[j] + s[j] * normal(rng);
    if (options.reflect) {
      const auto& [lo, hi] = *options.reflect;
      for (Eigen::Index j = 0; j < init.size(); ++j) {
        proposal[j] = reflect_into(proposal[j], lo[j], hi[j]);
      }
    }
    bool accept = false;
    if (auto value = target(proposal, rng)) {
      const double log_ratio = value->log_target - current_value->log_target;
      if (log_ratio >= 0 || std::log(unif(rng)) < log_ratio) {
        accept = true;
        current = proposal;
        current_value = value;
      }
    }
    const bool burning = it < chain.burn_in;
    if (accept) {
      (burning ? accepted_burn : accepted_after) += 1;
      if (it < 1000) ++early_accepted;
    }
    if (it + 1 == std::min<std::size_t>(1000, options.n_iter) &&
        static_cast<double>(early_accepted) < 0.01 * static_cast<double>(it + 1)) {
      std::ostringstream msg;
      msg << "acceptance rate " << static_cast<double>(early_accepted) / static_cast<double>(it + 1)
          << " over the first " << it + 1
          << " iterations is below 1%; try proposal scales about 5x smaller";
      chain.warnings.push_back(msg.str());
    }
    if (burning && options.adapt) {
      ++batch_size;
      if (accept) ++batch_accepted;
      if (batch_size == options.adapt_interval) {
        const double rate = static_cast<double>(batch_accepted) / static_cast<double>(batch_size);
        if (rate < options.accept_low) s *= 0.8;
        if (rate > options.accept_high) s *= 1.25;
        batch_size = batch_accepted = 0;
      }
    }
    if (!burning && (it - chain.burn_in) % options.thin == 0) {
      chain.draws.row(row) = current.transpose();
      chain.loglik[row] = current_value->loglik;
      ++row;
    }
  }
  chain.scales = s;
  const std::size_t after = options.n_iter - chain.burn_in;
  chain.acceptance_rate = static_cast<double>(accepted_after) / static_cast<double>(after);
  chain.burn_in_acceptance =
      chain.burn_in ? static_cast<double>(accepted_burn) / static_cast<double>(chain.burn_in) : 0.0;
  return chain;
}

Eigen::VectorXd default_proposal_scales(const ParameterSpace& prior) {
  return 0.1 * prior.widths();
}

double realization_loglik(const Wave& wave, const Eigen::VectorXd& theta, Rng& rng) {
  const double draw = wave.gp.sample(theta, rng);
  if (wave.transform == Transform::identity) return draw;
  return wave.offset - std::exp(draw);
}

Chain mh_sample(const WaveSequence& seq, const Eigen::VectorXd& init,
                const Eigen::VectorXd& scales, const MhOptions& options, Rng& rng) {
  if (seq.size() == 0) throw std::invalid_argument("mh_sample needs at least one fitted wave");
  const std::size_t screen = seq.size() - 1;
  if (!seq.member(init, screen)) {
    throw ConfigError("MCMC initial point is outside the prior support or implausible");
  }
  const Wave& last = seq.wave(screen);
  const LogTarget target = [&](const Eigen::VectorXd& theta,
                               Rng& r) -> std::optional<TargetValue> {
    if (!seq.member(theta, screen)) return std::nullopt;
    const double l = realization_loglik(last, theta, r);
    return TargetValue{l + seq.prior().log_density(theta), l};
  };
  return random_walk_metropolis(target, init, scales, options, rng);
}

Chain wood_mcmc(const Eigen::VectorXd& observed, const ParameterSpace& prior, Simulator& sim,
                std::size_t replicates, const Eigen::VectorXd& init,
                const Eigen::VectorXd& scales, MhOptions options, Rng& rng) {
  Eigen::VectorXd lo(static_cast<Eigen::Index>(prior.dims()));
  Eigen::VectorXd hi(lo.size());
  for (std::size_t j = 0; j < prior.dims(); ++j) {
    const Marginal& m = prior.marginal(j);
    if (m.kind() != Marginal::Kind::uniform) {
      throw ConfigError("the synthetic-likelihood baseline needs uniform priors");
    }
    lo[static_cast<Eigen::Index>(j)] = m.lower();
    hi[static_cast<Eigen::Index>(j)] = m.upper();
  }
  options.reflect = std::make_pair(lo, hi);
  const BootstrapOptions no_boot{0};
  const LogTarget target = [&](const Eigen::VectorXd& theta,
                               Rng& r) -> std::optional<TargetValue> {
    const LikelihoodEstimate est = synthetic_loglik(observed, theta, sim, replicates, r, no_boot);
    if (est.degenerate) return std::nullopt;
    return TargetValue{est.loglik + prior.log_density(theta), est.loglik};
  };
  return random_walk_metropolis(target, init, scales, options, rng);
}

RejectionRun rejection_abc(const Eigen::VectorXd& observed, const ParameterSpace& prior,
                           Simulator& sim, const Metric& metric, double epsilon,
                           std::size_t n_accept, Rng& rng, std::uint64_t max_calls) {
  if (n_accept < 1) throw std::invalid_argument("rejection ABC needs n_accept >= 1");
  if (!(epsilon >= 0)) throw std::invalid_argument("rejection ABC needs epsilon >= 0");
  RejectionRun run;
  run.epsilon = epsilon;
  run.target = n_accept;
  while (run.accepted.size() < n_accept) {
    if (run.calls >= max_calls) {
      std::ostringstream msg;
      msg << "call cap of " << max_calls << " reached with " << run.accepted.size() << " of "
          << n_accept << " acceptances";
      run.warnings.push_back(msg.str());
      return run;
    }
    const Eigen::VectorXd theta = prior.sample(rng);
    const Eigen::VectorXd x = sim.sample(theta, rng);
    ++run.calls;
    if (metric(observed, x) <= epsilon) run.accepted.push_back(theta);
  }
  run.complete = true;
  return run;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<MarginalSummary> posterior_summaries(const Eigen::MatrixXd& samples, std::size_t bins,
                                                 std::size_t kde_points) {
  if (samples.rows() < 100) throw std::invalid_argument("posterior summaries need >= 100 samples");
  if (bins < 1 || kde_points < 2) throw std::invalid_argument("need >= 1 bin and >= 2 KDE points");
  std::vector<MarginalSummary> out;
  const auto n = static_cast<double>(samples.rows());
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    std::vector<double> x(samples.col(j).data(), samples.col(j).data() + samples.rows());
    MarginalSummary m;
    m.mean = mean_of(x);
    m.sd = std::sqrt(variance_of(x));
    m.q025 = quantile(x, 0.025);
    m.q50 = quantile(x, 0.5);
    m.q975 = quantile(x, 0.975);

    const auto [min_it, max_it] = std::minmax_element(x.begin(), x.end());
    double lo = *min_it, hi = *max_it;
    if (hi == lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    m.hist_edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) m.hist_edges[b] = lo + width * static_cast<double>(b);
    m.hist_density.assign(bins, 0.0);
    for (double v : x) {
      auto b = static_cast<std::size_t>((v - lo) / width);
      m.hist_density[std::min(b, bins - 1)] += 1.0 / (n * width);
    }

    const double iqr = quantile(x, 0.75) - quantile(x, 0.25);
    double spread = iqr > 0 ? std::min(m.sd, iqr / 1.34) : m.sd;
    m.bandwidth = 0.9 * spread * std::pow(n, -0.2);
    const double h = m.bandwidth > 0 ? m.bandwidth : 1e-3 * std::max(1.0, std::abs(m.mean));
    const double kde_lo = *min_it - 3 * h, kde_hi = *max_it + 3 * h;
    m.kde_x.resize(kde_points);
    m.kde_density.resize(kde_points);
    const double norm = 1.0 / (n * h * std::sqrt(2 * M_PI));
    for (std::size_t k = 0; k < kde_points; ++k) {
      const double g =
          kde_lo + (kde_hi - kde_lo) * static_cast<double>(k) / static_cast<double>(kde_points - 1);
      double d = 0.0;
      for (double v : x) {
        const double z = (g - v) / h;
        d += std::exp(-0.5 * z * z);
      }
      m.kde_x[k] = g;
      m.kde_density[k] = d * norm;
    }
    out.push_back(std::move(m));
  }
  return out;
}

double batch_means_se(std::span<const double> x, std::size_t batches) {
  if (batches < 2 || x.size() < 2 * batches) {
    throw std::invalid_argument("batch means need at least two points per batch");
  }
  const std::size_t len = x.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b) means.push_back(mean_of(x.subspan(b * len, len)));
  return std::sqrt(variance_of(means) / static_cast<double>(batches));
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::span<const double>> halves;
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto& c : chains) len = std::min(len, c.size() / 2);
  if (chains.empty() || len < 2) throw std::invalid_argument("split R-hat needs longer chains");
  for (const auto& c : chains) {
    halves.emplace_back(c.data(), len);
    halves.emplace_back(c.data() + c.size() - len, len);
  }
  const auto n = static_cast<double>(len);
  std::vector<double> means, vars;
  for (auto h : halves) {
    means.push_back(mean_of(h));
    vars.push_back(variance_of(h));
  }
  const double b = n * variance_of(means);
  const double w = mean_of(vars);
  if (w == 0) return b == 0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

}  // namespace gpabc
