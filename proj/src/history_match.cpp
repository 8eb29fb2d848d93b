#include "gpabc/history_match.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gpabc/errors.hpp"
#include "gpabc/parallel.hpp"

namespace gpabc {

namespace {

double sample_variance(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size() - 1);
}

}  // namespace

std::string to_string(LogNegativeRule r) {
  return r == LogNegativeRule::modelled_scale ? "modelled_scale" : "l_scale";
}

LogNegativeRule log_negative_rule_from_string(const std::string& s) {
  if (s == "modelled_scale") return LogNegativeRule::modelled_scale;
  if (s == "l_scale") return LogNegativeRule::l_scale;
  throw ConfigError("unknown log-negative rule '" + s + "' (expected modelled_scale or l_scale)");
}

DegeneratePolicy degenerate_policy_from_string(const std::string& s) {
  if (s == "exclude") return DegeneratePolicy::exclude;
  if (s == "floor") return DegeneratePolicy::floor;
  throw ConfigError("unknown degenerate policy '" + s + "' (expected exclude or floor)");
}

std::string to_string(DegeneratePolicy p) {
  return p == DegeneratePolicy::exclude ? "exclude" : "floor";
}

bool implausible(const Wave& wave, const Eigen::VectorXd& theta, const ParameterSpace* prior) {
  const Prediction p = wave.gp.predict(theta);
  const double sd = p.sd();
  if (wave.transform == Transform::identity) {
    double mean = p.mean;
    if (wave.prior_weighted && prior != nullptr) {
      const double lp = prior->log_density(theta);
      if (!std::isfinite(lp)) return true;
      mean += lp;
    }
    return implausible_values(mean, sd, wave.max_ll, wave.threshold, wave.sigma_mult);
  }
  const double optimistic_g = p.mean - wave.sigma_mult * sd;
  if (wave.rule == LogNegativeRule::modelled_scale) {
    return optimistic_g > std::log(wave.offset - wave.max_ll) + wave.threshold;
  }
  return wave.offset - std::exp(optimistic_g) < wave.max_ll - wave.threshold;
}

std::optional<std::size_t> cascade_membership(const std::vector<Wave>& waves,
                                              const Eigen::VectorXd& theta, std::size_t upto,
                                              const ParameterSpace* prior) {
  if (upto > waves.size()) throw std::out_of_range("cascade_membership: upto exceeds wave count");
  for (std::size_t i = 0; i < upto; ++i) {
    if (implausible(waves[i], theta, prior)) return i;
  }
  return std::nullopt;
}

bool WaveSequence::member(const Eigen::VectorXd& theta, std::size_t upto) const {
  return prior_.contains(theta) && !cascade_membership(waves_, theta, upto, &prior_);
}

VolumeEstimate volume_fraction(const WaveSequence& seq, std::size_t upto, std::size_t n_mc,
                               Rng& rng) {
  if (n_mc < 1000) throw std::invalid_argument("volume_fraction needs at least 1000 samples");
  VolumeEstimate out;
  out.samples = n_mc;
  if (upto == 0) return out;
  std::size_t inside = 0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    if (seq.member(seq.prior().sample(rng), upto)) ++inside;
  }
  const double f = static_cast<double>(inside) / static_cast<double>(n_mc);
  out.fraction = f;
  out.standard_error = std::sqrt(f * (1.0 - f) / static_cast<double>(n_mc));
  return out;
}

double log_negative_offset(const TrainingEnsemble& ensemble) {
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& pt : ensemble) {
    top = std::max(top, pt.estimate.loglik);
    for (double b : pt.estimate.bootstrap) top = std::max(top, b);
  }
  return top < 0 ? 0.0 : std::ceil(top) + 1.0;
}

std::pair<double, double> transformed_target(const LikelihoodEstimate& est, Transform transform,
                                             double offset) {
  const double raw_var = std::isfinite(est.noise_var) ? est.noise_var : 0.0;
  if (transform == Transform::identity) {
    return {est.loglik, std::max(raw_var, kMinNoiseVariance)};
  }
  const double gap = offset - est.loglik;
  if (!(gap > 0)) throw NumericalError("log-negative transform needs offset > l-hat");
  double var = 0.0;
  if (est.bootstrap.size() >= 2) {
    std::vector<double> g;
    g.reserve(est.bootstrap.size());
    for (double b : est.bootstrap) g.push_back(std::log(offset - b));
    var = sample_variance(g);
  } else {
    var = raw_var / (gap * gap);
  }
  return {std::log(gap), std::max(var, kMinNoiseVariance)};
}

TrainingEnsemble estimate_points(const std::vector<Eigen::VectorXd>& points,
                                 const std::vector<std::uint64_t>& sobol_index, Simulator& sim,
                                 const EstimatorConfig& estimator, std::uint64_t seed) {
  if (points.size() != sobol_index.size()) {
    throw std::invalid_argument("estimate_points: points and indices differ in length");
  }
  TrainingEnsemble out(points.size());
  const std::size_t threads = sim.concurrent() ? estimator.threads : 1;
  parallel_for(points.size(), threads, [&](std::size_t i) {
    Rng rng = make_stream(seed, "sim", sobol_index[i]);
    out[i].theta = points[i];
    out[i].sobol_index = sobol_index[i];
    out[i].estimate = estimate_loglik(points[i], estimator.kernel, sim, estimator.replicates, rng,
                                      estimator.bootstrap);
  });
  return out;
}

Wave build_wave(const TrainingEnsemble& ensemble, const WavePlan& plan,
                const ParameterSpace& prior) {
  if (ensemble.empty()) throw NumericalError("wave has an empty training ensemble");
  const bool prior_weighted = plan.prior_weighted && plan.transform == Transform::identity;
  const double offset =
      plan.transform == Transform::log_negative ? log_negative_offset(ensemble) : 0.0;

  const auto n = static_cast<Eigen::Index>(ensemble.size());
  const auto p = ensemble.front().theta.size();
  TrainingData data{Eigen::MatrixXd(n, p), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  double max_ll = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& pt = ensemble[static_cast<std::size_t>(i)];
    data.inputs.row(i) = pt.theta.transpose();
    const auto [target, nugget] = transformed_target(pt.estimate, plan.transform, offset);
    data.targets[i] = target;
    data.nuggets[i] = nugget;
    double score = pt.estimate.loglik;
    if (prior_weighted) score += prior.log_density(pt.theta);
    max_ll = std::max(max_ll, score);
  }
  const Eigen::Index need = min_training_size(plan.basis, p);
  if (n < need) {
    std::ostringstream msg;
    msg << "only " << n << " usable training points for a " << plan.basis.name()
        << " basis, which needs " << need << "; increase n_new or raise the threshold T";
    throw NumericalError(msg.str());
  }
  return Wave{fit_gp(std::move(data), plan.basis, plan.gp), plan.threshold, plan.sigma_mult,
              max_ll, plan.transform, offset, plan.rule, prior_weighted};
}

WaveReport run_wave(WaveSequence& seq, Simulator& sim, const EstimatorConfig& estimator,
                    SobolStream& stream, const WavePlan& plan, std::uint64_t seed) {
  WaveReport report;
  report.wave = seq.size() + 1;
  report.first_sobol_index = stream.index();
  const std::uint64_t calls_before = sim.calls();

  // Extend the design inside the current not-implausible region.
  Design fresh;
  const Membership member = [&](const Eigen::VectorXd& theta) { return seq.member(theta); };
  ExtendOptions extend;
  extend.mode = seq.size() == 0 ? ExtendMode::fixed : plan.mode;
  extend.inflation = plan.inflation;
  extend.max_draws = plan.max_draws;
  const ExtendResult drawn = extend_design(fresh, stream, seq.prior(), plan.n_new, member, extend);
  report.draws = drawn.draws;
  report.next_sobol_index = stream.index();

  TrainingEnsemble evaluated = estimate_points(fresh.points, fresh.sobol_index, sim, estimator, seed);
  report.new_points = evaluated.size();

  TrainingEnsemble ensemble;
  for (auto& pt : evaluated) {
    if (pt.estimate.degenerate) {
      ++report.degenerate;
      if (estimator.degenerate == DegeneratePolicy::exclude) continue;
      pt.estimate.loglik = std::log(1.0 / static_cast<double>(estimator.replicates + 1));
      pt.estimate.noise_var = 1.0;
      pt.estimate.bootstrap.clear();
      pt.floored = true;
    }
    ensemble.push_back(std::move(pt));
  }
  for (const auto& pt : seq.ensemble) {
    if (seq.member(pt.theta)) {
      ensemble.push_back(pt);
      ++report.survivors;
    }
  }
  report.ensemble_size = ensemble.size();
  report.simulator_calls = sim.calls() - calls_before;

  Wave wave = build_wave(ensemble, plan, seq.prior());
  report.max_ll = wave.max_ll;
  report.offset = wave.offset;
  report.optimizer_warning = wave.gp.optimizer_warning();
  if (wave.gp.data().size() >= min_training_size(plan.basis, wave.gp.data().dims()) + 1) {
    report.loo = wave.gp.loo();
  }
  seq.push(std::move(wave), {});
  seq.ensemble = std::move(ensemble);

  Rng vol_rng = make_stream(seed, "volume");
  report.volume = volume_fraction(seq, seq.size(), plan.volume_samples, vol_rng);
  seq.set_volume(seq.size() - 1, report.volume);
  return report;
}

}  // namespace gpabc
