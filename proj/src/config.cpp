#include "gpabc/config.hpp"

#include <cmath>
#include <limits>
#include <set>

#include "gpabc/errors.hpp"
#include "gpabc/io.hpp"

namespace gpabc {

namespace {

using nlohmann::json;

/// Reads keys from one JSON object and rejects any it was not asked about.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key) const { return path_ + "." + key; }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf") return std::numeric_limits<double>::infinity();
      throw ConfigError(where(key) + " must be a number or \"inf\"");
    }
    if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
    return v.get<double>();
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d >= 0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
    }
    throw ConfigError(where(key) + " must be a nonnegative integer");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + where(it.key()));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

json number_json(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  return v;
}

ExtendMode mode_from_string(const std::string& s) {
  if (s == "fixed") return ExtendMode::fixed;
  if (s == "target") return ExtendMode::target;
  throw ConfigError("unknown design mode '" + s + "' (expected fixed or target)");
}

std::string to_string(ExtendMode m) { return m == ExtendMode::fixed ? "fixed" : "target"; }

PriorEntry parse_prior_entry(const json& j, const std::string& path) {
  Section s(j, path);
  PriorEntry e{s.get<std::string>("name", ""), Marginal::uniform(0, 1)};
  require(!e.name.empty(), path + ".name is required");
  const auto dist = s.get<std::string>("dist", "uniform");
  if (dist == "uniform") {
    require(s.has("lower") && s.has("upper"), path + " needs lower and upper");
    const double lo = s.number("lower", 0), hi = s.number("upper", 1);
    require(lo < hi && std::isfinite(lo) && std::isfinite(hi), path + " needs lower < upper");
    e.marginal = Marginal::uniform(lo, hi);
  } else if (dist == "normal") {
    require(s.has("mean") && s.has("sd"), path + " needs mean and sd");
    const double sd = s.number("sd", 1);
    require(sd > 0 && std::isfinite(sd), path + ".sd must be positive");
    e.marginal = Marginal::normal(s.number("mean", 0), sd);
  } else {
    throw ConfigError(path + ".dist must be uniform or normal");
  }
  s.finish();
  return e;
}

WaveSettings parse_wave(const json& j, const std::string& path) {
  Section s(j, path);
  WaveSettings w;
  w.n_new = s.count("n_new", w.n_new);
  require(w.n_new >= 1, path + ".n_new must be >= 1");
  w.mode = mode_from_string(s.get<std::string>("mode", to_string(w.mode)));
  w.threshold = s.number("threshold", w.threshold);
  require(w.threshold > 0, path + ".threshold must be > 0");
  w.sigma_mult = s.number("sigma_mult", w.sigma_mult);
  require(w.sigma_mult >= 0, path + ".sigma_mult must be >= 0");
  w.transform = transform_from_string(s.get<std::string>("transform", to_string(w.transform)));
  w.rule = log_negative_rule_from_string(s.get<std::string>("rule", to_string(w.rule)));
  w.basis = s.get<std::string>("basis", w.basis);
  MeanBasis::from_string(w.basis);
  w.prior_weighted = s.get<bool>("prior_weighted", w.prior_weighted);
  s.finish();
  return w;
}

std::vector<double> positive_vector(Section& s, const std::string& key) {
  auto v = s.get<std::vector<double>>(key, {});
  for (double x : v) require(x > 0 && std::isfinite(x), s.where(key) + " entries must be > 0");
  return v;
}

}  // namespace

std::vector<WaveSettings> default_waves() {
  std::vector<WaveSettings> w(4);
  w[0].n_new = 16;
  w[0].mode = ExtendMode::fixed;
  w[0].threshold = 3.0;
  w[0].transform = Transform::log_negative;
  w[3].basis = "polynomial6";
  return w;
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  Section root(j, "config");
  c.seed = root.count("seed", c.seed);
  c.parallel = root.count("parallel", c.parallel);
  require(c.parallel >= 1, "config.parallel must be >= 1");
  if (root.has("max_calls")) c.max_calls = root.count("max_calls", 0);
  c.volume_samples = root.count("volume_samples", c.volume_samples);
  require(c.volume_samples >= 1000, "config.volume_samples must be >= 1000");

  if (root.has("model")) {
    Section s(root.raw("model"), "config.model");
    auto& m = c.model;
    m.kind = s.get<std::string>("kind", m.kind);
    if (m.kind == "ricker") {
      m.length = s.get<int>("length", m.length);
      require(m.length >= static_cast<int>(RickerSummaries::kMinLength),
              "config.model.length must be >= 8");
      m.initial_population = s.number("initial_population", m.initial_population);
      require(m.initial_population > 0, "config.model.initial_population must be > 0");
      m.power = s.number("power", m.power);
      require(m.power > 0, "config.model.power must be > 0");
      m.truth = s.get<std::vector<double>>("truth", m.truth);
      require(m.truth.size() == 3, "config.model.truth must have 3 entries (log r, sigma, phi)");
    } else if (m.kind == "subprocess") {
      m.command = s.get<std::vector<std::string>>("command", {});
      require(!m.command.empty(), "config.model.command is required for subprocess models");
      m.observed = s.get<std::vector<double>>("observed", {});
      require(!m.observed.empty(), "config.model.observed is required for subprocess models");
      m.output_dim = s.count("output_dim", m.observed.size());
      require(m.output_dim == m.observed.size(),
              "config.model.output_dim must equal the length of observed");
    } else {
      throw ConfigError("config.model.kind must be ricker or subprocess");
    }
    s.finish();
  }

  if (root.has("prior")) {
    const json& p = root.raw("prior");
    require(p.is_array() && !p.empty(), "config.prior must be a nonempty array");
    for (std::size_t i = 0; i < p.size(); ++i) {
      c.prior.push_back(parse_prior_entry(p[i], "config.prior[" + std::to_string(i) + "]"));
    }
  }
  if (c.model.kind == "subprocess") require(!c.prior.empty(), "subprocess models need a prior");
  if (c.model.kind == "ricker" && !c.prior.empty()) {
    require(c.prior.size() == 3, "the Ricker model has 3 parameters");
  }

  if (root.has("estimator")) {
    Section s(root.raw("estimator"), "config.estimator");
    auto& e = c.estimator;
    e.kind = s.get<std::string>("kind", e.kind);
    require(e.kind == "synthetic" || e.kind == "gabc" || e.kind == "abc_indicator",
            "config.estimator.kind must be synthetic, gabc or abc_indicator");
    e.replicates = s.count("replicates", e.replicates);
    e.bootstrap = s.count("bootstrap", e.bootstrap);
    require(e.bootstrap == 0 || e.bootstrap >= 2, "config.estimator.bootstrap must be 0 or >= 2");
    e.epsilon = s.number("epsilon", e.epsilon);
    e.kernel_scale = positive_vector(s, "kernel_scale");
    e.degenerate = degenerate_policy_from_string(
        s.get<std::string>("degenerate", to_string(e.degenerate)));
    s.finish();
  }
  require(c.estimator.replicates >= 1, "config.estimator.replicates must be >= 1");
  if (c.estimator.kind == "abc_indicator") {
    require(c.estimator.epsilon > 0, "config.estimator.epsilon must be > 0");
  }

  if (root.has("design")) {
    Section s(root.raw("design"), "config.design");
    c.inflation = s.number("inflation", c.inflation);
    require(c.inflation >= 1, "config.design.inflation must be >= 1");
    c.max_draws = s.count("max_draws", c.max_draws);
    require(c.max_draws >= 1, "config.design.max_draws must be >= 1");
    s.finish();
  }

  if (root.has("gp")) {
    Section s(root.raw("gp"), "config.gp");
    auto& g = c.gp;
    g.family = kernel_family_from_string(s.get<std::string>("family", to_string(g.family)));
    g.optimize = s.get<bool>("optimize", g.optimize);
    g.starts = s.get<int>("starts", g.starts);
    require(g.starts >= 1, "config.gp.starts must be >= 1");
    g.max_evaluations = s.get<int>("max_evaluations", g.max_evaluations);
    require(g.max_evaluations >= 10, "config.gp.max_evaluations must be >= 10");
    s.finish();
  }

  if (root.has("waves")) {
    const json& w = root.raw("waves");
    require(w.is_array() && !w.empty(), "config.waves must be a nonempty array");
    for (std::size_t i = 0; i < w.size(); ++i) {
      c.waves.push_back(parse_wave(w[i], "config.waves[" + std::to_string(i) + "]"));
    }
  } else {
    c.waves = default_waves();
  }

  if (root.has("mcmc")) {
    Section s(root.raw("mcmc"), "config.mcmc");
    auto& m = c.mcmc;
    m.n_iter = s.count("n_iter", m.n_iter);
    require(m.n_iter >= 1, "config.mcmc.n_iter must be >= 1");
    m.burn_in = s.number("burn_in", m.burn_in);
    require(m.burn_in >= 0 && m.burn_in < 1, "config.mcmc.burn_in must be in [0, 1)");
    m.thin = s.count("thin", m.thin);
    require(m.thin >= 1, "config.mcmc.thin must be >= 1");
    m.adapt = s.get<bool>("adapt", m.adapt);
    m.chains = s.count("chains", m.chains);
    require(m.chains >= 1, "config.mcmc.chains must be >= 1");
    m.scales = positive_vector(s, "scales");
    s.finish();
  }

  if (root.has("baseline")) {
    Section s(root.raw("baseline"), "config.baseline");
    auto& b = c.baseline;
    b.kind = s.get<std::string>("kind", b.kind);
    require(b.kind == "wood_mcmc" || b.kind == "rejection",
            "config.baseline.kind must be wood_mcmc or rejection");
    b.n_iter = s.count("n_iter", b.n_iter);
    require(b.n_iter >= 1, "config.baseline.n_iter must be >= 1");
    b.replicates = s.count("replicates", b.replicates);
    b.burn_in = s.number("burn_in", b.burn_in);
    require(b.burn_in >= 0 && b.burn_in < 1, "config.baseline.burn_in must be in [0, 1)");
    b.adapt = s.get<bool>("adapt", b.adapt);
    b.scales = positive_vector(s, "scales");
    b.epsilon = s.number("epsilon", b.epsilon);
    require(b.epsilon >= 0, "config.baseline.epsilon must be >= 0");
    b.n_accept = s.count("n_accept", b.n_accept);
    require(b.n_accept >= 1, "config.baseline.n_accept must be >= 1");
    b.max_calls = s.count("max_calls", b.max_calls);
    s.finish();
  }

  if (root.has("diagnose")) {
    Section s(root.raw("diagnose"), "config.diagnose");
    auto& d = c.diagnose;
    d.anchor = s.get<std::vector<double>>("anchor", d.anchor);
    d.grid = s.count("grid", d.grid);
    require(d.grid >= 1, "config.diagnose.grid must be >= 1");
    d.truth_replicates = s.count("truth_replicates", d.truth_replicates);
    s.finish();
  }
  root.finish();

  const std::size_t dims = c.prior.empty() ? 3 : c.prior.size();
  const std::size_t k =
      c.model.kind == "ricker" ? RickerSummaries::kCount : c.model.output_dim;
  if (c.estimator.kind == "synthetic") {
    require(c.estimator.replicates >= k + 2,
            "config.estimator.replicates must be >= k + 2 for the synthetic likelihood");
  }
  if (c.estimator.kind == "gabc") {
    require(c.estimator.kernel_scale.size() == k,
            "config.estimator.kernel_scale needs one entry per summary");
  }
  if (!c.mcmc.scales.empty()) {
    require(c.mcmc.scales.size() == dims, "config.mcmc.scales needs one entry per parameter");
  }
  if (!c.baseline.scales.empty()) {
    require(c.baseline.scales.size() == dims, "config.baseline.scales needs one entry per parameter");
  }
  if (!c.diagnose.anchor.empty()) {
    require(c.diagnose.anchor.size() == dims, "config.diagnose.anchor needs one entry per parameter");
  }
  if (c.baseline.kind == "wood_mcmc") {
    require(c.baseline.replicates >= k + 2, "config.baseline.replicates must be >= k + 2");
  }
  return c;
}

RunConfig load_config(const std::string& path) { return parse_config(read_json(path)); }

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["parallel"] = c.parallel;
  j["max_calls"] = c.max_calls ? json(*c.max_calls) : json(nullptr);
  j["volume_samples"] = c.volume_samples;
  json model{{"kind", c.model.kind}};
  if (c.model.kind == "ricker") {
    model["length"] = c.model.length;
    model["initial_population"] = c.model.initial_population;
    model["power"] = c.model.power;
    model["truth"] = c.model.truth;
  } else {
    model["command"] = c.model.command;
    model["output_dim"] = c.model.output_dim;
    model["observed"] = c.model.observed;
  }
  j["model"] = model;
  if (!c.prior.empty()) {
    json prior = json::array();
    for (const auto& e : c.prior) {
      if (e.marginal.kind() == Marginal::Kind::uniform) {
        prior.push_back({{"name", e.name}, {"dist", "uniform"}, {"lower", e.marginal.a()},
                         {"upper", e.marginal.b()}});
      } else {
        prior.push_back({{"name", e.name}, {"dist", "normal"}, {"mean", e.marginal.a()},
                         {"sd", e.marginal.b()}});
      }
    }
    j["prior"] = prior;
  }
  j["estimator"] = {{"kind", c.estimator.kind},
                    {"replicates", c.estimator.replicates},
                    {"bootstrap", c.estimator.bootstrap},
                    {"epsilon", number_json(c.estimator.epsilon)},
                    {"kernel_scale", c.estimator.kernel_scale},
                    {"degenerate", to_string(c.estimator.degenerate)}};
  j["design"] = {{"inflation", c.inflation}, {"max_draws", c.max_draws}};
  j["gp"] = {{"family", to_string(c.gp.family)},
             {"optimize", c.gp.optimize},
             {"starts", c.gp.starts},
             {"max_evaluations", c.gp.max_evaluations}};
  json waves = json::array();
  for (const auto& w : c.waves) {
    waves.push_back({{"n_new", w.n_new},
                     {"mode", to_string(w.mode)},
                     {"threshold", w.threshold},
                     {"sigma_mult", w.sigma_mult},
                     {"transform", to_string(w.transform)},
                     {"rule", to_string(w.rule)},
                     {"basis", w.basis},
                     {"prior_weighted", w.prior_weighted}});
  }
  j["waves"] = waves;
  j["mcmc"] = {{"n_iter", c.mcmc.n_iter}, {"burn_in", c.mcmc.burn_in}, {"thin", c.mcmc.thin},
               {"adapt", c.mcmc.adapt},   {"chains", c.mcmc.chains},   {"scales", c.mcmc.scales}};
  j["baseline"] = {{"kind", c.baseline.kind},
                   {"n_iter", c.baseline.n_iter},
                   {"replicates", c.baseline.replicates},
                   {"burn_in", c.baseline.burn_in},
                   {"adapt", c.baseline.adapt},
                   {"scales", c.baseline.scales},
                   {"epsilon", number_json(c.baseline.epsilon)},
                   {"n_accept", c.baseline.n_accept},
                   {"max_calls", c.baseline.max_calls}};
  j["diagnose"] = {{"anchor", c.diagnose.anchor},
                   {"grid", c.diagnose.grid},
                   {"truth_replicates", c.diagnose.truth_replicates}};
  return j;
}

std::uint64_t config_hash(const RunConfig& config) {
  json j = to_json(config);
  j.erase("parallel");
  return fnv1a(j.dump());
}

ParameterSpace make_prior(const RunConfig& config) {
  if (config.prior.empty()) return ricker_prior();
  std::vector<std::string> names;
  std::vector<Marginal> marginals;
  for (const auto& e : config.prior) {
    names.push_back(e.name);
    marginals.push_back(e.marginal);
  }
  return ParameterSpace(std::move(names), std::move(marginals));
}

WavePlan make_wave_plan(const RunConfig& config, std::size_t wave) {
  const WaveSettings& w = config.waves.at(wave);
  WavePlan plan;
  plan.n_new = w.n_new;
  plan.mode = w.mode;
  plan.inflation = config.inflation;
  plan.max_draws = config.max_draws;
  plan.threshold = w.threshold;
  plan.sigma_mult = w.sigma_mult;
  plan.transform = w.transform;
  plan.rule = w.rule;
  plan.prior_weighted = w.prior_weighted;
  plan.basis = MeanBasis::from_string(w.basis);
  plan.gp.family = config.gp.family;
  plan.gp.optimize = config.gp.optimize;
  plan.gp.starts = config.gp.starts;
  plan.gp.optimizer.max_evaluations = config.gp.max_evaluations;
  plan.volume_samples = config.volume_samples;
  return plan;
}

}  // namespace gpabc
