#include "gpabc/pipeline.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <sstream>

#include "gpabc/errors.hpp"
#include "gpabc/io.hpp"
#include "gpabc/parallel.hpp"

namespace gpabc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Runs f, prefixing any error with the stage name while keeping its kind.
template <typename F>
auto staged(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(stage + ": " + e.what());
  } catch (const BudgetExhausted& e) {
    throw BudgetExhausted(stage + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(stage + ": " + e.what());
  } catch (const SimulatorError& e) {
    throw SimulatorError(stage + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(stage + ": " + e.what());
  }
}

void say(const RunOptions& o, const std::string& msg) {
  if (o.log) o.log(msg);
}

std::string wave_dir(const std::string& run_dir, std::size_t wave) {
  return (fs::path(run_dir) / ("wave_" + std::to_string(wave))).string();
}

std::string path_in(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

const char* kWaveFiles[] = {"design.csv", "ensemble.csv", "bootstrap.csv", "gp.json", "loo.csv"};

bool wave_artifacts_exist(const std::string& run_dir, std::size_t wave) {
  for (const char* f : kWaveFiles) {
    if (!fs::exists(path_in(wave_dir(run_dir, wave), f))) return false;
  }
  return true;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json vec_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

void write_ensemble(const std::string& dir, const TrainingEnsemble& ensemble,
                    const std::vector<std::string>& names) {
  Table t;
  t.columns = names;
  for (const char* c : {"sobol_index", "loglik", "noise_var", "replicates", "degenerate", "floored"}) {
    t.columns.emplace_back(c);
  }
  std::size_t max_boot = 0;
  for (const auto& pt : ensemble) {
    std::vector<double> row(pt.theta.data(), pt.theta.data() + pt.theta.size());
    row.push_back(static_cast<double>(pt.sobol_index));
    row.push_back(pt.estimate.loglik);
    row.push_back(pt.estimate.noise_var);
    row.push_back(static_cast<double>(pt.estimate.replicates));
    row.push_back(pt.estimate.degenerate ? 1.0 : 0.0);
    row.push_back(pt.floored ? 1.0 : 0.0);
    t.rows.push_back(std::move(row));
    max_boot = std::max(max_boot, pt.estimate.bootstrap.size());
  }
  write_csv(path_in(dir, "ensemble.csv"), t);

  Table b;
  b.columns.emplace_back("sobol_index");
  for (std::size_t i = 0; i < max_boot; ++i) b.columns.push_back("b" + std::to_string(i));
  for (const auto& pt : ensemble) {
    std::vector<double> row{static_cast<double>(pt.sobol_index)};
    row.insert(row.end(), pt.estimate.bootstrap.begin(), pt.estimate.bootstrap.end());
    row.resize(max_boot + 1, std::nan(""));
    b.rows.push_back(std::move(row));
  }
  write_csv(path_in(dir, "bootstrap.csv"), b);
}

TrainingEnsemble read_ensemble(const std::string& dir, std::size_t dims) {
  const Table t = read_csv(path_in(dir, "ensemble.csv"));
  const Table b = read_csv(path_in(dir, "bootstrap.csv"));
  if (t.rows.size() != b.rows.size() || t.columns.size() != dims + 6) {
    throw ConfigError("inconsistent ensemble artifacts in " + dir);
  }
  TrainingEnsemble out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    EnsemblePoint pt;
    pt.theta = Eigen::Map<const Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(dims));
    pt.sobol_index = static_cast<std::uint64_t>(r[dims]);
    pt.estimate.loglik = r[dims + 1];
    pt.estimate.noise_var = r[dims + 2];
    pt.estimate.replicates = static_cast<std::size_t>(r[dims + 3]);
    pt.estimate.degenerate = r[dims + 4] != 0.0;
    pt.floored = r[dims + 5] != 0.0;
    for (std::size_t k = 1; k < b.rows[i].size(); ++k) {
      if (!std::isnan(b.rows[i][k])) pt.estimate.bootstrap.push_back(b.rows[i][k]);
    }
    out.push_back(std::move(pt));
  }
  return out;
}

void write_design(const std::string& dir, const ExtendResult& drawn,
                  const std::vector<std::string>& names) {
  Table t;
  t.columns.emplace_back("sobol_index");
  t.columns.insert(t.columns.end(), names.begin(), names.end());
  t.columns.emplace_back("kept");
  for (std::size_t i = 0; i < drawn.drawn_points.size(); ++i) {
    std::vector<double> row{static_cast<double>(drawn.drawn_index[i])};
    const auto& x = drawn.drawn_points[i];
    row.insert(row.end(), x.data(), x.data() + x.size());
    row.push_back(drawn.drawn_kept[i] ? 1.0 : 0.0);
    t.rows.push_back(std::move(row));
  }
  write_csv(path_in(dir, "design.csv"), t);
}

void write_loo(const std::string& dir, const FittedGp& gp, const LooResult& loo,
               const std::vector<std::string>& names) {
  Table t;
  t.columns = names;
  for (const char* c : {"target", "nugget", "loo_mean", "loo_variance", "residual"}) {
    t.columns.emplace_back(c);
  }
  const auto& d = gp.data();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    std::vector<double> row(d.inputs.cols());
    for (Eigen::Index j = 0; j < d.inputs.cols(); ++j) row[static_cast<std::size_t>(j)] = d.inputs(i, j);
    row.push_back(d.targets[i]);
    row.push_back(d.nuggets[i]);
    const bool have = loo.predicted.size() == d.size();
    row.push_back(have ? loo.predicted[i] : std::nan(""));
    row.push_back(have ? loo.variance[i] : std::nan(""));
    row.push_back(have ? loo.residuals[i] : std::nan(""));
    t.rows.push_back(std::move(row));
  }
  write_csv(path_in(dir, "loo.csv"), t);
}

json wave_record(const WaveReport& r, const Wave& w, const std::string& basis, double seconds,
                 std::uint64_t hash) {
  return {{"wave", r.wave},
          {"config_hash", hash},
          {"threshold", w.threshold},
          {"sigma_mult", w.sigma_mult},
          {"transform", to_string(w.transform)},
          {"rule", to_string(w.rule)},
          {"prior_weighted", w.prior_weighted},
          {"offset", w.offset},
          {"max_ll", w.max_ll},
          {"basis", basis},
          {"draws", r.draws},
          {"first_sobol_index", r.first_sobol_index},
          {"next_sobol_index", r.next_sobol_index},
          {"new_points", r.new_points},
          {"degenerate", r.degenerate},
          {"survivors", r.survivors},
          {"ensemble_size", r.ensemble_size},
          {"simulator_calls", r.simulator_calls},
          {"volume", {{"fraction", r.volume.fraction},
                      {"standard_error", r.volume.standard_error},
                      {"samples", r.volume.samples}}},
          {"loo", {{"rmse", r.loo.rmse}, {"coverage", r.loo.coverage}}},
          {"lengthscales", vec_json(w.gp.lengthscales())},
          {"sigma2", w.gp.sigma2()},
          {"optimizer_warning", r.optimizer_warning},
          {"seconds", seconds}};
}

void write_chain(const std::string& path, const Chain& chain, const std::vector<std::string>& names) {
  Table t;
  t.columns = names;
  t.columns.emplace_back("loglik");
  for (Eigen::Index i = 0; i < chain.draws.rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index j = 0; j < chain.draws.cols(); ++j) row.push_back(chain.draws(i, j));
    row.push_back(chain.loglik[i]);
    t.rows.push_back(std::move(row));
  }
  write_csv(path, t);
}

std::vector<Eigen::MatrixXd> read_chains(const std::string& dir, std::vector<std::string>& names) {
  std::vector<Eigen::MatrixXd> chains;
  for (std::size_t k = 1;; ++k) {
    const std::string file = path_in(dir, k == 1 ? "chain.csv" : "chain_" + std::to_string(k) + ".csv");
    if (!fs::exists(file)) break;
    const Table t = read_csv(file);
    if (t.columns.empty() || t.columns.back() != "loglik") {
      throw ConfigError(file + " is not a chain file");
    }
    names.assign(t.columns.begin(), t.columns.end() - 1);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()),
                      static_cast<Eigen::Index>(names.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      for (std::size_t j = 0; j < names.size(); ++j) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.rows[i][j];
      }
    }
    chains.push_back(std::move(m));
  }
  if (chains.empty()) throw ConfigError("no chain.csv in " + dir);
  return chains;
}

/// summary.json contents plus posterior_hist.csv / posterior_kde.csv for a set of chains.
json summarize_chains(const std::string& dir, const std::vector<Eigen::MatrixXd>& chains,
                      const std::vector<std::string>& names) {
  Eigen::Index total = 0;
  for (const auto& c : chains) total += c.rows();
  Eigen::MatrixXd all(total, static_cast<Eigen::Index>(names.size()));
  Eigen::Index at = 0;
  for (const auto& c : chains) {
    all.middleRows(at, c.rows()) = c;
    at += c.rows();
  }
  const auto marginals = posterior_summaries(all);
  json out = summaries_json(marginals, names);
  out["draws"] = total;
  out["chains"] = chains.size();
  if (chains.size() > 1) {
    json rhat;
    for (std::size_t j = 0; j < names.size(); ++j) {
      std::vector<std::vector<double>> per;
      for (const auto& c : chains) {
        per.emplace_back(c.col(static_cast<Eigen::Index>(j)).data(),
                         c.col(static_cast<Eigen::Index>(j)).data() + c.rows());
      }
      rhat[names[j]] = split_rhat(per);
    }
    out["split_rhat"] = rhat;
  }
  Table hist{{"dim", "left", "right", "density"}, {}};
  Table kde{{"dim", "x", "density"}, {}};
  for (std::size_t j = 0; j < marginals.size(); ++j) {
    const auto& m = marginals[j];
    for (std::size_t b = 0; b < m.hist_density.size(); ++b) {
      hist.rows.push_back({static_cast<double>(j), m.hist_edges[b], m.hist_edges[b + 1],
                           m.hist_density[b]});
    }
    for (std::size_t k = 0; k < m.kde_x.size(); ++k) {
      kde.rows.push_back({static_cast<double>(j), m.kde_x[k], m.kde_density[k]});
    }
  }
  write_csv(path_in(dir, "posterior_hist.csv"), hist);
  write_csv(path_in(dir, "posterior_kde.csv"), kde);
  return out;
}

Eigen::VectorXd scales_or_default(const std::vector<double>& scales, const ParameterSpace& prior) {
  return scales.empty() ? default_proposal_scales(prior) : to_vector(scales);
}

std::optional<std::uint64_t> remaining_budget(std::optional<std::uint64_t> cap,
                                              std::uint64_t used) {
  if (!cap) return std::nullopt;
  return *cap > used ? *cap - used : 0;
}

}  // namespace

json RunManifest::to_json() const {
  json stages_json = json::array();
  for (const auto& s : stages) {
    stages_json.push_back({{"name", s.name}, {"calls", s.calls}, {"seconds", s.seconds}});
  }
  json j{{"config_hash", config_hash},
         {"seed", seed},
         {"stages", stages_json},
         {"waves", waves},
         {"total_calls", total_calls},
         {"artifacts", artifacts}};
  if (!extra.is_null()) j["extra"] = extra;
  return j;
}

json summaries_json(const std::vector<MarginalSummary>& s, const std::vector<std::string>& names) {
  json params;
  for (std::size_t j = 0; j < s.size(); ++j) {
    params[names.at(j)] = {{"mean", s[j].mean},   {"sd", s[j].sd},     {"q025", s[j].q025},
                           {"q50", s[j].q50},     {"q975", s[j].q975}, {"bandwidth", s[j].bandwidth}};
  }
  return {{"parameters", params}};
}

Problem build_problem(const RunConfig& c) {
  Problem p{make_prior(c), nullptr, {}, {}, SmoothKernel{}};
  if (c.model.kind == "ricker") {
    RickerParams truth;
    truth.log_r = c.model.truth.at(0);
    truth.sigma = c.model.truth.at(1);
    truth.phi = c.model.truth.at(2);
    truth.length = c.model.length;
    truth.initial_population = c.model.initial_population;
    Rng rng = make_stream(c.seed, "observed");
    p.observed_series = ricker_simulate(truth, rng);
    RickerSummaries summaries(p.observed_series, c.model.power);
    p.observed = summaries(p.observed_series);
    p.sim = std::make_unique<RickerSimulator>(c.model.length, c.model.initial_population,
                                              std::move(summaries));
  } else {
    p.sim = std::make_unique<SubprocessSimulator>(c.model.command, c.model.output_dim);
    p.observed = to_vector(c.model.observed);
  }
  if (c.estimator.kind == "synthetic") {
    p.kernel = SyntheticGaussianKernel{p.observed};
  } else if (c.estimator.kind == "gabc") {
    p.kernel = gaussian_kernel(p.observed, to_vector(c.estimator.kernel_scale));
  } else {
    p.kernel = IndicatorKernel{p.observed, euclidean_distance, c.estimator.epsilon};
  }
  return p;
}

std::vector<json> load_wave_records(const std::string& run_dir) {
  std::map<std::size_t, json> latest;
  for (auto& r : read_jsonl(path_in(run_dir, "waves.jsonl"))) {
    latest[r.at("wave").get<std::size_t>()] = r;
  }
  std::vector<json> out;
  for (std::size_t w = 1; latest.count(w); ++w) out.push_back(latest[w]);
  return out;
}

WaveSequence load_waves(const std::string& run_dir, const ParameterSpace& prior,
                        std::size_t count) {
  const auto records = load_wave_records(run_dir);
  if (records.size() < count) {
    throw ConfigError("run directory " + run_dir + " has records for only " +
                      std::to_string(records.size()) + " waves");
  }
  WaveSequence seq(prior);
  for (std::size_t i = 0; i < count; ++i) {
    const json& r = records[i];
    const std::string dir = wave_dir(run_dir, i + 1);
    Wave w{load_gp(path_in(dir, "gp.json")),
           r.at("threshold").get<double>(),
           r.at("sigma_mult").get<double>(),
           r.at("max_ll").get<double>(),
           transform_from_string(r.at("transform")),
           r.at("offset").get<double>(),
           log_negative_rule_from_string(r.at("rule")),
           r.at("prior_weighted").get<bool>()};
    const json& v = r.at("volume");
    seq.push(std::move(w), {v.at("fraction").get<double>(), v.at("standard_error").get<double>(),
                            v.at("samples").get<std::size_t>()});
  }
  if (count > 0) seq.ensemble = read_ensemble(wave_dir(run_dir, count), prior.dims());
  return seq;
}

RunManifest cmd_run(const RunConfig& config, const RunOptions& options) {
  const auto t_start = Clock::now();
  const std::string& out = options.out_dir;
  fs::create_directories(out);
  const std::uint64_t hash = config_hash(config);
  const std::string config_path = path_in(out, "config.json");
  if (options.resume && fs::exists(config_path)) {
    if (config_hash(load_config(config_path)) != hash) {
      throw ConfigError("resume: config differs from the one stored in " + config_path);
    }
  }
  write_json(config_path, to_json(config));

  RunManifest manifest;
  manifest.config_hash = hash;
  manifest.seed = config.seed;

  Problem problem = staged("setup", [&] { return build_problem(config); });
  const ParameterSpace& prior = problem.prior;
  const auto& names = prior.names();
  {
    Table obs{{"index", "value"}, {}};
    for (Eigen::Index i = 0; i < problem.observed.size(); ++i) {
      obs.rows.push_back({static_cast<double>(i), problem.observed[i]});
    }
    write_csv(path_in(out, "observed.csv"), obs);
    if (!problem.observed_series.empty()) {
      Table series{{"t", "y"}, {}};
      for (std::size_t t = 0; t < problem.observed_series.size(); ++t) {
        series.rows.push_back({static_cast<double>(t + 1),
                               static_cast<double>(problem.observed_series[t])});
      }
      write_csv(path_in(out, "observed_series.csv"), series);
    }
  }

  // Reuse completed waves when resuming.
  const std::string records_path = path_in(out, "waves.jsonl");
  std::vector<json> records;
  if (options.resume) {
    records = load_wave_records(out);
  } else if (fs::exists(records_path)) {
    fs::remove(records_path);
  }
  std::size_t reuse = 0;
  while (reuse < config.waves.size() && reuse < records.size() &&
         records[reuse].value("config_hash", std::uint64_t{0}) == hash &&
         wave_artifacts_exist(out, reuse + 1)) {
    ++reuse;
  }
  std::uint64_t previous_calls = 0;
  for (std::size_t i = 0; i < reuse; ++i) {
    previous_calls += records[i].at("simulator_calls").get<std::uint64_t>();
  }
  WaveSequence seq = reuse ? load_waves(out, prior, reuse) : WaveSequence(prior);
  SobolStream stream(prior.dims(),
                     reuse ? records[reuse - 1].at("next_sobol_index").get<std::uint64_t>() : 1);
  for (std::size_t i = 0; i < reuse; ++i) {
    say(options, "wave " + std::to_string(i + 1) + ": reused from " + wave_dir(out, i + 1));
    manifest.waves.push_back(records[i]);
    manifest.stages.push_back({"wave_" + std::to_string(i + 1),
                               records[i].at("simulator_calls").get<std::uint64_t>(),
                               records[i].value("seconds", 0.0)});
  }

  problem.sim->set_call_budget(remaining_budget(options.max_calls, previous_calls));
  EstimatorConfig estimator{problem.kernel, config.estimator.replicates,
                            BootstrapOptions{config.estimator.bootstrap},
                            config.estimator.degenerate, options.parallel};

  for (std::size_t i = reuse; i < config.waves.size(); ++i) {
    const std::string stage = "wave_" + std::to_string(i + 1);
    const auto t0 = Clock::now();
    const WavePlan plan = make_wave_plan(config, i);
    Design scratch;
    WaveReport report;
    ExtendResult drawn;
    staged(stage, [&] {
      // Recreate the candidate list for design.csv from a copy of the stream.
      SobolStream replay = stream;
      report = run_wave(seq, *problem.sim, estimator, stream, plan, config.seed);
      const Membership member = [&](const Eigen::VectorXd& theta) {
        return seq.member(theta, seq.size() - 1);
      };
      ExtendOptions ext;
      ext.mode = ExtendMode::fixed;
      ext.inflation = plan.inflation;
      drawn = extend_design(scratch, replay, prior, report.draws, member, ext);
      return 0;
    });
    const Wave& wave = seq.wave(seq.size() - 1);
    const std::string dir = wave_dir(out, i + 1);
    write_design(dir, drawn, names);
    write_ensemble(dir, seq.ensemble, names);
    save_gp(wave.gp, path_in(dir, "gp.json"));
    write_loo(dir, wave.gp, report.loo, names);
    const double secs = seconds_since(t0);
    json record = wave_record(report, wave, config.waves[i].basis, secs, hash);
    append_jsonl(records_path, record);
    manifest.waves.push_back(record);
    manifest.stages.push_back({stage, report.simulator_calls, secs});
    std::ostringstream msg;
    msg << stage << ": " << report.new_points << " new points (" << report.degenerate
        << " degenerate), " << report.survivors << " carried, ensemble " << report.ensemble_size
        << ", not-implausible fraction " << report.volume.fraction << " +/- "
        << report.volume.standard_error << ", LOO coverage " << report.loo.coverage << ", "
        << report.simulator_calls << " calls, " << secs << " s";
    say(options, msg.str());
  }

  // Surrogate MCMC.
  const auto t_mcmc = Clock::now();
  const std::uint64_t calls_before_mcmc = problem.sim->calls();
  std::vector<Chain> chains;
  staged("mcmc", [&] {
    const auto best = std::max_element(
        seq.ensemble.begin(), seq.ensemble.end(), [](const EnsemblePoint& a, const EnsemblePoint& b) {
          return a.estimate.loglik < b.estimate.loglik;
        });
    Eigen::VectorXd init = best->theta;
    if (!seq.member(init, seq.size() - 1)) {
      throw NumericalError("no ensemble point lies in the final not-implausible region");
    }
    MhOptions mh;
    mh.n_iter = config.mcmc.n_iter;
    mh.burn_in_fraction = config.mcmc.burn_in;
    mh.thin = config.mcmc.thin;
    mh.adapt = config.mcmc.adapt;
    const Eigen::VectorXd scales = scales_or_default(config.mcmc.scales, prior);
    chains.resize(config.mcmc.chains);
    parallel_for(config.mcmc.chains, options.parallel, [&](std::size_t c) {
      Rng rng = make_stream(config.seed, "mcmc", c);
      chains[c] = mh_sample(seq, init, scales, mh, rng);
    });
    return 0;
  });
  for (std::size_t c = 0; c < chains.size(); ++c) {
    write_chain(path_in(out, c == 0 ? "chain.csv" : "chain_" + std::to_string(c + 1) + ".csv"),
                chains[c], names);
  }
  const std::uint64_t mcmc_calls = problem.sim->calls() - calls_before_mcmc;
  manifest.stages.push_back({"mcmc", mcmc_calls, seconds_since(t_mcmc)});
  json acceptance = json::array();
  json warnings = json::array();
  for (const auto& c : chains) {
    acceptance.push_back(c.acceptance_rate);
    for (const auto& w : c.warnings) {
      warnings.push_back(w);
      say(options, "mcmc warning: " + w);
    }
  }

  const auto t_sum = Clock::now();
  std::vector<Eigen::MatrixXd> draws;
  for (const auto& c : chains) draws.push_back(c.draws);
  json summary = staged("summaries", [&] { return summarize_chains(out, draws, names); });
  manifest.stages.push_back({"summaries", 0, seconds_since(t_sum)});

  for (const auto& s : manifest.stages) manifest.total_calls += s.calls;
  summary["acceptance"] = acceptance;
  summary["total_calls"] = manifest.total_calls;
  json volumes = json::array();
  for (const auto& v : seq.volumes()) {
    volumes.push_back({{"fraction", v.fraction}, {"standard_error", v.standard_error}});
  }
  summary["volumes"] = volumes;
  write_json(path_in(out, "summary.json"), summary);

  manifest.extra = {{"acceptance", acceptance},
                    {"warnings", warnings},
                    {"proposal_scales", vec_json(chains.front().scales)},
                    {"seconds", seconds_since(t_start)}};
  for (std::size_t i = 0; i < config.waves.size(); ++i) {
    for (const char* f : kWaveFiles) manifest.artifacts.push_back(path_in(wave_dir(out, i + 1), f));
  }
  for (const char* f : {"config.json", "observed.csv", "waves.jsonl", "chain.csv", "summary.json",
                        "posterior_hist.csv", "posterior_kde.csv", "manifest.json"}) {
    manifest.artifacts.push_back(path_in(out, f));
  }
  write_json(path_in(out, "manifest.json"), manifest.to_json());
  return manifest;
}

RunManifest cmd_baseline(const RunConfig& config, const RunOptions& options) {
  const std::string dir = path_in(options.out_dir, "baseline");
  fs::create_directories(dir);
  RunManifest manifest;
  manifest.config_hash = config_hash(config);
  manifest.seed = config.seed;
  Problem problem = staged("setup", [&] { return build_problem(config); });
  const ParameterSpace& prior = problem.prior;
  problem.sim->set_call_budget(options.max_calls);
  const auto t0 = Clock::now();
  Rng rng = make_stream(config.seed, "baseline");
  const auto& b = config.baseline;

  if (b.kind == "wood_mcmc") {
    MhOptions mh;
    mh.n_iter = b.n_iter;
    mh.burn_in_fraction = b.burn_in;
    mh.adapt = b.adapt;
    const Eigen::VectorXd scales = scales_or_default(b.scales, prior);
    Chain chain = staged("baseline", [&] {
      return wood_mcmc(problem.observed, prior, *problem.sim, b.replicates, prior.centre(), scales,
                       mh, rng);
    });
    write_chain(path_in(dir, "chain.csv"), chain, prior.names());
    json summary = summarize_chains(dir, {chain.draws}, prior.names());
    summary["acceptance"] = chain.acceptance_rate;
    summary["total_calls"] = problem.sim->calls();
    write_json(path_in(dir, "summary.json"), summary);
    manifest.extra = {{"kind", b.kind},
                      {"acceptance", chain.acceptance_rate},
                      {"warnings", chain.warnings},
                      {"proposal_scales", vec_json(chain.scales)}};
    manifest.artifacts = {path_in(dir, "chain.csv"), path_in(dir, "summary.json")};
  } else {
    const std::uint64_t cap =
        options.max_calls ? std::min(*options.max_calls, b.max_calls) : b.max_calls;
    RejectionRun run = staged("baseline", [&] {
      return rejection_abc(problem.observed, prior, *problem.sim, euclidean_distance, b.epsilon,
                           b.n_accept, rng, cap);
    });
    Table t{prior.names(), {}};
    for (const auto& theta : run.accepted) t.rows.emplace_back(theta.data(), theta.data() + theta.size());
    write_csv(path_in(dir, "samples.csv"), t);
    for (const auto& w : run.warnings) say(options, "baseline warning: " + w);
    json summary;
    if (run.accepted.size() >= 100) {
      Eigen::MatrixXd m(static_cast<Eigen::Index>(run.accepted.size()),
                        static_cast<Eigen::Index>(prior.dims()));
      for (std::size_t i = 0; i < run.accepted.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) = run.accepted[i].transpose();
      }
      summary = summarize_chains(dir, {m}, prior.names());
    }
    summary["accepted"] = run.accepted.size();
    summary["total_calls"] = run.calls;
    write_json(path_in(dir, "summary.json"), summary);
    manifest.extra = {{"kind", b.kind},
                      {"epsilon", b.epsilon},
                      {"accepted", run.accepted.size()},
                      {"complete", run.complete},
                      {"warnings", run.warnings}};
    manifest.artifacts = {path_in(dir, "samples.csv"), path_in(dir, "summary.json")};
  }
  manifest.stages.push_back({"baseline", problem.sim->calls(), seconds_since(t0)});
  manifest.total_calls = problem.sim->calls();
  manifest.artifacts.push_back(path_in(dir, "manifest.json"));
  write_json(path_in(dir, "manifest.json"), manifest.to_json());
  return manifest;
}

RunManifest cmd_diagnose(const std::string& run_dir, const DiagnoseOptions& options) {
  const std::string wdir = wave_dir(run_dir, options.wave);
  std::vector<std::string> missing;
  for (const std::string& f : {path_in(run_dir, "config.json"), path_in(run_dir, "waves.jsonl"),
                              path_in(wdir, "gp.json"), path_in(wdir, "ensemble.csv")}) {
    if (!fs::exists(f)) missing.push_back(f);
  }
  if (!missing.empty()) {
    std::string msg = "diagnose: missing artifacts:";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg);
  }
  const RunConfig config = load_config(path_in(run_dir, "config.json"));
  const auto records = load_wave_records(run_dir);
  if (options.wave < 1 || options.wave > records.size()) {
    throw ConfigError("diagnose: no record for wave " + std::to_string(options.wave));
  }
  const json& record = records[options.wave - 1];
  const FittedGp gp = load_gp(path_in(wdir, "gp.json"));
  const Transform transform = transform_from_string(record.at("transform"));
  const double offset = record.at("offset").get<double>();

  Problem problem = build_problem(config);
  const ParameterSpace& prior = problem.prior;
  const std::size_t p = prior.dims();
  Eigen::VectorXd anchor;
  if (options.anchor) {
    anchor = *options.anchor;
  } else if (!config.diagnose.anchor.empty()) {
    anchor = to_vector(config.diagnose.anchor);
  } else if (config.model.kind == "ricker") {
    anchor = Eigen::Vector3d(3.8, 0.3, 10.0);
  } else {
    anchor = prior.centre();
  }
  if (static_cast<std::size_t>(anchor.size()) != p) {
    throw ConfigError("diagnose: anchor needs one entry per parameter");
  }
  const std::size_t grid = options.grid.value_or(config.diagnose.grid);
  const std::size_t truth_m = options.truth_replicates.value_or(config.diagnose.truth_replicates);
  if (grid < 1) throw ConfigError("diagnose: grid must be >= 1");
  problem.sim->set_call_budget(options.max_calls);

  const auto t0 = Clock::now();
  Table slices{{"dim", "value", "mean", "lower", "upper", "variance"}, {}};
  if (truth_m > 0) {
    slices.columns.emplace_back("truth");
    slices.columns.emplace_back("truth_sd");
  }
  for (std::size_t j = 0; j < p; ++j) {
    const Marginal& m = prior.marginal(j);
    const double lo = m.kind() == Marginal::Kind::uniform ? m.lower() : m.mean() - 3 * m.sd();
    const double hi = m.kind() == Marginal::Kind::uniform ? m.upper() : m.mean() + 3 * m.sd();
    std::vector<double> values;
    if (grid == 1) {
      values.push_back(anchor[static_cast<Eigen::Index>(j)]);
    } else {
      for (std::size_t k = 0; k < grid; ++k) {
        values.push_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid - 1));
      }
    }
    const auto rows = slice_prediction(gp, anchor, j, values);
    std::vector<std::vector<double>> truth(rows.size());
    if (truth_m > 0) {
      EstimatorConfig est{problem.kernel, truth_m, BootstrapOptions{200}, DegeneratePolicy::exclude,
                          options.parallel};
      std::vector<Eigen::VectorXd> points;
      std::vector<std::uint64_t> keys;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        Eigen::VectorXd theta = anchor;
        theta[static_cast<Eigen::Index>(j)] = rows[k].value;
        points.push_back(theta);
        keys.push_back(j * rows.size() + k);
      }
      const std::uint64_t truth_seed = make_stream(config.seed, "truth", options.wave)();
      const TrainingEnsemble fresh = estimate_points(points, keys, *problem.sim, est, truth_seed);
      for (std::size_t k = 0; k < fresh.size(); ++k) {
        const auto& e = fresh[k].estimate;
        double value = std::nan(""), sd = std::nan("");
        if (!e.degenerate && (transform == Transform::identity || offset - e.loglik > 0)) {
          const auto [target, var] = transformed_target(e, transform, offset);
          value = target;
          sd = std::sqrt(var);
        }
        truth[k] = {value, sd};
      }
    }
    for (std::size_t k = 0; k < rows.size(); ++k) {
      std::vector<double> row{static_cast<double>(j), rows[k].value, rows[k].mean, rows[k].lower,
                              rows[k].upper, rows[k].variance};
      row.insert(row.end(), truth[k].begin(), truth[k].end());
      slices.rows.push_back(std::move(row));
    }
  }
  const std::string ddir = path_in(run_dir, "diagnose");
  const std::string tag = "wave_" + std::to_string(options.wave);
  write_csv(path_in(ddir, tag + "_slices.csv"), slices);

  RunManifest manifest;
  manifest.config_hash = config_hash(config);
  manifest.seed = config.seed;
  json loo_summary{{"wave", options.wave}};
  const Eigen::Index need = gp.basis().size(gp.data().dims()) + 4;
  if (gp.data().size() >= need) {
    const LooResult loo = gp.loo();
    write_loo(ddir + "/" + tag, gp, loo, prior.names());
    fs::rename(path_in(ddir + "/" + tag, "loo.csv"), path_in(ddir, tag + "_loo.csv"));
    fs::remove(ddir + "/" + tag);
    loo_summary["rmse"] = loo.rmse;
    loo_summary["coverage"] = loo.coverage;
    loo_summary["max_abs_residual"] = loo.residuals.cwiseAbs().maxCoeff();
    manifest.artifacts.push_back(path_in(ddir, tag + "_loo.csv"));
  }
  loo_summary["anchor"] = vec_json(anchor);
  loo_summary["transform"] = to_string(transform);
  write_json(path_in(ddir, tag + "_loo.json"), loo_summary);
  manifest.stages.push_back({"diagnose", problem.sim->calls(), seconds_since(t0)});
  manifest.total_calls = problem.sim->calls();
  manifest.extra = loo_summary;
  manifest.artifacts.push_back(path_in(ddir, tag + "_slices.csv"));
  manifest.artifacts.push_back(path_in(ddir, tag + "_loo.json"));
  write_json(path_in(ddir, tag + "_manifest.json"), manifest.to_json());
  return manifest;
}

json cmd_summarize(const std::string& run_dir) {
  std::vector<std::string> names;
  const auto chains = read_chains(run_dir, names);
  const std::string path = path_in(run_dir, "summary.json");
  json summary = fs::exists(path) ? read_json(path) : json::object();
  const json fresh = summarize_chains(run_dir, chains, names);
  for (auto it = fresh.begin(); it != fresh.end(); ++it) summary[it.key()] = it.value();
  write_json(path, summary);
  return summary;
}

}  // namespace gpabc
