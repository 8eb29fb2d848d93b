// Command-line front end: run, resume, baseline, diagnose, summarize.
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gpabc/config.hpp"
#include "gpabc/errors.hpp"
#include "gpabc/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::optional<std::uint64_t> max_calls;
  std::optional<std::size_t> parallel;
};

void add_common(CLI::App* app, Common& c, bool need_config) {
  auto* opt = app->add_option("--config", c.config, "JSON run configuration");
  if (need_config) opt->required()->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "root seed (overrides the config)");
  app->add_option("--out", c.out, "run directory")->capture_default_str();
  app->add_option("--max-calls", c.max_calls, "simulator call budget");
  app->add_option("--parallel", c.parallel, "worker threads")->check(CLI::PositiveNumber);
}

gpabc::RunConfig load(const Common& c) {
  gpabc::RunConfig config = gpabc::load_config(c.config);
  if (c.seed) config.seed = *c.seed;
  if (c.parallel) config.parallel = *c.parallel;
  return config;
}

gpabc::RunOptions options(const Common& c, const gpabc::RunConfig& config) {
  gpabc::RunOptions o;
  o.out_dir = c.out;
  o.max_calls = c.max_calls ? c.max_calls : config.max_calls;
  o.parallel = config.parallel;
  o.log = [](const std::string& msg) { std::cerr << msg << "\n"; };
  return o;
}

void report(const gpabc::RunManifest& m) {
  std::cout << "total simulator calls: " << m.total_calls << "\n";
  for (const auto& s : m.stages) {
    std::cout << "  " << s.name << ": " << s.calls << " calls, " << s.seconds << " s\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GP-accelerated ABC: history matching waves, surrogate MCMC and baselines"};
  app.require_subcommand(1);

  Common run_opts, resume_opts, base_opts;
  auto* run = app.add_subcommand("run", "design, waves, surrogate MCMC and summaries");
  add_common(run, run_opts, true);
  auto* resume = app.add_subcommand("resume", "continue a run from its last completed wave");
  add_common(resume, resume_opts, false);
  auto* baseline = app.add_subcommand("baseline", "synthetic-likelihood MCMC or rejection ABC");
  add_common(baseline, base_opts, true);

  std::string diag_dir = "run";
  gpabc::DiagnoseOptions diag;
  std::vector<double> anchor;
  std::optional<std::size_t> diag_parallel;
  auto* diagnose = app.add_subcommand("diagnose", "GP slice tables and LOO report for one wave");
  diagnose->add_option("--out", diag_dir, "run directory")->capture_default_str();
  diagnose->add_option("--wave", diag.wave, "wave number, from 1")->capture_default_str();
  diagnose->add_option("--anchor", anchor, "anchor point, one value per parameter")->expected(-1);
  diagnose->add_option("--grid", diag.grid, "grid points per dimension");
  diagnose->add_option("--truth-replicates", diag.truth_replicates,
                       "replicates for fresh estimates on the grid (0 omits them)");
  diagnose->add_option("--max-calls", diag.max_calls, "simulator call budget");
  diagnose->add_option("--parallel", diag_parallel, "worker threads")->check(CLI::PositiveNumber);

  std::string sum_dir = "run";
  auto* summarize = app.add_subcommand("summarize", "recompute summary.json from chain files");
  summarize->add_option("--out", sum_dir, "run directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      const auto config = load(run_opts);
      report(gpabc::cmd_run(config, options(run_opts, config)));
    } else if (resume->parsed()) {
      if (resume_opts.config.empty()) {
        resume_opts.config = (std::filesystem::path(resume_opts.out) / "config.json").string();
      }
      const auto config = load(resume_opts);
      auto o = options(resume_opts, config);
      o.resume = true;
      report(gpabc::cmd_run(config, o));
    } else if (baseline->parsed()) {
      const auto config = load(base_opts);
      report(gpabc::cmd_baseline(config, options(base_opts, config)));
    } else if (diagnose->parsed()) {
      if (!anchor.empty()) {
        diag.anchor = Eigen::Map<const Eigen::VectorXd>(anchor.data(),
                                                        static_cast<Eigen::Index>(anchor.size()));
      }
      if (diag_parallel) diag.parallel = *diag_parallel;
      report(gpabc::cmd_diagnose(diag_dir, diag));
    } else if (summarize->parsed()) {
      std::cout << gpabc::cmd_summarize(sum_dir).dump(2) << "\n";
    }
  } catch (const gpabc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const gpabc::BudgetExhausted& e) {
    std::cerr << "simulator budget exhausted: " << e.what() << "\n";
    return 3;
  } catch (const gpabc::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
