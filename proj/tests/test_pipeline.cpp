#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gpabc/config.hpp"
#include "gpabc/io.hpp"
#include "gpabc/pipeline.hpp"

using namespace gpabc;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kQuick = std::string(GPABC_SOURCE_DIR) + "/configs/ricker_quick.json";

std::string tmp(const std::string& name) {
  const fs::path p = fs::path(GPABC_TEST_TMP) / "pipeline" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int exit_code(const std::string& args) {
  const int status = std::system((std::string(GPABC_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::uint64_t stage_sum(const RunManifest& m) {
  std::uint64_t total = 0;
  for (const auto& s : m.stages) total += s.calls;
  return total;
}

/// The quick run, computed once and shared by the tests that only read it.
const std::string& quick_run() {
  static const std::string dir = [] {
    const std::string d = tmp("quick");
    RunOptions o;
    o.out_dir = d;
    cmd_run(load_config(kQuick), o);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config validation, round trip and hashing") {
  const RunConfig c = load_config(kQuick);
  CHECK(c.waves.size() == 3);
  CHECK(to_json(parse_config(to_json(c))) == to_json(c));

  json j = to_json(c);
  j["estimator"]["replicate"] = 10;
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = to_json(c);
  j["bogus"] = 1;
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = to_json(c);
  j["waves"][0]["threshold"] = -1;
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = to_json(c);
  j["waves"] = json::array();
  CHECK_THROWS_AS(parse_config(j), ConfigError);

  const std::uint64_t h = config_hash(c);
  RunConfig same = c;
  same.parallel = 4;
  CHECK(config_hash(same) == h);
  RunConfig other = c;
  other.waves[1].threshold = 11;
  CHECK(config_hash(other) != h);
  other = c;
  other.seed = 4;
  CHECK(config_hash(other) != h);
  other = c;
  other.estimator.replicates = 61;
  CHECK(config_hash(other) != h);

  const RunConfig defaults = parse_config(json::object());
  CHECK(defaults.waves.size() == 4);
  CHECK(defaults.waves[0].transform == Transform::log_negative);
  CHECK(defaults.waves[0].threshold == 3.0);
  CHECK(defaults.waves[1].threshold == 10.0);
  CHECK(defaults.estimator.replicates == 500);
  CHECK(defaults.estimator.bootstrap == 1000);
}

TEST_CASE("end-to-end run persists re-loadable artifacts with conserved call counts") {
  const std::string& dir = quick_run();
  const json manifest = read_json(dir + "/manifest.json");
  std::uint64_t stages = 0, waves = 0;
  for (const auto& s : manifest.at("stages")) stages += s.at("calls").get<std::uint64_t>();
  for (const auto& w : manifest.at("waves")) waves += w.at("simulator_calls").get<std::uint64_t>();
  CHECK(manifest.at("total_calls").get<std::uint64_t>() == stages);
  CHECK(stages == waves);

  const auto records = load_wave_records(dir);
  REQUIRE(records.size() == 3);
  std::uint64_t sobol = 1;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const json& r = records[i];
    CHECK(r.at("wave").get<std::size_t>() == i + 1);
    CHECK(r.at("first_sobol_index").get<std::uint64_t>() == sobol);
    sobol = r.at("next_sobol_index").get<std::uint64_t>();
    const std::string w = dir + "/wave_" + std::to_string(i + 1);
    const Table ens = read_csv(w + "/ensemble.csv");
    CHECK(ens.rows.size() == r.at("ensemble_size").get<std::size_t>());
    const std::size_t calls = (r.at("new_points").get<std::size_t>() + r.at("degenerate").get<std::size_t>()) * 60;
    CHECK(r.at("simulator_calls").get<std::uint64_t>() == calls);
    const FittedGp gp = load_gp(w + "/gp.json");
    CHECK(gp.data().size() == static_cast<Eigen::Index>(ens.rows.size()));
    CHECK(read_csv(w + "/design.csv").rows.size() == r.at("draws").get<std::size_t>());
    CHECK(read_csv(w + "/loo.csv").rows.size() == ens.rows.size());
  }
  double last = 1.0;
  for (const auto& r : records) {
    const double f = r.at("volume").at("fraction").get<double>();
    CHECK(f <= last + 0.05);
    last = f;
  }

  const WaveSequence seq = load_waves(dir, ricker_prior(), 3);
  CHECK(seq.size() == 3);
  const Table chain = read_csv(dir + "/chain.csv");
  CHECK(chain.columns == std::vector<std::string>{"log_r", "sigma", "phi", "loglik"});
  CHECK(chain.rows.size() == 1600);
  for (const auto& row : chain.rows) {
    REQUIRE(seq.member(Eigen::Vector3d(row[0], row[1], row[2]), 2));
  }
  CHECK(fs::exists(dir + "/chain_2.csv"));
  const json summary = read_json(dir + "/summary.json");
  CHECK(summary.at("parameters").contains("phi"));
  CHECK(read_csv(dir + "/posterior_hist.csv").rows.size() > 0);
  CHECK(read_csv(dir + "/posterior_kde.csv").rows.size() > 0);
  const json recomputed = cmd_summarize(dir);
  CHECK(recomputed.at("parameters") == summary.at("parameters"));
  CHECK(load_config(dir + "/config.json").seed == 3);
}

TEST_CASE("identical configs give bit-identical chains, and resume recomputes only the missing wave") {
  const std::string& first = quick_run();
  const std::string second = tmp("quick_again");
  fs::copy(first, second, fs::copy_options::recursive);
  fs::remove_all(second + "/wave_3");
  const std::string gp1 = slurp(second + "/wave_1/gp.json");

  RunOptions o;
  o.out_dir = second;
  o.resume = true;
  std::vector<std::string> log;
  o.log = [&](const std::string& s) { log.push_back(s); };
  const RunManifest m = cmd_run(load_config(kQuick), o);
  std::size_t reused = 0;
  for (const auto& line : log) reused += line.find("reused") != std::string::npos;
  CHECK(reused == 2);
  CHECK(slurp(second + "/wave_1/gp.json") == gp1);
  CHECK(slurp(second + "/chain.csv") == slurp(first + "/chain.csv"));
  CHECK(slurp(second + "/wave_3/ensemble.csv") == slurp(first + "/wave_3/ensemble.csv"));
  CHECK(m.total_calls == stage_sum(m));
  CHECK(load_wave_records(second).size() == 3);

  const std::string fresh = tmp("quick_fresh");
  RunOptions f;
  f.out_dir = fresh;
  f.parallel = 2;
  cmd_run(load_config(kQuick), f);
  CHECK(slurp(fresh + "/chain.csv") == slurp(first + "/chain.csv"));
  CHECK(slurp(fresh + "/chain_2.csv") == slurp(first + "/chain_2.csv"));

  RunConfig changed = load_config(kQuick);
  changed.waves[2].threshold = 12;
  RunOptions r;
  r.out_dir = fresh;
  r.resume = true;
  CHECK_THROWS_AS(cmd_run(changed, r), ConfigError);
}

TEST_CASE("diagnose emits one slice row per grid point and dimension") {
  const std::string& dir = quick_run();
  DiagnoseOptions d;
  d.wave = 2;
  const RunManifest m = cmd_diagnose(dir, d);
  CHECK(m.total_calls == 0);
  const Table slices = read_csv(dir + "/diagnose/wave_2_slices.csv");
  CHECK(slices.rows.size() == 25 * 3);
  CHECK(std::find(slices.columns.begin(), slices.columns.end(), "truth") == slices.columns.end());
  const json loo = read_json(dir + "/diagnose/wave_2_loo.json");
  CHECK(loo.at("anchor") == json::array({3.8, 0.3, 10.0}));

  d.wave = 1;
  d.grid = 4;
  d.truth_replicates = 60;
  const RunManifest t = cmd_diagnose(dir, d);
  CHECK(t.total_calls == 4 * 3 * 60);
  const Table with_truth = read_csv(dir + "/diagnose/wave_1_slices.csv");
  CHECK(with_truth.rows.size() == 12);
  CHECK(std::find(with_truth.columns.begin(), with_truth.columns.end(), "truth") != with_truth.columns.end());

  d.wave = 7;
  CHECK_THROWS_AS(cmd_diagnose(dir, d), ConfigError);
  CHECK_THROWS_AS(cmd_diagnose(tmp("nothing_here"), DiagnoseOptions{}), ConfigError);
}

TEST_CASE("baselines account for every simulator call") {
  RunConfig c = load_config(kQuick);
  RunOptions o;
  o.out_dir = tmp("baseline_wood");
  const RunManifest wood = cmd_baseline(c, o);
  CHECK(wood.total_calls == 151 * 60);
  CHECK(read_csv(o.out_dir + "/baseline/chain.csv").rows.size() == 120);

  c.baseline.kind = "rejection";
  c.baseline.n_accept = 150;
  o.out_dir = tmp("baseline_rejection");
  const RunManifest rej = cmd_baseline(c, o);
  CHECK(rej.total_calls == 150);
  CHECK(read_csv(o.out_dir + "/baseline/samples.csv").rows.size() == 150);
}

TEST_CASE("call budget stops a run") {
  RunOptions o;
  o.out_dir = tmp("budget");
  o.max_calls = 500;
  CHECK_THROWS_AS(cmd_run(load_config(kQuick), o), BudgetExhausted);
}

TEST_CASE("external simulators run through the subprocess adapter") {
  json j = {{"seed", 2},
            {"model", {{"kind", "subprocess"}, {"command", {GPABC_ECHO_SIMULATOR, "0.3"}}, {"output_dim", 2},
                       {"observed", {0.5, -0.5}}}},
            {"prior", {{{"name", "a"}, {"dist", "uniform"}, {"lower", -3}, {"upper", 3}},
                       {{"name", "b"}, {"dist", "uniform"}, {"lower", -3}, {"upper", 3}}}},
            {"estimator", {{"kind", "gabc"}, {"replicates", 20}, {"bootstrap", 50}, {"kernel_scale", {0.5, 0.5}}}},
            {"waves", {{{"n_new", 24}, {"mode", "fixed"}, {"threshold", 10}, {"basis", "quadratic"}},
                       {{"n_new", 20}, {"mode", "target"}, {"threshold", 10}, {"basis", "quadratic"}}}},
            {"volume_samples", 1000},
            {"mcmc", {{"n_iter", 1000}}}};
  RunOptions o;
  o.out_dir = tmp("subprocess");
  const RunManifest m = cmd_run(parse_config(j), o);
  CHECK(m.total_calls == stage_sum(m));
  const json summary = read_json(o.out_dir + "/summary.json");
  const double mean_a = summary.at("parameters").at("a").at("mean").get<double>();
  CHECK(std::abs(mean_a - 0.5) < 0.5);
}

TEST_CASE("command-line exit codes") {
  const std::string dir = tmp("cli");
  fs::create_directories(dir);
  {
    std::ofstream bad(dir + "/bad.json");
    bad << R"({"seed": 1, "unknown_section": {}})";
  }
  CHECK(exit_code("run --config " + dir + "/bad.json --out " + dir + "/r1") == 2);
  CHECK(exit_code("run --config " + dir + "/missing.json --out " + dir + "/r1") == 2);
  CHECK(exit_code("run --config " + kQuick + " --out " + dir + "/r2 --max-calls 100") == 3);
  {
    json j = read_json(kQuick);
    j["prior"] = {{{"name", "log_r"}, {"dist", "uniform"}, {"lower", 600}, {"upper", 700}},
                  {{"name", "sigma"}, {"dist", "uniform"}, {"lower", 0}, {"upper", 0.8}},
                  {{"name", "phi"}, {"dist", "uniform"}, {"lower", 4}, {"upper", 20}}};
    write_json(dir + "/overflow.json", j);
  }
  CHECK(exit_code("run --config " + dir + "/overflow.json --out " + dir + "/r3") == 4);
  CHECK(exit_code("diagnose --out " + dir + "/nothing") == 2);
  CHECK(exit_code("summarize --out " + quick_run()) == 0);
  CHECK(exit_code("baseline --config " + kQuick + " --out " + dir + "/r4 --seed 9") == 0);
  CHECK(read_json(dir + "/r4/baseline/manifest.json").at("seed").get<std::uint64_t>() == 9);
}

}  // TEST_SUITE
