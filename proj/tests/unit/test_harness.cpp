#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cfbeam/harness.hpp"

using namespace cfbeam;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"({
  "name": "tiny",
  "channel": {"n_bs": 2, "m_y": 4, "m_z": 1, "m_wide": 2},
  "traffic": {"lambda": [4.5, 5.0], "q_req": [9.0, 10.0], "q_lim": [18.0, 20.0]},
  "candidates": {"mode": "genie", "k": 2},
  "episode": {"slots": 8, "service_scale": 1e-5},
  "d3qn": {"hidden": [8], "batch": 4, "buffer": 100},
  "train": {"episodes": 2},
  "eval": {"episodes": 3}
})";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

RunOptions options(const TempDir& dir, const std::string& command, std::vector<std::string> schemes) {
  RunOptions o;
  o.command = command;
  o.scenario_path = (dir.path / "tiny.json").string();
  o.schemes = std::move(schemes);
  o.out = (dir.path / "run").string();
  return o;
}

}  // namespace

TEST_CASE("histogram rows are densities and the last bin clamps") {
  std::vector<std::vector<UserMetrics>> eps(4, std::vector<UserMetrics>(2));
  const double values[] = {0.5, 2.5, 7.9, 100.0};
  for (int e = 0; e < 4; ++e) eps[e][0].q_tilde = eps[e][1].q_tilde = values[e];
  const Histogram h = queue_histogram(eps, 4, 8.0);
  CHECK(h.density[0] == std::vector<double>{0.25, 0.25, 0.0, 0.5});
  for (const auto& row : h.density) {
    double sum = 0.0;
    for (double d : row) sum += d;
    CHECK(sum == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(queue_histogram({}, 4, 8.0), ConfigError);
}

TEST_CASE("CSV writers use fixed headers") {
  std::ostringstream os;
  write_comparison_csv(os, {{"hdlo", 7, 0.5}, {"lcb", 32, 0.625}});
  CHECK(os.str() == "scheme,training_overhead_symbols,system_satisfaction\nhdlo,7,0.5\nlcb,32,0.625\n");
  std::ostringstream curve;
  write_curve_csv(curve, {{1, -2.5, 0.1, 1.0}});
  CHECK(curve.str().rfind("episode,mean_reward,loss,epsilon\n", 0) == 0);
}

TEST_CASE("agent checkpoints round trip") {
  Scenario sc = scenario_from_json(Json::parse(kTiny));
  sc.qmix.local_hidden = {8};
  sc.qmix.mixer = {{8}, 4};
  const World w = make_world(sc, 2);
  for (Scheme s : {Scheme::wbr_d3qn, Scheme::d_ddqn, Scheme::qmix}) {
    CAPTURE(to_string(s));
    Rng r1 = make_stream(1, "a"), r2 = make_stream(2, "b");
    const AgentSet a = make_agents(w, s, std::nullopt, r1);
    AgentSet b = make_agents(w, s, std::nullopt, r2);
    std::stringstream ss;
    save_agents(ss, a);
    load_agents(ss, b);
    std::stringstream again;
    save_agents(again, b);
    std::stringstream first;
    save_agents(first, a);
    CHECK(again.str() == first.str());
  }
}

TEST_CASE("sweep writes per-scheme outputs and the overhead comparison") {
  TempDir dir("cfbeam_sweep_test");
  std::ofstream(dir.path / "tiny.json") << kTiny;
  std::ostringstream log;
  CHECK(run(options(dir, "sweep", {"random", "lcb", "hdlo"}), log) == kExitOk);
  const fs::path run = dir.path / "run";
  CHECK(fs::exists(run / "config.json"));
  CHECK(first_line(run / "comparison.csv") == "scheme,training_overhead_symbols,system_satisfaction");
  for (const char* s : {"random", "lcb", "hdlo"}) {
    CHECK(first_line(run / s / "eval.csv") == "episode,user,q_tilde,satisfied");
    CHECK(first_line(run / s / "histogram.csv") == "user,bin_low,bin_high,density");
    CHECK(fs::exists(run / s / "summary.json"));
  }
  const std::string cmp = read(run / "comparison.csv");
  CHECK(cmp.find("lcb,4,") != std::string::npos);
  CHECK(cmp.find("random,2,") != std::string::npos);
}

TEST_CASE("train then evaluate a learning scheme") {
  TempDir dir("cfbeam_train_test");
  std::ofstream(dir.path / "tiny.json") << kTiny;
  std::ostringstream log;
  CHECK_THROWS_AS(run(options(dir, "evaluate", {"wbr-d3qn"}), log), ConfigError);
  CHECK(run(options(dir, "train", {"wbr-d3qn"}), log) == kExitOk);
  CHECK(first_line(dir.path / "run" / "learning_curve.csv") == "episode,mean_reward,loss,epsilon");
  CHECK(run(options(dir, "evaluate", {"wbr-d3qn"}), log) == kExitOk);
  const Json summary = Json::parse(read(dir.path / "run" / "summary.json"));
  CHECK(summary.contains("system_satisfaction"));
}

TEST_CASE("outputs are byte-identical across runs and worker counts") {
  TempDir dir("cfbeam_repeat_test");
  std::ofstream(dir.path / "tiny.json") << kTiny;
  std::ostringstream log;
  RunOptions a = options(dir, "evaluate", {"strongest"});
  a.out = (dir.path / "a").string();
  RunOptions b = a;
  b.out = (dir.path / "b").string();
  b.workers = 2;
  CHECK(run(a, log) == kExitOk);
  CHECK(run(b, log) == kExitOk);
  for (const char* f : {"eval.csv", "histogram.csv"}) CHECK(read(dir.path / "a" / f) == read(dir.path / "b" / f));
}

TEST_CASE("bad configuration surfaces as ConfigError") {
  TempDir dir("cfbeam_bad_test");
  std::ofstream(dir.path / "tiny.json") << kTiny;
  std::ostringstream log;
  RunOptions o = options(dir, "evaluate", {"random"});
  o.overrides = {"no_such_key=1"};
  CHECK_THROWS_AS(run(o, log), ConfigError);
  o.overrides.clear();
  o.command = "fly";
  CHECK_THROWS_AS(run(o, log), ConfigError);
  o.command = "train";
  o.schemes = {"hdlo"};
  CHECK_THROWS_AS(run(o, log), ConfigError);
}
