#include "cfbeam/harness.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "cfbeam/selftest.hpp"

namespace cfbeam {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

void write_json(const fs::path& path, const Json& j) {
  auto os = open_out(path);
  os << j.dump(2) << '\n';
}

Json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path.string());
  try {
    return Json::parse(is);
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// manifest.json lists checkpoint files with their role and fingerprint.
void record_checkpoint(const fs::path& dir, const std::string& role, const std::string& scheme,
                       const std::string& file, std::uint64_t fingerprint) {
  const fs::path path = dir / "manifest.json";
  Json manifest = fs::exists(path) ? read_json(path) : Json::array();
  Json kept = Json::array();
  for (const auto& e : manifest) {
    if (!(e.at("role") == role && e.at("scheme") == scheme)) kept.push_back(e);
  }
  kept.push_back({{"role", role}, {"scheme", scheme}, {"file", file}, {"fingerprint", hex(fingerprint)}});
  write_json(path, kept);
}

std::optional<fs::path> find_checkpoint(const fs::path& dir, const std::string& role, const std::string& scheme,
                                        std::uint64_t fingerprint) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) return std::nullopt;
  for (const auto& e : read_json(path)) {
    if (e.at("role") == role && e.at("scheme") == scheme && e.at("fingerprint") == hex(fingerprint)) {
      return dir / e.at("file").get<std::string>();
    }
  }
  return std::nullopt;
}

bool needs_predictor(const World& world, Scheme scheme) {
  return uses_candidates(scheme) && scheme != Scheme::sba_d3qn && world.scenario.candidates.mode == "cnn";
}

void write_predictor_report(const fs::path& dir, const TrainReport& report) {
  auto os = open_out(dir / "predictor_training.csv");
  os << "epoch,train_mse,validation_mse\n";
  for (std::size_t e = 0; e < report.train_mse.size(); ++e) {
    os << e << ',' << num(report.train_mse[e]) << ',' << num(report.validation_mse[e]) << '\n';
  }
}

Json accuracy_json(const PredictorAccuracy& a, const TrainReport& r) {
  return {{"strongest_in_top2", a.strongest_in_top_k},
          {"exact_top2", a.exact_top_k},
          {"evaluated_pairs", a.evaluated},
          {"best_epoch", r.best_epoch},
          {"best_validation_mse", r.best_validation_mse}};
}

// Trains and stores a predictor in `dir`, or reuses a stored one for the same world.
Predictor obtain_predictor(const World& world, const fs::path& dir, int workers, std::ostream& log) {
  const std::uint64_t fp = predictor_fingerprint(world);
  if (auto path = find_checkpoint(dir, "predictor", "", fp)) {
    std::ifstream is(*path);
    log << "loading predictor " << path->string() << '\n';
    return load_predictor(is, world);
  }
  log << "training predictor on " << world.scenario.predictor.samples << " samples\n";
  TrainReport report;
  PredictorAccuracy acc;
  Predictor p = train_world_predictor(world, workers, &report, &acc);
  const std::string file = "predictor-" + hex(fp) + ".ckpt";
  {
    auto os = open_out(dir / file);
    save_predictor(os, p);
  }
  record_checkpoint(dir, "predictor", "", file, fp);
  write_predictor_report(dir, report);
  write_json(dir / "predictor_summary.json", accuracy_json(acc, report));
  log << "predictor test strongest-in-top-2 " << num(acc.strongest_in_top_k) << '\n';
  return p;
}

AgentSet train_scheme(const World& world, Scheme scheme, std::optional<Predictor> predictor, int episodes,
                      const fs::path& dir, std::ostream& log) {
  log << "training " << to_string(scheme) << " for " << episodes << " episodes\n";
  TrainResult r = train_agents(world, scheme, std::move(predictor), episodes);
  {
    auto os = open_out(dir / "learning_curve.csv");
    write_curve_csv(os, r.curve);
  }
  const std::string file = "agents-" + to_string(scheme) + "-" + hex(r.agents.layout) + ".ckpt";
  {
    auto os = open_out(dir / file);
    save_agents(os, r.agents);
  }
  record_checkpoint(dir, "agents", to_string(scheme), file, r.agents.layout);
  return std::move(r.agents);
}

AgentSet stored_agents(const World& world, Scheme scheme, std::optional<Predictor> predictor, const fs::path& dir) {
  Rng unused = make_stream(world.seed, "init");
  AgentSet a = make_agents(world, scheme, std::move(predictor), unused);
  const auto path = find_checkpoint(dir, "agents", to_string(scheme), a.layout);
  if (!path) {
    throw ConfigError("no checkpoint for " + to_string(scheme) + " with action layout " + hex(a.layout) + " in " +
                      dir.string() + "; run `train` first");
  }
  std::ifstream is(*path);
  load_agents(is, a);
  return a;
}

EvalResult evaluate_and_write(const World& world, const AgentSet& agents, int episodes, int workers,
                              const fs::path& dir, std::ostream& log) {
  log << "evaluating " << to_string(agents.scheme) << " on " << episodes << " episodes\n";
  const EvalResult r = evaluate(world, agents, episodes, kEvalEpisodeOffset, workers);
  {
    auto os = open_out(dir / "eval.csv");
    write_eval_csv(os, r);
  }
  {
    auto os = open_out(dir / "histogram.csv");
    write_histogram_csv(os, queue_histogram(r.episodes, world.scenario.eval.histogram_bins,
                                            world.scenario.eval.histogram_max));
  }
  write_json(dir / "summary.json", summary_json(world, agents.scheme, r));
  log << to_string(agents.scheme) << " system satisfaction " << num(r.rates.system) << '\n';
  return r;
}

void echo_config(const fs::path& dir, const RunOptions& o, const Scenario& sc) {
  Json run{{"command", o.command}, {"scenario", o.scenario_path}, {"schemes", o.schemes},
           {"seed", o.seed},       {"out", o.out},                {"workers", o.workers},
           {"overrides", o.overrides}};
  run["episodes"] = o.episodes ? Json(*o.episodes) : Json(nullptr);
  write_json(dir / "config.json", {{"run", run}, {"scenario", to_json(sc)}});
}

}  // namespace

Histogram queue_histogram(const std::vector<std::vector<UserMetrics>>& episodes, int bins, double max) {
  if (episodes.empty()) throw ConfigError("histogram needs at least one episode");
  if (bins < 1 || !(max > 0.0)) throw ConfigError("histogram needs bins >= 1 and max > 0");
  Histogram h;
  h.max = max;
  h.bins = bins;
  const std::size_t users = episodes.front().size();
  h.density.assign(users, std::vector<double>(bins, 0.0));
  const double width = max / bins;
  for (const auto& ep : episodes) {
    for (std::size_t u = 0; u < users; ++u) {
      const int bin = std::min(bins - 1, static_cast<int>(std::floor(std::max(ep[u].q_tilde, 0.0) / width)));
      h.density[u][bin] += 1.0;
    }
  }
  for (auto& row : h.density) {
    for (double& d : row) d /= static_cast<double>(episodes.size());
  }
  return h;
}

void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "user,bin_low,bin_high,density\n";
  const double width = h.max / h.bins;
  for (std::size_t u = 0; u < h.density.size(); ++u) {
    for (int b = 0; b < h.bins; ++b) {
      os << u << ',' << num(b * width) << ',' << num((b + 1) * width) << ',' << num(h.density[u][b]) << '\n';
    }
  }
}

void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
  os << "episode,mean_reward,loss,epsilon\n";
  for (const auto& p : curve) {
    os << p.episode << ',' << num(p.mean_reward) << ',' << num(p.loss) << ',' << num(p.epsilon) << '\n';
  }
}

void write_eval_csv(std::ostream& os, const EvalResult& result) {
  os << "episode,user,q_tilde,satisfied\n";
  for (std::size_t e = 0; e < result.episodes.size(); ++e) {
    for (std::size_t u = 0; u < result.episodes[e].size(); ++u) {
      const UserMetrics& m = result.episodes[e][u];
      os << e << ',' << u << ',' << num(m.q_tilde) << ',' << (m.satisfied ? 1 : 0) << '\n';
    }
  }
}

void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows) {
  os << "scheme,training_overhead_symbols,system_satisfaction\n";
  for (const auto& r : rows) os << r.scheme << ',' << r.training_overhead_symbols << ',' << num(r.system_satisfaction) << '\n';
}

Json summary_json(const World& world, Scheme scheme, const EvalResult& result) {
  double reward = 0.0;
  for (const auto& o : result.outcomes) reward += o.mean_reward;
  PowerConfig power = world.scenario.power;
  power.training_symbols = result.training_symbols;
  return {{"scheme", to_string(scheme)},
          {"seed", world.seed},
          {"episodes", result.episodes.size()},
          {"system_satisfaction", result.rates.system},
          {"user_satisfaction", result.rates.per_user},
          {"mean_reward", result.outcomes.empty() ? 0.0 : reward / static_cast<double>(result.outcomes.size())},
          {"training_overhead_symbols", result.training_symbols},
          {"training_overhead_s", result.training_symbols * power.symbol_s},
          {"degenerate_slots", result.degenerate_slots},
          {"widened_episodes", result.widened_episodes},
          {"hdlo_bound_violations", result.hdlo_bound_violations}};
}

void save_agents(std::ostream& os, const AgentSet& agents) {
  std::vector<std::pair<std::string, nn::Tensor>> tensors;
  auto add = [&](const nn::Network& net, const std::string& prefix) {
    for (auto& t : net.parameter_tensors()) tensors.emplace_back(prefix + t.first, std::move(t.second));
  };
  switch (agents.scheme) {
    case Scheme::wbr_d3qn:
    case Scheme::sba_d3qn:
      add(agents.central.network(), "central.");
      break;
    case Scheme::d_ddqn:
      for (std::size_t b = 0; b < agents.local.size(); ++b) add(agents.local[b].network(), "local" + std::to_string(b) + ".");
      break;
    case Scheme::qmix: {
      const VectorXd p = agents.qmix.params();
      tensors.emplace_back("qmix.params", nn::Tensor({p.size()}, p));
      break;
    }
    default:
      break;
  }
  nn::write_tensors(os, tensors);
}

void load_agents(std::istream& is, AgentSet& agents) {
  const auto tensors = nn::read_tensors(is);
  switch (agents.scheme) {
    case Scheme::wbr_d3qn:
    case Scheme::sba_d3qn:
      nn::load_params(tensors, agents.central.network(), "central.");
      break;
    case Scheme::d_ddqn:
      for (std::size_t b = 0; b < agents.local.size(); ++b) {
        nn::load_params(tensors, agents.local[b].network(), "local" + std::to_string(b) + ".");
      }
      break;
    case Scheme::qmix: {
      for (const auto& [name, t] : tensors) {
        if (name != "qmix.params") continue;
        if (t.size() != agents.qmix.parameter_count()) throw ShapeError("QMIX checkpoint has the wrong size");
        agents.qmix.set_params(t.values);
        return;
      }
      throw ShapeError("QMIX checkpoint lacks qmix.params");
    }
    default:
      break;
  }
}

std::uint64_t predictor_fingerprint(const World& world) {
  const Json j{{"channel", to_json(world.scenario)["channel"]},
               {"predictor", to_json(world.scenario)["predictor"]},
               {"seed", world.seed}};
  return fnv1a(j.dump());
}

void save_predictor(std::ostream& os, const Predictor& predictor) {
  nn::save_params(os, predictor.network(), "predictor.");
}

Predictor load_predictor(std::istream& is, const World& world) {
  const ChannelParams& c = world.scenario.channel;
  Rng unused = make_stream(world.seed, "predictor-init");
  nn::Network net = make_predictor_network(c.n_bs, c.m_wide, c.antennas(), world.scenario.predictor.arch, unused);
  nn::load_params(is, net, "predictor.");
  return Predictor(std::move(net), c.n_bs, c.m_wide, c.antennas());
}

int run(const RunOptions& o, std::ostream& log) {
  if (o.command == "selftest") return run_selftest(log) ? kExitOk : kExitSelftest;
  if (o.workers < 1) throw ConfigError("--workers must be at least 1");
  if (o.schemes.empty()) throw ConfigError("no scheme given");
  std::vector<Scheme> schemes;
  for (const auto& s : o.schemes) schemes.push_back(parse_scheme(s));

  for (const auto& ov : o.overrides) log << "override " << ov << '\n';
  Scenario sc = load_scenario(o.scenario_path, o.overrides);
  if (o.episodes) {
    if (*o.episodes < 1) throw ConfigError("--episodes must be positive");
    if (o.command == "train") {
      sc.train.episodes = *o.episodes;
    } else if (o.command == "evaluate" || o.command == "sweep") {
      sc.eval.episodes = *o.episodes;
    } else {
      throw ConfigError("--episodes applies to train, evaluate and sweep only");
    }
  }
  const fs::path dir(o.out);
  fs::create_directories(dir);
  echo_config(dir, o, sc);
  const World world = make_world(sc, o.seed);

  if (o.command == "gen-dataset") {
    const PredictorDataset data =
        build_dataset(sc.channel, world.bs_positions, sc.predictor.samples, world.seed, o.workers);
    auto os = open_out(dir / "dataset.csv");
    save_dataset(os, data);
    log << "wrote " << data.size() << " samples\n";
    return kExitOk;
  }
  if (o.command == "train-predictor") {
    obtain_predictor(world, dir, o.workers, log);
    return kExitOk;
  }

  auto predictor_for = [&](Scheme s) -> std::optional<Predictor> {
    if (!needs_predictor(world, s)) return std::nullopt;
    return obtain_predictor(world, dir, o.workers, log);
  };

  if (o.command == "train") {
    for (Scheme s : schemes) {
      if (!is_learning(s)) throw ConfigError("scheme '" + to_string(s) + "' has nothing to train");
    }
    for (Scheme s : schemes) train_scheme(world, s, predictor_for(s), sc.train.episodes, dir, log);
    return kExitOk;
  }
  if (o.command == "evaluate") {
    if (schemes.size() != 1) throw ConfigError("evaluate takes a single scheme");
    const Scheme s = schemes.front();
    AgentSet agents;
    if (is_learning(s)) {
      agents = stored_agents(world, s, predictor_for(s), dir);
    } else {
      Rng unused = make_stream(world.seed, "init");
      agents = make_agents(world, s, predictor_for(s), unused);
    }
    evaluate_and_write(world, agents, sc.eval.episodes, o.workers, dir, log);
    return kExitOk;
  }
  if (o.command == "sweep") {
    std::vector<ComparisonRow> rows;
    for (Scheme s : schemes) {
      const fs::path sub = dir / to_string(s);
      fs::create_directories(sub);
      AgentSet agents;
      if (is_learning(s)) {
        agents = train_scheme(world, s, predictor_for(s), sc.train.episodes, sub, log);
      } else {
        Rng unused = make_stream(world.seed, "init");
        agents = make_agents(world, s, predictor_for(s), unused);
      }
      const EvalResult r = evaluate_and_write(world, agents, sc.eval.episodes, o.workers, sub, log);
      rows.push_back({to_string(s), r.training_symbols, r.rates.system});
    }
    auto os = open_out(dir / "comparison.csv");
    write_comparison_csv(os, rows);
    return kExitOk;
  }
  throw ConfigError("unknown command '" + o.command +
                    "'; expected gen-dataset, train-predictor, train, evaluate, sweep or selftest");
}

}  // namespace cfbeam
