#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cfbeam/harness.hpp"

namespace {

std::vector<std::string> split_schemes(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic-aware beam selection for cell-free massive MIMO uplink"};
  app.require_subcommand(1, 1);

  cfbeam::RunOptions opts;
  std::string schemes = "wbr-d3qn";
  int episodes = 0;

  const char* commands[][2] = {
      {"gen-dataset", "Generate wide/narrow beam sweep samples for the predictor"},
      {"train-predictor", "Train the narrow-beam strength predictor"},
      {"train", "Train a learning scheme and write checkpoints"},
      {"evaluate", "Evaluate a scheme and write per-episode metrics"},
      {"sweep", "Train and evaluate several schemes and compare them"},
      {"selftest", "Run the invariant suite"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--scenario", opts.scenario_path, "Scenario JSON file (defaults when omitted)");
    sub->add_option("--scheme", schemes,
                    "Scheme, or comma-separated list for train/sweep: wbr-d3qn, sba-d3qn, qmix, d-ddqn, hdlo, lbs, "
                    "lcb, random, strongest");
    sub->add_option("--seed", opts.seed, "Master seed");
    sub->add_option("--episodes", episodes, "Training episodes (train) or evaluation episodes (evaluate, sweep)");
    sub->add_option("--out", opts.out, "Run directory");
    sub->add_option("--set", opts.overrides, "Configuration override key=value (repeatable)");
    sub->add_option("--workers", opts.workers, "Worker threads for dataset generation and evaluation");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cfbeam::kExitOk : cfbeam::kExitConfig;
  }

  opts.command = app.get_subcommands().front()->get_name();
  opts.schemes = split_schemes(schemes);
  if (app.get_subcommands().front()->count("--episodes") > 0) opts.episodes = episodes;

  try {
    return cfbeam::run(opts, std::cout);
  } catch (const cfbeam::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    std::cerr << "known keys:";
    for (const auto& k : cfbeam::config_keys(cfbeam::to_json(cfbeam::Scenario{}))) std::cerr << ' ' << k;
    std::cerr << '\n';
    return cfbeam::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cfbeam::kExitRuntime;
  }
}
