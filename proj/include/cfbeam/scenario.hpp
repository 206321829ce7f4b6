#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfbeam/agents.hpp"
#include "cfbeam/beamspace.hpp"
#include "cfbeam/channel.hpp"
#include "cfbeam/phy.hpp"
#include "cfbeam/traffic.hpp"

namespace cfbeam {

using Json = nlohmann::json;

struct EpisodeConfig {
  int slots = 100;
  double delta = 10.0;          // weight of limit violations in the reward
  double service_scale = 1.0;   // served bits = rate * slot * service_scale
  std::string initial_queue = "uniform";  // "uniform" in [0, q_req] or "zero"
  int history = 1;              // pseudo-state window
  double reward_scale = 1.0;    // applied to rewards before they enter the replay buffer
};

struct CandidateConfig {
  std::string mode = "cnn";  // "cnn", "genie" or "sba"
  int k = 3;
  std::size_t action_cap = 1'000'000;
};

struct PredictorConfig {
  PredictorArch arch;
  PredictorTraining training;
  int samples = 30000;
  DatasetSplit split{21000, 4500, 4500};
};

struct TrainConfig {
  int episodes = 20000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_fraction = 0.6;  // share of episodes over which epsilon decays
};

struct EvalConfig {
  int episodes = 20000;
  int histogram_bins = 40;
  double histogram_max = 40.0;  // bits; larger values land in the last bin
};

struct Scenario {
  std::string name = "default";
  ChannelParams channel;
  TrafficConfig traffic;
  PowerConfig power;
  EpisodeConfig episode;
  CandidateConfig candidates;
  PredictorConfig predictor;
  DqnHyper d3qn;
  DqnHyper ddqn{{128, 128}, false, 0.005, 0.0, 256, 10000, 0.99, 4, 0.0, 1};
  QmixHyper qmix;
  TrainConfig train;
  EvalConfig eval;

  int n_users() const { return traffic.n_users(); }
  // ConfigError naming the offending key.
  void validate() const;
};

Json to_json(const Scenario& s);
// Strict: unknown keys and type mismatches raise ConfigError.
Scenario scenario_from_json(const Json& j);

// "key=value"; the key is a dotted path or a leaf name that is unique in the
// configuration tree, the value is parsed as JSON (bare words as strings).
void apply_override(Json& config, const std::string& assignment);

// Defaults, then the file (if any), then overrides in order.
Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides = {});

// Every dotted leaf path of a configuration, for usage messages.
std::vector<std::string> config_keys(const Json& config);

}  // namespace cfbeam
