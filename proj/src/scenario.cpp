#include "cfbeam/scenario.hpp"

#include <fstream>
#include <functional>

namespace cfbeam {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ChannelParams, region_m, n_bs, m_y, m_z, m_wide, carrier_hz, path_count, rho,
                                   bs_height_m, user_height_m, min_bs_separation_m, min_user_separation_m,
                                   pl_ref_distance_m, pl_exponent_los, pl_exponent_nlos, los_d1_m, los_d2_m,
                                   blockage_prob, nlos_azimuth_spread, nlos_elevation_spread)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrafficConfig, lambda, kappa, chi_min, q_req, q_lim)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PowerConfig, tx_power, bandwidth_hz, slot_s, symbol_s)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EpisodeConfig, slots, delta, service_scale, initial_queue, history, reward_scale)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CandidateConfig, mode, k, action_cap)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PredictorArch, conv_layers, conv_channels, kernel, dense)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PredictorTraining, epochs, batch, learning_rate, momentum, decay_interval, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DatasetSplit, train, validation, test)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PredictorConfig, arch, training, samples, split)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DqnHyper, hidden, dueling, learning_rate, momentum, batch, buffer, gamma,
                                   target_period, max_grad_norm, train_every)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MixerConfig, hidden, hyper_hidden)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(QmixHyper, local_hidden, mixer, learning_rate, momentum, batch, buffer, gamma,
                                   target_period_episodes, max_grad_norm, train_every)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainConfig, episodes, epsilon_start, epsilon_end, epsilon_fraction)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalConfig, episodes, histogram_bins, histogram_max)

namespace {

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

void check_hyper(const DqnHyper& h, const std::string& key) {
  require(h.learning_rate > 0.0, key + ".learning_rate", "must be positive");
  require(h.momentum >= 0.0 && h.momentum < 1.0, key + ".momentum", "must lie in [0, 1)");
  require(h.batch >= 1, key + ".batch", "must be at least 1");
  require(h.buffer >= 1, key + ".buffer", "must be at least 1");
  require(h.gamma >= 0.0 && h.gamma <= 1.0, key + ".gamma", "must lie in [0, 1]");
  require(h.target_period >= 1, key + ".target_period", "must be at least 1");
  require(h.train_every >= 1, key + ".train_every", "must be at least 1");
  require(h.max_grad_norm >= 0.0, key + ".max_grad_norm", "must be non-negative");
  for (int w : h.hidden) require(w >= 1, key + ".hidden", "widths must be positive");
}

bool compatible(const Json& def, const Json& value) {
  if (def.is_number_float()) return value.is_number();
  if (def.is_number_integer() || def.is_number_unsigned()) {
    return value.is_number_integer() || value.is_number_unsigned();
  }
  if (def.is_array()) {
    if (!value.is_array()) return false;
    if (def.empty()) return true;
    for (const auto& v : value) {
      if (!compatible(def.front(), v)) return false;
    }
    return true;
  }
  return def.type() == value.type();
}

// Copies `patch` into `base`, rejecting keys that base does not already hold.
void merge_strict(Json& base, const Json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError((prefix.empty() ? "configuration" : prefix) + ": expected an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown configuration key '" + key + "'");
    Json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_strict(slot, it.value(), key);
    } else {
      if (!compatible(slot, it.value())) {
        throw ConfigError("configuration key '" + key + "' expects " + std::string(slot.type_name()) + ", got " +
                          it.value().dump());
      }
      slot = it.value();
    }
  }
}

void collect_keys(const Json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object()) {
      collect_keys(it.value(), key, out);
    } else {
      out.push_back(key);
    }
  }
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

}  // namespace

void Scenario::validate() const {
  channel.validate();
  traffic.validate();
  require(channel.n_users == traffic.n_users(), "traffic", "user count disagrees with the channel");
  require(n_users() <= channel.antennas(), "traffic.lambda", "more users than beams per BS");
  require(power.tx_power > 0.0, "power.tx_power", "must be positive");
  require(power.bandwidth_hz > 0.0, "power.bandwidth_hz", "must be positive");
  require(power.slot_s > 0.0 && power.symbol_s > 0.0, "power.slot_s", "slot and symbol durations must be positive");
  require(channel.antennas() * power.symbol_s < power.slot_s, "power.symbol_s",
          "a full sweep of the narrow codebook must fit in one slot");
  require(episode.slots >= 1, "episode.slots", "must be at least 1");
  require(episode.delta >= 0.0, "episode.delta", "must be non-negative");
  require(episode.service_scale > 0.0, "episode.service_scale", "must be positive");
  require(episode.initial_queue == "uniform" || episode.initial_queue == "zero", "episode.initial_queue",
          "must be \"uniform\" or \"zero\"");
  require(episode.history >= 1, "episode.history", "must be at least 1");
  require(episode.reward_scale > 0.0, "episode.reward_scale", "must be positive");
  require(candidates.mode == "cnn" || candidates.mode == "genie" || candidates.mode == "sba", "candidates.mode",
          "must be \"cnn\", \"genie\" or \"sba\"");
  require(candidates.k >= 1 && candidates.k <= channel.antennas(), "candidates.k", "must lie in [1, M]");
  require(candidates.action_cap >= 1, "candidates.action_cap", "must be positive");
  require(predictor.samples >= 0, "predictor.samples", "must be non-negative");
  require(predictor.split.train >= 1 && predictor.split.validation >= 1 && predictor.split.test >= 0 &&
              predictor.split.train + predictor.split.validation + predictor.split.test <= predictor.samples,
          "predictor.split", "must fit inside predictor.samples with non-empty train and validation parts");
  require(predictor.training.epochs >= 0, "predictor.training.epochs", "must be non-negative");
  require(predictor.training.batch >= 1, "predictor.training.batch", "must be at least 1");
  require(predictor.training.learning_rate > 0.0, "predictor.training.learning_rate", "must be positive");
  require(predictor.arch.conv_layers >= 0 && predictor.arch.conv_channels >= 1 && predictor.arch.kernel >= 1,
          "predictor.arch", "layer counts and sizes must be positive");
  check_hyper(d3qn, "d3qn");
  check_hyper(ddqn, "ddqn");
  require(qmix.learning_rate > 0.0, "qmix.learning_rate", "must be positive");
  require(qmix.momentum >= 0.0 && qmix.momentum < 1.0, "qmix.momentum", "must lie in [0, 1)");
  require(qmix.batch >= 1 && qmix.buffer >= 1, "qmix.batch", "batch and buffer must be positive");
  require(qmix.gamma >= 0.0 && qmix.gamma <= 1.0, "qmix.gamma", "must lie in [0, 1]");
  require(qmix.target_period_episodes >= 1, "qmix.target_period_episodes", "must be at least 1");
  require(qmix.train_every >= 1, "qmix.train_every", "must be at least 1");
  require(qmix.mixer.hyper_hidden >= 1, "qmix.mixer.hyper_hidden", "must be positive");
  require(train.episodes >= 0, "train.episodes", "must be non-negative");
  require(train.epsilon_end >= 0.0 && train.epsilon_end <= train.epsilon_start && train.epsilon_start <= 1.0,
          "train.epsilon_start", "need 0 <= epsilon_end <= epsilon_start <= 1");
  require(train.epsilon_fraction >= 0.0 && train.epsilon_fraction <= 1.0, "train.epsilon_fraction",
          "must lie in [0, 1]");
  require(eval.episodes >= 0, "eval.episodes", "must be non-negative");
  require(eval.histogram_bins >= 1, "eval.histogram_bins", "must be at least 1");
  require(eval.histogram_max > 0.0, "eval.histogram_max", "must be positive");
}

Json to_json(const Scenario& s) {
  Json j;
  j["name"] = s.name;
  j["channel"] = s.channel;
  j["traffic"] = s.traffic;
  j["power"] = s.power;
  j["episode"] = s.episode;
  j["candidates"] = s.candidates;
  j["predictor"] = s.predictor;
  j["d3qn"] = s.d3qn;
  j["ddqn"] = s.ddqn;
  j["qmix"] = s.qmix;
  j["train"] = s.train;
  j["eval"] = s.eval;
  return j;
}

Scenario scenario_from_json(const Json& j) {
  Json full = to_json(Scenario{});
  merge_strict(full, j, "");
  Scenario s;
  try {
    full.at("name").get_to(s.name);
    full.at("channel").get_to(s.channel);
    full.at("traffic").get_to(s.traffic);
    full.at("power").get_to(s.power);
    full.at("episode").get_to(s.episode);
    full.at("candidates").get_to(s.candidates);
    full.at("predictor").get_to(s.predictor);
    full.at("d3qn").get_to(s.d3qn);
    full.at("ddqn").get_to(s.ddqn);
    full.at("qmix").get_to(s.qmix);
    full.at("train").get_to(s.train);
    full.at("eval").get_to(s.eval);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("configuration: ") + e.what());
  }
  s.channel.n_users = s.traffic.n_users();
  s.validate();
  return s;
}

std::vector<std::string> config_keys(const Json& config) {
  std::vector<std::string> out;
  collect_keys(config, "", out);
  return out;
}

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const auto keys = config_keys(to_json(Scenario{}));
  if (key.find('.') == std::string::npos) {
    std::vector<std::string> matches;
    for (const auto& k : keys) {
      const auto dot = k.rfind('.');
      if ((dot == std::string::npos ? k : k.substr(dot + 1)) == key) matches.push_back(k);
    }
    if (matches.size() > 1) throw ConfigError("override key '" + key + "' is ambiguous: " + join(matches));
    if (matches.empty()) throw ConfigError("unknown configuration key '" + key + "'; known keys: " + join(keys));
    key = matches.front();
  } else if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw ConfigError("unknown configuration key '" + key + "'; known keys: " + join(keys));
  }
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  Json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1)) {
    parts.push_back(rest.substr(0, pos));
  }
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
  Json full = to_json(Scenario{});
  merge_strict(full, config, "");
  merge_strict(full, patch, "");
  config = std::move(full);
}

Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides) {
  Json config = to_json(Scenario{});
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
    Json file;
    try {
      file = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("scenario file '" + path + "': " + e.what());
    }
    merge_strict(config, file, "");
  }
  for (const auto& o : overrides) apply_override(config, o);
  return scenario_from_json(config);
}

}  // namespace cfbeam
