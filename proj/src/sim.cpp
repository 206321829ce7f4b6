#include "cfbeam/sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

namespace cfbeam {

namespace {

const char* const kSchemeNames[] = {"wbr-d3qn", "sba-d3qn", "qmix", "d-ddqn", "hdlo",
                                    "lbs",      "lcb",      "random", "strongest"};

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v;
  return h * 1099511628211ull;
}

std::size_t ipow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace

Scheme parse_scheme(const std::string& name) {
  for (std::size_t i = 0; i < std::size(kSchemeNames); ++i) {
    if (name == kSchemeNames[i]) return static_cast<Scheme>(i);
  }
  std::string known;
  for (const char* n : kSchemeNames) known += (known.empty() ? "" : ", ") + std::string(n);
  throw ConfigError("unknown scheme '" + name + "'; expected one of " + known);
}

std::string to_string(Scheme scheme) { return kSchemeNames[static_cast<int>(scheme)]; }

bool is_learning(Scheme scheme) {
  return scheme == Scheme::wbr_d3qn || scheme == Scheme::sba_d3qn || scheme == Scheme::qmix ||
         scheme == Scheme::d_ddqn;
}

bool uses_candidates(Scheme scheme) { return scheme != Scheme::lbs && scheme != Scheme::lcb; }

World make_world(const Scenario& scenario, std::uint64_t seed) {
  scenario.validate();
  World w;
  w.scenario = scenario;
  w.seed = seed;
  Rng rng = make_stream(seed, "topology");
  w.bs_positions = place_bs(scenario.channel, rng);
  w.codebooks = CodebookSet::make(scenario.channel);
  return w;
}

double queue_reward(const VectorXd& queue, const TrafficConfig& traffic, double delta, double* backlog,
                    double* violations) {
  double b = 0.0, v = 0.0;
  for (Index u = 0; u < queue.size(); ++u) {
    b += queue[u] / traffic.q_req[u];
    if (queue[u] > traffic.q_lim[u]) v += 1.0;
  }
  if (backlog) *backlog = b;
  if (violations) *violations = v;
  return -b - delta * v;
}

Episode::Episode(const World& world, std::uint64_t index)
    : world_(&world), slots_(world.scenario.episode.slots) {
  const Scenario& sc = world.scenario;
  Rng users = make_stream(world.seed, "users", index);
  topology_.bs_positions = world.bs_positions;
  topology_.user_positions = place_users(sc.channel, users);
  long_term_ = sample_long_term(topology_, sc.channel, users);
  small_ = init_small_scale(long_term_, sc.channel.rho, users);
  channel_ = assemble_channel(long_term_, small_, sc.channel.m_y, sc.channel.m_z, 1);
  fading_rng_ = make_stream(world.seed, "fading", index);
  traffic_rng_ = make_stream(world.seed, "traffic", index);
  queue_ = VectorXd::Zero(sc.n_users());
  if (sc.episode.initial_queue == "uniform") {
    for (int u = 0; u < sc.n_users(); ++u) queue_[u] = uniform(traffic_rng_, 0.0, sc.traffic.q_req[u]);
  }
  trace_ = EpisodeTrace(sc.n_users(), slots_, queue_);
}

StepResult Episode::step(const BeamAssignment& assignment, int training_symbols) {
  if (done()) throw ConfigError("episode already finished");
  const Scenario& sc = world_->scenario;
  PowerConfig power = sc.power;
  power.training_symbols = training_symbols;
  StepResult r;
  r.rates = slot_rates(assignment, world_->codebooks.narrow, channel_.H, power);
  r.served = r.rates.rate * (power.slot_s * sc.episode.service_scale);
  r.arrivals.resize(sc.n_users());
  for (int u = 0; u < sc.n_users(); ++u) r.arrivals[u] = sample_arrival(sc.traffic, u, traffic_rng_);
  trace_.record(t_, r.served, r.arrivals);
  queue_ = trace_.queue.col(t_);
  r.next_queue = queue_;
  r.hbar = equivalent_channel(analog_combiner(assignment, world_->codebooks.narrow), channel_.H);
  r.reward = queue_reward(queue_, sc.traffic, sc.episode.delta, &r.backlog, &r.violations);
  small_ = evolve_small_scale(small_, fading_rng_);
  ++t_;
  if (!done()) channel_ = assemble_channel(long_term_, small_, sc.channel.m_y, sc.channel.m_z, t_);
  return r;
}

CandidateSets candidate_rankings(const World& world, const ChannelRealization& reference, const Predictor* predictor,
                                 const std::string& mode) {
  const int n_bs = world.n_bs(), users = world.n_users(), m = world.n_beams();
  CandidateSets out(n_bs, std::vector<std::vector<int>>(users));
  for (int u = 0; u < users; ++u) {
    MatrixXd strengths;
    if (mode == "cnn") {
      if (!predictor) throw ConfigError("candidate mode \"cnn\" needs a trained predictor");
      strengths = predictor->predict(normalize_per_bs(sweep(reference, u, world.codebooks, BeamKind::wide)));
    } else {
      strengths = sweep(reference, u, world.codebooks, BeamKind::narrow);
    }
    for (int b = 0; b < n_bs; ++b) {
      std::vector<int> ranking = top_k(strengths.row(b).transpose(), m);
      if (mode == "sba") {
        // Three adjacent beams with the strongest in the middle, then the rest.
        const int s = ranking.front();
        std::vector<int> head{s, (s + m - 1) % m, (s + 1) % m};
        head.erase(std::unique(head.begin(), head.end()), head.end());
        std::vector<int> rest;
        for (int beam : ranking) {
          if (std::find(head.begin(), head.end(), beam) == head.end()) rest.push_back(beam);
        }
        ranking = head;
        ranking.insert(ranking.end(), rest.begin(), rest.end());
      }
      out[b][u] = std::move(ranking);
    }
  }
  return out;
}

EffectiveActionSpace build_action_space(const CandidateSets& rankings, int k, std::size_t cap) {
  std::vector<BsActionSpace> per_bs;
  for (const auto& r : rankings) per_bs.push_back(widen_and_prune(r, k));
  return EffectiveActionSpace(std::move(per_bs), cap);
}

int candidate_count(const Scenario& scenario, Scheme scheme) {
  return scheme == Scheme::sba_d3qn ? std::min(3, scenario.channel.antennas()) : scenario.candidates.k;
}

int trained_beams(const BsActionSpace& actions) {
  std::set<int> beams;
  for (const auto& s : actions.sets) beams.insert(s.begin(), s.end());
  return static_cast<int>(beams.size());
}

int training_symbols(Scheme scheme, int n_users, int n_beams, int hdlo_trained) {
  switch (scheme) {
    case Scheme::lbs:
    case Scheme::lcb:
      return n_beams;
    case Scheme::hdlo:
      return hdlo_trained;
    default:
      return n_users;
  }
}

void append_complex(VectorXd& out, Index& at, cplx z) {
  const double mag = std::abs(z);
  const double scale = mag > 0.0 ? std::log1p(mag) / mag : 0.0;
  out[at++] = z.real() * scale;
  out[at++] = z.imag() * scale;
}

VectorXd central_observation(const VectorXd& next_queue, const MatrixXcd& hbar, const TrafficConfig& traffic,
                             double tx_power) {
  const Index users = next_queue.size();
  VectorXd o(users + 2 * hbar.size());
  Index at = 0;
  for (Index u = 0; u < users; ++u) o[at++] = next_queue[u] / traffic.q_req[u];
  const double amp = std::sqrt(tx_power);
  for (Index c = 0; c < hbar.cols(); ++c) {
    for (Index r = 0; r < hbar.rows(); ++r) append_complex(o, at, amp * hbar(r, c));
  }
  return o;
}

VectorXd local_observation(int bs, int n_users, const MatrixXcd& hbar, const VectorXd* next_queue,
                           const TrafficConfig* traffic, double tx_power) {
  const Index q_dim = next_queue ? n_users : 0;
  VectorXd o(q_dim + 2 * n_users * n_users);
  Index at = 0;
  if (next_queue) {
    for (int u = 0; u < n_users; ++u) o[at++] = (*next_queue)[u] / traffic->q_req[u];
  }
  const double amp = std::sqrt(tx_power);
  const auto rows = hbar.middleRows(static_cast<Index>(bs) * n_users, n_users);
  for (Index c = 0; c < rows.cols(); ++c) {
    for (Index r = 0; r < rows.rows(); ++r) append_complex(o, at, amp * rows(r, c));
  }
  return o;
}

History::History(int window, Index obs_dim, Index slots)
    : window_(window), obs_dim_(obs_dim), slots_(slots), entry_(obs_dim + slots + 1) {
  if (window < 1) throw ConfigError("history window must be at least 1");
}

void History::push(const VectorXd& observation, std::size_t slot, double reward) {
  if (observation.size() != obs_dim_) throw ShapeError("observation has the wrong length");
  if (slot >= static_cast<std::size_t>(slots_)) throw InvalidAction("action slot outside the one-hot range");
  VectorXd e = VectorXd::Zero(entry_);
  e.head(obs_dim_) = observation;
  e[obs_dim_ + static_cast<Index>(slot)] = 1.0;
  e[entry_ - 1] = reward;
  entries_.insert(entries_.begin(), std::move(e));
  if (static_cast<int>(entries_.size()) > window_) entries_.pop_back();
}

VectorXd History::state() const {
  VectorXd s = VectorXd::Zero(state_dim());
  for (std::size_t i = 0; i < entries_.size(); ++i) s.segment(static_cast<Index>(i) * entry_, entry_) = entries_[i];
  return s;
}

namespace {

struct Dims {
  int k = 0;
  std::size_t local_slots = 0;   // k^U
  std::size_t central_slots = 0; // (k^U)^B
  Index central_obs = 0;
  Index local_obs = 0;  // without queues
};

Dims dims_of(const World& world, Scheme scheme) {
  Dims d;
  const int users = world.n_users(), n_bs = world.n_bs();
  d.k = candidate_count(world.scenario, scheme);
  d.local_slots = ipow(static_cast<std::size_t>(d.k), users);
  const long double central = std::pow(static_cast<long double>(d.local_slots), n_bs);
  const std::size_t cap = world.scenario.candidates.action_cap;
  if (is_learning(scheme) || uses_candidates(scheme)) {
    if (central > static_cast<long double>(cap)) {
      throw ConfigError("output slot count (K^U)^B = " + std::to_string(static_cast<double>(central)) +
                        " exceeds candidates.action_cap = " + std::to_string(cap) + " (K=" + std::to_string(d.k) +
                        ", U=" + std::to_string(users) + ", B=" + std::to_string(n_bs) + ")");
    }
    d.central_slots = static_cast<std::size_t>(central);
  }
  d.central_obs = users + 2 * static_cast<Index>(n_bs) * users * users;
  d.local_obs = 2 * static_cast<Index>(users) * users;
  return d;
}

}  // namespace

std::uint64_t layout_fingerprint(const World& world, Scheme scheme) {
  const Dims d = dims_of(world, scheme);
  std::uint64_t h = fnv1a(to_string(scheme));
  h = mix(h, static_cast<std::uint64_t>(world.n_bs()));
  h = mix(h, static_cast<std::uint64_t>(world.n_users()));
  h = mix(h, static_cast<std::uint64_t>(d.k));
  h = mix(h, static_cast<std::uint64_t>(world.n_beams()));
  h = mix(h, static_cast<std::uint64_t>(world.scenario.episode.history));
  h = mix(h, fnv1a(scheme == Scheme::sba_d3qn ? "sba" : world.scenario.candidates.mode));
  return h;
}

AgentSet make_agents(const World& world, Scheme scheme, std::optional<Predictor> predictor, Rng& rng) {
  const Scenario& sc = world.scenario;
  const Dims d = dims_of(world, scheme);
  const int w = sc.episode.history;
  AgentSet a;
  a.scheme = scheme;
  a.predictor = std::move(predictor);
  a.layout = layout_fingerprint(world, scheme);
  const Index local_slots = static_cast<Index>(d.local_slots);
  switch (scheme) {
    case Scheme::wbr_d3qn:
    case Scheme::sba_d3qn: {
      const Index slots = static_cast<Index>(d.central_slots);
      a.central = QNetwork(w * (d.central_obs + slots + 1), slots, sc.d3qn.hidden, sc.d3qn.dueling, rng);
      break;
    }
    case Scheme::d_ddqn:
      for (int b = 0; b < world.n_bs(); ++b) {
        a.local.emplace_back(w * (d.local_obs + local_slots + 1), local_slots, sc.ddqn.hidden, sc.ddqn.dueling, rng);
      }
      break;
    case Scheme::qmix: {
      const Index dim = w * (world.n_users() + d.local_obs + local_slots + 1);
      a.qmix = QmixNets(std::vector<Index>(world.n_bs(), dim), std::vector<Index>(world.n_bs(), local_slots), sc.qmix,
                        rng);
      break;
    }
    default:
      break;
  }
  return a;
}

struct Learner {
  AgentSet* online = nullptr;
  QNetwork central_target;
  std::vector<QNetwork> local_target;
  QmixNets qmix_target;
  nn::Sgdm central_opt;
  std::vector<nn::Sgdm> local_opt;
  nn::Sgdm qmix_opt;
  std::optional<ReplayBuffer<Transition>> central_buffer;
  std::vector<ReplayBuffer<Transition>> local_buffer;
  std::optional<ReplayBuffer<JointTransition>> joint_buffer;
  TargetSync central_sync{1};
  std::vector<TargetSync> local_sync;
  Rng replay_rng;
  std::int64_t env_steps = 0;
};

EpisodeOutcome run_episode(const World& world, std::uint64_t index, const AgentSet& agents, Learner* learner,
                           double epsilon) {
  const Scenario& sc = world.scenario;
  const Scheme scheme = agents.scheme;
  const int users = world.n_users(), n_bs = world.n_bs(), m = world.n_beams();
  const double tx = sc.power.tx_power;
  const Phase phase = learner ? Phase::training : Phase::execution;
  Episode ep(world, index);
  Rng policy = make_stream(world.seed, learner ? "explore" : "policy", index);
  EpisodeOutcome out;

  const Dims d = dims_of(world, scheme);
  EffectiveActionSpace space;
  if (uses_candidates(scheme)) {
    const Predictor* pred = agents.predictor ? &*agents.predictor : nullptr;
    const std::string mode = scheme == Scheme::sba_d3qn ? "sba" : sc.candidates.mode;
    space = build_action_space(candidate_rankings(world, ep.channel(), pred, mode), d.k, sc.candidates.action_cap);
    for (int b = 0; b < n_bs; ++b) out.widened = out.widened || space.bs(b).widened;
    out.action_space = space.fingerprint();
  }
  const SlotList valid = uses_candidates(scheme) ? std::make_shared<const std::vector<std::size_t>>(space.valid_slots())
                                                 : SlotList{};
  std::vector<SlotList> local_valid;
  for (int b = 0; b < n_bs && uses_candidates(scheme); ++b) {
    const auto& s = space.bs(b).slots;
    local_valid.push_back(std::make_shared<const std::vector<std::size_t>>(s.begin(), s.end()));
  }

  int n_tr = training_symbols(scheme, users, m);
  if (scheme == Scheme::hdlo) {
    int most = 0;
    for (int b = 0; b < n_bs; ++b) most = std::max(most, trained_beams(space.bs(b)));
    n_tr = training_symbols(scheme, users, m, most);
  }
  out.training_symbols = n_tr;
  const int hdlo_bound = std::min(d.k * users, m);

  const int w = sc.episode.history;
  const bool with_queue = scheme == Scheme::qmix;
  History central(w, d.central_obs, static_cast<Index>(std::max<std::size_t>(d.central_slots, 1)));
  std::vector<History> local;
  for (int b = 0; b < n_bs; ++b) {
    local.emplace_back(w, d.local_obs + (with_queue ? users : 0), static_cast<Index>(std::max<std::size_t>(d.local_slots, 1)));
  }
  const double rscale = sc.episode.reward_scale;
  double loss_sum = 0.0;

  for (int t = 1; t <= sc.episode.slots; ++t) {
    BeamAssignment assignment;
    std::size_t central_slot = 0;
    std::vector<std::size_t> local_slots(n_bs, 0);
    std::vector<VectorXd> local_states;
    VectorXd central_state;
    switch (scheme) {
      case Scheme::wbr_d3qn:
      case Scheme::sba_d3qn: {
        central_state = central.state();
        std::size_t id;
        if (t == 1) {
          id = random_select(space, policy);
        } else {
          id = select_action(agents.central.q_values(central_state, *valid), epsilon, policy, phase);
        }
        central_slot = space.slot(id);
        assignment = space.assignment(id);
        break;
      }
      case Scheme::d_ddqn:
      case Scheme::qmix: {
        std::vector<std::size_t> idx(n_bs);
        for (int b = 0; b < n_bs; ++b) {
          local_states.push_back(local[b].state());
          if (t == 1) {
            idx[b] = uniform_index(policy, space.bs(b).size());
          } else {
            const QNetwork& net = scheme == Scheme::qmix ? agents.qmix.local(b) : agents.local[b];
            idx[b] = select_action(net.q_values(local_states[b], *local_valid[b]), epsilon, policy, phase);
          }
          local_slots[b] = static_cast<std::size_t>(space.bs(b).slots[idx[b]]);
        }
        assignment = space.assignment(idx);
        break;
      }
      case Scheme::hdlo:
        assignment = space.assignment(hdlo_select(ep.queue(), ep.channel(), space, world.codebooks.narrow, tx));
        for (int b = 0; b < n_bs; ++b) {
          if (trained_beams(space.bs(b)) > hdlo_bound) ++out.hdlo_bound_violations;
        }
        break;
      case Scheme::lbs: {
        PowerConfig power = sc.power;
        power.training_symbols = n_tr;
        const Selection s = lbs_select(ep.queue(), ep.channel(), world.codebooks.narrow, sc.candidates.k, power,
                                       sc.candidates.action_cap);
        assignment = s.assignment;
        out.widened = out.widened || s.widened;
        break;
      }
      case Scheme::lcb: {
        PowerConfig power = sc.power;
        power.training_symbols = n_tr;
        assignment = lcb_select(ep.queue(), ep.channel(), world.codebooks.narrow, power, sc.candidates.action_cap)
                         .assignment;
        break;
      }
      case Scheme::random:
        assignment = space.assignment(random_select(space, policy));
        break;
      case Scheme::strongest:
        assignment = space.assignment(strongest_select(space));
        break;
    }

    std::vector<double> local_rewards;
    if (scheme == Scheme::d_ddqn) {
      VectorXd q_req = Eigen::Map<const VectorXd>(sc.traffic.q_req.data(), users);
      for (int b = 0; b < n_bs; ++b) {
        local_rewards.push_back(
            fd_reward(estimated_rates(assignment.beams[b], ep.channel(), b, world.codebooks.narrow, tx), q_req));
      }
    }

    const StepResult r = ep.step(assignment, n_tr);
    if (r.rates.degenerate) ++out.degenerate_slots;
    out.mean_reward += r.reward;
    out.mean_backlog += r.backlog;
    out.mean_violations += r.violations;
    const bool terminal = t == sc.episode.slots;

    switch (scheme) {
      case Scheme::wbr_d3qn:
      case Scheme::sba_d3qn:
        central.push(central_observation(r.next_queue, r.hbar, sc.traffic, tx), central_slot, r.reward * rscale);
        if (learner) {
          learner->central_buffer->push(
              Transition{central_state, central_slot, r.reward * rscale, central.state(), terminal, valid});
          const DqnHyper& h = sc.d3qn;
          if (++learner->env_steps % h.train_every == 0 &&
              learner->central_buffer->size() >= static_cast<std::size_t>(h.batch)) {
            loss_sum += double_q_train_step(learner->online->central, learner->central_target, learner->central_opt,
                                            *learner->central_buffer, h.batch, h.gamma, learner->replay_rng);
            ++out.train_steps;
            if (learner->central_sync.tick()) learner->central_target = learner->online->central;
          }
        }
        break;
      case Scheme::d_ddqn: {
        const DqnHyper& h = sc.ddqn;
        const bool train_now = learner && ++learner->env_steps % h.train_every == 0;
        for (int b = 0; b < n_bs; ++b) {
          const double rb = local_rewards[b] * rscale;
          local[b].push(local_observation(b, users, r.hbar, nullptr, nullptr, tx), local_slots[b], rb);
          if (!learner) continue;
          learner->local_buffer[b].push(
              Transition{local_states[b], local_slots[b], rb, local[b].state(), terminal, local_valid[b]});
          if (train_now && learner->local_buffer[b].size() >= static_cast<std::size_t>(h.batch)) {
            loss_sum += double_q_train_step(learner->online->local[b], learner->local_target[b],
                                            learner->local_opt[b], learner->local_buffer[b], h.batch, h.gamma,
                                            learner->replay_rng) /
                        n_bs;
            if (b == 0) ++out.train_steps;
            if (learner->local_sync[b].tick()) learner->local_target[b] = learner->online->local[b];
          }
        }
        break;
      }
      case Scheme::qmix: {
        std::vector<VectorXd> next_states;
        for (int b = 0; b < n_bs; ++b) {
          local[b].push(local_observation(b, users, r.hbar, &r.next_queue, &sc.traffic, tx), local_slots[b],
                        r.reward * rscale);
          next_states.push_back(local[b].state());
        }
        if (learner) {
          learner->joint_buffer->push(JointTransition{local_states, local_slots, r.reward * rscale,
                                                      std::move(next_states), terminal, local_valid});
          const QmixHyper& h = sc.qmix;
          if (++learner->env_steps % h.train_every == 0 &&
              learner->joint_buffer->size() >= static_cast<std::size_t>(h.batch)) {
            loss_sum += qmix_train_step(learner->online->qmix, learner->qmix_target, learner->qmix_opt,
                                        *learner->joint_buffer, h.batch, h.gamma, learner->replay_rng);
            ++out.train_steps;
          }
        }
        break;
      }
      default:
        break;
    }
  }
  const double slots = sc.episode.slots;
  out.mean_reward /= slots;
  out.mean_backlog /= slots;
  out.mean_violations /= slots;
  out.mean_loss = out.train_steps > 0 ? loss_sum / out.train_steps : 0.0;
  out.users = episode_metrics(ep.trace(), sc.traffic);
  out.trace = ep.trace();
  return out;
}

namespace {

std::int64_t decay_episodes(const TrainConfig& t, int episodes) {
  return static_cast<std::int64_t>(std::llround(t.epsilon_fraction * episodes));
}

}  // namespace

TrainResult train_agents(const World& world, Scheme scheme, std::optional<Predictor> predictor, int episodes,
                         std::uint64_t first_episode) {
  if (!is_learning(scheme)) throw ConfigError("scheme '" + to_string(scheme) + "' has nothing to train");
  const Scenario& sc = world.scenario;
  Rng init = make_stream(world.seed, "init");
  TrainResult result;
  result.agents = make_agents(world, scheme, std::move(predictor), init);
  AgentSet& a = result.agents;

  Learner learner;
  learner.online = &a;
  learner.replay_rng = make_stream(world.seed, "replay");
  switch (scheme) {
    case Scheme::wbr_d3qn:
    case Scheme::sba_d3qn:
      learner.central_target = a.central;
      learner.central_opt = nn::Sgdm(a.central.network().parameter_count(), sc.d3qn.learning_rate, sc.d3qn.momentum);
      learner.central_opt.set_max_grad_norm(sc.d3qn.max_grad_norm);
      learner.central_buffer.emplace(sc.d3qn.buffer);
      learner.central_sync = TargetSync(sc.d3qn.target_period);
      break;
    case Scheme::d_ddqn:
      for (auto& net : a.local) {
        learner.local_target.push_back(net);
        learner.local_opt.emplace_back(net.network().parameter_count(), sc.ddqn.learning_rate, sc.ddqn.momentum);
        learner.local_opt.back().set_max_grad_norm(sc.ddqn.max_grad_norm);
        learner.local_buffer.emplace_back(sc.ddqn.buffer);
        learner.local_sync.emplace_back(sc.ddqn.target_period);
      }
      break;
    case Scheme::qmix:
      learner.qmix_target = a.qmix;
      learner.qmix_opt = nn::Sgdm(a.qmix.parameter_count(), sc.qmix.learning_rate, sc.qmix.momentum);
      learner.qmix_opt.set_max_grad_norm(sc.qmix.max_grad_norm);
      learner.joint_buffer.emplace(sc.qmix.buffer);
      break;
    default:
      break;
  }

  const EpsilonSchedule schedule{sc.train.epsilon_start, sc.train.epsilon_end, decay_episodes(sc.train, episodes)};
  TargetSync episode_sync(sc.qmix.target_period_episodes);
  for (int e = 0; e < episodes; ++e) {
    const double eps = schedule.value(e);
    const EpisodeOutcome o = run_episode(world, first_episode + static_cast<std::uint64_t>(e), a, &learner, eps);
    if (scheme == Scheme::qmix && episode_sync.tick()) learner.qmix_target = a.qmix;
    result.curve.push_back({e, o.mean_reward, o.mean_loss, eps});
  }
  return result;
}

EvalResult evaluate(const World& world, const AgentSet& agents, int n_episodes, std::uint64_t first_episode,
                    int workers, bool keep_traces) {
  if (n_episodes < 1) throw ConfigError("evaluation needs at least one episode");
  if (is_learning(agents.scheme) && agents.layout != layout_fingerprint(world, agents.scheme)) {
    throw ConfigError("networks were trained for a different action-slot layout");
  }
  std::vector<EpisodeOutcome> outcomes(n_episodes);
  workers = std::max(1, std::min(workers, n_episodes));
  auto work = [&](int w) {
    const AgentSet snapshot = agents;
    for (int e = w; e < n_episodes; e += workers) {
      outcomes[e] = run_episode(world, first_episode + static_cast<std::uint64_t>(e), snapshot, nullptr, 0.0);
      if (!keep_traces) outcomes[e].trace = EpisodeTrace();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  EvalResult r;
  for (auto& o : outcomes) {
    r.episodes.push_back(o.users);
    r.degenerate_slots += o.degenerate_slots;
    r.widened_episodes += o.widened ? 1 : 0;
    r.training_symbols = std::max(r.training_symbols, o.training_symbols);
    r.hdlo_bound_violations += o.hdlo_bound_violations;
  }
  r.rates = satisfaction_rate(r.episodes);
  r.outcomes = std::move(outcomes);
  return r;
}

Predictor train_world_predictor(const World& world, int workers, TrainReport* report,
                                PredictorAccuracy* test_accuracy) {
  const PredictorConfig& pc = world.scenario.predictor;
  const PredictorDataset data =
      build_dataset(world.scenario.channel, world.bs_positions, pc.samples, world.seed, workers);
  PredictorTraining opts = pc.training;
  opts.seed = splitmix64(world.seed ^ pc.training.seed);
  Predictor p = train_predictor(data, pc.split, pc.arch, opts, report);
  if (test_accuracy && pc.split.test > 0) {
    *test_accuracy = evaluate_predictor(p, data, pc.split.train + pc.split.validation, pc.split.test, 2);
  }
  return p;
}

}  // namespace cfbeam
