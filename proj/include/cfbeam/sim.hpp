#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfbeam/agents.hpp"
#include "cfbeam/beamspace.hpp"
#include "cfbeam/scenario.hpp"
#include "cfbeam/schedulers.hpp"

namespace cfbeam {

enum class Scheme { wbr_d3qn, sba_d3qn, qmix, d_ddqn, hdlo, lbs, lcb, random, strongest };

Scheme parse_scheme(const std::string& name);
std::string to_string(Scheme scheme);
bool is_learning(Scheme scheme);
// Schemes whose action space comes from predicted candidates.
bool uses_candidates(Scheme scheme);

// Quantities fixed for a (scenario, seed) pair: BS sites and codebooks.
struct World {
  Scenario scenario;
  std::uint64_t seed = 0;
  std::vector<Eigen::Vector3d> bs_positions;
  CodebookSet codebooks;

  int n_bs() const { return scenario.channel.n_bs; }
  int n_users() const { return scenario.n_users(); }
  int n_beams() const { return scenario.channel.antennas(); }
};

World make_world(const Scenario& scenario, std::uint64_t seed);

struct StepResult {
  SlotRates rates;
  VectorXd served;      // bits
  VectorXd arrivals;    // bits
  VectorXd next_queue;  // q(t+1)
  MatrixXcd hbar;       // W_RF H(t), BU x U
  double backlog = 0.0;     // sum_u q_u(t+1) / q_req_u
  double violations = 0.0;  // number of users above q_lim
  double reward = 0.0;      // -backlog - delta * violations
};

// r = -sum_u q_u / q_req_u - delta * #{u : q_u > q_lim_u}
double queue_reward(const VectorXd& queue, const TrafficConfig& traffic, double delta, double* backlog = nullptr,
                    double* violations = nullptr);

// One long-timescale interval: user placement, path state and queues are drawn
// from streams keyed by the episode index, so every scheme sees the same
// channels and arrivals.
class Episode {
 public:
  Episode(const World& world, std::uint64_t index);

  int slot() const { return t_; }  // 1-based
  bool done() const { return t_ > slots_; }
  const ChannelRealization& channel() const { return channel_; }
  const VectorXd& queue() const { return queue_; }
  const EpisodeTrace& trace() const { return trace_; }
  const Topology& topology() const { return topology_; }

  // Serves with the given assignment, adds arrivals, advances the fading.
  StepResult step(const BeamAssignment& assignment, int training_symbols);

 private:
  const World* world_;
  int slots_;
  int t_ = 1;
  Topology topology_;
  LongTermState long_term_;
  SmallScaleState small_;
  ChannelRealization channel_;
  VectorXd queue_;
  EpisodeTrace trace_;
  Rng fading_rng_, traffic_rng_;
};

// Per-(BS, user) full beam rankings used to build candidate lists, from the
// channel at the start of the interval.
CandidateSets candidate_rankings(const World& world, const ChannelRealization& reference, const Predictor* predictor,
                                 const std::string& mode);
// Pruned per-BS spaces from rankings truncated to k (widened when infeasible).
EffectiveActionSpace build_action_space(const CandidateSets& rankings, int k, std::size_t cap);
// Candidate list length per scheme: 3 for SBA pruning, K otherwise.
int candidate_count(const Scenario& scenario, Scheme scheme);
// Number of beams HDLO trains at BS b: the union of its action sets.
int trained_beams(const BsActionSpace& actions);

// Training symbols per slot: U for schemes acting in the predicted space, M for
// exhaustive sweeps, max_b |C_b| for HDLO.
int training_symbols(Scheme scheme, int n_users, int n_beams, int hdlo_trained = 0);

// Magnitude-compressed (real, imag) features: z * log1p(|z|) / |z|.
void append_complex(VectorXd& out, Index& at, cplx z);
// q(t+1) / q_req followed by the entries of sqrt(P) * hbar, column-major.
VectorXd central_observation(const VectorXd& next_queue, const MatrixXcd& hbar, const TrafficConfig& traffic,
                             double tx_power);
// Rows of BS b of sqrt(P) * hbar, optionally preceded by q(t+1) / q_req.
VectorXd local_observation(int bs, int n_users, const MatrixXcd& hbar, const VectorXd* next_queue,
                           const TrafficConfig* traffic, double tx_power);

// Most-recent-first window of (observation, action one-hot, reward) triples,
// zero padded before enough history exists.
class History {
 public:
  History(int window, Index obs_dim, Index slots);
  void push(const VectorXd& observation, std::size_t slot, double reward);
  VectorXd state() const;
  Index state_dim() const { return window_ * entry_; }
  void clear() { entries_.clear(); }

 private:
  int window_;
  Index obs_dim_, slots_, entry_;
  std::vector<VectorXd> entries_;  // newest first
};

// Learned parameters of one scheme, plus the predictor when candidates come from it.
struct AgentSet {
  Scheme scheme = Scheme::wbr_d3qn;
  std::optional<Predictor> predictor;
  QNetwork central;             // WBR-D3QN, SBA-D3QN
  std::vector<QNetwork> local;  // D-DDQN
  QmixNets qmix;                // QMIX local nets and mixer
  std::uint64_t layout = 0;     // slot-layout fingerprint the nets were built for
};

// Slot layout fingerprint: B, U, candidate count, M and the candidate mode.
std::uint64_t layout_fingerprint(const World& world, Scheme scheme);

// Fresh networks sized for the scheme.
AgentSet make_agents(const World& world, Scheme scheme, std::optional<Predictor> predictor, Rng& rng);

struct Learner;

struct EpisodeOutcome {
  std::vector<UserMetrics> users;
  EpisodeTrace trace;
  double mean_reward = 0.0;
  double mean_backlog = 0.0;
  double mean_violations = 0.0;
  double mean_loss = 0.0;
  int train_steps = 0;
  int degenerate_slots = 0;
  bool widened = false;
  int training_symbols = 0;  // max over slots
  int hdlo_bound_violations = 0;  // slots where HDLO trained more than min(K U, M) beams
  std::uint64_t action_space = 0;  // fingerprint of the interval's effective action space
};

// Runs one interval. With a learner the agents explore with epsilon and learn;
// without one the policy is greedy (the first action is random in both cases
// for the learning schemes).
EpisodeOutcome run_episode(const World& world, std::uint64_t index, const AgentSet& agents, Learner* learner,
                           double epsilon);

struct CurvePoint {
  int episode = 0;
  double mean_reward = 0.0;
  double loss = 0.0;
  double epsilon = 0.0;
};

struct TrainResult {
  AgentSet agents;
  std::vector<CurvePoint> curve;
};

// Training loop for WBR-D3QN / SBA-D3QN, D-DDQN and QMIX. Episode
// indices for training start at `first_episode`.
TrainResult train_agents(const World& world, Scheme scheme, std::optional<Predictor> predictor, int episodes,
                         std::uint64_t first_episode = 0);

struct EvalResult {
  std::vector<std::vector<UserMetrics>> episodes;
  std::vector<EpisodeOutcome> outcomes;  // traces kept only when requested
  SatisfactionRates rates;
  int degenerate_slots = 0;
  int widened_episodes = 0;
  int training_symbols = 0;
  int hdlo_bound_violations = 0;
};

// Greedy evaluation on episodes [first, first + n). Workers split the episode
// range; results are gathered in episode order.
EvalResult evaluate(const World& world, const AgentSet& agents, int n_episodes, std::uint64_t first_episode,
                    int workers = 1, bool keep_traces = false);

// Episode index offset used for evaluation so it never overlaps training.
inline constexpr std::uint64_t kEvalEpisodeOffset = 1'000'000'000ull;

// Trains a predictor for the world's BS sites from the scenario's dataset settings.
Predictor train_world_predictor(const World& world, int workers = 1, TrainReport* report = nullptr,
                                PredictorAccuracy* test_accuracy = nullptr);

}  // namespace cfbeam
