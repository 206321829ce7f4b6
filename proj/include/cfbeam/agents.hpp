#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cfbeam/neural.hpp"
#include "cfbeam/random.hpp"

namespace cfbeam {

// Network output slots that are valid in the current long-timescale interval,
// listed in flat action-id order.
using SlotList = std::shared_ptr<const std::vector<std::size_t>>;

struct Transition {
  VectorXd state;
  std::size_t slot = 0;
  double reward = 0.0;
  VectorXd next_state;
  bool terminal = false;
  SlotList valid;  // shared by state and next_state
};

// One joint step of B agents; the mixer state is the concatenation of the
// local states.
struct JointTransition {
  std::vector<VectorXd> states;
  std::vector<std::size_t> slots;
  double reward = 0.0;
  std::vector<VectorXd> next_states;
  bool terminal = false;
  std::vector<SlotList> valid;
};

template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[next_] = std::move(item);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const T& operator[](std::size_t i) const { return items_.at(i); }

  // n distinct indices, each n-subset equally likely (Floyd's algorithm).
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const {
    const std::size_t size = items_.size();
    if (n > size) throw ConfigError("cannot sample " + std::to_string(n) + " items from " + std::to_string(size));
    std::vector<std::size_t> out;
    out.reserve(n);
    for (std::size_t j = size - n; j < size; ++j) {
      const std::size_t t = uniform_index(rng, j + 1);
      out.push_back(std::find(out.begin(), out.end(), t) == out.end() ? t : j);
    }
    return out;
  }

  std::vector<const T*> sample(std::size_t n, Rng& rng) const {
    std::vector<const T*> out;
    for (std::size_t i : sample_indices(n, rng)) out.push_back(&items_[i]);
    return out;
  }

 private:
  std::vector<T> items_;
  std::size_t capacity_;
  std::size_t next_ = 0;
};

// Linear decay from start to end over decay_steps, then constant.
struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::int64_t decay_steps = 1;

  double value(std::int64_t step) const;
};

// Hard target copies every `period` ticks.
class TargetSync {
 public:
  explicit TargetSync(int period = 4);
  // Returns true when a copy is due after this tick.
  bool tick();
  int period() const { return period_; }
  int syncs() const { return syncs_; }

 private:
  int period_;
  int counter_ = 0;
  int syncs_ = 0;
};

// Q = V + A - mean(A).
VectorXd dueling_q(double value, const VectorXd& advantages);

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(const VectorXd& values);

enum class Phase { training, execution };

// epsilon-greedy over the ids of q during training, greedy during execution.
std::size_t select_action(const VectorXd& q, double epsilon, Rng& rng, Phase phase);

// Feed-forward Q network over a fixed number of output slots. A dueling head
// emits [V, A_0..A_{S-1}] and the advantage mean runs over the valid slots
// only; a plain head emits Q directly.
class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(Index input_dim, Index slots, const std::vector<int>& hidden, bool dueling, Rng& rng);

  Index input_dim() const { return net_.input_size(); }
  Index slots() const { return slots_; }
  bool dueling() const { return dueling_; }
  nn::Network& network() { return net_; }
  const nn::Network& network() const { return net_; }

  // Q over the valid slots, in list order.
  VectorXd q_values(const VectorXd& state, const std::vector<std::size_t>& valid) const;
  // Same, from one precomputed head column.
  VectorXd assemble(const Eigen::Ref<const VectorXd>& head, const std::vector<std::size_t>& valid) const;
  // d(Q of valid[pick]) / d(head) scaled by g, added into dhead.
  void assemble_grad(const std::vector<std::size_t>& valid, std::size_t pick, double g,
                     Eigen::Ref<VectorXd> dhead) const;
  // Position of `slot` inside valid; InvalidAction when absent.
  static std::size_t position(const std::vector<std::size_t>& valid, std::size_t slot);

 private:
  nn::Network net_;
  Index slots_ = 0;
  bool dueling_ = false;
};

struct LossGrad {
  double loss = 0.0;
  VectorXd grad;
};

// Summed squared TD error with the double-Q target
// r + gamma * Q_target(s', argmax_a' Q_online(s', a')), no bootstrap on terminal steps.
LossGrad double_q_loss(const QNetwork& online, const QNetwork& target, const std::vector<const Transition*>& batch,
                       double gamma);

struct DqnHyper {
  std::vector<int> hidden{128, 256, 256};
  bool dueling = true;
  double learning_rate = 0.005;
  double momentum = 0.0;
  int batch = 256;
  std::size_t buffer = 10000;
  double gamma = 0.99;
  int target_period = 4;  // steps between hard target copies
  double max_grad_norm = 0.0;
  int train_every = 1;  // environment steps per gradient step
};

// One mini-batch step; returns the loss before the step.
double double_q_train_step(QNetwork& online, const QNetwork& target, nn::Sgdm& opt,
                           const ReplayBuffer<Transition>& buffer, int batch, double gamma, Rng& rng);

struct MixerConfig {
  std::vector<int> hidden{256, 256};
  int hyper_hidden = 64;
};

// Monotone mixing network. Layer weights are |hypernet(s)|, biases of hidden
// layers are linear in s and the output bias comes from a two-layer hypernet.
// Hidden layers use ReLU.
class Mixer {
 public:
  Mixer() = default;
  Mixer(int n_agents, Index state_dim, const MixerConfig& config, Rng& rng);

  int n_agents() const { return n_agents_; }
  Index state_dim() const { return state_dim_; }
  std::size_t layer_count() const { return weight_hyper_.size(); }

  struct Cache {
    std::vector<nn::Network::Cache> weight, bias;
    nn::Network::Cache final_bias;
    std::vector<MatrixXd> raw_weights;  // hypernet outputs before abs, per layer
    std::vector<MatrixXd> activations;  // per layer input, columns = samples
    std::vector<MatrixXd> pre;          // per hidden layer pre-activation
  };

  // q: n_agents x N, states: state_dim x N. Returns Q_tot per column.
  VectorXd forward(const MatrixXd& q, const MatrixXd& states) const;
  VectorXd forward(const MatrixXd& q, const MatrixXd& states, Cache& cache) const;
  // Accumulates d(loss)/d(params) into grad given d(loss)/d(Q_tot), and
  // optionally d(loss)/d(q).
  void backward(const Cache& cache, const VectorXd& dqtot, VectorXd& grad, MatrixXd* dq = nullptr) const;

  // Mixing weight matrix of layer k for one state (element-wise non-negative).
  MatrixXd weight(std::size_t k, const VectorXd& state) const;

  Index parameter_count() const;
  VectorXd params() const;
  void set_params(const VectorXd& flat);
  // Hypernetworks in flat-parameter order: weights per layer, hidden biases, output bias.
  std::vector<const nn::Network*> hypernets() const;
  std::vector<nn::Network*> hypernets();

 private:
  int n_agents_ = 0;
  Index state_dim_ = 0;
  std::vector<Index> widths_;  // n_agents, hidden..., 1
  std::vector<nn::Network> weight_hyper_;
  std::vector<nn::Network> bias_hyper_;
  nn::Network final_bias_hyper_;
};

struct QmixHyper {
  std::vector<int> local_hidden{128, 128};
  MixerConfig mixer;
  double learning_rate = 0.01;
  double momentum = 0.0;
  int batch = 256;
  std::size_t buffer = 50000;
  double gamma = 0.99;
  int target_period_episodes = 2;
  double max_grad_norm = 0.0;
  int train_every = 1;
};

// Local Q networks plus the mixer, with a single flat parameter view
// (local nets in BS order, then the mixer).
class QmixNets {
 public:
  QmixNets() = default;
  QmixNets(const std::vector<Index>& local_dims, const std::vector<Index>& local_slots, const QmixHyper& hyper,
           Rng& rng);

  int n_agents() const { return static_cast<int>(local_.size()); }
  QNetwork& local(int b) { return local_.at(b); }
  const QNetwork& local(int b) const { return local_.at(b); }
  Mixer& mixer() { return mixer_; }
  const Mixer& mixer() const { return mixer_; }
  Index state_dim() const { return mixer_.state_dim(); }

  Index parameter_count() const;
  VectorXd params() const;
  void set_params(const VectorXd& flat);

 private:
  std::vector<QNetwork> local_;
  Mixer mixer_;
};

VectorXd concat(const std::vector<VectorXd>& parts);

// Summed squared TD error on Q_tot. The target mixes each agent's argmax of its
// local target Q through the target mixer.
LossGrad qmix_loss(const QmixNets& online, const QmixNets& target, const std::vector<const JointTransition*>& batch,
                   double gamma);

double qmix_train_step(QmixNets& online, const QmixNets& target, nn::Sgdm& opt,
                       const ReplayBuffer<JointTransition>& buffer, int batch, double gamma, Rng& rng);

// r_b = sum_u rate_u / q_req_u
double fd_reward(const VectorXd& estimated_rates, const VectorXd& q_req);

}  // namespace cfbeam
