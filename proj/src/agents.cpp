#include "cfbeam/agents.hpp"

#include <cmath>

namespace cfbeam {

double EpsilonSchedule::value(std::int64_t step) const {
  if (decay_steps <= 0 || step >= decay_steps) return end;
  if (step <= 0) return start;
  return start + (end - start) * static_cast<double>(step) / static_cast<double>(decay_steps);
}

TargetSync::TargetSync(int period) : period_(period) {
  if (period < 1) throw ConfigError("target sync period must be at least 1");
}

bool TargetSync::tick() {
  if (++counter_ < period_) return false;
  counter_ = 0;
  ++syncs_;
  return true;
}

VectorXd dueling_q(double value, const VectorXd& advantages) {
  if (advantages.size() == 0) return advantages;
  return (advantages.array() - advantages.mean() + value).matrix();
}

std::size_t argmax(const VectorXd& values) {
  if (values.size() == 0) throw ConfigError("argmax of an empty vector");
  Index best = 0;
  for (Index i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<std::size_t>(best);
}

std::size_t select_action(const VectorXd& q, double epsilon, Rng& rng, Phase phase) {
  if (q.size() == 0) throw ConfigError("no actions to choose from");
  if (phase == Phase::execution) return argmax(q);
  if (uniform01(rng) < epsilon) return uniform_index(rng, static_cast<std::size_t>(q.size()));
  return argmax(q);
}

QNetwork::QNetwork(Index input_dim, Index slots, const std::vector<int>& hidden, bool dueling, Rng& rng)
    : net_({input_dim}), slots_(slots), dueling_(dueling) {
  if (input_dim < 1 || slots < 1) throw ConfigError("Q network needs a positive input size and slot count");
  for (int h : hidden) net_.dense(h).relu();
  net_.dense(dueling ? slots + 1 : slots);
  net_.initialize(rng);
}

std::size_t QNetwork::position(const std::vector<std::size_t>& valid, std::size_t slot) {
  const auto it = std::find(valid.begin(), valid.end(), slot);
  if (it == valid.end()) throw InvalidAction("slot " + std::to_string(slot) + " is not valid in this interval");
  return static_cast<std::size_t>(it - valid.begin());
}

VectorXd QNetwork::assemble(const Eigen::Ref<const VectorXd>& head, const std::vector<std::size_t>& valid) const {
  VectorXd q(static_cast<Index>(valid.size()));
  const Index offset = dueling_ ? 1 : 0;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (valid[i] >= static_cast<std::size_t>(slots_)) throw InvalidAction("slot outside the network head");
    q[static_cast<Index>(i)] = head[offset + static_cast<Index>(valid[i])];
  }
  return dueling_ ? dueling_q(head[0], q) : q;
}

void QNetwork::assemble_grad(const std::vector<std::size_t>& valid, std::size_t pick, double g,
                             Eigen::Ref<VectorXd> dhead) const {
  if (!dueling_) {
    dhead[static_cast<Index>(valid[pick])] += g;
    return;
  }
  dhead[0] += g;
  const double share = g / static_cast<double>(valid.size());
  for (std::size_t s : valid) dhead[1 + static_cast<Index>(s)] -= share;
  dhead[1 + static_cast<Index>(valid[pick])] += g;
}

VectorXd QNetwork::q_values(const VectorXd& state, const std::vector<std::size_t>& valid) const {
  const MatrixXd head = net_.forward(state);
  return assemble(head.col(0), valid);
}

namespace {

template <typename Get>
MatrixXd stack(std::size_t n, Index rows, Get get) {
  MatrixXd m(rows, static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const VectorXd& v = get(i);
    if (v.size() != rows) throw ShapeError("state of length " + std::to_string(v.size()) + ", expected " +
                                           std::to_string(rows));
    m.col(static_cast<Index>(i)) = v;
  }
  return m;
}

void check_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) throw NumericalError(std::string(what) + " loss is not finite");
}

}  // namespace

LossGrad double_q_loss(const QNetwork& online, const QNetwork& target, const std::vector<const Transition*>& batch,
                       double gamma) {
  const std::size_t n = batch.size();
  const Index dim = online.input_dim();
  const MatrixXd s = stack(n, dim, [&](std::size_t i) -> const VectorXd& { return batch[i]->state; });
  const MatrixXd s_next = stack(n, dim, [&](std::size_t i) -> const VectorXd& { return batch[i]->next_state; });
  nn::Network::Cache cache;
  const MatrixXd head = online.network().forward(s, cache);
  const MatrixXd next_online = online.network().forward(s_next);
  const MatrixXd next_target = target.network().forward(s_next);

  LossGrad out;
  MatrixXd dhead = MatrixXd::Zero(head.rows(), head.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& tr = *batch[i];
    const auto& valid = *tr.valid;
    const Index c = static_cast<Index>(i);
    double y = tr.reward;
    if (!tr.terminal) {
      const std::size_t best = argmax(online.assemble(next_online.col(c), valid));
      y += gamma * target.assemble(next_target.col(c), valid)[static_cast<Index>(best)];
    }
    const std::size_t pick = QNetwork::position(valid, tr.slot);
    const double delta = y - online.assemble(head.col(c), valid)[static_cast<Index>(pick)];
    out.loss += delta * delta;
    online.assemble_grad(valid, pick, -2.0 * delta, dhead.col(c));
  }
  online.network().backward(cache, dhead, out.grad);
  return out;
}

double double_q_train_step(QNetwork& online, const QNetwork& target, nn::Sgdm& opt,
                           const ReplayBuffer<Transition>& buffer, int batch, double gamma, Rng& rng) {
  const auto sample = buffer.sample(static_cast<std::size_t>(batch), rng);
  LossGrad lg = double_q_loss(online, target, sample, gamma);
  check_finite(lg.loss, "double-Q");
  opt.step(online.network().params(), lg.grad);
  return lg.loss;
}

Mixer::Mixer(int n_agents, Index state_dim, const MixerConfig& config, Rng& rng)
    : n_agents_(n_agents), state_dim_(state_dim) {
  if (n_agents < 1 || state_dim < 1) throw ConfigError("mixer needs agents and a state");
  if (config.hyper_hidden < 1) throw ConfigError("hypernetwork width must be positive");
  widths_.push_back(n_agents);
  for (int h : config.hidden) {
    if (h < 1) throw ConfigError("mixer widths must be positive");
    widths_.push_back(h);
  }
  widths_.push_back(1);
  const std::size_t layers = widths_.size() - 1;
  for (std::size_t k = 0; k < layers; ++k) {
    nn::Network w({state_dim});
    w.dense(config.hyper_hidden).relu().dense(widths_[k + 1] * widths_[k]);
    w.initialize(rng);
    weight_hyper_.push_back(std::move(w));
  }
  for (std::size_t k = 0; k + 1 < layers; ++k) {
    nn::Network b({state_dim});
    b.dense(widths_[k + 1]);
    b.initialize(rng);
    bias_hyper_.push_back(std::move(b));
  }
  final_bias_hyper_ = nn::Network({state_dim});
  final_bias_hyper_.dense(config.hyper_hidden).relu().dense(1);
  final_bias_hyper_.initialize(rng);
}

std::vector<const nn::Network*> Mixer::hypernets() const {
  std::vector<const nn::Network*> out;
  for (const auto& n : weight_hyper_) out.push_back(&n);
  for (const auto& n : bias_hyper_) out.push_back(&n);
  out.push_back(&final_bias_hyper_);
  return out;
}

std::vector<nn::Network*> Mixer::hypernets() {
  std::vector<nn::Network*> out;
  for (auto& n : weight_hyper_) out.push_back(&n);
  for (auto& n : bias_hyper_) out.push_back(&n);
  out.push_back(&final_bias_hyper_);
  return out;
}

Index Mixer::parameter_count() const {
  Index n = 0;
  for (const auto* h : hypernets()) n += h->parameter_count();
  return n;
}

VectorXd Mixer::params() const {
  VectorXd flat(parameter_count());
  Index at = 0;
  for (const auto* h : hypernets()) {
    flat.segment(at, h->parameter_count()) = h->params();
    at += h->parameter_count();
  }
  return flat;
}

void Mixer::set_params(const VectorXd& flat) {
  if (flat.size() != parameter_count()) throw ShapeError("mixer parameter vector has the wrong length");
  Index at = 0;
  for (auto* h : hypernets()) {
    h->params() = flat.segment(at, h->parameter_count());
    at += h->parameter_count();
  }
}

MatrixXd Mixer::weight(std::size_t k, const VectorXd& state) const {
  const MatrixXd raw = weight_hyper_.at(k).forward(state);
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
             raw.data(), widths_[k + 1], widths_[k])
      .cwiseAbs();
}

VectorXd Mixer::forward(const MatrixXd& q, const MatrixXd& states) const {
  Cache cache;
  return forward(q, states, cache);
}

VectorXd Mixer::forward(const MatrixXd& q, const MatrixXd& states, Cache& cache) const {
  if (q.rows() != n_agents_ || states.rows() != state_dim_ || q.cols() != states.cols()) {
    throw ShapeError("mixer input does not match its agent count or state size");
  }
  using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  const std::size_t layers = weight_hyper_.size();
  const Index n = q.cols();
  cache.weight.assign(layers, {});
  cache.bias.assign(bias_hyper_.size(), {});
  cache.raw_weights.assign(layers, {});
  cache.activations.assign(layers, {});
  cache.pre.assign(layers - 1, {});
  MatrixXd x = q;
  for (std::size_t k = 0; k < layers; ++k) {
    cache.raw_weights[k] = weight_hyper_[k].forward(states, cache.weight[k]);
    const MatrixXd bias = k + 1 < layers ? MatrixXd(bias_hyper_[k].forward(states, cache.bias[k]))
                                         : MatrixXd(final_bias_hyper_.forward(states, cache.final_bias));
    MatrixXd z(widths_[k + 1], n);
    for (Index i = 0; i < n; ++i) {
      const RowMap raw(cache.raw_weights[k].col(i).data(), widths_[k + 1], widths_[k]);
      z.col(i).noalias() = raw.cwiseAbs() * x.col(i);
    }
    z += bias;
    cache.activations[k] = std::move(x);
    if (k + 1 < layers) {
      cache.pre[k] = z;
      x = z.cwiseMax(0.0);
    } else {
      x = std::move(z);
    }
  }
  return x.row(0).transpose();
}

void Mixer::backward(const Cache& cache, const VectorXd& dqtot, VectorXd& grad, MatrixXd* dq) const {
  using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using RowMapMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  const std::size_t layers = weight_hyper_.size();
  const Index n = dqtot.size();
  if (grad.size() == 0) grad = VectorXd::Zero(parameter_count());
  if (grad.size() != parameter_count()) throw ShapeError("mixer gradient has the wrong length");

  // Offsets of each hypernet inside the flat vector.
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto* h : hypernets()) {
    offsets.push_back(at);
    at += h->parameter_count();
  }
  auto accumulate = [&](const nn::Network& net, const nn::Network::Cache& c, const MatrixXd& dout, std::size_t slot) {
    VectorXd g;
    net.backward(c, dout, g);
    grad.segment(offsets[slot], net.parameter_count()) += g;
  };

  MatrixXd dz = dqtot.transpose();
  for (std::size_t k = layers; k-- > 0;) {
    const Index out = widths_[k + 1], in = widths_[k];
    const MatrixXd& x = cache.activations[k];
    MatrixXd draw(out * in, n);
    MatrixXd dx(in, n);
    for (Index i = 0; i < n; ++i) {
      const RowMap raw(cache.raw_weights[k].col(i).data(), out, in);
      RowMapMut d(draw.col(i).data(), out, in);
      d.noalias() = dz.col(i) * x.col(i).transpose();
      d.array() *= raw.array().sign();
      dx.col(i).noalias() = raw.cwiseAbs().transpose() * dz.col(i);
    }
    accumulate(weight_hyper_[k], cache.weight[k], draw, k);
    if (k + 1 < layers) {
      accumulate(bias_hyper_[k], cache.bias[k], dz, layers + k);
    } else {
      accumulate(final_bias_hyper_, cache.final_bias, dz, offsets.size() - 1);
    }
    if (k > 0) {
      dz = dx.cwiseProduct((cache.pre[k - 1].array() > 0.0).cast<double>().matrix());
    } else if (dq) {
      *dq = std::move(dx);
    }
  }
}

QmixNets::QmixNets(const std::vector<Index>& local_dims, const std::vector<Index>& local_slots,
                   const QmixHyper& hyper, Rng& rng) {
  if (local_dims.size() != local_slots.size() || local_dims.empty()) {
    throw ConfigError("QMIX needs one input size and slot count per agent");
  }
  Index state_dim = 0;
  for (std::size_t b = 0; b < local_dims.size(); ++b) {
    local_.emplace_back(local_dims[b], local_slots[b], hyper.local_hidden, false, rng);
    state_dim += local_dims[b];
  }
  mixer_ = Mixer(static_cast<int>(local_dims.size()), state_dim, hyper.mixer, rng);
}

Index QmixNets::parameter_count() const {
  Index n = mixer_.parameter_count();
  for (const auto& l : local_) n += l.network().parameter_count();
  return n;
}

VectorXd QmixNets::params() const {
  VectorXd flat(parameter_count());
  Index at = 0;
  for (const auto& l : local_) {
    flat.segment(at, l.network().parameter_count()) = l.network().params();
    at += l.network().parameter_count();
  }
  flat.tail(mixer_.parameter_count()) = mixer_.params();
  return flat;
}

void QmixNets::set_params(const VectorXd& flat) {
  if (flat.size() != parameter_count()) throw ShapeError("QMIX parameter vector has the wrong length");
  Index at = 0;
  for (auto& l : local_) {
    l.network().params() = flat.segment(at, l.network().parameter_count());
    at += l.network().parameter_count();
  }
  mixer_.set_params(flat.tail(mixer_.parameter_count()));
}

VectorXd concat(const std::vector<VectorXd>& parts) {
  Index n = 0;
  for (const auto& p : parts) n += p.size();
  VectorXd out(n);
  Index at = 0;
  for (const auto& p : parts) {
    out.segment(at, p.size()) = p;
    at += p.size();
  }
  return out;
}

LossGrad qmix_loss(const QmixNets& online, const QmixNets& target, const std::vector<const JointTransition*>& batch,
                   double gamma) {
  const std::size_t n = batch.size();
  const int agents = online.n_agents();
  const Index cols = static_cast<Index>(n);
  MatrixXd q_taken(agents, cols), q_next(agents, cols);
  std::vector<nn::Network::Cache> caches(agents);
  std::vector<MatrixXd> heads(agents);
  std::vector<std::size_t> picks(n * agents);
  MatrixXd global(online.state_dim(), cols), global_next(online.state_dim(), cols);

  Index row = 0;
  for (int b = 0; b < agents; ++b) {
    const QNetwork& net = online.local(b);
    const Index dim = net.input_dim();
    const MatrixXd s = stack(n, dim, [&](std::size_t i) -> const VectorXd& { return batch[i]->states[b]; });
    const MatrixXd sn = stack(n, dim, [&](std::size_t i) -> const VectorXd& { return batch[i]->next_states[b]; });
    global.middleRows(row, dim) = s;
    global_next.middleRows(row, dim) = sn;
    row += dim;
    heads[b] = net.network().forward(s, caches[b]);
    const MatrixXd next_head = target.local(b).network().forward(sn);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& valid = *batch[i]->valid[b];
      const Index c = static_cast<Index>(i);
      const std::size_t pick = QNetwork::position(valid, batch[i]->slots[b]);
      picks[i * agents + b] = pick;
      q_taken(b, c) = net.assemble(heads[b].col(c), valid)[static_cast<Index>(pick)];
      q_next(b, c) = target.local(b).assemble(next_head.col(c), valid).maxCoeff();
    }
  }
  if (row != online.state_dim()) throw ShapeError("local states do not add up to the mixer state");

  Mixer::Cache mcache;
  const VectorXd qtot = online.mixer().forward(q_taken, global, mcache);
  const VectorXd qtot_next = target.mixer().forward(q_next, global_next);
  LossGrad out;
  VectorXd dqtot(cols);
  for (std::size_t i = 0; i < n; ++i) {
    const Index c = static_cast<Index>(i);
    const double y = batch[i]->reward + (batch[i]->terminal ? 0.0 : gamma * qtot_next[c]);
    const double delta = y - qtot[c];
    out.loss += delta * delta;
    dqtot[c] = -2.0 * delta;
  }
  VectorXd mixer_grad;
  MatrixXd dq;
  online.mixer().backward(mcache, dqtot, mixer_grad, &dq);

  out.grad.resize(online.parameter_count());
  Index at = 0;
  for (int b = 0; b < agents; ++b) {
    const QNetwork& net = online.local(b);
    MatrixXd dhead = MatrixXd::Zero(heads[b].rows(), heads[b].cols());
    for (std::size_t i = 0; i < n; ++i) {
      net.assemble_grad(*batch[i]->valid[b], picks[i * agents + b], dq(b, static_cast<Index>(i)),
                        dhead.col(static_cast<Index>(i)));
    }
    VectorXd g;
    net.network().backward(caches[b], dhead, g);
    out.grad.segment(at, g.size()) = g;
    at += g.size();
  }
  out.grad.tail(mixer_grad.size()) = mixer_grad;
  return out;
}

double qmix_train_step(QmixNets& online, const QmixNets& target, nn::Sgdm& opt,
                       const ReplayBuffer<JointTransition>& buffer, int batch, double gamma, Rng& rng) {
  const auto sample = buffer.sample(static_cast<std::size_t>(batch), rng);
  LossGrad lg = qmix_loss(online, target, sample, gamma);
  check_finite(lg.loss, "QMIX");
  VectorXd p = online.params();
  opt.step(p, lg.grad);
  online.set_params(p);
  return lg.loss;
}

double fd_reward(const VectorXd& estimated_rates, const VectorXd& q_req) {
  if (estimated_rates.size() != q_req.size()) throw ConfigError("rate and requirement vectors differ in length");
  return (estimated_rates.array() / q_req.array()).sum();
}

}  // namespace cfbeam
