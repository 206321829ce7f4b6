#include <doctest.h>

#include <map>
#include <set>

#include "cfbeam/agents.hpp"

using namespace cfbeam;

namespace {

VectorXd random_vector(Index n, Rng& rng) {
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = standard_normal(rng);
  return v;
}

SlotList slots(std::vector<std::size_t> v) { return std::make_shared<const std::vector<std::size_t>>(std::move(v)); }

std::vector<Transition> random_transitions(int n, Index dim, Rng& rng) {
  std::vector<Transition> out;
  const SlotList valid = slots({0, 2, 3, 5});
  for (int i = 0; i < n; ++i) {
    const std::size_t slot = (*valid)[uniform_index(rng, valid->size())];
    out.push_back({random_vector(dim, rng), slot, standard_normal(rng), random_vector(dim, rng), i % 3 == 0, valid});
  }
  return out;
}

std::vector<JointTransition> random_joint(int n, const std::vector<Index>& dims, Rng& rng) {
  std::vector<JointTransition> out;
  const std::vector<SlotList> valid{slots({0, 1, 3}), slots({1, 2})};
  for (int i = 0; i < n; ++i) {
    JointTransition t;
    for (std::size_t b = 0; b < dims.size(); ++b) {
      t.states.push_back(random_vector(dims[b], rng));
      t.next_states.push_back(random_vector(dims[b], rng));
      t.slots.push_back((*valid[b])[uniform_index(rng, valid[b]->size())]);
    }
    t.reward = standard_normal(rng);
    t.terminal = i % 4 == 0;
    t.valid = valid;
    out.push_back(std::move(t));
  }
  return out;
}

template <typename T>
std::vector<const T*> pointers(const std::vector<T>& v) {
  std::vector<const T*> out;
  for (const auto& x : v) out.push_back(&x);
  return out;
}

// ||a - n|| / max(||a||, ||n||)
double relative_error(const VectorXd& a, const VectorXd& n) {
  return (a - n).norm() / std::max({a.norm(), n.norm(), 1e-12});
}

}  // namespace

TEST_CASE("replay buffer fills then overwrites the oldest entries") {
  ReplayBuffer<int> buf(3);
  for (int i = 0; i < 5; ++i) buf.push(i);
  CHECK(buf.size() == 3);
  CHECK(buf[0] == 3);
  CHECK(buf[1] == 4);
  CHECK(buf[2] == 2);
  ReplayBuffer<int> big(10000);
  for (int i = 0; i < 100; ++i) big.push(i);
  CHECK(big.size() == 100);
  CHECK_THROWS_AS(ReplayBuffer<int>(0), ConfigError);
}

TEST_CASE("replay sampling draws distinct indices uniformly") {
  ReplayBuffer<int> buf(10);
  for (int i = 0; i < 10; ++i) buf.push(i);
  Rng rng = make_stream(1, "replay");
  std::vector<int> counts(10, 0);
  for (int r = 0; r < 20000; ++r) {
    const auto idx = buf.sample_indices(4, rng);
    CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 4);
    for (auto i : idx) ++counts[i];
  }
  for (int c : counts) CHECK(std::abs(c - 8000) < 400);
  CHECK_THROWS_AS(buf.sample_indices(11, rng), ConfigError);
}

TEST_CASE("epsilon decays linearly and monotonically") {
  const EpsilonSchedule e{1.0, 0.05, 100};
  CHECK(e.value(0) == 1.0);
  CHECK(e.value(50) == doctest::Approx(0.525));
  CHECK(e.value(100) == 0.05);
  CHECK(e.value(1000) == 0.05);
  for (int s = 1; s < 120; ++s) CHECK(e.value(s) <= e.value(s - 1));
}

TEST_CASE("target sync fires every period ticks") {
  TargetSync sync(4);
  int fired = 0;
  for (int i = 1; i <= 12; ++i) {
    if (sync.tick()) {
      ++fired;
      CHECK(i % 4 == 0);
    }
  }
  CHECK(fired == 3);
  CHECK(sync.syncs() == 3);
  CHECK_THROWS_AS(TargetSync(0), ConfigError);
}

TEST_CASE("dueling aggregation keeps mean advantage at zero") {
  Rng rng = make_stream(2, "dueling");
  for (int i = 0; i < 100; ++i) {
    const VectorXd a = random_vector(7, rng);
    const double v = standard_normal(rng);
    const VectorXd q = dueling_q(v, a);
    CHECK(std::abs((q.array() - v).mean()) < 1e-6);
    CHECK(((q - a).array() - (v - a.mean())).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("dueling head averages advantages over the valid slots only") {
  Rng rng = make_stream(3, "mask");
  const QNetwork net(4, 6, {8}, true, rng);
  const VectorXd head = random_vector(7, rng);
  const std::vector<std::size_t> valid{1, 4, 5};
  const VectorXd q = net.assemble(head, valid);
  const double mean = (head[2] + head[5] + head[6]) / 3.0;
  CHECK(q[0] == doctest::Approx(head[0] + head[2] - mean));
  CHECK(q[2] == doctest::Approx(head[0] + head[6] - mean));

  const QNetwork plain(4, 6, {8}, false, rng);
  const VectorXd qp = plain.assemble(head.head(6), valid);
  CHECK(qp[1] == head[4]);
  CHECK_THROWS_AS(QNetwork::position(valid, 2), InvalidAction);
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  VectorXd q(4);
  q << 1.0, 3.0, 3.0, 2.0;
  CHECK(argmax(q) == 1u);
}

TEST_CASE("action selection") {
  VectorXd q(3);
  q << 0.0, 5.0, 1.0;
  Rng rng = make_stream(4, "select");
  CHECK(select_action(q, 1.0, rng, Phase::execution) == 1u);
  CHECK(select_action(q, 0.0, rng, Phase::training) == 1u);
  std::map<std::size_t, int> counts;
  for (int i = 0; i < 30000; ++i) ++counts[select_action(q, 1.0, rng, Phase::training)];
  for (auto [a, c] : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("double-Q loss matches a hand computation") {
  Rng rng = make_stream(5, "dq-hand");
  const QNetwork online(3, 6, {5}, true, rng);
  const QNetwork target(3, 6, {5}, true, rng);
  const auto batch = random_transitions(8, 3, rng);
  const double gamma = 0.9;
  double expected = 0.0;
  for (const auto& t : batch) {
    double y = t.reward;
    if (!t.terminal) {
      const VectorXd qn = online.q_values(t.next_state, *t.valid);
      y += gamma * target.q_values(t.next_state, *t.valid)[static_cast<Index>(argmax(qn))];
    }
    const double q = online.q_values(t.state, *t.valid)[static_cast<Index>(QNetwork::position(*t.valid, t.slot))];
    expected += (y - q) * (y - q);
  }
  CHECK(double_q_loss(online, target, pointers(batch), gamma).loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("double-Q gradient matches finite differences") {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng = make_stream(6, "dq-grad", trial);
    const bool dueling = trial % 2 == 0;
    QNetwork online(4, 6, {6, 5}, dueling, rng);
    QNetwork target(4, 6, {6, 5}, dueling, rng);
    // Zero initial biases leave exact ties between actions behind dead units.
    online.network().params() = 0.5 * random_vector(online.network().parameter_count(), rng);
    target.network().params() = 0.5 * random_vector(target.network().parameter_count(), rng);
    const auto batch = random_transitions(5, 4, rng);
    const auto ptrs = pointers(batch);
    const LossGrad lg = double_q_loss(online, target, ptrs, 0.95);
    VectorXd fd(lg.grad.size());
    const double eps = 1e-6;
    for (Index i = 0; i < fd.size(); ++i) {
      const double orig = online.network().params()[i];
      online.network().params()[i] = orig + eps;
      const double up = double_q_loss(online, target, ptrs, 0.95).loss;
      online.network().params()[i] = orig - eps;
      const double down = double_q_loss(online, target, ptrs, 0.95).loss;
      online.network().params()[i] = orig;
      fd[i] = (up - down) / (2 * eps);
    }
    CHECK(relative_error(lg.grad, fd) < 1e-4);
  }
}

TEST_CASE("mixer weights are non-negative and Q_tot is monotone in every agent") {
  Rng rng = make_stream(7, "mono");
  const Mixer mixer(3, 5, MixerConfig{{16, 8}, 12}, rng);
  for (int i = 0; i < 1000; ++i) {
    const VectorXd s = random_vector(5, rng);
    const VectorXd q = random_vector(3, rng);
    for (std::size_t k = 0; k < mixer.layer_count(); ++k) CHECK(mixer.weight(k, s).minCoeff() >= 0.0);
    const double eps = 1e-5;
    for (int b = 0; b < 3; ++b) {
      VectorXd up = q, down = q;
      up[b] += eps;
      down[b] -= eps;
      const double d = (mixer.forward(up, s)[0] - mixer.forward(down, s)[0]) / (2 * eps);
      CHECK(d >= -1e-9);
    }
  }
}

TEST_CASE("mixer gradients match finite differences") {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng = make_stream(8, "mixer-grad", trial);
    Mixer mixer(2, 3, MixerConfig{{4}, 5}, rng);
    MatrixXd q(2, 3), s(3, 3);
    for (Index i = 0; i < q.size(); ++i) q.data()[i] = standard_normal(rng);
    for (Index i = 0; i < s.size(); ++i) s.data()[i] = standard_normal(rng);
    const VectorXd w = random_vector(3, rng);
    Mixer::Cache cache;
    mixer.forward(q, s, cache);
    VectorXd grad;
    MatrixXd dq;
    mixer.backward(cache, w, grad, &dq);
    VectorXd p = mixer.params(), fd(p.size());
    const double eps = 1e-6;
    for (Index i = 0; i < p.size(); ++i) {
      VectorXd up = p, down = p;
      up[i] += eps;
      down[i] -= eps;
      mixer.set_params(up);
      const double fu = w.dot(mixer.forward(q, s));
      mixer.set_params(down);
      const double fdn = w.dot(mixer.forward(q, s));
      fd[i] = (fu - fdn) / (2 * eps);
    }
    mixer.set_params(p);
    CHECK(relative_error(grad, fd) < 1e-4);
    for (Index i = 0; i < q.size(); ++i) {
      MatrixXd up = q, down = q;
      up.data()[i] += eps;
      down.data()[i] -= eps;
      const double d = (w.dot(mixer.forward(up, s)) - w.dot(mixer.forward(down, s))) / (2 * eps);
      CHECK(dq.data()[i] == doctest::Approx(d).epsilon(1e-5));
    }
  }
}

TEST_CASE("QMIX loss mixes per-agent target maxima through the target mixer") {
  Rng rng = make_stream(9, "qmix-hand");
  const QmixHyper h{{6}, {{5}, 4}};
  const std::vector<Index> dims{3, 2};
  const QmixNets online(dims, {4, 3}, h, rng);
  const QmixNets target(dims, {4, 3}, h, rng);
  const auto batch = random_joint(6, dims, rng);
  double expected = 0.0;
  for (const auto& t : batch) {
    VectorXd q(2), qn(2);
    for (int b = 0; b < 2; ++b) {
      q[b] = online.local(b).q_values(t.states[b], *t.valid[b])[static_cast<Index>(
          QNetwork::position(*t.valid[b], t.slots[b]))];
      qn[b] = target.local(b).q_values(t.next_states[b], *t.valid[b]).maxCoeff();
    }
    const double y = t.reward + (t.terminal ? 0.0 : 0.9 * target.mixer().forward(qn, concat(t.next_states))[0]);
    const double d = y - online.mixer().forward(q, concat(t.states))[0];
    expected += d * d;
  }
  CHECK(qmix_loss(online, target, pointers(batch), 0.9).loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("QMIX gradient matches finite differences") {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng = make_stream(10, "qmix-grad", trial);
    const QmixHyper h{{5}, {{4}, 3}};
    const std::vector<Index> dims{3, 2};
    QmixNets online(dims, {4, 3}, h, rng);
    const QmixNets target(dims, {4, 3}, h, rng);
    const auto batch = random_joint(4, dims, rng);
    const auto ptrs = pointers(batch);
    const LossGrad lg = qmix_loss(online, target, ptrs, 0.9);
    VectorXd p = online.params(), fd(p.size());
    const double eps = 1e-6;
    for (Index i = 0; i < p.size(); ++i) {
      VectorXd up = p, down = p;
      up[i] += eps;
      down[i] -= eps;
      online.set_params(up);
      const double fu = qmix_loss(online, target, ptrs, 0.9).loss;
      online.set_params(down);
      const double fdn = qmix_loss(online, target, ptrs, 0.9).loss;
      fd[i] = (fu - fdn) / (2 * eps);
    }
    CHECK(relative_error(lg.grad, fd) < 1e-4);
  }
}

TEST_CASE("training steps reduce the TD loss on a fixed problem") {
  Rng rng = make_stream(11, "toy");
  QNetwork online(3, 6, {16}, true, rng);
  ReplayBuffer<Transition> buf(64);
  for (const auto& t : random_transitions(64, 3, rng)) {
    Transition x = t;
    x.terminal = true;
    buf.push(x);
  }
  nn::Sgdm opt(online.network().parameter_count(), 0.002, 0.0);
  const QNetwork target = online;
  std::vector<const Transition*> all;
  for (std::size_t i = 0; i < buf.size(); ++i) all.push_back(&buf[i]);
  const double before = double_q_loss(online, target, all, 0.9).loss;
  for (int i = 0; i < 300; ++i) double_q_train_step(online, target, opt, buf, 32, 0.9, rng);
  CHECK(double_q_loss(online, target, all, 0.9).loss < 0.5 * before);
}

TEST_CASE("fully distributed reward is sum of rate over requirement") {
  VectorXd r(2), q(2);
  r << 4.0, 9.0;
  q << 2.0, 3.0;
  CHECK(fd_reward(r, q) == doctest::Approx(5.0));
  CHECK_THROWS_AS(fd_reward(r, VectorXd::Ones(3)), ConfigError);
}

TEST_CASE("concat stacks vectors") {
  VectorXd a(2), b(1);
  a << 1, 2;
  b << 3;
  CHECK(concat({a, b}) == Eigen::Vector3d(1, 2, 3));
}
