#include <doctest.h>

#include <set>
#include <sstream>

#include "cfbeam/beamspace.hpp"
#include "unit/oracles.hpp"

using namespace cfbeam;

namespace {

std::vector<std::vector<int>> random_candidates(int users, int k, int m, Rng& rng) {
  std::vector<std::vector<int>> c(users);
  for (auto& list : c) {
    std::vector<int> all(m);
    std::iota(all.begin(), all.end(), 0);
    for (int i = 0; i < k; ++i) std::swap(all[i], all[i + uniform_index(rng, m - i)]);
    list.assign(all.begin(), all.begin() + k);
  }
  return c;
}

ChannelParams small_params() {
  ChannelParams p;
  p.n_bs = 2;
  p.n_users = 2;
  p.m_y = 4;
  p.m_z = 2;
  p.m_wide = 4;
  return p;
}

}  // namespace

TEST_CASE("pruning keeps conflict-free distinct sets") {
  // Two users share f1 and f2: {f1,f1} and {f2,f2} conflict, {f2,f1} repeats {f1,f2}.
  const BsActionSpace s = prune_bs_actions({{1, 2, 7}, {1, 2, 3}});
  CHECK(s.size() == 6);
  const std::set<std::vector<int>> got(s.sets.begin(), s.sets.end());
  const std::set<std::vector<int>> want{{1, 2}, {1, 3}, {2, 3}, {1, 7}, {2, 7}, {3, 7}};
  CHECK(got == want);
  CHECK(s.slot_capacity == 9);
  CHECK(s.slots == std::vector<int>{1, 2, 5, 6, 7, 8});
}

TEST_CASE("pruning equals enumerate-and-filter on random instances") {
  Rng rng = make_stream(1, "prune");
  for (int trial = 0; trial < 500; ++trial) {
    const int users = 1 + static_cast<int>(uniform_index(rng, 4));
    const int k = 1 + static_cast<int>(uniform_index(rng, 3));
    const int m = std::max(k, 2 + static_cast<int>(uniform_index(rng, 6)));
    const auto cand = random_candidates(users, k, m, rng);
    const auto want = oracle::pruned_sets(cand);
    if (want.empty()) {
      CHECK_THROWS_AS(prune_bs_actions(cand), InfeasibleActionSpace);
      continue;
    }
    const BsActionSpace s = prune_bs_actions(cand);
    CHECK(std::set<std::vector<int>>(s.sets.begin(), s.sets.end()) == want);
    CHECK(s.sets.size() == want.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      // Every set is drawn element-wise from the candidates and stored sorted.
      CHECK(std::is_sorted(s.sets[i].begin(), s.sets[i].end()));
      CHECK(s.slots[i] < s.slot_capacity);
      if (i > 0) CHECK(s.slots[i] > s.slots[i - 1]);
    }
  }
}

TEST_CASE("pruning infeasible when all users share one beam") {
  CHECK_THROWS_AS(prune_bs_actions({{3}, {3}}), InfeasibleActionSpace);
  CHECK_THROWS_AS(prune_bs_actions({}), ConfigError);
}

TEST_CASE("widening restores feasibility and caps the size at k^U") {
  const std::vector<std::vector<int>> rankings{{3, 1, 0, 2}, {3, 0, 1, 2}};
  const BsActionSpace s = widen_and_prune(rankings, 1);
  CHECK(s.widened);
  CHECK(s.size() == 1);
  CHECK(s.slot_capacity == 1);
  CHECK(s.sets[0] == std::vector<int>{0, 3});

  const BsActionSpace plain = widen_and_prune({{0, 1}, {2, 3}}, 2);
  CHECK_FALSE(plain.widened);
  CHECK(plain.size() == 4);
}

TEST_CASE("top_k orders by strength and breaks ties toward lower indices") {
  VectorXd s(5);
  s << 0.2, 0.9, 0.5, 0.9, 0.1;
  CHECK(top_k(s, 3) == std::vector<int>{1, 3, 2});
  CHECK(top_k(s, 0).empty());
  CHECK_THROWS_AS(top_k(s, 6), ConfigError);
  MatrixXd grid(2, 3);
  grid << 1, 3, 2, 0, 0, 5;
  const auto c = top_k_candidates(grid, 2);
  CHECK(c[0] == std::vector<int>{1, 2});
  CHECK(c[1] == std::vector<int>{2, 0});
}

TEST_CASE("union of candidates") {
  CHECK(union_of_candidates({{4, 1}, {1, 7}}) == std::vector<int>{1, 4, 7});
}

TEST_CASE("effective action space codec round trips with BS 0 most significant") {
  const BsActionSpace a = prune_bs_actions({{0, 1}, {2, 3}});
  const BsActionSpace b = prune_bs_actions({{5, 6, 7}, {5}});
  const EffectiveActionSpace space({a, b}, 1000);
  CHECK(space.size() == a.size() * b.size());
  for (std::size_t id = 0; id < space.size(); ++id) {
    const auto idx = space.decode(id);
    CHECK(space.encode(idx) == id);
    CHECK(id == idx[0] * b.size() + idx[1]);
    const BeamAssignment asg = space.assignment(id);
    CHECK(asg.beams[0] == a.sets[idx[0]]);
    CHECK(asg.beams[1] == b.sets[idx[1]]);
  }
  CHECK_THROWS_AS(space.decode(space.size()), InvalidAction);
  CHECK_THROWS_AS(space.encode({0, 9}), InvalidAction);
}

TEST_CASE("slots are mixed-radix over per-BS slots and unique") {
  const BsActionSpace a = prune_bs_actions({{0, 1}, {0, 2}});
  const BsActionSpace b = prune_bs_actions({{3, 4}, {4, 5}});
  const EffectiveActionSpace space({a, b}, 1000);
  CHECK(space.slot_capacity() == 16);
  const auto slots = space.valid_slots();
  CHECK(std::set<std::size_t>(slots.begin(), slots.end()).size() == slots.size());
  for (std::size_t id = 0; id < space.size(); ++id) {
    const auto idx = space.decode(id);
    CHECK(slots[id] == static_cast<std::size_t>(a.slots[idx[0]] * 4 + b.slots[idx[1]]));
  }
}

TEST_CASE("action space cap") {
  const BsActionSpace a = prune_bs_actions({{0, 1, 2}, {3, 4, 5}});
  CHECK_THROWS_AS(EffectiveActionSpace({a, a, a}, 100), ConfigError);
  CHECK_NOTHROW(EffectiveActionSpace({a, a}, 100));
}

TEST_CASE("fingerprint separates different spaces") {
  const EffectiveActionSpace x({prune_bs_actions({{0, 1}, {2, 3}})});
  const EffectiveActionSpace y({prune_bs_actions({{0, 1}, {2, 4}})});
  CHECK(x.fingerprint() == EffectiveActionSpace({prune_bs_actions({{0, 1}, {2, 3}})}).fingerprint());
  CHECK(x.fingerprint() != y.fingerprint());
}

TEST_CASE("per-BS normalization divides by the row maximum") {
  MatrixXd g(2, 3);
  g << 1, 4, 2, 0, 0, 0;
  const MatrixXd n = normalize_per_bs(g);
  CHECK(n(0, 1) == 1.0);
  CHECK(n(0, 0) == 0.25);
  CHECK(n.row(1).isZero());
}

TEST_CASE("sweeps measure |f^H h|^2, the wide sweep over the first row") {
  const ChannelParams p = small_params();
  Rng rng = make_stream(2, "sweep");
  const Topology t = generate_topology(p, rng);
  const auto lt = sample_long_term(t, p, rng);
  const auto ss = init_small_scale(lt, p.rho, rng);
  const ChannelRealization ch = assemble_channel(lt, ss, p.m_y, p.m_z);
  const CodebookSet cb = CodebookSet::make(p);
  const MatrixXd narrow = sweep(ch, 1, cb, BeamKind::narrow);
  const MatrixXd wide = sweep(ch, 1, cb, BeamKind::wide);
  CHECK(narrow.cols() == 8);
  CHECK(wide.cols() == 4);
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < 8; ++k) CHECK(narrow(b, k) == doctest::Approx(std::norm(cb.narrow.col(k).dot(ch.block(b, 1)))));
    for (int k = 0; k < 4; ++k) {
      CHECK(wide(b, k) == doctest::Approx(std::norm(cb.wide.col(k).dot(ch.block(b, 1).head(4)))));
    }
  }
}

TEST_CASE("dataset does not depend on the worker count") {
  ChannelParams p = small_params();
  Rng rng = make_stream(3, "topology");
  const auto bs = place_bs(p, rng);
  const PredictorDataset one = build_dataset(p, bs, 40, 9, 1);
  const PredictorDataset three = build_dataset(p, bs, 40, 9, 3);
  CHECK(one.inputs == three.inputs);
  CHECK(one.targets == three.targets);
  CHECK(one.inputs.rows() == 8);
  CHECK(one.targets.rows() == 16);
  CHECK(one.inputs.maxCoeff() <= 1.0);
  CHECK(one.inputs.minCoeff() >= 0.0);
}

TEST_CASE("dataset CSV round trip") {
  ChannelParams p = small_params();
  Rng rng = make_stream(4, "topology");
  const PredictorDataset d = build_dataset(p, place_bs(p, rng), 5, 1);
  std::stringstream ss;
  save_dataset(ss, d);
  const PredictorDataset back = load_dataset(ss, 2, 4, 8);
  CHECK((back.inputs - d.inputs).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((back.targets - d.targets).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("predictor network shape") {
  Rng rng = make_stream(5, "net");
  const nn::Network net = make_predictor_network(3, 8, 32, PredictorArch{}, rng);
  CHECK(net.input_size() == 24);
  CHECK(net.output_size() == 96);
}

TEST_CASE("predictor training lowers validation error and is reproducible") {
  ChannelParams p = small_params();
  Rng rng = make_stream(6, "topology");
  const PredictorDataset d = build_dataset(p, place_bs(p, rng), 300, 2);
  PredictorArch arch;
  arch.dense = {32, 32};
  arch.conv_channels = 4;
  PredictorTraining opts;
  opts.epochs = 15;
  TrainReport r1, r2;
  const Predictor a = train_predictor(d, {200, 50, 50}, arch, opts, &r1);
  const Predictor b = train_predictor(d, {200, 50, 50}, arch, opts, &r2);
  CHECK(a.network().params() == b.network().params());
  CHECK(r1.best_validation_mse < r1.validation_mse.front());
  CHECK(r1.best_validation_mse == *std::min_element(r1.validation_mse.begin(), r1.validation_mse.end()));
  const PredictorAccuracy acc = evaluate_predictor(a, d, 250, 50, 8);
  CHECK(acc.strongest_in_top_k == 1.0);
  CHECK(acc.exact_top_k == 1.0);
  const MatrixXd one = a.predict(Eigen::Map<const MatrixXd>(d.inputs.col(0).data(), 4, 2).transpose());
  CHECK(one.rows() == 2);
  CHECK(one.cols() == 8);
}

TEST_CASE("invalid split raises ConfigError") {
  ChannelParams p = small_params();
  Rng rng = make_stream(7, "topology");
  const PredictorDataset d = build_dataset(p, place_bs(p, rng), 10, 2);
  CHECK_THROWS_AS(train_predictor(d, {8, 5, 0}, PredictorArch{}, PredictorTraining{}), ConfigError);
}
