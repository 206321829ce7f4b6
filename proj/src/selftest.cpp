#include "cfbeam/selftest.hpp"

#include <functional>
#include <ostream>
#include <string>

#include "cfbeam/harness.hpp"

namespace cfbeam {

namespace {

bool config_round_trip() {
  const Json j = to_json(Scenario{});
  return to_json(scenario_from_json(j)) == j;
}

bool reward_examples() {
  const TrafficConfig t;
  const bool zero = queue_reward(VectorXd::Zero(4), t, 10.0) == 0.0;
  const VectorXd at_req = Eigen::Map<const VectorXd>(t.q_req.data(), 4);
  const bool at_requirement = std::abs(queue_reward(at_req, t, 10.0) + 4.0) < 1e-12;
  VectorXd one = VectorXd::Zero(4);
  one[0] = 30.0;
  const bool breach = std::abs(queue_reward(one, t, 10.0) - (-30.0 / 9.0 - 10.0)) < 1e-12;
  return zero && at_requirement && breach;
}

bool codebook_unitary() {
  const MatrixXcd f = dft_codebook<double>(32);
  return (f.adjoint() * f - MatrixXcd::Identity(32, 32)).norm() < 1e-10;
}

bool zero_forcing_residual() {
  Rng rng = make_stream(7, "selftest-zf");
  for (int i = 0; i < 50; ++i) {
    MatrixXcd h(6, 3);
    for (Index k = 0; k < h.size(); ++k) h.data()[k] = complex_normal(rng);
    const ZfResult zf = zf_combiner(h);
    if ((zf.w_bb * h - MatrixXcd::Identity(3, 3)).norm() > 1e-8) return false;
  }
  return true;
}

bool pruning_example() {
  const BsActionSpace s = prune_bs_actions({{1, 2, 7}, {1, 2, 3}});
  return s.size() == 6;
}

bool histogram_normalized() {
  std::vector<std::vector<UserMetrics>> eps(5, std::vector<UserMetrics>(2));
  for (int e = 0; e < 5; ++e) eps[e][0].q_tilde = eps[e][1].q_tilde = 3.0 * e + 0.5;
  const Histogram h = queue_histogram(eps, 4, 8.0);
  for (const auto& row : h.density) {
    double sum = 0.0;
    for (double d : row) sum += d;
    if (std::abs(sum - 1.0) > 1e-9) return false;
  }
  return true;
}

Scenario tiny_scenario() {
  Scenario sc;
  sc.channel.n_bs = 2;
  sc.channel.m_y = 4;
  sc.channel.m_z = 1;
  sc.channel.m_wide = 2;
  sc.traffic.lambda = {4.5, 5.0};
  sc.traffic.q_req = {9.0, 10.0};
  sc.traffic.q_lim = {18.0, 20.0};
  sc.candidates.mode = "genie";
  sc.candidates.k = 2;
  sc.episode.slots = 10;
  sc.episode.service_scale = 1e-5;
  return scenario_from_json(to_json(sc));
}

bool evaluation_repeatable() {
  const World w = make_world(tiny_scenario(), 11);
  Rng rng = make_stream(11, "init");
  const AgentSet a = make_agents(w, Scheme::random, std::nullopt, rng);
  const EvalResult r1 = evaluate(w, a, 4, kEvalEpisodeOffset, 1);
  const EvalResult r2 = evaluate(w, a, 4, kEvalEpisodeOffset, 2);
  for (std::size_t e = 0; e < r1.episodes.size(); ++e) {
    for (std::size_t u = 0; u < r1.episodes[e].size(); ++u) {
      if (r1.episodes[e][u].q_tilde != r2.episodes[e][u].q_tilde) return false;
    }
  }
  return true;
}

bool action_space_constant() {
  const World w = make_world(tiny_scenario(), 3);
  Episode ep(w, 0);
  const auto first = build_action_space(candidate_rankings(w, ep.channel(), nullptr, "genie"), 2, 1000);
  const auto again = build_action_space(candidate_rankings(w, ep.channel(), nullptr, "genie"), 2, 1000);
  return first.fingerprint() == again.fingerprint();
}

bool queues_nonnegative() {
  const World w = make_world(tiny_scenario(), 5);
  Episode ep(w, 1);
  Rng rng = make_stream(5, "selftest-policy");
  const auto space = build_action_space(candidate_rankings(w, ep.channel(), nullptr, "genie"), 2, 1000);
  while (!ep.done()) ep.step(space.assignment(random_select(space, rng)), w.n_users());
  return (ep.trace().queue.array() >= 0.0).all();
}

}  // namespace

bool run_selftest(std::ostream& log) {
  const std::pair<const char*, std::function<bool()>> checks[] = {
      {"config echo round trip", config_round_trip},
      {"reward examples", reward_examples},
      {"DFT codebook unitary", codebook_unitary},
      {"zero forcing residual", zero_forcing_residual},
      {"pruning removes conflicts and duplicates", pruning_example},
      {"histogram rows sum to one", histogram_normalized},
      {"evaluation independent of worker count", evaluation_repeatable},
      {"action space fixed within an interval", action_space_constant},
      {"queues stay non-negative", queues_nonnegative},
  };
  bool all = true;
  for (const auto& [name, check] : checks) {
    bool ok = false;
    try {
      ok = check();
    } catch (const std::exception& e) {
      log << "  error: " << e.what() << '\n';
    }
    log << (ok ? "PASS " : "FAIL ") << name << '\n';
    all = all && ok;
  }
  return all;
}

}  // namespace cfbeam
