#include "cfbeam/schedulers.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace cfbeam {

namespace {

std::vector<std::vector<int>> combinations(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> c(k);
  std::iota(c.begin(), c.end(), 0);
  if (k > n) return out;
  while (true) {
    out.push_back(c);
    int i = k - 1;
    while (i >= 0 && c[i] == n - k + i) --i;
    if (i < 0) break;
    ++c[i];
    for (int j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
  }
  return out;
}

}  // namespace

EffectiveActionSpace full_action_space(int n_bs, int n_beams, int n_users, std::size_t cap) {
  if (n_users > n_beams) throw ConfigError("more users than beams");
  long double per_bs = 1.0L;
  for (int i = 0; i < n_users; ++i) per_bs = per_bs * (n_beams - i) / (i + 1);
  long double total = 1.0L;
  for (int b = 0; b < n_bs; ++b) total *= per_bs;
  if (total > static_cast<long double>(cap)) {
    throw ConfigError("the full beam space has " + std::to_string(static_cast<double>(total)) +
                      " actions, above the cap of " + std::to_string(cap) + "; use LBS or HDLO instead");
  }
  BsActionSpace bs;
  bs.sets = combinations(n_beams, n_users);
  bs.slots.resize(bs.sets.size());
  std::iota(bs.slots.begin(), bs.slots.end(), 0);
  bs.slot_capacity = static_cast<int>(bs.sets.size());
  return EffectiveActionSpace(std::vector<BsActionSpace>(n_bs, bs), cap);
}

std::size_t lyapunov_argmax(const EffectiveActionSpace& space, const VectorXd& queues,
                            const std::function<VectorXd(const BeamAssignment&)>& rates) {
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t id = 0; id < space.size(); ++id) {
    const double value = queues.dot(rates(space.assignment(id)));
    if (value > best_value) {
      best_value = value;
      best = id;
    }
  }
  return best;
}

Selection lcb_select(const VectorXd& queues, const ChannelRealization& channel, const MatrixXcd& codebook,
                     const PowerConfig& power, std::size_t cap) {
  const EffectiveActionSpace space =
      full_action_space(channel.n_bs, static_cast<int>(codebook.cols()), static_cast<int>(channel.H.cols()), cap);
  Selection s;
  s.id = lyapunov_argmax(space, queues, [&](const BeamAssignment& a) {
    return slot_rates(a, codebook, channel.H, power).rate;
  });
  s.assignment = space.assignment(s.id);
  return s;
}

std::vector<std::vector<std::vector<int>>> measured_rankings(const ChannelRealization& channel,
                                                             const MatrixXcd& codebook) {
  const int users = static_cast<int>(channel.H.cols());
  const int m = static_cast<int>(codebook.cols());
  std::vector<std::vector<std::vector<int>>> out(channel.n_bs, std::vector<std::vector<int>>(users));
  for (int b = 0; b < channel.n_bs; ++b) {
    for (int u = 0; u < users; ++u) {
      const VectorXd strength = (codebook.adjoint() * channel.block(b, u)).cwiseAbs2();
      out[b][u] = top_k(strength, m);
    }
  }
  return out;
}

EffectiveActionSpace lbs_action_space(const ChannelRealization& channel, const MatrixXcd& codebook, int k,
                                      std::size_t cap) {
  if (k < 1 || k > codebook.cols()) throw ConfigError("K must lie in [1, M]");
  const auto rankings = measured_rankings(channel, codebook);
  std::vector<BsActionSpace> per_bs;
  for (const auto& r : rankings) per_bs.push_back(widen_and_prune(r, k));
  return EffectiveActionSpace(std::move(per_bs), cap);
}

Selection lbs_select(const VectorXd& queues, const ChannelRealization& channel, const MatrixXcd& codebook, int k,
                     const PowerConfig& power, std::size_t cap) {
  const EffectiveActionSpace space = lbs_action_space(channel, codebook, k, cap);
  Selection s;
  s.id = lyapunov_argmax(space, queues, [&](const BeamAssignment& a) {
    return slot_rates(a, codebook, channel.H, power).rate;
  });
  s.assignment = space.assignment(s.id);
  for (int b = 0; b < space.n_bs(); ++b) s.widened = s.widened || space.bs(b).widened;
  return s;
}

VectorXd estimated_rates(const std::vector<int>& beams, const ChannelRealization& channel, int bs,
                         const MatrixXcd& codebook, double tx_power) {
  MatrixXcd w(static_cast<Index>(beams.size()), codebook.rows());
  for (std::size_t i = 0; i < beams.size(); ++i) w.row(static_cast<Index>(i)) = codebook.col(beams[i]).adjoint();
  const Index users = channel.H.cols();
  VectorXd r(users);
  for (Index u = 0; u < users; ++u) r[u] = estimated_rate(w, channel.block(bs, static_cast<int>(u)), tx_power);
  return r;
}

std::size_t hdlo_select_bs(const VectorXd& queues, const ChannelRealization& channel, int bs,
                           const BsActionSpace& actions, const MatrixXcd& codebook, double tx_power) {
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const double value = queues.dot(estimated_rates(actions.sets[i], channel, bs, codebook, tx_power));
    if (value > best_value || (value == best_value && actions.sets[i] < actions.sets[best])) {
      best_value = value;
      best = i;
    }
  }
  return best;
}

std::vector<std::size_t> hdlo_select(const VectorXd& queues, const ChannelRealization& channel,
                                     const EffectiveActionSpace& space, const MatrixXcd& codebook, double tx_power) {
  std::vector<std::size_t> out(space.n_bs());
  for (int b = 0; b < space.n_bs(); ++b) out[b] = hdlo_select_bs(queues, channel, b, space.bs(b), codebook, tx_power);
  return out;
}

std::size_t random_select(const EffectiveActionSpace& space, Rng& rng) { return uniform_index(rng, space.size()); }

std::size_t strongest_select(const EffectiveActionSpace& space) {
  return space.encode(std::vector<std::size_t>(space.n_bs(), 0));
}

}  // namespace cfbeam
