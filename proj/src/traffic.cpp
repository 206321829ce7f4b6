#include "cfbeam/traffic.hpp"

#include <cmath>
#include <deque>
#include <random>
#include <string>

namespace cfbeam {

void TrafficConfig::validate() const {
  const std::size_t n = lambda.size();
  if (n == 0) throw ConfigError("traffic needs at least one user");
  if (q_req.size() != n || q_lim.size() != n) throw ConfigError("lambda, q_req and q_lim must have equal length");
  if (!(kappa > 1.0)) throw ConfigError("Pareto shape kappa must exceed 1 for a finite mean");
  if (!(chi_min > 0.0)) throw ConfigError("chi_min must be positive");
  for (std::size_t u = 0; u < n; ++u) {
    if (lambda[u] < 0.0) throw ConfigError("arrival rates must be non-negative");
    if (!(q_req[u] > 0.0) || q_lim[u] < q_req[u]) {
      throw ConfigError("user " + std::to_string(u) + " needs q_lim >= q_req > 0");
    }
  }
}

int sample_poisson(double mean, Rng& rng) {
  if (mean <= 0.0) return 0;
  if (mean < 30.0) {
    const double limit = std::exp(-mean);
    int k = 0;
    double p = uniform01(rng);
    while (p > limit) {
      ++k;
      p *= uniform01(rng);
    }
    return k;
  }
  std::poisson_distribution<int> dist(mean);
  return dist(rng);
}

double sample_pareto(double kappa, double chi_min, Rng& rng) {
  double u;
  do {
    u = uniform01(rng);
  } while (u <= 0.0);
  return chi_min * std::pow(u, -1.0 / kappa);
}

double sample_arrival(const TrafficConfig& config, int user, Rng& rng) {
  const int packets = sample_poisson(config.lambda[user], rng);
  double bits = 0.0;
  for (int i = 0; i < packets; ++i) bits += sample_pareto(config.kappa, config.chi_min, rng);
  return bits;
}

EpisodeTrace::EpisodeTrace(int n_users, int slots, const VectorXd& initial)
    : queue(MatrixXd::Zero(n_users, slots + 1)),
      served(MatrixXd::Zero(n_users, slots)),
      arrivals(MatrixXd::Zero(n_users, slots)) {
  if (initial.size() != n_users) throw ConfigError("initial queue vector has the wrong length");
  if ((initial.array() < 0.0).any()) throw ConfigError("initial queues must be non-negative");
  queue.col(0) = initial;
}

void EpisodeTrace::record(int t, const VectorXd& served_bits, const VectorXd& arrival_bits) {
  if (t < 1 || t > slots()) throw ConfigError("slot index outside the episode");
  served.col(t - 1) = served_bits;
  arrivals.col(t - 1) = arrival_bits;
  for (int u = 0; u < n_users(); ++u) {
    queue(u, t) = queue_update(queue(u, t - 1), served_bits[u], arrival_bits[u]);
  }
}

std::vector<UserMetrics> episode_metrics(const EpisodeTrace& trace, const TrafficConfig& config) {
  const int slots = trace.slots();
  if (slots < 1) throw ConfigError("episode has no slots");
  std::vector<UserMetrics> out(trace.n_users());
  for (int u = 0; u < trace.n_users(); ++u) {
    // q(1) is excluded; the average runs over q(2)..q(T+1).
    const double q_tilde = trace.queue.row(u).segment(1, slots).sum() / slots;
    out[u].q_tilde = q_tilde;
    const double omega = config.omega(u);
    out[u].d_tilde = omega > 0.0 ? q_tilde / omega : 0.0;
    out[u].satisfied = q_tilde < config.q_req[u];
  }
  return out;
}

SatisfactionRates satisfaction_rate(const std::vector<std::vector<UserMetrics>>& episodes) {
  if (episodes.empty()) throw ConfigError("satisfaction rate needs at least one episode");
  const std::size_t n = episodes.front().size();
  SatisfactionRates r;
  r.per_user.assign(n, 0.0);
  for (const auto& ep : episodes) {
    if (ep.size() != n) throw ConfigError("episodes disagree on the number of users");
    for (std::size_t u = 0; u < n; ++u) r.per_user[u] += ep[u].satisfied ? 1.0 : 0.0;
  }
  for (auto& v : r.per_user) v /= static_cast<double>(episodes.size());
  for (double v : r.per_user) r.system += v;
  r.system /= static_cast<double>(n);
  return r;
}

std::vector<SojournStats> bit_sojourn(const EpisodeTrace& trace) {
  struct Chunk {
    int arrived;  // slot at whose end the bits arrived; 0 for the initial backlog
    double bits;
  };
  const int slots = trace.slots();
  std::vector<SojournStats> out(trace.n_users());
  for (int u = 0; u < trace.n_users(); ++u) {
    std::deque<Chunk> fifo;
    if (trace.queue(u, 0) > 0.0) fifo.push_back({0, trace.queue(u, 0)});
    auto depart = [&](const Chunk& c, double bits, int last_sample) {
      if (c.arrived == 0) return;
      out[u].bits += bits;
      out[u].bit_slots += bits * (last_sample - c.arrived);
    };
    for (int t = 1; t <= slots; ++t) {
      double capacity = trace.served(u, t - 1);
      while (capacity > 0.0 && !fifo.empty()) {
        Chunk& head = fifo.front();
        const double take = std::min(capacity, head.bits);
        depart(head, take, t);
        head.bits -= take;
        capacity -= take;
        if (head.bits <= 0.0) fifo.pop_front();
      }
      if (trace.arrivals(u, t - 1) > 0.0) fifo.push_back({t, trace.arrivals(u, t - 1)});
    }
    for (const auto& c : fifo) depart(c, c.bits, slots + 1);
  }
  return out;
}

}  // namespace cfbeam
