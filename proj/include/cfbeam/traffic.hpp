#pragma once

#include <algorithm>
#include <vector>

#include "cfbeam/common.hpp"
#include "cfbeam/random.hpp"

namespace cfbeam {

struct TrafficConfig {
  std::vector<double> lambda{4.5, 5.0, 5.5, 6.0};  // packets per slot
  double kappa = 6.0;                             // Pareto shape
  double chi_min = 1.0;                           // Pareto threshold, bits
  std::vector<double> q_req{9.0, 10.0, 11.0, 12.0};   // requirement, bits
  std::vector<double> q_lim{18.0, 20.0, 22.0, 24.0};  // limit, bits

  int n_users() const { return static_cast<int>(lambda.size()); }
  double mean_packet_bits() const { return kappa * chi_min / (kappa - 1.0); }
  // omega_u = lambda_u E|chi|, bits per slot.
  double omega(int u) const { return lambda[u] * mean_packet_bits(); }
  void validate() const;
};

// Knuth's product method for small means, the library sampler otherwise.
int sample_poisson(double mean, Rng& rng);
// Inverse CDF: chi_min * U^(-1/kappa).
double sample_pareto(double kappa, double chi_min, Rng& rng);
// A_u(t): Poisson count of Pareto-sized packets.
double sample_arrival(const TrafficConfig& config, int user, Rng& rng);

// q' = max(q - served, 0) + arrivals
inline double queue_update(double q, double served_bits, double arrival_bits) {
  return std::max(q - served_bits, 0.0) + arrival_bits;
}

// Queue trajectory of one episode: column t-1 of queue holds q(t) for t = 1..T+1;
// served and arrivals hold per-slot values for t = 1..T.
struct EpisodeTrace {
  MatrixXd queue;
  MatrixXd served;
  MatrixXd arrivals;

  EpisodeTrace() = default;
  EpisodeTrace(int n_users, int slots, const VectorXd& initial);
  int slots() const { return static_cast<int>(served.cols()); }
  int n_users() const { return static_cast<int>(queue.rows()); }
  // Records slot t (1-based) and applies the queue recursion.
  void record(int t, const VectorXd& served_bits, const VectorXd& arrival_bits);
};

struct UserMetrics {
  double q_tilde = 0.0;  // mean of q(2..T+1)
  double d_tilde = 0.0;  // q_tilde / omega
  bool satisfied = false;  // q_tilde < q_req
};

std::vector<UserMetrics> episode_metrics(const EpisodeTrace& trace, const TrafficConfig& config);

struct SatisfactionRates {
  std::vector<double> per_user;
  double system = 0.0;
};

// per_user[u] = fraction of episodes with satisfied[u]; system = mean over users.
SatisfactionRates satisfaction_rate(const std::vector<std::vector<UserMetrics>>& episodes);

// FIFO fluid accounting of the bits that arrive during the episode. A bit that
// arrives at the end of slot t and leaves during slot t' is counted in
// q(t+1)..q(t'), a sojourn of t' - t samples; bits still queued after the last
// slot are censored at T+1.
struct SojournStats {
  double bits = 0.0;
  double bit_slots = 0.0;
  double mean() const { return bits > 0.0 ? bit_slots / bits : 0.0; }
};

std::vector<SojournStats> bit_sojourn(const EpisodeTrace& trace);

}  // namespace cfbeam
