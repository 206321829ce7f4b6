#pragma once

#include <functional>
#include <vector>

#include "cfbeam/beamspace.hpp"
#include "cfbeam/channel.hpp"
#include "cfbeam/phy.hpp"

namespace cfbeam {

// Every canonical U-subset of M beams for each of n_bs BSs, in lexicographic order.
EffectiveActionSpace full_action_space(int n_bs, int n_beams, int n_users, std::size_t cap = 1'000'000);

// argmax over ids of sum_u q_u * rate_u(id); ties go to the lowest id.
std::size_t lyapunov_argmax(const EffectiveActionSpace& space, const VectorXd& queues,
                            const std::function<VectorXd(const BeamAssignment&)>& rates);

// Centralized Lyapunov selection over the whole canonical space using the
// actual zero-forcing rates.
struct Selection {
  std::size_t id = 0;
  BeamAssignment assignment;
  bool widened = false;  // LBS fell back to widened candidate lists
};

Selection lcb_select(const VectorXd& queues, const ChannelRealization& channel, const MatrixXcd& codebook,
                     const PowerConfig& power, std::size_t cap = 1'000'000);

// Per-(BS, user) ranking of all beams by measured strength, strongest first.
std::vector<std::vector<std::vector<int>>> measured_rankings(const ChannelRealization& channel,
                                                             const MatrixXcd& codebook);

// The K strongest measured beams per (BS, user), pruned, then the Lyapunov
// argmax over the reduced space.
Selection lbs_select(const VectorXd& queues, const ChannelRealization& channel, const MatrixXcd& codebook, int k,
                     const PowerConfig& power, std::size_t cap = 1'000'000);
EffectiveActionSpace lbs_action_space(const ChannelRealization& channel, const MatrixXcd& codebook, int k,
                                      std::size_t cap = 1'000'000);

// R_{b,u} estimated at BS b for every user under one beam set.
VectorXd estimated_rates(const std::vector<int>& beams, const ChannelRealization& channel, int bs,
                         const MatrixXcd& codebook, double tx_power);

// Independent per-BS argmax of sum_u q_u * estimated rate; ties go to the
// lexicographically lowest beam set. Returns one index into each BS's list.
std::vector<std::size_t> hdlo_select(const VectorXd& queues, const ChannelRealization& channel,
                                     const EffectiveActionSpace& space, const MatrixXcd& codebook, double tx_power);
std::size_t hdlo_select_bs(const VectorXd& queues, const ChannelRealization& channel, int bs,
                           const BsActionSpace& actions, const MatrixXcd& codebook, double tx_power);

std::size_t random_select(const EffectiveActionSpace& space, Rng& rng);

// Each user's strongest predicted beam, resolved through pruning: the first
// conflict-free rank tuple of every BS, which is entry 0 of its pruned list.
std::size_t strongest_select(const EffectiveActionSpace& space);

}  // namespace cfbeam
