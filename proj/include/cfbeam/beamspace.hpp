#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "cfbeam/channel.hpp"
#include "cfbeam/neural.hpp"
#include "cfbeam/phy.hpp"

namespace cfbeam {

enum class BeamKind { wide, narrow };

// n_bs x n_beams strengths |f_j^H h_{b,u}|^2 for one user. Wide sweeps see
// only the first m_wide elements of the first array row.
MatrixXd sweep(const ChannelRealization& channel, int user, const CodebookSet& codebooks, BeamKind kind);

// Each row divided by its maximum; all-zero rows stay zero.
MatrixXd normalize_per_bs(const MatrixXd& grid);

struct PredictorArch {
  int conv_layers = 3;
  int conv_channels = 16;
  int kernel = 2;
  std::vector<int> dense{256, 256, 256};
};

// Input: a single-channel n_bs x m_wide grid. Output: n_bs * m_narrow strengths.
nn::Network make_predictor_network(int n_bs, int m_wide, int m_narrow, const PredictorArch& arch, Rng& rng);

struct PredictorDataset {
  int n_bs = 0, m_wide = 0, m_narrow = 0;
  MatrixXd inputs;   // (n_bs * m_wide) x n, normalized wide grids, row-major per sample
  MatrixXd targets;  // (n_bs * m_narrow) x n, normalized narrow grids

  int size() const { return static_cast<int>(inputs.cols()); }
};

// Sample i draws a fresh user position, long-term state and small-scale state
// from its own stream, so the result does not depend on the worker count.
PredictorDataset build_dataset(const ChannelParams& params, const std::vector<Eigen::Vector3d>& bs_positions,
                               int n_samples, std::uint64_t seed, int workers = 1);

// One sample per line: inputs then targets, comma separated.
void save_dataset(std::ostream& os, const PredictorDataset& data);
PredictorDataset load_dataset(std::istream& is, int n_bs, int m_wide, int m_narrow);

struct DatasetSplit {
  int train = 0, validation = 0, test = 0;
};

struct PredictorTraining {
  int epochs = 60;
  int batch = 64;
  double learning_rate = 0.02;
  double momentum = 0.9;
  int decay_interval = 10;  // epochs between learning-rate halvings
  std::uint64_t seed = 1;
};

struct TrainReport {
  std::vector<double> train_mse;
  std::vector<double> validation_mse;
  int best_epoch = -1;
  double best_validation_mse = 0.0;
};

class Predictor {
 public:
  Predictor() = default;
  Predictor(nn::Network net, int n_bs, int m_wide, int m_narrow);

  // wide: n_bs x m_wide normalized strengths; returns n_bs x m_narrow.
  MatrixXd predict(const MatrixXd& wide) const;
  MatrixXd predict_batch(const MatrixXd& inputs) const;

  const nn::Network& network() const { return net_; }
  nn::Network& network() { return net_; }
  int n_bs() const { return n_bs_; }
  int m_wide() const { return m_wide_; }
  int m_narrow() const { return m_narrow_; }

 private:
  nn::Network net_;
  int n_bs_ = 0, m_wide_ = 0, m_narrow_ = 0;
};

// Mini-batch SGDM on MSE; keeps the parameters with the lowest validation MSE.
// Samples [0, train) train, the next `validation` validate.
Predictor train_predictor(const PredictorDataset& data, const DatasetSplit& split, const PredictorArch& arch,
                          const PredictorTraining& options, TrainReport* report = nullptr);

struct PredictorAccuracy {
  double strongest_in_top_k = 0.0;  // top-K predicted set holds the true strongest beam
  double exact_top_k = 0.0;         // predicted top-K set equals the true top-K set
  int evaluated = 0;                // (sample, BS) pairs with a non-zero response
};

PredictorAccuracy evaluate_predictor(const Predictor& predictor, const PredictorDataset& data, int first, int count,
                                     int k);

// Indices of the k largest entries, strongest first; ties go to the lower index.
std::vector<int> top_k(const Eigen::Ref<const VectorXd>& strengths, int k);
// Per BS row of a predicted n_bs x M grid.
std::vector<std::vector<int>> top_k_candidates(const MatrixXd& predicted, int k);

// Candidate lists indexed [b][u], each in descending predicted strength.
using CandidateSets = std::vector<std::vector<std::vector<int>>>;

// Pruned actions of one BS. sets[i] is a canonical (ascending) beam set;
// slots[i] is the position of the rank tuple that produced it in the full
// candidate product, which gives every action a stable meaning across
// long-timescale intervals.
struct BsActionSpace {
  std::vector<std::vector<int>> sets;
  std::vector<int> slots;
  int slot_capacity = 0;
  bool widened = false;  // built by widen_and_prune

  std::size_t size() const { return sets.size(); }
};

// Enumerates f_u in C_{b,u} (user 0 most significant), drops tuples that repeat
// a beam, canonicalizes, and keeps the first occurrence of each set. Throws
// InfeasibleActionSpace when every tuple conflicts.
BsActionSpace prune_bs_actions(const std::vector<std::vector<int>>& candidates);

// Widens the per-user candidate lists (taken from full strength rankings) one
// beam at a time until pruning is feasible, then keeps the first `k^U` sets
// with slots equal to their list position.
BsActionSpace widen_and_prune(const std::vector<std::vector<int>>& rankings, int k);

// Beams trained by HDLO: the union of a BS's candidate lists.
std::vector<int> union_of_candidates(const std::vector<std::vector<int>>& candidates);

class EffectiveActionSpace {
 public:
  EffectiveActionSpace() = default;
  // ConfigError if the cascaded size exceeds cap.
  explicit EffectiveActionSpace(std::vector<BsActionSpace> per_bs, std::size_t cap = 1'000'000);

  std::size_t size() const { return size_; }
  int n_bs() const { return static_cast<int>(per_bs_.size()); }
  const BsActionSpace& bs(int b) const { return per_bs_.at(b); }

  // Flat id <-> per-BS indices, BS 0 most significant.
  std::vector<std::size_t> decode(std::size_t id) const;
  std::size_t encode(const std::vector<std::size_t>& per_bs) const;
  BeamAssignment assignment(std::size_t id) const;
  BeamAssignment assignment(const std::vector<std::size_t>& per_bs) const;

  // Network output slot of a flat id, and the total slot count.
  std::size_t slot(std::size_t id) const;
  std::size_t slot_capacity() const { return slot_capacity_; }
  std::vector<std::size_t> valid_slots() const;

  std::uint64_t fingerprint() const;

 private:
  std::vector<BsActionSpace> per_bs_;
  std::size_t size_ = 0;
  std::size_t slot_capacity_ = 0;
};

}  // namespace cfbeam
