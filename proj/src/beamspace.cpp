#include "cfbeam/beamspace.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace cfbeam {

MatrixXd sweep(const ChannelRealization& channel, int user, const CodebookSet& codebooks, BeamKind kind) {
  const MatrixXcd& f = kind == BeamKind::wide ? codebooks.wide : codebooks.narrow;
  if (kind == BeamKind::narrow && f.rows() != channel.antennas) {
    throw ConfigError("narrow codebook does not match the array size");
  }
  if (f.rows() > channel.antennas) throw ConfigError("wide codebook is larger than the array");
  MatrixXd grid(channel.n_bs, f.cols());
  for (int b = 0; b < channel.n_bs; ++b) {
    const auto h = channel.block(b, user).head(f.rows());
    grid.row(b) = (f.adjoint() * h).cwiseAbs2().transpose();
  }
  return grid;
}

MatrixXd normalize_per_bs(const MatrixXd& grid) {
  MatrixXd out = grid;
  for (Index b = 0; b < out.rows(); ++b) {
    const double peak = out.row(b).maxCoeff();
    if (peak > 0.0) out.row(b) /= peak;
  }
  return out;
}

nn::Network make_predictor_network(int n_bs, int m_wide, int m_narrow, const PredictorArch& arch, Rng& rng) {
  nn::Network net({1, n_bs, m_wide});
  for (int i = 0; i < arch.conv_layers; ++i) net.conv2d(arch.conv_channels, arch.kernel, arch.kernel).relu();
  net.flatten();
  for (int width : arch.dense) net.dense(width).relu();
  net.dense(static_cast<Index>(n_bs) * m_narrow);
  net.initialize(rng);
  return net;
}

namespace {

void fill_sample(const ChannelParams& params, const std::vector<Eigen::Vector3d>& bs_positions,
                 const CodebookSet& codebooks, std::uint64_t seed, int i, PredictorDataset& data) {
  Rng rng = make_stream(seed, "dataset", static_cast<std::uint64_t>(i));
  ChannelParams single = params;
  single.n_users = 1;
  Topology topo;
  topo.bs_positions = bs_positions;
  topo.user_positions = place_users(single, rng);
  const LongTermState lt = sample_long_term(topo, single, rng);
  const SmallScaleState ss = init_small_scale(lt, params.rho, rng);
  const ChannelRealization ch = assemble_channel(lt, ss, params.m_y, params.m_z);
  const MatrixXd wide = normalize_per_bs(sweep(ch, 0, codebooks, BeamKind::wide));
  const MatrixXd narrow = normalize_per_bs(sweep(ch, 0, codebooks, BeamKind::narrow));
  // Row-major flattening: BS-major.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = wide, n = narrow;
  data.inputs.col(i) = Eigen::Map<const VectorXd>(w.data(), w.size());
  data.targets.col(i) = Eigen::Map<const VectorXd>(n.data(), n.size());
}

}  // namespace

PredictorDataset build_dataset(const ChannelParams& params, const std::vector<Eigen::Vector3d>& bs_positions,
                               int n_samples, std::uint64_t seed, int workers) {
  params.validate();
  if (n_samples < 0) throw ConfigError("sample count must be non-negative");
  const CodebookSet codebooks = CodebookSet::make(params);
  PredictorDataset data;
  data.n_bs = static_cast<int>(bs_positions.size());
  data.m_wide = params.m_wide;
  data.m_narrow = params.antennas();
  data.inputs.resize(static_cast<Index>(data.n_bs) * data.m_wide, n_samples);
  data.targets.resize(static_cast<Index>(data.n_bs) * data.m_narrow, n_samples);
  workers = std::max(1, std::min(workers, n_samples));
  if (workers == 1) {
    for (int i = 0; i < n_samples; ++i) fill_sample(params, bs_positions, codebooks, seed, i, data);
    return data;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n_samples; i += workers) fill_sample(params, bs_positions, codebooks, seed, i, data);
    });
  }
  for (auto& t : pool) t.join();
  return data;
}

void save_dataset(std::ostream& os, const PredictorDataset& data) {
  const auto old = os.precision(17);
  for (int i = 0; i < data.size(); ++i) {
    bool first = true;
    for (Index r = 0; r < data.inputs.rows(); ++r, first = false) os << (first ? "" : ",") << data.inputs(r, i);
    for (Index r = 0; r < data.targets.rows(); ++r) os << ',' << data.targets(r, i);
    os << '\n';
  }
  os.precision(old);
}

PredictorDataset load_dataset(std::istream& is, int n_bs, int m_wide, int m_narrow) {
  PredictorDataset data;
  data.n_bs = n_bs;
  data.m_wide = m_wide;
  data.m_narrow = m_narrow;
  const Index n_in = static_cast<Index>(n_bs) * m_wide, n_out = static_cast<Index>(n_bs) * m_narrow;
  std::vector<VectorXd> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    VectorXd v(n_in + n_out);
    std::string cell;
    Index k = 0;
    while (std::getline(ls, cell, ',')) {
      if (k >= v.size()) throw ConfigError("dataset line has too many values");
      v[k++] = std::stod(cell);
    }
    if (k != v.size()) throw ConfigError("dataset line has " + std::to_string(k) + " values, expected " +
                                         std::to_string(v.size()));
    rows.push_back(std::move(v));
  }
  data.inputs.resize(n_in, static_cast<Index>(rows.size()));
  data.targets.resize(n_out, static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    data.inputs.col(static_cast<Index>(i)) = rows[i].head(n_in);
    data.targets.col(static_cast<Index>(i)) = rows[i].tail(n_out);
  }
  return data;
}

Predictor::Predictor(nn::Network net, int n_bs, int m_wide, int m_narrow)
    : net_(std::move(net)), n_bs_(n_bs), m_wide_(m_wide), m_narrow_(m_narrow) {
  if (net_.input_size() != static_cast<Index>(n_bs) * m_wide ||
      net_.output_size() != static_cast<Index>(n_bs) * m_narrow) {
    throw ShapeError("predictor network does not match the beam grid dimensions");
  }
}

MatrixXd Predictor::predict_batch(const MatrixXd& inputs) const { return net_.forward(inputs); }

MatrixXd Predictor::predict(const MatrixXd& wide) const {
  if (wide.rows() != n_bs_ || wide.cols() != m_wide_) throw ShapeError("wide grid has the wrong shape");
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = wide;
  const VectorXd out = net_.forward(Eigen::Map<const VectorXd>(w.data(), w.size()));
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out.data(), n_bs_,
                                                                                                  m_narrow_);
}

Predictor train_predictor(const PredictorDataset& data, const DatasetSplit& split, const PredictorArch& arch,
                          const PredictorTraining& options, TrainReport* report) {
  if (split.train < 1 || split.validation < 1 || split.train + split.validation > data.size()) {
    throw ConfigError("dataset split does not fit the dataset");
  }
  Rng rng = make_stream(options.seed, "predictor-init");
  nn::Network net = make_predictor_network(data.n_bs, data.m_wide, data.m_narrow, arch, rng);
  nn::Sgdm opt(net.parameter_count(), options.learning_rate, options.momentum,
               nn::StepDecay{options.decay_interval, 0.5});
  const MatrixXd val_in = data.inputs.middleCols(split.train, split.validation);
  const MatrixXd val_out = data.targets.middleCols(split.train, split.validation);

  TrainReport local;
  VectorXd best = net.params();
  local.best_validation_mse = nn::mse(net.forward(val_in), val_out);
  std::vector<int> order(split.train);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle = make_stream(options.seed, "predictor-shuffle");
  nn::Network::Cache cache;
  VectorXd grad;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (int i = split.train - 1; i > 0; --i) std::swap(order[i], order[uniform_index(shuffle, i + 1)]);
    double epoch_loss = 0.0;
    for (int start = 0; start < split.train; start += options.batch) {
      const int n = std::min(options.batch, split.train - start);
      MatrixXd x(data.inputs.rows(), n), y(data.targets.rows(), n);
      for (int j = 0; j < n; ++j) {
        x.col(j) = data.inputs.col(order[start + j]);
        y.col(j) = data.targets.col(order[start + j]);
      }
      const MatrixXd& pred = net.forward(x, cache);
      const MatrixXd diff = pred - y;
      epoch_loss += diff.squaredNorm();
      grad.setZero(net.parameter_count());
      net.backward(cache, (2.0 / static_cast<double>(diff.size())) * diff, grad);
      opt.step(net.params(), grad);
    }
    epoch_loss /= static_cast<double>(split.train) * static_cast<double>(data.targets.rows());
    if (!std::isfinite(epoch_loss) || !net.params().allFinite()) {
      throw NumericalError("predictor training diverged at epoch " + std::to_string(epoch) +
                           " (learning rate " + std::to_string(opt.learning_rate()) + ")");
    }
    opt.end_epoch();
    const double val = nn::mse(net.forward(val_in), val_out);
    local.train_mse.push_back(epoch_loss);
    local.validation_mse.push_back(val);
    if (val < local.best_validation_mse) {
      local.best_validation_mse = val;
      local.best_epoch = epoch;
      best = net.params();
    }
  }
  net.params() = best;
  if (report) *report = std::move(local);
  return Predictor(std::move(net), data.n_bs, data.m_wide, data.m_narrow);
}

std::vector<int> top_k(const Eigen::Ref<const VectorXd>& strengths, int k) {
  const int n = static_cast<int>(strengths.size());
  if (k < 0 || k > n) throw ConfigError("top-k needs 0 <= k <= number of beams");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    if (strengths[a] != strengths[b]) return strengths[a] > strengths[b];
    return a < b;
  });
  idx.resize(k);
  return idx;
}

std::vector<std::vector<int>> top_k_candidates(const MatrixXd& predicted, int k) {
  std::vector<std::vector<int>> out;
  out.reserve(predicted.rows());
  for (Index b = 0; b < predicted.rows(); ++b) out.push_back(top_k(predicted.row(b).transpose(), k));
  return out;
}

PredictorAccuracy evaluate_predictor(const Predictor& predictor, const PredictorDataset& data, int first, int count,
                                     int k) {
  const MatrixXd pred = predictor.predict_batch(data.inputs.middleCols(first, count));
  PredictorAccuracy acc;
  int contains = 0, exact = 0;
  for (int i = 0; i < count; ++i) {
    for (int b = 0; b < data.n_bs; ++b) {
      const VectorXd truth = data.targets.col(first + i).segment(static_cast<Index>(b) * data.m_narrow, data.m_narrow);
      if (truth.maxCoeff() <= 0.0) continue;
      const VectorXd guess = pred.col(i).segment(static_cast<Index>(b) * data.m_narrow, data.m_narrow);
      auto p = top_k(guess, k);
      auto t = top_k(truth, k);
      ++acc.evaluated;
      if (std::find(p.begin(), p.end(), t.front()) != p.end()) ++contains;
      std::sort(p.begin(), p.end());
      std::sort(t.begin(), t.end());
      if (p == t) ++exact;
    }
  }
  if (acc.evaluated > 0) {
    acc.strongest_in_top_k = static_cast<double>(contains) / acc.evaluated;
    acc.exact_top_k = static_cast<double>(exact) / acc.evaluated;
  }
  return acc;
}

BsActionSpace prune_bs_actions(const std::vector<std::vector<int>>& candidates) {
  if (candidates.empty()) throw ConfigError("pruning needs at least one user");
  BsActionSpace space;
  space.slot_capacity = 1;
  for (const auto& c : candidates) {
    if (c.empty()) throw ConfigError("empty candidate set");
    space.slot_capacity *= static_cast<int>(c.size());
  }
  const std::size_t users = candidates.size();
  std::set<std::vector<int>> seen;
  std::vector<std::size_t> rank(users, 0);
  std::vector<int> tuple(users);
  for (int slot = 0; slot < space.slot_capacity; ++slot) {
    // Mixed radix, user 0 most significant.
    int rem = slot;
    for (std::size_t u = users; u-- > 0;) {
      rank[u] = static_cast<std::size_t>(rem % static_cast<int>(candidates[u].size()));
      rem /= static_cast<int>(candidates[u].size());
      tuple[u] = candidates[u][rank[u]];
    }
    std::vector<int> set = tuple;
    std::sort(set.begin(), set.end());
    if (std::adjacent_find(set.begin(), set.end()) != set.end()) continue;  // conflict
    if (!seen.insert(set).second) continue;                                 // duplicate
    space.sets.push_back(std::move(set));
    space.slots.push_back(slot);
  }
  if (space.sets.empty()) throw InfeasibleActionSpace("every candidate tuple repeats a beam");
  return space;
}

BsActionSpace widen_and_prune(const std::vector<std::vector<int>>& rankings, int k) {
  std::size_t capacity = 1;
  for (std::size_t u = 0; u < rankings.size(); ++u) capacity *= static_cast<std::size_t>(k);
  std::size_t longest = 0;
  for (const auto& r : rankings) longest = std::max(longest, r.size());
  for (std::size_t width = static_cast<std::size_t>(k); width <= longest; ++width) {
    std::vector<std::vector<int>> cand;
    for (const auto& r : rankings) cand.emplace_back(r.begin(), r.begin() + std::min(width, r.size()));
    try {
      BsActionSpace space = prune_bs_actions(cand);
      if (width == static_cast<std::size_t>(k)) return space;
      if (space.sets.size() > capacity) space.sets.resize(capacity);
      space.slots.resize(space.sets.size());
      std::iota(space.slots.begin(), space.slots.end(), 0);
      space.slot_capacity = static_cast<int>(capacity);
      space.widened = true;
      return space;
    } catch (const InfeasibleActionSpace&) {
    }
  }
  throw InfeasibleActionSpace("no conflict-free beam set exists even with full rankings");
}

std::vector<int> union_of_candidates(const std::vector<std::vector<int>>& candidates) {
  std::set<int> all;
  for (const auto& c : candidates) all.insert(c.begin(), c.end());
  return {all.begin(), all.end()};
}

EffectiveActionSpace::EffectiveActionSpace(std::vector<BsActionSpace> per_bs, std::size_t cap)
    : per_bs_(std::move(per_bs)) {
  if (per_bs_.empty()) throw ConfigError("action space needs at least one BS");
  long double size = 1.0L, slots = 1.0L;
  for (const auto& b : per_bs_) {
    if (b.sets.empty()) throw InfeasibleActionSpace("a BS has no feasible action");
    size *= static_cast<long double>(b.sets.size());
    slots *= static_cast<long double>(b.slot_capacity);
  }
  if (size > static_cast<long double>(cap) || slots > static_cast<long double>(cap)) {
    throw ConfigError("cascaded action space (" + std::to_string(static_cast<double>(size)) + " actions, " +
                      std::to_string(static_cast<double>(slots)) + " slots) exceeds the cap of " +
                      std::to_string(cap));
  }
  size_ = static_cast<std::size_t>(size);
  slot_capacity_ = static_cast<std::size_t>(slots);
}

std::vector<std::size_t> EffectiveActionSpace::decode(std::size_t id) const {
  if (id >= size_) throw InvalidAction("action id " + std::to_string(id) + " outside the effective space");
  std::vector<std::size_t> out(per_bs_.size());
  for (std::size_t b = per_bs_.size(); b-- > 0;) {
    out[b] = id % per_bs_[b].sets.size();
    id /= per_bs_[b].sets.size();
  }
  return out;
}

std::size_t EffectiveActionSpace::encode(const std::vector<std::size_t>& per_bs) const {
  if (per_bs.size() != per_bs_.size()) throw InvalidAction("per-BS index list has the wrong length");
  std::size_t id = 0;
  for (std::size_t b = 0; b < per_bs_.size(); ++b) {
    if (per_bs[b] >= per_bs_[b].sets.size()) throw InvalidAction("per-BS action index out of range");
    id = id * per_bs_[b].sets.size() + per_bs[b];
  }
  return id;
}

BeamAssignment EffectiveActionSpace::assignment(const std::vector<std::size_t>& per_bs) const {
  BeamAssignment a;
  for (std::size_t b = 0; b < per_bs_.size(); ++b) a.beams.push_back(per_bs_[b].sets.at(per_bs[b]));
  return a;
}

BeamAssignment EffectiveActionSpace::assignment(std::size_t id) const { return assignment(decode(id)); }

std::size_t EffectiveActionSpace::slot(std::size_t id) const {
  const auto idx = decode(id);
  std::size_t s = 0;
  for (std::size_t b = 0; b < per_bs_.size(); ++b) {
    s = s * static_cast<std::size_t>(per_bs_[b].slot_capacity) + static_cast<std::size_t>(per_bs_[b].slots[idx[b]]);
  }
  return s;
}

std::vector<std::size_t> EffectiveActionSpace::valid_slots() const {
  std::vector<std::size_t> out(size_);
  for (std::size_t id = 0; id < size_; ++id) out[id] = slot(id);
  return out;
}

std::uint64_t EffectiveActionSpace::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  for (const auto& b : per_bs_) {
    mix(0xb5);
    mix(static_cast<std::uint64_t>(b.slot_capacity));
    for (std::size_t i = 0; i < b.sets.size(); ++i) {
      mix(static_cast<std::uint64_t>(b.slots[i]));
      for (int beam : b.sets[i]) mix(static_cast<std::uint64_t>(beam) + 1);
    }
  }
  return h;
}

}  // namespace cfbeam
