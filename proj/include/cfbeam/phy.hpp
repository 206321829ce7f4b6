#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "cfbeam/common.hpp"

namespace cfbeam {

// Per-BS sets of U distinct narrow-beam indices, stored in ascending order.
// Position u inside a BS list is the RF chain that carries the beam.
struct BeamAssignment {
  std::vector<std::vector<int>> beams;

  // Sorts each BS list; throws InvalidAction on repeats, out-of-range beams or
  // lists of the wrong length.
  static BeamAssignment canonical(std::vector<std::vector<int>> per_bs, int n_beams, int n_users);

  int n_bs() const { return static_cast<int>(beams.size()); }
  bool operator==(const BeamAssignment&) const = default;
};

inline BeamAssignment BeamAssignment::canonical(std::vector<std::vector<int>> per_bs, int n_beams, int n_users) {
  for (std::size_t b = 0; b < per_bs.size(); ++b) {
    auto& list = per_bs[b];
    if (static_cast<int>(list.size()) != n_users) {
      throw InvalidAction("BS " + std::to_string(b) + " has " + std::to_string(list.size()) + " beams, expected " +
                          std::to_string(n_users));
    }
    std::sort(list.begin(), list.end());
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i] < 0 || list[i] >= n_beams) {
        throw InvalidAction("BS " + std::to_string(b) + " uses beam " + std::to_string(list[i]) +
                            " outside the codebook");
      }
      if (i > 0 && list[i] == list[i - 1]) {
        throw InvalidAction("BS " + std::to_string(b) + " assigns beam " + std::to_string(list[i]) + " twice");
      }
    }
  }
  return BeamAssignment{std::move(per_bs)};
}

struct PowerConfig {
  double tx_power = 0.2 / 3.18e-12;  // transmit power over receiver noise power
  double bandwidth_hz = 1e8;
  double slot_s = 1e-3;
  double symbol_s = 5e-6;
  int training_symbols = 4;

  // (tau - N_tr tau_c) / tau; ConfigError when training fills the slot.
  double overhead_factor() const {
    const double training = training_symbols * symbol_s;
    if (tx_power <= 0.0) throw ConfigError("transmit power must be positive");
    if (training >= slot_s) {
      throw ConfigError("beam training (" + std::to_string(training_symbols) + " symbols) does not fit in a slot");
    }
    return (slot_s - training) / slot_s;
  }
};

// Row u of block b is f_{i_{b,u}}^H.
template <typename Derived>
std::vector<MatrixXcd> analog_combiner(const BeamAssignment& assignment, const Eigen::MatrixBase<Derived>& codebook) {
  std::vector<MatrixXcd> blocks;
  blocks.reserve(assignment.beams.size());
  for (const auto& list : assignment.beams) {
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i] == list[i - 1]) throw InvalidAction("beam " + std::to_string(list[i]) + " assigned twice");
    }
    MatrixXcd w(static_cast<Index>(list.size()), codebook.rows());
    for (std::size_t u = 0; u < list.size(); ++u) {
      w.row(static_cast<Index>(u)) = codebook.col(list[u]).adjoint();
    }
    blocks.push_back(std::move(w));
  }
  return blocks;
}

// blkdiag(W_RF,1, ..., W_RF,B).
inline MatrixXcd assemble_rf(const std::vector<MatrixXcd>& blocks) {
  Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  MatrixXcd w = MatrixXcd::Zero(rows, cols);
  Index r = 0, c = 0;
  for (const auto& b : blocks) {
    w.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return w;
}

// W_RF H without forming the block-diagonal matrix.
template <typename Derived>
MatrixXcd equivalent_channel(const std::vector<MatrixXcd>& blocks, const Eigen::MatrixBase<Derived>& H) {
  Index rows = 0;
  for (const auto& b : blocks) rows += b.rows();
  MatrixXcd hbar(rows, H.cols());
  Index r = 0, c = 0;
  for (const auto& b : blocks) {
    hbar.middleRows(r, b.rows()).noalias() = b * H.middleRows(c, b.cols());
    r += b.rows();
    c += b.cols();
  }
  if (c != H.rows()) throw ConfigError("analog combiner does not cover every antenna of H");
  return hbar;
}

struct ZfResult {
  MatrixXcd w_bb;  // U x BU
  double condition = 1.0;  // of hbar^H hbar before loading
  bool loaded = false;
};

inline constexpr double kZfConditionLimit = 1e10;
inline constexpr double kZfLoadingFactor = 1e-9;

// (hbar^H hbar)^-1 hbar^H, with diagonal loading 1e-9 * trace / U when the Gram
// matrix condition number exceeds 1e10.
template <typename Derived>
ZfResult zf_combiner(const Eigen::MatrixBase<Derived>& hbar) {
  const Index u = hbar.cols();
  if (hbar.rows() < u) throw ConfigError("zero forcing needs at least as many RF chains as users");
  const MatrixXcd h = hbar;
  if (!h.allFinite()) throw DegenerateChannel("equivalent channel holds non-finite entries");
  const double largest_col = h.colwise().squaredNorm().maxCoeff();
  for (Index c = 0; c < u; ++c) {
    if (!(h.col(c).squaredNorm() > 1e-24 * largest_col)) {
      throw DegenerateChannel("user " + std::to_string(c) + " is invisible through the selected beams");
    }
  }
  MatrixXcd gram = h.adjoint() * h;
  Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(gram, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  ZfResult out;
  out.condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (out.condition > kZfConditionLimit) {
    const double eps = kZfLoadingFactor * gram.trace().real() / static_cast<double>(u);
    gram.diagonal().array() += eps;
    out.loaded = true;
  }
  Eigen::LLT<MatrixXcd> llt(gram);
  if (llt.info() != Eigen::Success) throw DegenerateChannel("Gram matrix is not positive definite after loading");
  out.w_bb = llt.solve(h.adjoint());
  return out;
}

// W = W_BB W_RF as a dense U x BM matrix.
inline MatrixXcd hybrid_combiner(const MatrixXcd& w_bb, const std::vector<MatrixXcd>& blocks) {
  Index cols = 0;
  for (const auto& b : blocks) cols += b.cols();
  MatrixXcd w(w_bb.rows(), cols);
  Index r = 0, c = 0;
  for (const auto& b : blocks) {
    w.middleCols(c, b.cols()).noalias() = w_bb.middleCols(r, b.rows()) * b;
    r += b.rows();
    c += b.cols();
  }
  return w;
}

// rho_u = P_u |w_u^T h_u|^2 / (sum_{v != u} P_v |w_u^T h_v|^2 + ||w_u||^2)
template <typename DW, typename DH, typename DP>
VectorXd sinr(const Eigen::MatrixBase<DW>& W, const Eigen::MatrixBase<DH>& H, const Eigen::MatrixBase<DP>& power) {
  const MatrixXcd g = W * H;
  const Index u = g.rows();
  VectorXd out(u);
  for (Index i = 0; i < u; ++i) {
    double interference = 0.0;
    for (Index v = 0; v < g.cols(); ++v) {
      if (v != i) interference += power[v] * std::norm(g(i, v));
    }
    out[i] = power[i] * std::norm(g(i, i)) / (interference + W.row(i).squaredNorm());
  }
  return out;
}

// W_u (tau - N_tr tau_c) / tau log2(1 + rho).
inline double achievable_rate(double sinr_value, const PowerConfig& power) {
  return power.bandwidth_hz * power.overhead_factor() * std::log2(1.0 + sinr_value);
}

// log2(1 + P ||W_RF,b h||^2 / ||W_RF,b||_F^2), using local quantities only.
template <typename DW, typename DH>
double estimated_rate(const Eigen::MatrixBase<DW>& w_rf_b, const Eigen::MatrixBase<DH>& h_bu, double tx_power) {
  const double gain = (w_rf_b * h_bu).squaredNorm();
  return std::log2(1.0 + tx_power * gain / w_rf_b.squaredNorm());
}

struct SlotRates {
  VectorXd sinr;
  VectorXd rate;  // bits/s
  bool degenerate = false;  // zero forcing failed; every rate is zero
  bool loaded = false;
};

// Full uplink pipeline for one assignment: analog combiner, equivalent channel,
// zero forcing, SINR and overhead-adjusted rate.
template <typename DF, typename DH>
SlotRates slot_rates(const BeamAssignment& assignment, const Eigen::MatrixBase<DF>& codebook,
                     const Eigen::MatrixBase<DH>& H, const PowerConfig& power) {
  const Index users = H.cols();
  SlotRates out;
  out.sinr = VectorXd::Zero(users);
  out.rate = VectorXd::Zero(users);
  const auto blocks = analog_combiner(assignment, codebook);
  const MatrixXcd hbar = equivalent_channel(blocks, H);
  ZfResult zf;
  try {
    zf = zf_combiner(hbar);
  } catch (const DegenerateChannel&) {
    out.degenerate = true;
    return out;
  }
  out.loaded = zf.loaded;
  const MatrixXcd w = hybrid_combiner(zf.w_bb, blocks);
  out.sinr = sinr(w, H, VectorXd::Constant(users, power.tx_power));
  for (Index u = 0; u < users; ++u) out.rate[u] = achievable_rate(out.sinr[u], power);
  return out;
}

// |f^H h|^2
template <typename DF, typename DH>
double beam_strength(const Eigen::MatrixBase<DF>& f, const Eigen::MatrixBase<DH>& h) {
  if (f.size() != h.size()) throw ConfigError("beam and channel lengths differ");
  return std::norm(f.dot(h));
}

}  // namespace cfbeam
