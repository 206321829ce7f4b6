#pragma once

#include <cmath>
#include <vector>

#include "cfbeam/common.hpp"
#include "cfbeam/random.hpp"

namespace cfbeam {

struct ChannelParams {
  double region_m = 150.0;
  int n_bs = 3;
  int n_users = 4;
  int m_y = 8;  // horizontal elements
  int m_z = 4;  // vertical elements
  int m_wide = 8;  // activated elements of the first row for wide beams
  double carrier_hz = 28e9;
  int path_count = 6;
  double rho = 0.91;
  double bs_height_m = 6.0;
  double user_height_m = 2.0;
  double min_bs_separation_m = 75.0;
  double min_user_separation_m = 10.0;
  double pl_ref_distance_m = 1.0;
  double pl_exponent_los = 2.0;
  double pl_exponent_nlos = 3.3;
  double los_d1_m = 18.0;
  double los_d2_m = 36.0;
  double blockage_prob = 0.1;
  double nlos_azimuth_spread = M_PI / 3.0;
  double nlos_elevation_spread = M_PI / 12.0;

  int antennas() const { return m_y * m_z; }
  void validate() const;
};

struct Topology {
  std::vector<Eigen::Vector3d> bs_positions;
  std::vector<Eigen::Vector3d> user_positions;
};

// Rejection-sampled BS and user placement; ConfigError after 10,000 failed
// attempts for any single node.
Topology generate_topology(const ChannelParams& params, Rng& rng);
std::vector<Eigen::Vector3d> place_bs(const ChannelParams& params, Rng& rng);
std::vector<Eigen::Vector3d> place_users(const ChannelParams& params, Rng& rng);

enum class LinkClass { los, nlos, blocked };

struct PathState {
  double azimuth = 0.0;    // [-pi, pi)
  double elevation = 0.0;  // (0, pi), measured from the vertical axis
  double alpha = 0.0;      // large-scale amplitude
  LinkClass link = LinkClass::nlos;
};

struct LongTermState {
  int n_bs = 0;
  int n_users = 0;
  int path_count = 0;
  std::vector<PathState> paths;  // index ((b * n_users) + u) * path_count + l

  PathState& path(int b, int u, int l) { return paths[index(b, u, l)]; }
  const PathState& path(int b, int u, int l) const { return paths[index(b, u, l)]; }
  std::size_t index(int b, int u, int l) const {
    return (static_cast<std::size_t>(b) * n_users + u) * path_count + l;
  }
};

struct SmallScaleState {
  double rho = 0.0;
  VectorXcd beta;  // same indexing as LongTermState::paths
};

// Power path loss (4 pi fc d0 / c)^-2 (d/d0)^-n, returned as an amplitude.
double path_loss_amplitude(double distance_m, double exponent, const ChannelParams& params);
double los_probability(double distance_m, const ChannelParams& params);
// Azimuth in [-pi, pi) and elevation from the vertical, seen from the BS.
std::pair<double, double> geometric_angles(const Eigen::Vector3d& bs, const Eigen::Vector3d& user);

LongTermState sample_long_term(const Topology& topology, const ChannelParams& params, Rng& rng);
// Draws beta from the stationary CN(0,1) law.
SmallScaleState init_small_scale(const LongTermState& lt, double rho, Rng& rng);
// beta <- rho * beta + sqrt(1 - rho^2) * n with n ~ CN(0,1).
SmallScaleState evolve_small_scale(const SmallScaleState& state, Rng& rng);

struct ChannelRealization {
  int n_bs = 0;
  int antennas = 0;
  int slot = 1;
  MatrixXcd H;  // (n_bs * antennas) x n_users

  auto block(int b, int u) const { return H.col(u).segment(static_cast<Index>(b) * antennas, antennas); }
};

ChannelRealization assemble_channel(const LongTermState& lt, const SmallScaleState& ss, int m_y, int m_z,
                                    int slot = 1);

// UPA response a_z(phi) kron a_y(theta, phi); element (mz, my) sits at
// mz * m_y + my with phase pi * (mz cos(phi) + my sin(theta) sin(phi)).
template <typename Scalar = double>
CVector<Scalar> array_response(Scalar azimuth, Scalar elevation, int m_y, int m_z) {
  using std::cos;
  using std::sin;
  const Scalar pi = Scalar(M_PI);
  const Scalar vertical = pi * cos(elevation);
  const Scalar horizontal = pi * sin(azimuth) * sin(elevation);
  const Scalar norm = Scalar(1) / std::sqrt(Scalar(m_y * m_z));
  CVector<Scalar> a(m_y * m_z);
  for (int mz = 0; mz < m_z; ++mz) {
    for (int my = 0; my < m_y; ++my) {
      a[mz * m_y + my] = std::polar(norm, vertical * Scalar(mz) + horizontal * Scalar(my));
    }
  }
  return a;
}

// Columns f_k[m] = exp(j 2 pi m k / M) / sqrt(M).
template <typename Scalar = double>
CMatrix<Scalar> dft_codebook(int m) {
  if (m < 1) throw ConfigError("codebook size must be at least 1");
  CMatrix<Scalar> f(m, m);
  const Scalar norm = Scalar(1) / std::sqrt(Scalar(m));
  for (int k = 0; k < m; ++k) {
    for (int i = 0; i < m; ++i) {
      // Reduce the exponent modulo m so large products keep full precision.
      const long long e = (static_cast<long long>(i) * k) % m;
      f(i, k) = std::polar(norm, Scalar(2) * Scalar(M_PI) * Scalar(e) / Scalar(m));
    }
  }
  return f;
}

struct CodebookSet {
  MatrixXcd narrow;  // M x M
  MatrixXcd wide;    // m_wide x m_wide over the activated sub-array

  static CodebookSet make(const ChannelParams& params);
};

}  // namespace cfbeam
