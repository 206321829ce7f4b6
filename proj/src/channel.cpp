#include "cfbeam/channel.hpp"

#include <string>

namespace cfbeam {

namespace {

constexpr double kSpeedOfLight = 299792458.0;
constexpr int kMaxPlacementAttempts = 10000;

double wrap_azimuth(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

double clamp_elevation(double e) {
  constexpr double margin = 1e-6;
  return std::clamp(e, margin, M_PI - margin);
}

std::vector<Eigen::Vector3d> place(int count, double region, double height, double min_sep,
                                   const char* what, Rng& rng) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !placed; ++attempt) {
      const Eigen::Vector3d p(uniform(rng, 0.0, region), uniform(rng, 0.0, region), height);
      placed = true;
      for (const auto& q : out) {
        if ((p - q).head<2>().norm() < min_sep) {
          placed = false;
          break;
        }
      }
      if (placed) out.push_back(p);
    }
    if (!placed) {
      throw ConfigError(std::string("cannot place ") + what + " " + std::to_string(i) + " with separation " +
                        std::to_string(min_sep) + " m inside a " + std::to_string(region) + " m region");
    }
  }
  return out;
}

}  // namespace

void ChannelParams::validate() const {
  if (n_bs < 1 || n_users < 1) throw ConfigError("n_bs and n_users must be positive");
  if (m_y < 1 || m_z < 1) throw ConfigError("m_y and m_z must be positive");
  if (m_wide < 1 || m_wide > m_y) throw ConfigError("m_wide must lie in [1, m_y]");
  if (path_count < 1) throw ConfigError("path_count must be at least 1");
  if (rho < 0.0 || rho > 1.0) throw ConfigError("rho must lie in [0, 1]");
  if (region_m <= 0.0) throw ConfigError("region_m must be positive");
  if (blockage_prob < 0.0 || blockage_prob > 1.0) throw ConfigError("blockage_prob must lie in [0, 1]");
  if (carrier_hz <= 0.0 || pl_ref_distance_m <= 0.0) throw ConfigError("path-loss constants must be positive");
}

std::vector<Eigen::Vector3d> place_bs(const ChannelParams& params, Rng& rng) {
  return place(params.n_bs, params.region_m, params.bs_height_m, params.min_bs_separation_m, "BS", rng);
}

std::vector<Eigen::Vector3d> place_users(const ChannelParams& params, Rng& rng) {
  return place(params.n_users, params.region_m, params.user_height_m, params.min_user_separation_m, "user", rng);
}

Topology generate_topology(const ChannelParams& params, Rng& rng) {
  params.validate();
  Topology t;
  t.bs_positions = place_bs(params, rng);
  t.user_positions = place_users(params, rng);
  return t;
}

double path_loss_amplitude(double distance_m, double exponent, const ChannelParams& params) {
  const double d0 = params.pl_ref_distance_m;
  const double free_space = 4.0 * M_PI * params.carrier_hz * d0 / kSpeedOfLight;
  const double power = std::pow(free_space, -2.0) * std::pow(distance_m / d0, -exponent);
  return std::sqrt(power);
}

double los_probability(double distance_m, const ChannelParams& params) {
  const double decay = std::exp(-distance_m / params.los_d2_m);
  return std::min(params.los_d1_m / distance_m, 1.0) * (1.0 - decay) + decay;
}

std::pair<double, double> geometric_angles(const Eigen::Vector3d& bs, const Eigen::Vector3d& user) {
  const Eigen::Vector3d d = user - bs;
  const double azimuth = wrap_azimuth(std::atan2(d.y(), d.x()));
  const double elevation = clamp_elevation(std::acos(d.z() / d.norm()));
  return {azimuth, elevation};
}

LongTermState sample_long_term(const Topology& topology, const ChannelParams& params, Rng& rng) {
  LongTermState lt;
  lt.n_bs = static_cast<int>(topology.bs_positions.size());
  lt.n_users = static_cast<int>(topology.user_positions.size());
  lt.path_count = params.path_count;
  lt.paths.resize(static_cast<std::size_t>(lt.n_bs) * lt.n_users * lt.path_count);
  for (int b = 0; b < lt.n_bs; ++b) {
    for (int u = 0; u < lt.n_users; ++u) {
      const auto& bs = topology.bs_positions[b];
      const auto& ue = topology.user_positions[u];
      const double dist = (ue - bs).norm();
      const auto [az, el] = geometric_angles(bs, ue);
      const bool los = uniform01(rng) < los_probability(dist, params);
      for (int l = 0; l < lt.path_count; ++l) {
        PathState& p = lt.path(b, u, l);
        if (l == 0 && los) {
          p.link = LinkClass::los;
          p.azimuth = az;
          p.elevation = el;
          p.alpha = path_loss_amplitude(dist, params.pl_exponent_los, params);
        } else {
          p.link = LinkClass::nlos;
          p.azimuth = wrap_azimuth(az + uniform(rng, -params.nlos_azimuth_spread, params.nlos_azimuth_spread));
          p.elevation =
              clamp_elevation(el + uniform(rng, -params.nlos_elevation_spread, params.nlos_elevation_spread));
          p.alpha = path_loss_amplitude(dist, params.pl_exponent_nlos, params);
        }
        if (uniform01(rng) < params.blockage_prob) {
          p.link = LinkClass::blocked;
          p.alpha = 0.0;
        }
      }
    }
  }
  return lt;
}

SmallScaleState init_small_scale(const LongTermState& lt, double rho, Rng& rng) {
  SmallScaleState s;
  s.rho = rho;
  s.beta.resize(static_cast<Index>(lt.paths.size()));
  for (Index i = 0; i < s.beta.size(); ++i) s.beta[i] = complex_normal(rng);
  return s;
}

SmallScaleState evolve_small_scale(const SmallScaleState& state, Rng& rng) {
  SmallScaleState next = state;
  const double innovation = std::sqrt(std::max(0.0, 1.0 - state.rho * state.rho));
  for (Index i = 0; i < next.beta.size(); ++i) {
    const cplx n = complex_normal(rng);
    next.beta[i] = state.rho * state.beta[i] + innovation * n;
  }
  return next;
}

ChannelRealization assemble_channel(const LongTermState& lt, const SmallScaleState& ss, int m_y, int m_z,
                                    int slot) {
  if (ss.beta.size() != static_cast<Index>(lt.paths.size())) {
    throw ConfigError("small-scale state does not match the long-term path layout");
  }
  ChannelRealization ch;
  ch.n_bs = lt.n_bs;
  ch.antennas = m_y * m_z;
  ch.slot = slot;
  ch.H = MatrixXcd::Zero(static_cast<Index>(lt.n_bs) * ch.antennas, lt.n_users);
  const double scale = std::sqrt(static_cast<double>(ch.antennas) / lt.path_count);
  for (int b = 0; b < lt.n_bs; ++b) {
    for (int u = 0; u < lt.n_users; ++u) {
      auto h = ch.H.col(u).segment(static_cast<Index>(b) * ch.antennas, ch.antennas);
      for (int l = 0; l < lt.path_count; ++l) {
        const PathState& p = lt.path(b, u, l);
        if (p.alpha == 0.0) continue;
        const cplx g = p.alpha * ss.beta[static_cast<Index>(lt.index(b, u, l))];
        h += (scale * g) * array_response(p.azimuth, p.elevation, m_y, m_z);
      }
    }
  }
  return ch;
}

CodebookSet CodebookSet::make(const ChannelParams& params) {
  return {dft_codebook(params.antennas()), dft_codebook(params.m_wide)};
}

}  // namespace cfbeam
