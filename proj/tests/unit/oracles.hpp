#pragma once

// Straightforward reference implementations used to check the library.

#include <algorithm>
#include <complex>
#include <functional>
#include <set>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Set = std::vector<int>;

// Enumerate every tuple, keep the conflict-free ones, sort them and dedupe.
inline std::set<Set> pruned_sets(const std::vector<std::vector<int>>& candidates) {
  std::set<Set> out;
  std::vector<int> tuple(candidates.size());
  std::function<void(std::size_t)> rec = [&](std::size_t u) {
    if (u == candidates.size()) {
      Set s = tuple;
      std::sort(s.begin(), s.end());
      if (std::adjacent_find(s.begin(), s.end()) == s.end()) out.insert(s);
      return;
    }
    for (int beam : candidates[u]) {
      tuple[u] = beam;
      rec(u + 1);
    }
  };
  rec(0);
  return out;
}

inline long long choose(int n, int k) {
  long long r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// y = W x + b with explicit loops.
inline Eigen::VectorXd dense(const Eigen::MatrixXd& w, const Eigen::VectorXd& b, const Eigen::VectorXd& x) {
  Eigen::VectorXd y(w.rows());
  for (Eigen::Index i = 0; i < w.rows(); ++i) {
    double acc = b[i];
    for (Eigen::Index j = 0; j < w.cols(); ++j) acc += w(i, j) * x[j];
    y[i] = acc;
  }
  return y;
}

// Stride-1 "same" convolution (cross-correlation) of a C x H x W row-major
// input; for even kernels the extra padding row/column goes on the high side.
inline std::vector<double> conv2d(const std::vector<double>& x, int c_in, int h, int w,
                                  const std::vector<double>& weights, const std::vector<double>& bias, int c_out,
                                  int kh, int kw) {
  const int top = (kh - 1) / 2, left = (kw - 1) / 2;
  std::vector<double> y(static_cast<std::size_t>(c_out) * h * w, 0.0);
  for (int o = 0; o < c_out; ++o) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double acc = bias[o];
        for (int i = 0; i < c_in; ++i) {
          for (int a = 0; a < kh; ++a) {
            for (int b = 0; b < kw; ++b) {
              const int rr = r + a - top, cc = c + b - left;
              if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
              acc += weights[((o * c_in + i) * kh + a) * kw + b] * x[(i * h + rr) * w + cc];
            }
          }
        }
        y[(o * h + r) * w + c] = acc;
      }
    }
  }
  return y;
}

// SINR of user i under combiner W (rows) and channel H (columns), unit noise.
inline std::vector<double> sinr(const Eigen::MatrixXcd& W, const Eigen::MatrixXcd& H, double p) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    double signal = 0.0, interference = 0.0, noise = 0.0;
    for (Eigen::Index v = 0; v < H.cols(); ++v) {
      std::complex<double> g = 0.0;
      for (Eigen::Index m = 0; m < W.cols(); ++m) g += W(i, m) * H(m, v);
      (v == i ? signal : interference) += p * std::norm(g);
    }
    for (Eigen::Index m = 0; m < W.cols(); ++m) noise += std::norm(W(i, m));
    out.push_back(signal / (interference + noise));
  }
  return out;
}

// q(t+1) = max(q(t) - s(t), 0) + a(t), column t of the result is q(t+1).
inline Eigen::MatrixXd queue_run(const Eigen::VectorXd& q0, const Eigen::MatrixXd& served,
                                 const Eigen::MatrixXd& arrivals) {
  Eigen::MatrixXd q(q0.size(), served.cols() + 1);
  q.col(0) = q0;
  for (Eigen::Index t = 0; t < served.cols(); ++t) {
    for (Eigen::Index u = 0; u < q0.size(); ++u) {
      const double left = q(u, t) - served(u, t);
      q(u, t + 1) = (left > 0.0 ? left : 0.0) + arrivals(u, t);
    }
  }
  return q;
}

}  // namespace oracle

namespace oracle {

// Sum rate objective sum_u q_u R_u for explicit per-BS beam lists, with zero
// forcing from an explicit inverse.
inline double weighted_rate(const std::vector<std::vector<int>>& beams, const Eigen::MatrixXcd& codebook,
                            const Eigen::MatrixXcd& H, const Eigen::VectorXd& q, double p, double bandwidth,
                            double overhead) {
  const Eigen::Index m = codebook.rows();
  const Eigen::Index users = H.cols();
  const Eigen::Index n_bs = static_cast<Eigen::Index>(beams.size());
  Eigen::MatrixXcd rf = Eigen::MatrixXcd::Zero(n_bs * users, n_bs * m);
  for (Eigen::Index b = 0; b < n_bs; ++b) {
    for (Eigen::Index u = 0; u < users; ++u) {
      for (Eigen::Index k = 0; k < m; ++k) rf(b * users + u, b * m + k) = std::conj(codebook(k, beams[b][u]));
    }
  }
  const Eigen::MatrixXcd hbar = rf * H;
  const Eigen::MatrixXcd bb = (hbar.adjoint() * hbar).inverse() * hbar.adjoint();
  const auto s = sinr(bb * rf, H, p);
  double total = 0.0;
  for (Eigen::Index u = 0; u < users; ++u) total += q[u] * bandwidth * overhead * std::log2(1.0 + s[u]);
  return total;
}

// sum_u q_u log2(1 + p |W h_bu|^2 / |W|_F^2) with W rows f^H of the chosen beams.
inline double local_objective(const std::vector<int>& beams, const Eigen::MatrixXcd& codebook,
                              const Eigen::MatrixXcd& H, int bs, const Eigen::VectorXd& q, double p) {
  const Eigen::Index m = codebook.rows();
  double total = 0.0;
  for (Eigen::Index u = 0; u < H.cols(); ++u) {
    double gain = 0.0, frob = 0.0;
    for (int beam : beams) {
      std::complex<double> g = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) {
        g += std::conj(codebook(k, beam)) * H(bs * m + k, u);
        frob += std::norm(codebook(k, beam));
      }
      gain += std::norm(g);
    }
    total += q[u] * std::log2(1.0 + p * gain / frob);
  }
  return total;
}

}  // namespace oracle
