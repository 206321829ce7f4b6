#include <doctest.h>

#include "cfbeam/channel.hpp"
#include "cfbeam/phy.hpp"
#include "unit/oracles.hpp"

using namespace cfbeam;

namespace {

MatrixXcd random_channel(Index rows, Index cols, Rng& rng) {
  MatrixXcd h(rows, cols);
  for (Index i = 0; i < h.size(); ++i) h.data()[i] = complex_normal(rng);
  return h;
}

}  // namespace

TEST_CASE("canonical assignment sorts and validates") {
  const BeamAssignment a = BeamAssignment::canonical({{5, 1}, {0, 3}}, 8, 2);
  CHECK(a.beams[0] == std::vector<int>{1, 5});
  CHECK_THROWS_AS(BeamAssignment::canonical({{2, 2}}, 8, 2), InvalidAction);
  CHECK_THROWS_AS(BeamAssignment::canonical({{1, 8}}, 8, 2), InvalidAction);
  CHECK_THROWS_AS(BeamAssignment::canonical({{1}}, 8, 2), InvalidAction);
}

TEST_CASE("analog combiner rows are conjugated codebook columns in ascending beam order") {
  const MatrixXcd f = dft_codebook(8);
  const auto blocks = analog_combiner(BeamAssignment::canonical({{6, 2}}, 8, 2), f);
  CHECK((blocks[0].row(0) - f.col(2).adjoint()).norm() < 1e-15);
  CHECK((blocks[0].row(1) - f.col(6).adjoint()).norm() < 1e-15);
}

TEST_CASE("equivalent channel equals the block-diagonal product") {
  Rng rng = make_stream(1, "hbar");
  const MatrixXcd f = dft_codebook(4);
  const MatrixXcd H = random_channel(8, 2, rng);
  const auto blocks = analog_combiner(BeamAssignment::canonical({{0, 3}, {1, 2}}, 4, 2), f);
  CHECK((equivalent_channel(blocks, H) - assemble_rf(blocks) * H).norm() < 1e-12);
  const MatrixXcd w_bb = random_channel(2, 4, rng);
  CHECK((hybrid_combiner(w_bb, blocks) - w_bb * assemble_rf(blocks)).norm() < 1e-12);
}

TEST_CASE("zero forcing inverts the equivalent channel") {
  Rng rng = make_stream(2, "zf");
  for (int i = 0; i < 1000; ++i) {
    const MatrixXcd hbar = random_channel(6, 3, rng);
    const ZfResult zf = zf_combiner(hbar);
    CHECK((zf.w_bb * hbar - MatrixXcd::Identity(3, 3)).norm() < 1e-8);
    CHECK_FALSE(zf.loaded);
  }
}

TEST_CASE("zero forcing loads ill-conditioned Gram matrices and rejects invisible users") {
  MatrixXcd hbar(2, 2);
  hbar << 1.0, 1.0, 1.0, 1.0 + 1e-7;
  const ZfResult zf = zf_combiner(hbar);
  CHECK(zf.loaded);
  CHECK(zf.condition > 1e10);
  CHECK(zf.w_bb.allFinite());

  MatrixXcd zero = MatrixXcd::Zero(2, 2);
  zero(0, 0) = 1.0;
  CHECK_THROWS_AS(zf_combiner(zero), DegenerateChannel);
  CHECK_THROWS_AS(zf_combiner(MatrixXcd::Ones(1, 2)), ConfigError);
}

TEST_CASE("SINR matches the explicit formula") {
  Rng rng = make_stream(3, "sinr");
  const MatrixXcd W = random_channel(3, 5, rng);
  const MatrixXcd H = random_channel(5, 3, rng);
  const VectorXd s = sinr(W, H, VectorXd::Constant(3, 2.5));
  const auto expected = oracle::sinr(W, H, 2.5);
  for (int i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("achievable rate includes the training overhead") {
  PowerConfig p;
  p.training_symbols = 4;
  CHECK(p.overhead_factor() == doctest::Approx(0.98));
  CHECK(achievable_rate(3.0, p) == doctest::Approx(1e8 * 0.98 * 2.0));
  p.training_symbols = 32;
  CHECK(achievable_rate(3.0, p) == doctest::Approx(1e8 * 0.84 * 2.0));
  p.training_symbols = 200;
  CHECK_THROWS_AS(p.overhead_factor(), ConfigError);
}

TEST_CASE("estimated rate uses only local quantities") {
  const MatrixXcd f = dft_codebook(4);
  MatrixXcd w(2, 4);
  w.row(0) = f.col(1).adjoint();
  w.row(1) = f.col(3).adjoint();
  const VectorXcd h = 2.0 * f.col(1);
  // ||W h||^2 = 4, ||W||_F^2 = 2
  CHECK(estimated_rate(w, h, 3.0) == doctest::Approx(std::log2(1.0 + 3.0 * 4.0 / 2.0)));
}

TEST_CASE("slot rates are invariant to the order of beams within a BS") {
  Rng rng = make_stream(4, "perm");
  const MatrixXcd f = dft_codebook(8);
  const MatrixXcd H = random_channel(16, 2, rng);
  PowerConfig p;
  p.tx_power = 10.0;
  const auto a = slot_rates(BeamAssignment::canonical({{1, 4}, {2, 7}}, 8, 2), f, H, p);
  const auto b = slot_rates(BeamAssignment::canonical({{4, 1}, {7, 2}}, 8, 2), f, H, p);
  CHECK(a.rate == b.rate);
}

TEST_CASE("ZF SINR reduces to P / ||w_u||^2") {
  Rng rng = make_stream(5, "zfsinr");
  const MatrixXcd f = dft_codebook(4);
  const MatrixXcd H = random_channel(8, 2, rng);
  PowerConfig p;
  p.tx_power = 7.0;
  const BeamAssignment a = BeamAssignment::canonical({{0, 2}, {1, 3}}, 4, 2);
  const auto r = slot_rates(a, f, H, p);
  const auto blocks = analog_combiner(a, f);
  const MatrixXcd w = hybrid_combiner(zf_combiner(equivalent_channel(blocks, H)).w_bb, blocks);
  for (int u = 0; u < 2; ++u) CHECK(r.sinr[u] == doctest::Approx(7.0 / w.row(u).squaredNorm()).epsilon(1e-8));
}

TEST_CASE("degenerate slots give zero service") {
  const MatrixXcd f = dft_codebook(4);
  MatrixXcd H = MatrixXcd::Zero(4, 2);
  H.col(0) = f.col(0);
  const auto r = slot_rates(BeamAssignment::canonical({{0, 1}}, 4, 2), f, H, PowerConfig{});
  CHECK(r.degenerate);
  CHECK(r.rate.isZero());
}

TEST_CASE("beam strength") {
  const MatrixXcd f = dft_codebook(8);
  CHECK(beam_strength(f.col(3), 2.0 * f.col(3)) == doctest::Approx(4.0));
  CHECK(beam_strength(f.col(3), f.col(4)) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(beam_strength(f.col(0), VectorXcd::Ones(4)), ConfigError);
}
