#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"
#include "xmdiff/align/alignment.hpp"

using namespace xmdiff;

namespace {

LatentTrajectory traj(const Batch& z, int C) { return extract_windows(z, C); }

Batch random_latents(Rng& rng, int B, int L, int d) {
  Batch z;
  for (int b = 0; b < B; ++b) z.push_back(rng.normal_matrix(L, d));
  return z;
}

}  // namespace

TEST_CASE("contrastive: single window, single sequence is zero") {
  Rng rng(1);
  Batch zx = random_latents(rng, 1, 4, 3), zy = random_latents(rng, 1, 4, 3);
  CHECK(contrastive_align(traj(zx, 4), traj(zy, 4), 0.5) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("contrastive: orthogonal two-window case from hand enumeration") {
  // u_X == u_Y per window, windows orthogonal: per-anchor -log(e/(e+1))
  Seq zx(2, 2), zy(2, 2);
  zx << 1, 0, 0, 1;
  zy = zx;
  double loss = contrastive_align(traj({zx}, 1), traj({zy}, 1), 1.0);
  CHECK(loss == Catch::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-6));
}

TEST_CASE("contrastive matches brute-force table on random latents") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Batch zx = random_latents(rng, 2, 9, 4), zy = random_latents(rng, 2, 9, 4);
    double got = contrastive_align(traj(zx, 3), traj(zy, 3), 0.3);
    double want = oracle::contrastive(zx, zy, 3, 3, 0.3);
    CHECK(got == Catch::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("contrastive is scale invariant") {
  Rng rng(3);
  Batch zx = random_latents(rng, 2, 8, 4), zy = random_latents(rng, 2, 8, 4);
  double base = contrastive_align(traj(zx, 4), traj(zy, 4), 0.7);
  Batch zx2 = zx, zy2 = zy;
  for (auto& m : zx2) m *= 3.7;
  for (auto& m : zy2) m *= 3.7;
  CHECK(std::fabs(base - contrastive_align(traj(zx2, 4), traj(zy2, 4), 0.7)) < 1e-6);
}

TEST_CASE("covariance alignment symmetry cases") {
  Rng rng(4);
  Batch z = random_latents(rng, 1, 8, 3);
  CHECK(covariance_align(traj(z, 4), traj(z, 4)) == Catch::Approx(0.0).margin(1e-14));
  Batch neg = z;
  neg[0] = -neg[0];
  CHECK(covariance_align(traj(z, 4), traj(neg, 4)) == Catch::Approx(0.0).margin(1e-14));
  // additive constant per window leaves covariance unchanged
  Batch shifted = z;
  shifted[0].array() += 2.5;
  CHECK(covariance_align(traj(z, 4), traj(shifted, 4)) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("covariance matches explicit double-loop oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Batch zx = random_latents(rng, 1, 4, 3), zy = random_latents(rng, 1, 4, 3);
    double got = covariance_align(traj(zx, 4), traj(zy, 4));
    CHECK(got == Catch::Approx(oracle::covariance(zx, zy, 4, 1)).epsilon(1e-6));
  }
}

TEST_CASE("covariance rejects single-sample windows") {
  Rng rng(6);
  Batch z = random_latents(rng, 1, 4, 3);
  CHECK_THROWS(covariance_align(traj(z, 1), traj(z, 1)));
}

TEST_CASE("llma is the unweighted sum of its parts") {
  Rng rng(7);
  Batch zx = random_latents(rng, 2, 8, 3), zy = random_latents(rng, 2, 8, 3);
  AlignmentConfig cfg;
  cfg.window_len = 4;
  cfg.temperature = 0.4;
  double parts = contrastive_align(traj(zx, 4), traj(zy, 4), 0.4) +
                 covariance_align(traj(zx, 4), traj(zy, 4));
  CHECK(llma(traj(zx, 4), traj(zy, 4), cfg) == Catch::Approx(parts).epsilon(1e-12));

  // zero only in the degenerate single-anchor case
  Batch same{zx[0]};
  AlignmentConfig wide = cfg;
  wide.window_len = 8;
  CHECK(llma(traj(same, 8), traj(same, 8), wide) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("llma gradient w.r.t. latents matches finite differences") {
  Rng rng(8);
  AlignmentConfig cfg;
  cfg.window_len = 3;
  cfg.temperature = 0.5;
  Eigen::MatrixXd zx = rng.normal_matrix(6, 3), zy = rng.normal_matrix(6, 3);
  auto fn = [&](ad::Graph& g, const std::vector<ad::Var>& v) {
    return align::llma_v(g, {v[0]}, {v[1]}, cfg, 2);
  };
  CHECK(testutil::grad_check(fn, {zx, zy}) < 1e-3);
}

TEST_CASE("nt-xent: identical embeddings give log(2N-1)") {
  Eigen::MatrixXd z = Eigen::MatrixXd::Ones(4, 3);
  CHECK(simclr_align(z, z, 0.5) == Catch::Approx(std::log(7.0)).epsilon(1e-9));
}

TEST_CASE("nt-xent: orthonormal pairs from hand enumeration") {
  Eigen::MatrixXd zx(2, 2), zy(2, 2);
  zx << 1, 0, 0, 1;
  zy = zx;
  double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  CHECK(simclr_align(zx, zy, 1.0) == Catch::Approx(expected).epsilon(1e-6));
}

TEST_CASE("nt-xent matches pairwise-table oracle") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd zx = rng.normal_matrix(4, 5), zy = rng.normal_matrix(4, 5);
    CHECK(simclr_align(zx, zy, 0.2) == Catch::Approx(oracle::ntxent(zx, zy, 0.2)).epsilon(1e-6));
  }
}

TEST_CASE("barlow: sign-flipped dimension contributes four") {
  Rng rng(10);
  Eigen::MatrixXd zx = rng.normal_matrix(64, 3);
  Eigen::MatrixXd zy = zx;
  zy.col(1) *= -1.0;
  double base = barlow_align(zx, zx, 0.0);
  double flipped = barlow_align(zx, zy, 0.0);
  // diagonal entry goes from (1-C)^2 ~ 0 to (1-(-C))^2 ~ 4
  CHECK(flipped - base == Catch::Approx(4.0).margin(1e-6));
}

TEST_CASE("barlow matches loop oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd zx = rng.normal_matrix(8, 5), zy = rng.normal_matrix(8, 5);
    CHECK(barlow_align(zx, zy, 5e-3) ==
          Catch::Approx(oracle::barlow(zx, zy, 5e-3)).epsilon(1e-6));
  }
}

TEST_CASE("vicreg analytic cases") {
  // constant batches: std is 0, hinge fully active, each dim contributes 1
  Eigen::MatrixXd z = Eigen::MatrixXd::Constant(4, 3, 2.0);
  CHECK(vicreg_align(z, z, 0.0, 1.0, 0.0, 1.0) == Catch::Approx(3.0).margin(1e-3));
  // identical whitened batches with per-dim std >= gamma and diagonal cov
  Eigen::MatrixXd w(4, 2);
  w << 1, 1, 1, -1, -1, 1, -1, -1;  // std 1 per dim, zero cross-covariance
  CHECK(vicreg_align(w, w, 1.0, 1.0, 1.0, 1.0) == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("vicreg matches loop oracle") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd zx = rng.normal_matrix(8, 4), zy = rng.normal_matrix(8, 4);
    double got = vicreg_align(zx, zy, 25.0, 25.0, 1.0, 1.0);
    CHECK(got == Catch::Approx(oracle::vicreg(zx, zy, 25.0, 25.0, 1.0, 1.0)).epsilon(1e-6));
  }
}

TEST_CASE("latent mse baseline") {
  Rng rng(13);
  Batch zx = random_latents(rng, 2, 6, 3);
  CHECK(latent_mse_align(zx, zx) == 0.0);
  Batch zy = zx;
  for (auto& m : zy) m.array() += 1.0;
  CHECK(latent_mse_align(zx, zy) == Catch::Approx(1.0).epsilon(1e-12));
  Batch zr = random_latents(rng, 2, 6, 3);
  CHECK(latent_mse_align(zx, zr) == Catch::Approx(oracle::elementwise_mse(zx, zr)).epsilon(1e-9));
}

TEST_CASE("baseline losses pass finite-difference gradient checks") {
  Rng rng(14);
  Eigen::MatrixXd zx = rng.normal_matrix(6, 4), zy = rng.normal_matrix(6, 4);
  auto ntx = [](ad::Graph& g, const std::vector<ad::Var>& v) {
    return align::simclr_align_v(g, v[0], v[1], 0.4);
  };
  CHECK(testutil::grad_check(ntx, {zx, zy}) < 1e-3);
  auto bt = [](ad::Graph& g, const std::vector<ad::Var>& v) {
    return align::barlow_align_v(g, v[0], v[1], 5e-3);
  };
  CHECK(testutil::grad_check(bt, {zx, zy}) < 1e-3);
  auto vr = [](ad::Graph& g, const std::vector<ad::Var>& v) {
    return align::vicreg_align_v(g, v[0], v[1], 25.0, 25.0, 1.0, 1.0);
  };
  CHECK(testutil::grad_check(vr, {zx, zy}) < 1e-3);
}

TEST_CASE("alignment method none contributes zero with zero gradient") {
  Rng rng(15);
  AlignmentConfig cfg;
  cfg.method = AlignMethod::none;
  ad::Graph g;
  ad::Var zx = ad::leaf(g, rng.normal_matrix(6, 3), true);
  ad::Var zy = ad::leaf(g, rng.normal_matrix(6, 3), true);
  ad::Var loss = align::alignment_loss_v(g, {zx}, {zy}, cfg, 2);
  CHECK(loss.scalar() == 0.0);
  // nothing flows back into the latents from a constant zero
  ad::Var probe = ad::add(loss, ad::scalar_const(g, 1.0));
  g.backward(probe.id());
  CHECK(zx.grad().cwiseAbs().maxCoeff() == 0.0);
  CHECK(zy.grad().cwiseAbs().maxCoeff() == 0.0);
}
