// End-to-end acceptance checks. Each criterion prints exactly one PASS or
// FAIL line; the process exits nonzero if any hard criterion fails.
// Optional argv: a list of criterion numbers to run (default: all).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <unsupported/Eigen/MatrixFunctions>

#include "xmdiff/exp/experiment.hpp"

using namespace xmdiff;
namespace fs = std::filesystem;
using Mat = Eigen::MatrixXd;

namespace {

int g_failures = 0;

void report(int idx, const std::string& what, bool pass, const std::string& detail = "") {
  std::printf("%s: %d. %s%s%s\n", pass ? "PASS" : "FAIL", idx, what.c_str(),
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// ---------------------------------------------------------------------------
// criterion 1: loss values vs brute-force loop oracles
// ---------------------------------------------------------------------------

using RowList = std::vector<std::vector<double>>;

RowList pool_normalize_oracle(const Batch& z, int wl, int M) {
  RowList rows;
  for (const Seq& s : z) {
    for (int w = 0; w < M; ++w) {
      std::vector<double> r(static_cast<std::size_t>(s.cols()), 0.0);
      for (int t = 0; t < wl; ++t)
        for (Eigen::Index c = 0; c < s.cols(); ++c)
          r[static_cast<std::size_t>(c)] += s(w * wl + t, c);
      double norm = 0.0;
      for (double& v : r) v /= wl;
      for (double v : r) norm += v * v;
      norm = std::sqrt(norm) + 1e-8;
      for (double& v : r) v /= norm;
      rows.push_back(r);
    }
  }
  return rows;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double oracle_contrastive(const Batch& zx, const Batch& zy, int wl, int M, double tau) {
  RowList ux = pool_normalize_oracle(zx, wl, M), uy = pool_normalize_oracle(zy, wl, M);
  double loss = 0.0;
  for (std::size_t i = 0; i < ux.size(); ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < uy.size(); ++j) denom += std::exp(dot(ux[i], uy[j]) / tau);
    loss += std::log(denom) - dot(ux[i], uy[i]) / tau;
  }
  return loss / static_cast<double>(ux.size());
}

double oracle_covariance(const Batch& zx, const Batch& zy, int wl, int M) {
  auto window_cov = [&](const Seq& s, int w) {
    const int d = static_cast<int>(s.cols());
    std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
    for (int t = 0; t < wl; ++t)
      for (int c = 0; c < d; ++c) mu[static_cast<std::size_t>(c)] += s(w * wl + t, c) / wl;
    std::vector<double> cov(static_cast<std::size_t>(d * d), 0.0);
    for (int p = 0; p < d; ++p)
      for (int q = 0; q < d; ++q) {
        double acc = 0.0;
        for (int t = 0; t < wl; ++t)
          acc += (s(w * wl + t, p) - mu[static_cast<std::size_t>(p)]) *
                 (s(w * wl + t, q) - mu[static_cast<std::size_t>(q)]);
        cov[static_cast<std::size_t>(p * d + q)] = acc / (wl - 1);
      }
    return cov;
  };
  double loss = 0.0;
  int count = 0;
  for (std::size_t b = 0; b < zx.size(); ++b)
    for (int w = 0; w < M; ++w) {
      std::vector<double> cx = window_cov(zx[b], w), cy = window_cov(zy[b], w);
      double mse = 0.0;
      for (std::size_t k = 0; k < cx.size(); ++k) mse += (cx[k] - cy[k]) * (cx[k] - cy[k]);
      loss += mse / static_cast<double>(cx.size());
      ++count;
    }
  return loss / count;
}

double oracle_energy_loss(const Seq& a, const Seq& b) {
  double acc = 0.0;
  int n = 0;
  for (Eigen::Index t = 0; t + 1 < a.rows(); ++t)
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      double ea = 0.5 * (a(t + 1, c) - a(t, c)) * (a(t + 1, c) - a(t, c));
      double eb = 0.5 * (b(t + 1, c) - b(t, c)) * (b(t + 1, c) - b(t, c));
      acc += (ea - eb) * (ea - eb);
      ++n;
    }
  return acc / n;
}

RowList normalize_oracle(const Mat& m) {
  RowList rows;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    double norm = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      r[static_cast<std::size_t>(c)] = m(i, c);
      norm += m(i, c) * m(i, c);
    }
    norm = std::sqrt(norm) + 1e-8;
    for (double& v : r) v /= norm;
    rows.push_back(r);
  }
  return rows;
}

double oracle_ntxent(const Mat& px, const Mat& py, double tau) {
  RowList ux = normalize_oracle(px), uy = normalize_oracle(py);
  RowList all = ux;
  all.insert(all.end(), uy.begin(), uy.end());
  const std::size_t n = ux.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    std::size_t pos = i < n ? i + n : i - n;
    double denom = 0.0;
    for (std::size_t j = 0; j < 2 * n; ++j)
      if (j != i) denom += std::exp(dot(all[i], all[j]) / tau);
    loss += std::log(denom) - dot(all[i], all[pos]) / tau;
  }
  return loss / static_cast<double>(2 * n);
}

RowList standardize_oracle(const Mat& m) {
  const Eigen::Index n = m.rows(), d = m.cols();
  RowList rows(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(d)));
  for (Eigen::Index c = 0; c < d; ++c) {
    double mu = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) mu += m(i, c) / n;
    double var = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) var += (m(i, c) - mu) * (m(i, c) - mu) / n;
    double sd = std::sqrt(var + 1e-8);
    for (Eigen::Index i = 0; i < n; ++i)
      rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = (m(i, c) - mu) / sd;
  }
  return rows;
}

double oracle_barlow(const Mat& px, const Mat& py, double lam) {
  RowList x = standardize_oracle(px), y = standardize_oracle(py);
  const std::size_t n = x.size(), d = x.front().size();
  double loss = 0.0;
  for (std::size_t p = 0; p < d; ++p)
    for (std::size_t q = 0; q < d; ++q) {
      double c = 0.0;
      for (std::size_t i = 0; i < n; ++i) c += x[i][p] * y[i][q] / static_cast<double>(n);
      if (p == q)
        loss += (1.0 - c) * (1.0 - c);
      else
        loss += lam * c * c;
    }
  return loss;
}

double oracle_vicreg(const Mat& px, const Mat& py, double wi, double wv, double wc, double gm) {
  const Eigen::Index n = px.rows(), d = px.cols();
  double inv = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < d; ++c) inv += (px(i, c) - py(i, c)) * (px(i, c) - py(i, c));
  inv /= static_cast<double>(n * d);

  auto var_cov = [&](const Mat& m) {
    std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
    for (Eigen::Index c = 0; c < d; ++c)
      for (Eigen::Index i = 0; i < n; ++i) mu[static_cast<std::size_t>(c)] += m(i, c) / n;
    double var_term = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      double var = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        var += (m(i, c) - mu[static_cast<std::size_t>(c)]) * (m(i, c) - mu[static_cast<std::size_t>(c)]) / n;
      double hinge = std::max(0.0, gm - std::sqrt(var + 1e-8));
      var_term += hinge * hinge;
    }
    double cov_term = 0.0;
    for (Eigen::Index p = 0; p < d; ++p)
      for (Eigen::Index q = 0; q < d; ++q) {
        if (p == q) continue;
        double c = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
          c += (m(i, p) - mu[static_cast<std::size_t>(p)]) * (m(i, q) - mu[static_cast<std::size_t>(q)]) / n;
        cov_term += c * c;
      }
    return std::make_pair(var_term, cov_term);
  };
  auto [vx, cx] = var_cov(px);
  auto [vy, cy] = var_cov(py);
  return wi * inv + wv * 0.5 * (vx + vy) + wc * 0.5 * (cx + cy);
}

double oracle_latent_mse(const Batch& zx, const Batch& zy) {
  double loss = 0.0;
  for (std::size_t b = 0; b < zx.size(); ++b) {
    double acc = 0.0;
    for (Eigen::Index t = 0; t < zx[b].rows(); ++t)
      for (Eigen::Index c = 0; c < zx[b].cols(); ++c)
        acc += (zx[b](t, c) - zy[b](t, c)) * (zx[b](t, c) - zy[b](t, c));
    loss += acc / static_cast<double>(zx[b].size());
  }
  return loss / static_cast<double>(zx.size());
}

void criterion_1() {
  Rng rng(41);
  const int trials = 100;
  double worst = 0.0;
  std::string worst_name = "none";
  auto track = [&](const std::string& name, double lib, double oracle) {
    double e = rel_err(lib, oracle);
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  };

  for (int i = 0; i < trials; ++i) {
    const int B = 2 + static_cast<int>(rng.uniform_int(0, 1));
    const int wl = 3 + static_cast<int>(rng.uniform_int(0, 2));
    const int M = 2;
    const int d = 4;
    const double tau = rng.uniform(0.05, 0.5);
    Batch zx, zy;
    for (int b = 0; b < B; ++b) {
      zx.push_back(rng.normal_matrix(wl * M, d));
      zy.push_back(rng.normal_matrix(wl * M, d));
    }
    LatentTrajectory tx = extract_windows(zx, wl), ty = extract_windows(zy, wl);
    track("contrastive", contrastive_align(tx, ty, tau), oracle_contrastive(zx, zy, wl, M, tau));
    track("covariance", covariance_align(tx, ty), oracle_covariance(zx, zy, wl, M));
    AlignmentConfig cfg;
    cfg.window_len = wl;
    cfg.temperature = tau;
    track("llma", llma(tx, ty, cfg),
          oracle_contrastive(zx, zy, wl, M, tau) + oracle_covariance(zx, zy, wl, M));

    Seq a = rng.normal_matrix(7, 3), b2 = rng.normal_matrix(7, 3);
    track("energy", energy_loss(a, b2), oracle_energy_loss(a, b2));

    const int n = 6 + static_cast<int>(rng.uniform_int(0, 4));
    Mat px = rng.normal_matrix(n, d), py = rng.normal_matrix(n, d);
    track("nt-xent", simclr_align(px, py, tau), oracle_ntxent(px, py, tau));
    track("barlow", barlow_align(px, py, 5e-3), oracle_barlow(px, py, 5e-3));
    track("vicreg", vicreg_align(px, py, 25.0, 25.0, 1.0, 1.0),
          oracle_vicreg(px, py, 25.0, 25.0, 1.0, 1.0));
    track("latent-mse", latent_mse_align(zx, zy), oracle_latent_mse(zx, zy));
  }
  report(1, "loss values match brute-force oracles (8 losses x 100 inputs)", worst < 1e-6,
         "max rel err " + fmt(worst) + " (" + worst_name + ")");
}

// ---------------------------------------------------------------------------
// criterion 2: analytic gradients vs central finite differences
// ---------------------------------------------------------------------------

// relative L2 error between the tape gradient and finite differences of a
// value-level evaluation, over every entry of every input matrix
double grad_check(const std::function<double(const std::vector<Mat>&)>& f,
                  const std::vector<Mat>& at, const std::vector<Mat>& analytic) {
  const double h = 1e-5;
  double num = 0.0, den = 0.0;
  std::vector<Mat> p = at;
  for (std::size_t m = 0; m < at.size(); ++m)
    for (Eigen::Index i = 0; i < at[m].rows(); ++i)
      for (Eigen::Index j = 0; j < at[m].cols(); ++j) {
        p[m](i, j) = at[m](i, j) + h;
        double up = f(p);
        p[m](i, j) = at[m](i, j) - h;
        double dn = f(p);
        p[m](i, j) = at[m](i, j);
        double fd = (up - dn) / (2.0 * h);
        num += (fd - analytic[m](i, j)) * (fd - analytic[m](i, j));
        den += fd * fd;
      }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

void criterion_2() {
  Rng rng(42);
  const int trials = 20;
  const int B = 2, wl = 3, M = 2, d = 4, L = wl * M;
  double worst = 0.0;
  std::string worst_name = "none";
  auto track = [&](const std::string& name, double e) {
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
  };

  AlignmentConfig base;
  base.window_len = wl;
  base.temperature = 0.2;

  // losses over per-element latent trajectories
  using TrajLoss = std::function<ad::Var(ad::Graph&, const std::vector<ad::Var>&,
                                         const std::vector<ad::Var>&)>;
  auto traj_case = [&](const std::string& name, const TrajLoss& loss_v) {
    for (int i = 0; i < trials; ++i) {
      std::vector<Mat> at;
      for (int b = 0; b < 2 * B; ++b) at.push_back(rng.normal_matrix(L, d));
      ad::Graph g;
      std::vector<ad::Var> vx, vy;
      for (int b = 0; b < B; ++b) vx.push_back(ad::leaf(g, at[static_cast<std::size_t>(b)]));
      for (int b = 0; b < B; ++b) vy.push_back(ad::leaf(g, at[static_cast<std::size_t>(B + b)]));
      ad::Var loss = loss_v(g, vx, vy);
      g.backward(loss.id());
      std::vector<Mat> analytic;
      for (const ad::Var& v : vx) analytic.push_back(v.grad());
      for (const ad::Var& v : vy) analytic.push_back(v.grad());
      auto f = [&](const std::vector<Mat>& p) {
        ad::Graph g2;
        std::vector<ad::Var> px, py;
        for (int b = 0; b < B; ++b) px.push_back(ad::leaf(g2, p[static_cast<std::size_t>(b)], false));
        for (int b = 0; b < B; ++b)
          py.push_back(ad::leaf(g2, p[static_cast<std::size_t>(B + b)], false));
        return loss_v(g2, px, py).scalar();
      };
      track(name, grad_check(f, at, analytic));
    }
  };

  traj_case("contrastive", [&](ad::Graph& g, const std::vector<ad::Var>& x,
                               const std::vector<ad::Var>& y) {
    return align::contrastive_align_v(g, x, y, wl, M, base.temperature);
  });
  traj_case("covariance", [&](ad::Graph& g, const std::vector<ad::Var>& x,
                              const std::vector<ad::Var>& y) {
    return align::covariance_align_v(g, x, y, wl, M);
  });
  traj_case("llma", [&](ad::Graph& g, const std::vector<ad::Var>& x,
                        const std::vector<ad::Var>& y) { return align::llma_v(g, x, y, base, M); });
  traj_case("latent-mse", [&](ad::Graph& g, const std::vector<ad::Var>& x,
                              const std::vector<ad::Var>& y) {
    return align::latent_mse_align_v(g, x, y);
  });

  // losses over pooled embedding matrices
  using PoolLoss = std::function<ad::Var(ad::Graph&, ad::Var, ad::Var)>;
  auto pool_case = [&](const std::string& name, const PoolLoss& loss_v) {
    for (int i = 0; i < trials; ++i) {
      std::vector<Mat> at{rng.normal_matrix(8, d), rng.normal_matrix(8, d)};
      ad::Graph g;
      ad::Var vx = ad::leaf(g, at[0]), vy = ad::leaf(g, at[1]);
      ad::Var loss = loss_v(g, vx, vy);
      g.backward(loss.id());
      std::vector<Mat> analytic{vx.grad(), vy.grad()};
      auto f = [&](const std::vector<Mat>& p) {
        ad::Graph g2;
        return loss_v(g2, ad::leaf(g2, p[0], false), ad::leaf(g2, p[1], false)).scalar();
      };
      track(name, grad_check(f, at, analytic));
    }
  };

  pool_case("nt-xent", [&](ad::Graph& g, ad::Var x, ad::Var y) {
    return align::simclr_align_v(g, x, y, base.temperature);
  });
  pool_case("barlow", [&](ad::Graph& g, ad::Var x, ad::Var y) {
    return align::barlow_align_v(g, x, y, 5e-3);
  });
  pool_case("vicreg", [&](ad::Graph& g, ad::Var x, ad::Var y) {
    return align::vicreg_align_v(g, x, y, 25.0, 25.0, 1.0, 1.0);
  });
  pool_case("energy", [&](ad::Graph& g, ad::Var x, ad::Var y) {
    (void)g;
    return energy_loss_v(x, y);
  });
  pool_case("denoise", [&](ad::Graph& g, ad::Var x, ad::Var y) {
    (void)g;
    return denoise_loss_v(x, y);
  });

  report(2, "analytic gradients match central finite differences (9 losses x 20 inputs)",
         worst < 1e-3, "max rel err " + fmt(worst) + " (" + worst_name + ")");
}

// ---------------------------------------------------------------------------
// criterion 3: forward-process statistics
// ---------------------------------------------------------------------------

void criterion_3() {
  Rng rng(43);
  const int draws = 10000;
  bool ok = true;
  std::string detail;
  for (int trial = 0; trial < 5; ++trial) {
    ScheduleKind kind = rng.uniform() < 0.5 ? ScheduleKind::linear : ScheduleKind::cosine;
    int T = 10 + static_cast<int>(rng.uniform_int(0, 50));
    int t = 1 + static_cast<int>(rng.uniform_int(0, T - 1));
    NoiseSchedule sched = make_schedule(kind, T);
    Seq x0 = rng.normal_matrix(4, 3);
    double bb = sched.beta_bar_at(t);

    // standardized residuals (x_t - sqrt(bb) x0) / sqrt(1-bb) should be N(0,1)
    double sum = 0.0, sumsq = 0.0;
    const double n_obs = static_cast<double>(draws) * static_cast<double>(x0.size());
    for (int i = 0; i < draws; ++i) {
      NoisySample s = forward_noise({x0}, {t}, sched,
                                    static_cast<std::uint64_t>(rng.uniform_int(0, 1 << 30)));
      Mat resid = (s.x_t[0] - std::sqrt(bb) * x0) / std::sqrt(1.0 - bb);
      sum += resid.sum();
      sumsq += resid.array().square().sum();
    }
    double mean = sum / n_obs;
    double var = sumsq / n_obs - mean * mean;
    double se_mean = 1.0 / std::sqrt(n_obs);
    double se_var = std::sqrt(2.0 / (n_obs - 1.0));
    bool mean_ok = std::abs(mean) < 3.0 * se_mean;
    bool var_ok = std::abs(var - 1.0) < 3.0 * se_var;
    ok = ok && mean_ok && var_ok;
    if (!(mean_ok && var_ok))
      detail += " trial " + std::to_string(trial) + " mean " + fmt(mean) + " var " + fmt(var);
  }
  report(3, "forward-process mean/variance within 3 standard errors (5 pairs, 1e4 draws)", ok,
         ok ? "all standardized residuals consistent with N(0,1)" : detail);
}

// ---------------------------------------------------------------------------
// criterion 4: FID analytics
// ---------------------------------------------------------------------------

double fid_oracle(const Mat& a, const Mat& b) {
  auto cov = [](const Mat& m) {
    Mat c = m.rowwise() - m.colwise().mean();
    return Mat(c.transpose() * c / static_cast<double>(m.rows() - 1));
  };
  Eigen::VectorXd dmu = (a.colwise().mean() - b.colwise().mean()).transpose();
  Mat s1 = cov(a), s2 = cov(b);
  Mat root = (s1 * s2).sqrt();
  return dmu.squaredNorm() + (s1 + s2).trace() - 2.0 * root.trace();
}

void criterion_4() {
  Rng rng(44);
  Mat a = rng.normal_matrix(300, 5);
  bool self_ok = fid(a, a) < 1e-6;

  Eigen::RowVectorXd delta = rng.normal_matrix(1, 5);
  Mat shifted = a.rowwise() + delta;
  double fid_shift = fid(a, shifted);
  bool shift_ok = std::abs(fid_shift - delta.squaredNorm()) < 1e-4;

  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    Mat x = rng.normal_matrix(400, 4);
    Mat w = rng.normal_matrix(4, 4);
    Mat y = (rng.normal_matrix(400, 4) * w).rowwise() + Eigen::RowVectorXd(rng.normal_matrix(1, 4));
    worst = std::max(worst, rel_err(fid(x, y), fid_oracle(x, y)));
  }
  bool oracle_ok = worst < 1e-4;
  report(4, "FID analytics (self, mean shift, matrix-sqrt oracle)",
         self_ok && shift_ok && oracle_ok,
         "self " + fmt(fid(a, a)) + ", shift err " + fmt(std::abs(fid_shift - delta.squaredNorm())) +
             ", oracle rel err " + fmt(worst));
}

// ---------------------------------------------------------------------------
// criteria 5-7: synthetic benchmark, aligned vs unaligned arms
// ---------------------------------------------------------------------------

struct ArmResult {
  double mse_xy{0}, mse_yx{0}, cka{0}, probe_acc{0};
};

int env_int(const char* name, int fallback) {
  const char* v = std::getenv(name);
  return v ? std::atoi(v) : fallback;
}

TrainConfig benchmark_config(std::uint64_t seed, AlignMethod method) {
  TrainConfig cfg;
  cfg.epochs = env_int("XMDIFF_BENCH_EPOCHS", 60);
  cfg.batch_size = 16;
  cfg.lr_x = cfg.lr_y = 3e-4;
  cfg.weight_decay = 1e-4;
  cfg.ema_decay = 0.95;
  cfg.seed = seed;
  cfg.num_steps = 50;
  // three encoder layers leave enough slack below the aligned (top-layer)
  // latent that alignment does not tax denoising in the easy direction
  const int enc = env_int("XMDIFF_BENCH_ENC_LAYERS", 3);
  cfg.model_x = {5, 4, 32, enc, 2, 4, 64, 0.0};
  cfg.model_y = {4, 5, 32, enc, 2, 4, 64, 0.0};
  cfg.align.method = method;
  cfg.align.window_len = env_int("XMDIFF_BENCH_WINDOW", 4);
  cfg.align.symmetrize = env_int("XMDIFF_BENCH_SYM", 1) != 0;
  cfg.align.temperature = env_int("XMDIFF_BENCH_TAU_PCT", 10) / 100.0;
  return cfg;
}

ArmResult run_arm(std::uint64_t seed, AlignMethod method) {
  SyntheticSystem sys = SyntheticSystem::default_oscillators();
  sys.n_subjects = 5;
  sys.obs_noise_std = env_int("XMDIFF_BENCH_NOISE_PCT", 1) / 100.0;
  SyntheticDataset ds = generate_synthetic(sys, 90, 64, 1000 + seed);

  FoldSpec fold;
  fold.held_out_subjects = {"s3", "s4"};
  fold.fold_index = 0;
  fold.n_folds = 1;
  FoldSplit split = split_fold(ds.pairs, fold);
  Normalizer norm = Normalizer::fit(split.train);
  std::vector<SequencePair> train = norm.apply(split.train);
  std::vector<SequencePair> test = norm.apply(split.test);

  Trainer tr(benchmark_config(seed, method));
  tr.train(train);
  DenoiserParams theta = tr.ema_theta(), phi = tr.ema_phi();

  Batch rx, ry;
  for (const SequencePair& p : test) {
    rx.push_back(p.x);
    ry.push_back(p.y);
  }
  // average the generation error over a few sampling chains so the
  // stochastic part of ancestral sampling does not decide near-ties
  ArmResult r;
  const int draws = env_int("XMDIFF_BENCH_MSE_DRAWS", 1);
  for (int k = 0; k < draws; ++k) {
    Batch gx = ancestral_sample(exp_detail::wrap(theta), ry, 5, tr.schedule(),
                                77 + seed + 1000ULL * static_cast<std::uint64_t>(k));
    Batch gy = ancestral_sample(exp_detail::wrap(phi), rx, 4, tr.schedule(),
                                770 + seed + 1000ULL * static_cast<std::uint64_t>(k));
    r.mse_xy += generation_mse(gx, rx) / draws;
    r.mse_yx += generation_mse(gy, ry) / draws;
  }

  // CKA and probe on a fresh draw from the same system: held out by
  // construction, and large enough that CKA (d=32) and the binomial probe
  // bound are well resolved
  SyntheticDataset probe_ds =
      generate_synthetic(sys, env_int("XMDIFF_BENCH_PROBE_N", 1530), 64, 5000 + seed);
  std::vector<SequencePair> ppairs = norm.apply(probe_ds.pairs);
  Batch px, py;
  std::vector<int> labels;
  for (const SequencePair& p : ppairs) {
    px.push_back(p.x);
    py.push_back(p.y);
    labels.push_back(p.profile_label);
  }
  std::vector<int> tp(ppairs.size(), 1);
  Batch lzx = latent_batch(theta, px, py, tp), lzy = latent_batch(phi, py, px, tp);
  Mat pzx = exp_detail::pool_rows(lzx), pzy = exp_detail::pool_rows(lzy);

  // CKA at the granularity the alignment operates on: time-pooled window
  // embeddings, one row per window
  const int wl = tr.config().align.window_len;
  const int M = static_cast<int>(lzx.front().rows()) / wl;
  auto window_rows = [&](const Batch& z) {
    Mat out(static_cast<Eigen::Index>(z.size()) * M, z.front().cols());
    Eigen::Index row = 0;
    for (const Seq& s : z)
      for (int w = 0; w < M; ++w) out.row(row++) = s.middleRows(w * wl, wl).colwise().mean();
    return out;
  };
  r.cka = latent_correlation(window_rows(lzx), window_rows(lzy));
  Mat joint(pzx.rows(), pzx.cols() + pzy.cols());
  joint << pzx, pzy;
  // average over a few stratified splits so one unlucky split does not
  // dominate the per-seed accuracy
  double acc = 0.0;
  for (std::uint64_t ps = 0; ps < 3; ++ps)
    acc += probe(joint, labels, ProbeKind::linear, seed * 17 + ps);
  r.probe_acc = acc / 3.0;
  return r;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void criteria_5_6_7() {
  const int n_seeds = env_int("XMDIFF_BENCH_SEEDS", 5);
  std::vector<double> mse_xy_a, mse_yx_a, cka_a, probe_a;
  std::vector<double> mse_xy_u, mse_yx_u, cka_u, probe_u;
  for (int s = 1; s <= n_seeds; ++s) {
    ArmResult a = run_arm(static_cast<std::uint64_t>(s), AlignMethod::llma);
    ArmResult u = run_arm(static_cast<std::uint64_t>(s), AlignMethod::none);
    mse_xy_a.push_back(a.mse_xy);
    mse_yx_a.push_back(a.mse_yx);
    cka_a.push_back(a.cka);
    probe_a.push_back(a.probe_acc);
    mse_xy_u.push_back(u.mse_xy);
    mse_yx_u.push_back(u.mse_yx);
    cka_u.push_back(u.cka);
    probe_u.push_back(u.probe_acc);
    std::printf("  [bench seed %d] aligned: mse %.4f/%.4f cka %.3f probe %.3f | "
                "unaligned: mse %.4f/%.4f cka %.3f probe %.3f\n",
                s, a.mse_xy, a.mse_yx, a.cka, a.probe_acc, u.mse_xy, u.mse_yx, u.cka, u.probe_acc);
    std::fflush(stdout);
  }

  double mxy_a = median_of(mse_xy_a), myx_a = median_of(mse_yx_a);
  double mxy_u = median_of(mse_xy_u), myx_u = median_of(mse_yx_u);
  report(5, "aligned median held-out generation MSE <= unaligned in both directions",
         mxy_a <= mxy_u && myx_a <= myx_u,
         "x|y " + fmt(mxy_a) + " vs " + fmt(mxy_u) + "; y|x " + fmt(myx_a) + " vs " + fmt(myx_u));

  double cka_med_a = median_of(cka_a), cka_med_u = median_of(cka_u);
  report(6, "aligned median latent CKA exceeds unaligned by >= 0.05",
         cka_med_a > cka_med_u + 0.05, fmt(cka_med_a) + " vs " + fmt(cka_med_u));

  double pa = median_of(probe_a), pu = median_of(probe_u);
  // the probe's internal stratified split holds out a fifth of the fresh draw
  double n_probe_test = env_int("XMDIFF_BENCH_PROBE_N", 1530) / 5.0;
  double chance = 1.0 / 3.0;
  double sigma3 = 3.0 * std::sqrt(chance * (1.0 - chance) / n_probe_test);
  report(7, "aligned median linear-probe accuracy >= unaligned + 0.03, both above chance by 3 sigma",
         pa >= pu + 0.03 && pa > chance + sigma3 && pu > chance + sigma3,
         fmt(pa) + " vs " + fmt(pu) + " (chance+3sigma " + fmt(chance + sigma3) + ")");
}

// ---------------------------------------------------------------------------
// criterion 8: ablation table via the command-line tool
// ---------------------------------------------------------------------------

int run_cmd(const std::string& args, const std::string& workdir) {
  std::string cmd = "cd " + workdir + " && " + XMDIFF_CLI_PATH + " " + args +
                    " > cmd_output.txt 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void criterion_8() {
  std::string dir = (fs::temp_directory_path() / "xmdiff_accept_ablate").string();
  fs::remove_all(dir);
  fs::create_directories(dir);

  bool ok = run_cmd("make-synthetic --out ds --n 48 --length 64 --seed 9", dir) == 0;
  std::string train_flags =
      " --epochs 20 --seed 3"
      " --set train.ema_decay=0.95 --set train.lr_x=0.0003 --set train.lr_y=0.0003"
      " --set train.align.window_len=4"
      " --set train.model_x.dropout=0.0 --set train.model_y.dropout=0.0";
  ok = ok && run_cmd("ablate --data ds --out abl" + train_flags, dir) == 0;

  std::string table = ok ? slurp(dir + "/abl/ablation.md") : "";
  std::vector<std::string> variants{"full", "wo_contrast", "wo_cov", "wo_energy"};
  double full_x = 0, full_y = 0;
  double worst_gap = -1e9;
  bool structure_ok = ok;
  for (const std::string& v : variants) {
    std::istringstream lines(table);
    std::string line;
    bool found = false;
    while (std::getline(lines, line)) {
      if (line.rfind("| " + v + " ", 0) != 0) continue;
      found = true;
      // | name | yes/no | yes/no | yes/no | mse_x | mse_y |
      std::vector<std::string> cells;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, '|')) cells.push_back(cell);
      double mx = std::atof(cells.at(5).c_str()), my = std::atof(cells.at(6).c_str());
      if (v == "full") {
        full_x = mx;
        full_y = my;
      } else {
        worst_gap = std::max({worst_gap, full_x - mx, full_y - my});
      }
    }
    structure_ok = structure_ok && found;
  }
  bool ordering_ok = worst_gap <= 0.0;
  std::string detail = structure_ok
                           ? (ordering_ok ? "full variant best in both directions"
                                          : "FLAG: an ablated variant beat full by " + fmt(worst_gap) +
                                                " (soft criterion, seed noise)")
                           : "table missing variants";
  // the table and its structure are the hard criterion; the ordering is soft
  report(8, "four-variant ablation table produced; full vs ablated ordering reported",
         structure_ok, detail);
}

// ---------------------------------------------------------------------------
// criterion 9: determinism and round-trips
// ---------------------------------------------------------------------------

bool same_logs(const std::vector<LossBreakdown>& a, const std::vector<LossBreakdown>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(&a[i].denoise_x, &b[i].denoise_x, sizeof(double)) != 0) return false;
    if (std::memcmp(&a[i].denoise_y, &b[i].denoise_y, sizeof(double)) != 0) return false;
    if (std::memcmp(&a[i].align, &b[i].align, sizeof(double)) != 0) return false;
    if (std::memcmp(&a[i].total, &b[i].total, sizeof(double)) != 0) return false;
  }
  return true;
}

void criterion_9() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.seed = 17;
  cfg.num_steps = 10;
  cfg.model_x = {5, 4, 16, 1, 1, 2, 32, 0.1};
  cfg.model_y = {4, 5, 16, 1, 1, 2, 32, 0.1};
  cfg.align.window_len = 8;

  SyntheticSystem sys = SyntheticSystem::default_oscillators();
  SyntheticDataset ds = generate_synthetic(sys, 8, 32, 77);
  std::vector<std::vector<SequencePair>> batches;
  for (std::size_t i = 0; i < ds.pairs.size(); i += 4)
    batches.push_back({ds.pairs.begin() + static_cast<long>(i),
                       ds.pairs.begin() + static_cast<long>(i + 4)});

  Trainer a(cfg), b(cfg);
  for (int step = 0; step < 10; ++step) {
    a.train_step(batches[static_cast<std::size_t>(step) % batches.size()]);
    b.train_step(batches[static_cast<std::size_t>(step) % batches.size()]);
  }
  bool logs_ok = same_logs(a.log(), b.log());

  std::string dir = (fs::temp_directory_path() / "xmdiff_accept_ckpt").string();
  fs::remove_all(dir);
  a.save_checkpoint(dir);
  Trainer c = Trainer::load_checkpoint(dir);
  Batch x_t{ds.pairs[0].x}, cond{ds.pairs[0].y};
  std::vector<int> t{3};
  DenoiserParams pa = a.ema_theta(), pc = c.ema_theta();
  bool ckpt_ok = denoise_batch(pa, x_t, cond, t)[0] == denoise_batch(pc, x_t, cond, t)[0];
  DenoiserParams la = a.theta(), lc = c.theta();
  ckpt_ok = ckpt_ok && denoise_batch(la, x_t, cond, t)[0] == denoise_batch(lc, x_t, cond, t)[0];

  std::string cdir = (fs::temp_directory_path() / "xmdiff_accept_eval").string();
  fs::remove_all(cdir);
  fs::create_directories(cdir);
  bool cli_ok = run_cmd("make-synthetic --out ds --n 12 --length 32 --seed 3", cdir) == 0;
  std::string tiny =
      "--epochs 1 --seed 5 --set train.batch_size=4"
      " --set train.model_x.d_model=16 --set train.model_x.n_layers_enc=1"
      " --set train.model_x.n_layers_dec=1 --set train.model_x.n_heads=2"
      " --set train.model_x.max_len=32"
      " --set train.model_y.d_model=16 --set train.model_y.n_layers_enc=1"
      " --set train.model_y.n_layers_dec=1 --set train.model_y.n_heads=2"
      " --set train.model_y.max_len=32"
      " --set train.num_steps=10 --set train.align.window_len=8";
  cli_ok = cli_ok && run_cmd("train --data ds --out run " + tiny, cdir) == 0;
  cli_ok = cli_ok && run_cmd("evaluate --run run", cdir) == 0;
  std::string first = slurp(cdir + "/run/eval/report.csv");
  cli_ok = cli_ok && run_cmd("evaluate --run run", cdir) == 0;
  cli_ok = cli_ok && !first.empty() && slurp(cdir + "/run/eval/report.csv") == first;

  report(9, "fixed-seed determinism, checkpoint round-trip, evaluate reproducibility",
         logs_ok && ckpt_ok && cli_ok,
         std::string("logs ") + (logs_ok ? "ok" : "differ") + ", checkpoint " +
             (ckpt_ok ? "ok" : "differ") + ", evaluate bytes " + (cli_ok ? "ok" : "differ"));
}

// ---------------------------------------------------------------------------
// criterion 10: delay-embedding premise at zero observation noise
// ---------------------------------------------------------------------------

double embed_r2(const Seq& obs, const Seq& hidden, int dim, int lag) {
  Mat e = delay_embed(obs.col(0), dim, lag);
  const Eigen::Index n = e.rows();
  Mat design(n, e.cols() + 1);
  design << e, Mat::Ones(n, 1);
  Mat target = hidden.topRows(n);
  Mat w = design.colPivHouseholderQr().solve(target);
  double resid = (design * w - target).squaredNorm();
  Mat centered = target.rowwise() - target.colwise().mean();
  return 1.0 - resid / centered.squaredNorm();
}

void criterion_10() {
  SyntheticSystem sys = SyntheticSystem::default_oscillators();
  sys.obs_noise_std = 0.0;
  sys.obs_kind_x = sys.obs_kind_y = ObsMapKind::affine;
  SyntheticDataset ds = generate_synthetic(sys, 6, 160, 31);
  double worst = 1.0;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    worst = std::min(worst, embed_r2(ds.pairs[i].x, ds.hidden[i], 5, 2));
    worst = std::min(worst, embed_r2(ds.pairs[i].y, ds.hidden[i], 5, 2));
  }
  report(10, "delay embeddings recover the hidden state with R^2 > 0.9 at zero noise",
         worst > 0.9, "min R^2 " + fmt(worst));
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("MAM_NUM_THREADS")) {
    int n = std::atoi(threads);
    if (n > 0) Eigen::setNbThreads(n);
  }
  std::set<int> which;
  for (int i = 1; i < argc; ++i) which.insert(std::atoi(argv[i]));
  auto want = [&](int k) { return which.empty() || which.count(k) > 0; };

  if (want(1)) criterion_1();
  if (want(2)) criterion_2();
  if (want(3)) criterion_3();
  if (want(4)) criterion_4();
  if (want(5) || want(6) || want(7)) criteria_5_6_7();
  if (want(8)) criterion_8();
  if (want(9)) criterion_9();
  if (want(10)) criterion_10();

  if (g_failures > 0) {
    std::printf("%d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all acceptance criteria passed\n");
  return 0;
}
