#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "xmdiff/core/graph.hpp"
#include "xmdiff/core/types.hpp"
#include "xmdiff/net/windows.hpp"

#include <nlohmann/json.hpp>

namespace xmdiff {

enum class AlignMethod { llma, simclr, barlow, vicreg, latent_mse, none };

inline std::string to_string(AlignMethod m) {
  switch (m) {
    case AlignMethod::llma: return "llma";
    case AlignMethod::simclr: return "simclr";
    case AlignMethod::barlow: return "barlow";
    case AlignMethod::vicreg: return "vicreg";
    case AlignMethod::latent_mse: return "mse";
    case AlignMethod::none: return "none";
  }
  return "none";
}

inline AlignMethod align_method_from_string(const std::string& s) {
  if (s == "llma") return AlignMethod::llma;
  if (s == "simclr") return AlignMethod::simclr;
  if (s == "barlow") return AlignMethod::barlow;
  if (s == "vicreg") return AlignMethod::vicreg;
  if (s == "mse" || s == "latent_mse") return AlignMethod::latent_mse;
  if (s == "none") return AlignMethod::none;
  throw std::invalid_argument("unknown alignment method: " + s);
}

struct AlignmentConfig {
  AlignMethod method{AlignMethod::llma};
  int window_len{8};
  double temperature{0.1};
  double barlow_lambda{5e-3};
  double vicreg_inv{25.0}, vicreg_var{25.0}, vicreg_cov{1.0};
  double vicreg_gamma{1.0};
  bool symmetrize{false};
  // LLMA component switches, used by the ablation harness
  bool use_contrast{true};
  bool use_cov{true};

  nlohmann::json to_json() const {
    return {{"method", to_string(method)},
            {"window_len", window_len},
            {"temperature", temperature},
            {"barlow_lambda", barlow_lambda},
            {"vicreg_inv", vicreg_inv},
            {"vicreg_var", vicreg_var},
            {"vicreg_cov", vicreg_cov},
            {"vicreg_gamma", vicreg_gamma},
            {"symmetrize", symmetrize},
            {"use_contrast", use_contrast},
            {"use_cov", use_cov}};
  }

  static AlignmentConfig from_json(const nlohmann::json& j) {
    AlignmentConfig c;
    c.method = align_method_from_string(j.at("method"));
    c.window_len = j.at("window_len");
    c.temperature = j.at("temperature");
    c.barlow_lambda = j.at("barlow_lambda");
    c.vicreg_inv = j.at("vicreg_inv");
    c.vicreg_var = j.at("vicreg_var");
    c.vicreg_cov = j.at("vicreg_cov");
    c.vicreg_gamma = j.at("vicreg_gamma");
    c.symmetrize = j.at("symmetrize");
    c.use_contrast = j.value("use_contrast", true);
    c.use_cov = j.value("use_cov", true);
    return c;
  }
};

namespace align {

constexpr double kNormEps = 1e-8;

// Mean-pool each window of each batch element and stack the results into a
// (B*M) x d_Z matrix, batch-major. `zs` holds one L x d_Z Var per element.
inline ad::Var pooled_windows(ad::Graph& g, const std::vector<ad::Var>& zs, int window_len,
                              int num_windows) {
  std::vector<ad::Var> rows;
  rows.reserve(zs.size() * static_cast<std::size_t>(num_windows));
  for (const ad::Var& z : zs)
    for (int i = 0; i < num_windows; ++i)
      rows.push_back(ad::colwise_mean(ad::slice_rows(z, static_cast<Eigen::Index>(i) * window_len,
                                                     window_len)));
  (void)g;
  return ad::concat_rows(rows);
}

// L2-normalize each row (with an epsilon so degenerate zero-norm pooled
// windows stay defined).
inline ad::Var normalize_rows(ad::Var m) {
  std::vector<ad::Var> rows;
  rows.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    ad::Var r = ad::slice_rows(m, i, 1);
    ad::Var n = ad::add_const(ad::sqrt_op(ad::sum(ad::square(r))), kNormEps);
    rows.push_back(ad::divs(r, n));
  }
  return ad::concat_rows(rows);
}

// Stable -log softmax along rows of a similarity matrix: returns the
// per-row loss column  lse_i - s_{i,pos(i)}  where pos(i) = i.
inline ad::Var info_nce_rows(ad::Graph& g, ad::Var sim) {
  const Eigen::Index n = sim.rows();
  Eigen::VectorXd rowmax = sim.value().rowwise().maxCoeff();
  ad::Var mx = ad::constant(g, rowmax);
  ad::Var shifted = ad::sub(sim, ad::broadcast_col(mx, n));
  ad::Var ones = ad::constant(g, Eigen::MatrixXd::Ones(n, 1));
  ad::Var lse = ad::add(ad::log_op(ad::matmul(ad::exp_op(shifted), ones)), mx);
  ad::Var eye = ad::constant(g, Eigen::MatrixXd::Identity(n, n));
  ad::Var pos = ad::matmul(ad::cmul(sim, eye), ones);
  return ad::sub(lse, pos);
}

// First-order alignment (one-directional): anchors are the pooled X-side
// windows, candidates are every pooled Y-side window in the batch.
inline ad::Var contrastive_align_v(ad::Graph& g, const std::vector<ad::Var>& zx,
                                   const std::vector<ad::Var>& zy, int window_len,
                                   int num_windows, double tau) {
  ad::Var ux = normalize_rows(pooled_windows(g, zx, window_len, num_windows));
  ad::Var uy = normalize_rows(pooled_windows(g, zy, window_len, num_windows));
  ad::Var sim = ad::scale(ad::matmul(ux, ad::transpose(uy)), 1.0 / tau);
  return ad::mean(info_nce_rows(g, sim));
}

// Second-order alignment: per window, match the d_Z x d_Z sample
// covariances of the two latent streams (unbiased, 1/(C-1)).
inline ad::Var covariance_align_v(ad::Graph& g, const std::vector<ad::Var>& zx,
                                  const std::vector<ad::Var>& zy, int window_len,
                                  int num_windows) {
  if (window_len < 2) throw std::invalid_argument("covariance_align: window_len must be >= 2");
  auto window_cov = [&](ad::Var z, int i) {
    ad::Var w = ad::slice_rows(z, static_cast<Eigen::Index>(i) * window_len, window_len);
    ad::Var centered = ad::sub(w, ad::broadcast_row(ad::colwise_mean(w), window_len));
    return ad::scale(ad::matmul(ad::transpose(centered), centered), 1.0 / (window_len - 1));
  };
  ad::Var acc;
  int count = 0;
  for (std::size_t b = 0; b < zx.size(); ++b) {
    for (int i = 0; i < num_windows; ++i) {
      ad::Var term = ad::mse(window_cov(zx[b], i), window_cov(zy[b], i));
      acc = (count == 0) ? term : ad::add(acc, term);
      ++count;
    }
  }
  (void)g;
  return ad::scale(acc, 1.0 / count);
}

inline ad::Var llma_v(ad::Graph& g, const std::vector<ad::Var>& zx, const std::vector<ad::Var>& zy,
                      const AlignmentConfig& cfg, int num_windows) {
  ad::Var total;
  bool have = false;
  if (cfg.use_contrast) {
    total = contrastive_align_v(g, zx, zy, cfg.window_len, num_windows, cfg.temperature);
    if (cfg.symmetrize) {
      ad::Var rev = contrastive_align_v(g, zy, zx, cfg.window_len, num_windows, cfg.temperature);
      total = ad::scale(ad::add(total, rev), 0.5);
    }
    have = true;
  }
  if (cfg.use_cov) {
    ad::Var cov = covariance_align_v(g, zx, zy, cfg.window_len, num_windows);
    total = have ? ad::add(total, cov) : cov;
    have = true;
  }
  if (!have) return ad::scalar_const(g, 0.0);
  return total;
}

// NT-Xent over the 2N pooled embeddings of both modalities; positives are
// corresponding rows, self-similarity excluded, symmetric average.
inline ad::Var simclr_align_v(ad::Graph& g, ad::Var zx_pooled, ad::Var zy_pooled, double tau) {
  const Eigen::Index n = zx_pooled.rows();
  ad::Var z = normalize_rows(ad::concat_rows({zx_pooled, zy_pooled}));
  ad::Var sim = ad::scale(ad::matmul(z, ad::transpose(z)), 1.0 / tau);
  // mask out self-similarity before the log-sum-exp
  Eigen::MatrixXd selfmask = Eigen::MatrixXd::Identity(2 * n, 2 * n) * (-1e9);
  ad::Var masked = ad::add(sim, ad::constant(g, selfmask));

  Eigen::VectorXd rowmax = masked.value().rowwise().maxCoeff();
  ad::Var mx = ad::constant(g, rowmax);
  ad::Var shifted = ad::sub(masked, ad::broadcast_col(mx, 2 * n));
  ad::Var ones = ad::constant(g, Eigen::MatrixXd::Ones(2 * n, 1));
  ad::Var lse = ad::add(ad::log_op(ad::matmul(ad::exp_op(shifted), ones)), mx);

  Eigen::MatrixXd pair = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    pair(i, n + i) = 1.0;
    pair(n + i, i) = 1.0;
  }
  ad::Var pos = ad::matmul(ad::cmul(sim, ad::constant(g, pair)), ones);
  return ad::mean(ad::sub(lse, pos));
}

// Cross-correlation alignment on per-dimension standardized batches.
inline ad::Var barlow_align_v(ad::Graph& g, ad::Var zx_pooled, ad::Var zy_pooled, double lam) {
  const Eigen::Index n = zx_pooled.rows(), d = zx_pooled.cols();
  auto standardize = [&](ad::Var z) {
    ad::Var centered = ad::sub(z, ad::broadcast_row(ad::colwise_mean(z), n));
    ad::Var sd = ad::sqrt_op(ad::add_const(ad::colwise_mean(ad::square(centered)), kNormEps));
    return ad::cdiv(centered, ad::broadcast_row(sd, n));
  };
  ad::Var c = ad::scale(ad::matmul(ad::transpose(standardize(zx_pooled)), standardize(zy_pooled)),
                        1.0 / static_cast<double>(n));
  ad::Var eye = ad::constant(g, Eigen::MatrixXd::Identity(d, d));
  ad::Var off = ad::constant(g, Eigen::MatrixXd::Ones(d, d) - Eigen::MatrixXd::Identity(d, d));
  ad::Var diag_term = ad::sum(ad::square(ad::cmul(ad::sub(eye, c), eye)));
  ad::Var off_term = ad::sum(ad::square(ad::cmul(c, off)));
  return ad::add(diag_term, ad::scale(off_term, lam));
}

// Invariance + variance hinge + covariance redundancy terms.
inline ad::Var vicreg_align_v(ad::Graph& g, ad::Var zx_pooled, ad::Var zy_pooled, double w_inv,
                              double w_var, double w_cov, double gamma_v) {
  const Eigen::Index n = zx_pooled.rows(), d = zx_pooled.cols();
  ad::Var inv = ad::mse(zx_pooled, zy_pooled);

  auto var_term = [&](ad::Var z) {
    ad::Var centered = ad::sub(z, ad::broadcast_row(ad::colwise_mean(z), n));
    ad::Var sd = ad::sqrt_op(ad::add_const(ad::colwise_mean(ad::square(centered)), kNormEps));
    ad::Var hinge = ad::relu(ad::add_const(ad::scale(sd, -1.0), gamma_v));
    return ad::sum(ad::square(hinge));
  };
  auto cov_term = [&](ad::Var z) {
    ad::Var centered = ad::sub(z, ad::broadcast_row(ad::colwise_mean(z), n));
    ad::Var c = ad::scale(ad::matmul(ad::transpose(centered), centered), 1.0 / static_cast<double>(n));
    ad::Var off = ad::constant(g, Eigen::MatrixXd::Ones(d, d) - Eigen::MatrixXd::Identity(d, d));
    return ad::sum(ad::square(ad::cmul(c, off)));
  };
  ad::Var var_avg = ad::scale(ad::add(var_term(zx_pooled), var_term(zy_pooled)), 0.5);
  ad::Var cov_avg = ad::scale(ad::add(cov_term(zx_pooled), cov_term(zy_pooled)), 0.5);
  ad::Var total = ad::scale(inv, w_inv);
  total = ad::add(total, ad::scale(var_avg, w_var));
  return ad::add(total, ad::scale(cov_avg, w_cov));
}

inline ad::Var latent_mse_align_v(ad::Graph& g, const std::vector<ad::Var>& zx,
                                  const std::vector<ad::Var>& zy) {
  ad::Var acc;
  for (std::size_t b = 0; b < zx.size(); ++b) {
    ad::Var term = ad::mse(zx[b], zy[b]);
    acc = (b == 0) ? term : ad::add(acc, term);
  }
  (void)g;
  return ad::scale(acc, 1.0 / static_cast<double>(zx.size()));
}

// Dispatch used by the trainer: builds the configured alignment loss over
// per-element latent Vars. method == none contributes an exact zero with
// no gradient path into the latents.
inline ad::Var alignment_loss_v(ad::Graph& g, const std::vector<ad::Var>& zx,
                                const std::vector<ad::Var>& zy, const AlignmentConfig& cfg,
                                int num_windows) {
  switch (cfg.method) {
    case AlignMethod::none:
      return ad::scalar_const(g, 0.0);
    case AlignMethod::llma:
      return llma_v(g, zx, zy, cfg, num_windows);
    case AlignMethod::latent_mse:
      return latent_mse_align_v(g, zx, zy);
    case AlignMethod::simclr: {
      ad::Var px = pooled_windows(g, zx, cfg.window_len, num_windows);
      ad::Var py = pooled_windows(g, zy, cfg.window_len, num_windows);
      return simclr_align_v(g, px, py, cfg.temperature);
    }
    case AlignMethod::barlow: {
      ad::Var px = pooled_windows(g, zx, cfg.window_len, num_windows);
      ad::Var py = pooled_windows(g, zy, cfg.window_len, num_windows);
      return barlow_align_v(g, px, py, cfg.barlow_lambda);
    }
    case AlignMethod::vicreg: {
      ad::Var px = pooled_windows(g, zx, cfg.window_len, num_windows);
      ad::Var py = pooled_windows(g, zy, cfg.window_len, num_windows);
      return vicreg_align_v(g, px, py, cfg.vicreg_inv, cfg.vicreg_var, cfg.vicreg_cov,
                            cfg.vicreg_gamma);
    }
  }
  return ad::scalar_const(g, 0.0);
}

namespace detail {
inline std::vector<ad::Var> as_vars(ad::Graph& g, const Batch& z, bool requires_grad = false) {
  std::vector<ad::Var> vs;
  vs.reserve(z.size());
  for (const Seq& s : z) vs.push_back(ad::leaf(g, s, requires_grad));
  return vs;
}
}  // namespace detail

}  // namespace align

// ---- value-level entry points ----

inline void check_traj_pair(const LatentTrajectory& zx, const LatentTrajectory& zy) {
  if (zx.z.size() != zy.z.size() || zx.num_windows != zy.num_windows ||
      zx.window_len != zy.window_len || zx.d_latent() != zy.d_latent())
    throw std::invalid_argument("latent trajectories do not match");
}

inline double contrastive_align(const LatentTrajectory& zx, const LatentTrajectory& zy, double tau) {
  check_traj_pair(zx, zy);
  if (tau <= 0.0) throw std::invalid_argument("temperature must be > 0");
  ad::Graph g;
  return align::contrastive_align_v(g, align::detail::as_vars(g, zx.z),
                                    align::detail::as_vars(g, zy.z), zx.window_len,
                                    zx.num_windows, tau)
      .scalar();
}

inline double covariance_align(const LatentTrajectory& zx, const LatentTrajectory& zy) {
  check_traj_pair(zx, zy);
  ad::Graph g;
  return align::covariance_align_v(g, align::detail::as_vars(g, zx.z),
                                   align::detail::as_vars(g, zy.z), zx.window_len, zx.num_windows)
      .scalar();
}

inline double llma(const LatentTrajectory& zx, const LatentTrajectory& zy,
                   const AlignmentConfig& cfg) {
  check_traj_pair(zx, zy);
  ad::Graph g;
  return align::llma_v(g, align::detail::as_vars(g, zx.z), align::detail::as_vars(g, zy.z), cfg,
                       zx.num_windows)
      .scalar();
}

inline double simclr_align(const Eigen::MatrixXd& zx_pooled, const Eigen::MatrixXd& zy_pooled,
                           double tau) {
  if (zx_pooled.rows() != zy_pooled.rows() || zx_pooled.cols() != zy_pooled.cols())
    throw std::invalid_argument("pooled embedding shape mismatch");
  ad::Graph g;
  return align::simclr_align_v(g, ad::constant(g, zx_pooled), ad::constant(g, zy_pooled), tau)
      .scalar();
}

inline double barlow_align(const Eigen::MatrixXd& zx_pooled, const Eigen::MatrixXd& zy_pooled,
                           double lam) {
  ad::Graph g;
  return align::barlow_align_v(g, ad::constant(g, zx_pooled), ad::constant(g, zy_pooled), lam)
      .scalar();
}

inline double vicreg_align(const Eigen::MatrixXd& zx_pooled, const Eigen::MatrixXd& zy_pooled,
                           double w_inv, double w_var, double w_cov, double gamma_v) {
  ad::Graph g;
  return align::vicreg_align_v(g, ad::constant(g, zx_pooled), ad::constant(g, zy_pooled), w_inv,
                               w_var, w_cov, gamma_v)
      .scalar();
}

inline double latent_mse_align(const Batch& zx, const Batch& zy) {
  if (zx.size() != zy.size()) throw std::invalid_argument("latent batch size mismatch");
  ad::Graph g;
  return align::latent_mse_align_v(g, align::detail::as_vars(g, zx),
                                   align::detail::as_vars(g, zy))
      .scalar();
}

}  // namespace xmdiff
