#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "xmdiff/core/graph.hpp"
#include "xmdiff/core/rng.hpp"
#include "xmdiff/core/types.hpp"
#include "xmdiff/train/optimizer.hpp"

#include <Eigen/Eigenvalues>

namespace xmdiff {

inline double generation_mse(const Batch& generated, const Batch& ground_truth) {
  if (generated.size() != ground_truth.size())
    throw std::invalid_argument("generation_mse: batch size mismatch");
  if (generated.empty()) throw std::invalid_argument("generation_mse: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    if (generated[i].rows() != ground_truth[i].rows() ||
        generated[i].cols() != ground_truth[i].cols())
      throw std::invalid_argument("generation_mse: shape mismatch");
    total += (generated[i] - ground_truth[i]).array().square().mean();
  }
  return total / static_cast<double>(generated.size());
}

namespace eval_detail {

// Symmetric PSD square root via eigendecomposition; small negative
// eigenvalues from roundoff are clipped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  Eigen::VectorXd lam = es.eigenvalues();
  for (Eigen::Index i = 0; i < lam.size(); ++i) lam(i) = lam(i) > 0.0 ? std::sqrt(lam(i)) : 0.0;
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

inline Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& feats) {
  Eigen::MatrixXd c = feats.rowwise() - feats.colwise().mean();
  return c.transpose() * c / static_cast<double>(feats.rows() - 1);
}

}  // namespace eval_detail

// Frechet distance between Gaussian fits of two feature sets:
// |mu - mu'|^2 + tr(S + S' - 2 (S^{1/2} S' S^{1/2})^{1/2}).
inline double fid(const Eigen::MatrixXd& real_feats, const Eigen::MatrixXd& gen_feats) {
  if (real_feats.cols() != gen_feats.cols()) throw std::invalid_argument("fid: feature dim mismatch");
  if (real_feats.rows() < 2 || gen_feats.rows() < 2)
    throw std::invalid_argument("fid: need at least 2 samples per side");
  if (!real_feats.allFinite() || !gen_feats.allFinite())
    throw std::invalid_argument("fid: non-finite features");
  Eigen::RowVectorXd mu1 = real_feats.colwise().mean(), mu2 = gen_feats.colwise().mean();
  Eigen::MatrixXd s1 = eval_detail::sample_cov(real_feats), s2 = eval_detail::sample_cov(gen_feats);
  Eigen::MatrixXd rt = eval_detail::psd_sqrt(s1);
  Eigen::MatrixXd mid = eval_detail::psd_sqrt(rt * s2 * rt);
  double d = (mu1 - mu2).squaredNorm() + (s1 + s2).trace() - 2.0 * mid.trace();
  return std::max(d, 0.0);
}

// Linear centered kernel alignment between two representation matrices
// (rows = samples). Invariant to orthogonal transforms and isotropic
// scaling of either side; 1 for identical-up-to-rotation representations.
inline double latent_correlation(const Eigen::MatrixXd& zx, const Eigen::MatrixXd& zy) {
  if (zx.rows() != zy.rows()) throw std::invalid_argument("latent_correlation: row mismatch");
  Eigen::MatrixXd a = zx.rowwise() - zx.colwise().mean();
  Eigen::MatrixXd b = zy.rowwise() - zy.colwise().mean();
  double cross = (a.transpose() * b).squaredNorm();
  double na = (a.transpose() * a).norm(), nb = (b.transpose() * b).norm();
  if (na < 1e-12 || nb < 1e-12)
    throw std::invalid_argument("latent_correlation: zero-variance input");
  return cross / (na * nb);
}

// ---- predictive score ----

// Single-layer recurrent predictor: consumes a prefix with teacher
// forcing, then rolls out the horizon autoregressively. Architecture,
// epochs and seed are pinned so the score is reproducible.
class RecurrentPredictor {
 public:
  RecurrentPredictor(int d, int hidden, std::uint64_t seed) : d_(d), hidden_(hidden) {
    Rng rng(seed);
    double s_in = 1.0 / std::sqrt(static_cast<double>(d));
    double s_h = 1.0 / std::sqrt(static_cast<double>(hidden));
    p_["w_ih"] = rng.normal_matrix(d, hidden) * s_in;
    p_["w_hh"] = rng.normal_matrix(hidden, hidden) * s_h;
    p_["b_h"] = Eigen::MatrixXd::Zero(1, hidden);
    p_["w_out"] = rng.normal_matrix(hidden, d) * s_h;
    p_["b_out"] = Eigen::MatrixXd::Zero(1, d);
  }

  // stacked: one L x d sequence per batch element, equal lengths
  void fit(const Batch& seqs, int prefix_len, int epochs, double lr) {
    AdamW opt(lr, 0.0);
    for (int e = 0; e < epochs; ++e) {
      ad::Graph g;
      std::map<std::string, ad::Var> w;
      for (auto& [name, t] : p_) w.emplace(name, ad::leaf(g, t, true));
      ad::Var loss = rollout_loss(g, w, seqs, prefix_len);
      g.backward(loss.id());
      TensorMap grads;
      for (auto& [name, v] : w) grads[name] = v.grad();
      opt.update(p_, grads);
    }
  }

  // mean absolute error of the horizon rollout on held-out sequences
  double mae(const Batch& seqs, int prefix_len) const {
    const int N = static_cast<int>(seqs.size());
    const int L = static_cast<int>(seqs.front().rows());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(N, hidden_);
    Eigen::MatrixXd x(N, d_);
    double err = 0.0;
    int count = 0;
    for (int l = 0; l < L - 1; ++l) {
      if (l < prefix_len) {
        for (int n = 0; n < N; ++n) x.row(n) = seqs[static_cast<std::size_t>(n)].row(l);
      }
      h = ((x * p_.at("w_ih") + h * p_.at("w_hh")).rowwise() + p_.at("b_h").row(0))
              .array()
              .tanh();
      Eigen::MatrixXd pred = (h * p_.at("w_out")).rowwise() + p_.at("b_out").row(0);
      if (l + 1 >= prefix_len) {
        for (int n = 0; n < N; ++n)
          err += (pred.row(n) - seqs[static_cast<std::size_t>(n)].row(l + 1)).cwiseAbs().sum();
        count += N * d_;
        x = pred;  // feed the prediction back
      }
    }
    return err / count;
  }

 private:
  ad::Var rollout_loss(ad::Graph& g, std::map<std::string, ad::Var>& w, const Batch& seqs,
                       int prefix_len) const {
    const int N = static_cast<int>(seqs.size());
    const int L = static_cast<int>(seqs.front().rows());
    ad::Var h = ad::constant(g, Eigen::MatrixXd::Zero(N, hidden_));
    auto stack_row = [&](int l) {
      Eigen::MatrixXd m(N, d_);
      for (int n = 0; n < N; ++n) m.row(n) = seqs[static_cast<std::size_t>(n)].row(l);
      return m;
    };
    ad::Var x = ad::constant(g, stack_row(0));
    ad::Var loss;
    bool have = false;
    for (int l = 0; l < L - 1; ++l) {
      if (l < prefix_len && l > 0) x = ad::constant(g, stack_row(l));
      ad::Var pre = ad::add(ad::add(ad::matmul(x, w.at("w_ih")), ad::matmul(h, w.at("w_hh"))),
                            ad::broadcast_row(w.at("b_h"), N));
      h = ad::tanh_op(pre);
      ad::Var pred = ad::add(ad::matmul(h, w.at("w_out")), ad::broadcast_row(w.at("b_out"), N));
      if (l + 1 >= prefix_len) {
        ad::Var target = ad::constant(g, stack_row(l + 1));
        ad::Var step_loss = ad::mse(pred, target);
        loss = have ? ad::add(loss, step_loss) : step_loss;
        have = true;
        x = pred;
      }
    }
    return loss;
  }

  int d_, hidden_;
  TensorMap p_;
};

// MAE of a pinned recurrent forecaster trained on `train` and evaluated
// on `test` over the trailing horizon_frac of each sequence.
inline double predictive_mae(const Batch& train, const Batch& test, double horizon_frac,
                             std::uint64_t seed, int hidden = 32, int epochs = 200,
                             double lr = 1e-2) {
  if (train.empty() || test.empty()) throw std::invalid_argument("predictive_mae: empty input");
  if (!(horizon_frac > 0.0 && horizon_frac < 1.0))
    throw std::invalid_argument("predictive_mae: horizon_frac must be in (0,1)");
  const int L = static_cast<int>(train.front().rows());
  const int d = static_cast<int>(train.front().cols());
  int prefix_len = L - static_cast<int>(std::lround(horizon_frac * L));
  if (prefix_len < 1 || prefix_len >= L)
    throw std::invalid_argument("predictive_mae: sequences too short for the horizon");
  RecurrentPredictor model(d, hidden, seed);
  model.fit(train, prefix_len, epochs, lr);
  return model.mae(test, prefix_len);
}

struct PredictiveScore {
  double mae{0};           // train-on-generated, test-on-real
  double baseline_mae{0};  // train-on-real, test-on-real
  double ratio{0};
};

inline PredictiveScore predictive_score(const Batch& generated_train, const Batch& real_train,
                                        const Batch& real_test, double horizon_frac,
                                        std::uint64_t seed) {
  PredictiveScore s;
  s.mae = predictive_mae(generated_train, real_test, horizon_frac, seed);
  s.baseline_mae = predictive_mae(real_train, real_test, horizon_frac, seed);
  s.ratio = s.mae / s.baseline_mae;
  return s;
}

// ---- probing ----

enum class ProbeKind { linear, nonlinear };

namespace eval_detail {

inline ad::Var cross_entropy(ad::Graph& g, ad::Var logits, const Eigen::MatrixXd& onehot) {
  const Eigen::Index n = logits.rows(), k = logits.cols();
  Eigen::VectorXd rowmax = logits.value().rowwise().maxCoeff();
  ad::Var mx = ad::constant(g, rowmax);
  ad::Var shifted = ad::sub(logits, ad::broadcast_col(mx, k));
  ad::Var lse = ad::log_op(
      ad::matmul(ad::exp_op(shifted), ad::constant(g, Eigen::MatrixXd::Ones(k, 1))));
  ad::Var correct = ad::matmul(ad::cmul(logits, ad::constant(g, onehot)),
                               ad::constant(g, Eigen::MatrixXd::Ones(k, 1)));
  ad::Var per_row = ad::sub(ad::add(lse, mx), correct);
  (void)n;
  return ad::mean(per_row);
}

struct ProbeSplit {
  Eigen::MatrixXd train_x, test_x;
  std::vector<int> train_y, test_y;
  int n_classes{0};
};

inline ProbeSplit stratified_split(const Eigen::MatrixXd& latents, const std::vector<int>& labels,
                                   std::uint64_t seed) {
  if (static_cast<std::size_t>(latents.rows()) != labels.size())
    throw std::invalid_argument("probe: latent/label count mismatch");
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i)
    by_class[labels[static_cast<std::size_t>(i)]].push_back(i);
  if (by_class.size() < 2) throw std::invalid_argument("probe: single-class label set");

  Rng rng(seed);
  std::vector<int> train_idx, test_idx;
  for (auto& [label, idx] : by_class) {
    rng.shuffle(idx);
    // 80/20 split, at least one test sample per class when possible
    int n_test = std::max(1, static_cast<int>(idx.size() / 5));
    if (n_test >= static_cast<int>(idx.size())) n_test = static_cast<int>(idx.size()) - 1;
    for (std::size_t i = 0; i < idx.size(); ++i)
      (static_cast<int>(i) < n_test ? test_idx : train_idx).push_back(idx[i]);
  }
  ProbeSplit s;
  s.n_classes = static_cast<int>(by_class.rbegin()->first) + 1;
  auto gather = [&](const std::vector<int>& idx, Eigen::MatrixXd& x, std::vector<int>& y) {
    x.resize(static_cast<Eigen::Index>(idx.size()), latents.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = latents.row(idx[i]);
      y.push_back(labels[static_cast<std::size_t>(idx[i])]);
    }
  };
  gather(train_idx, s.train_x, s.train_y);
  gather(test_idx, s.test_x, s.test_y);
  return s;
}

}  // namespace eval_detail

// Train a simple classifier on frozen latents and report held-out
// accuracy: multinomial logistic regression (linear) or a one-hidden-layer
// width-64 network (nonlinear), on a stratified 80/20 split.
inline double probe(const Eigen::MatrixXd& latents, const std::vector<int>& labels, ProbeKind kind,
                    std::uint64_t seed = 0) {
  eval_detail::ProbeSplit sp = eval_detail::stratified_split(latents, labels, seed);
  const int k = sp.n_classes;
  const int d = static_cast<int>(latents.cols());
  const int hidden = 64;

  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(sp.train_x.rows(), k);
  for (Eigen::Index i = 0; i < sp.train_x.rows(); ++i)
    onehot(i, sp.train_y[static_cast<std::size_t>(i)]) = 1.0;

  Rng rng(seed ^ 0x70726f6265ULL);
  TensorMap p;
  if (kind == ProbeKind::linear) {
    p["w"] = rng.normal_matrix(d, k) * 0.01;
    p["b"] = Eigen::MatrixXd::Zero(1, k);
  } else {
    p["w1"] = rng.normal_matrix(d, hidden) / std::sqrt(static_cast<double>(d));
    p["b1"] = Eigen::MatrixXd::Zero(1, hidden);
    p["w2"] = rng.normal_matrix(hidden, k) * 0.01;
    p["b2"] = Eigen::MatrixXd::Zero(1, k);
  }

  auto logits_of = [&](ad::Graph& g, std::map<std::string, ad::Var>& w,
                       const Eigen::MatrixXd& x) {
    ad::Var in = ad::constant(g, x);
    if (kind == ProbeKind::linear)
      return ad::add(ad::matmul(in, w.at("w")), ad::broadcast_row(w.at("b"), x.rows()));
    ad::Var h = ad::relu(ad::add(ad::matmul(in, w.at("w1")), ad::broadcast_row(w.at("b1"), x.rows())));
    return ad::add(ad::matmul(h, w.at("w2")), ad::broadcast_row(w.at("b2"), x.rows()));
  };

  const int epochs = kind == ProbeKind::linear ? 300 : 400;
  AdamW opt(0.05, 1e-4);
  for (int e = 0; e < epochs; ++e) {
    ad::Graph g;
    std::map<std::string, ad::Var> w;
    for (auto& [name, t] : p) w.emplace(name, ad::leaf(g, t, true));
    ad::Var loss = eval_detail::cross_entropy(g, logits_of(g, w, sp.train_x), onehot);
    g.backward(loss.id());
    TensorMap grads;
    for (auto& [name, v] : w) grads[name] = v.grad();
    opt.update(p, grads);
  }

  ad::Graph g;
  std::map<std::string, ad::Var> w;
  for (auto& [name, t] : p) w.emplace(name, ad::leaf(g, t, false));
  Eigen::MatrixXd test_logits = logits_of(g, w, sp.test_x).value();
  int correct = 0;
  for (Eigen::Index i = 0; i < test_logits.rows(); ++i) {
    Eigen::Index arg = 0;
    test_logits.row(i).maxCoeff(&arg);
    if (static_cast<int>(arg) == sp.test_y[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test_logits.rows());
}

// ---- report plumbing ----

struct MetricsReport {
  std::string modality_pair;  // e.g. "x|y" convention: generated|conditioning
  std::string direction;
  int fold_index{0};
  double mse{0}, fid{0}, predictive{0}, predictive_ratio{0};
  double probe_linear{0}, probe_nonlinear{0};
  double latent_corr{0};
};

}  // namespace xmdiff
