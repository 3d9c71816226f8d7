#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "xmdiff/core/graph.hpp"
#include "xmdiff/core/rng.hpp"
#include "xmdiff/core/types.hpp"

#include <nlohmann/json.hpp>

namespace xmdiff {

struct DenoiserConfig {
  int d_in{0};
  int d_cond{0};
  int d_model{32};
  int n_layers_enc{2};
  int n_layers_dec{2};
  int n_heads{4};
  int max_len{64};
  double dropout{0.1};

  // encoder output width; fixed equal to d_model
  int d_latent() const { return d_model; }
  int d_ffn() const { return 4 * d_model; }

  void validate() const {
    if (d_in < 1 || d_cond < 1 || d_model < 1 || n_layers_enc < 1 || n_layers_dec < 1 ||
        n_heads < 1 || max_len < 1)
      throw std::invalid_argument("DenoiserConfig: all counts must be >= 1");
    if (d_model % n_heads != 0)
      throw std::invalid_argument("DenoiserConfig: d_model must be divisible by n_heads");
  }

  nlohmann::json to_json() const {
    return {{"d_in", d_in},       {"d_cond", d_cond},           {"d_model", d_model},
            {"n_layers_enc", n_layers_enc}, {"n_layers_dec", n_layers_dec},
            {"n_heads", n_heads}, {"max_len", max_len},         {"dropout", dropout}};
  }

  static DenoiserConfig from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    c.d_in = j.at("d_in");
    c.d_cond = j.at("d_cond");
    c.d_model = j.at("d_model");
    c.n_layers_enc = j.at("n_layers_enc");
    c.n_layers_dec = j.at("n_layers_dec");
    c.n_heads = j.at("n_heads");
    c.max_len = j.at("max_len");
    c.dropout = j.at("dropout");
    return c;
  }
};

// Standard sinusoidal embedding of a scalar position/step into d dims.
inline Eigen::RowVectorXd sinusoidal_embedding(double pos, int d) {
  Eigen::RowVectorXd e(d);
  int half = d / 2;
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * (2.0 * i) / d);
    e(2 * i) = std::sin(pos * freq);
    e(2 * i + 1) = std::cos(pos * freq);
  }
  if (d % 2 == 1) e(d - 1) = std::sin(pos);
  return e;
}

inline Eigen::MatrixXd sinusoidal_table(int max_len, int d) {
  Eigen::MatrixXd t(max_len, d);
  for (int p = 0; p < max_len; ++p) t.row(p) = sinusoidal_embedding(p, d);
  return t;
}

// All learnable arrays of one conditional denoiser, keyed by name. The
// positional table is a fixed buffer, not a parameter.
struct DenoiserParams {
  DenoiserConfig config;
  std::map<std::string, Eigen::MatrixXd> tensors;
  Eigen::MatrixXd pos_table;

  static DenoiserParams init(const DenoiserConfig& cfg, Rng& rng) {
    cfg.validate();
    DenoiserParams p;
    p.config = cfg;
    p.pos_table = sinusoidal_table(cfg.max_len, cfg.d_model);

    auto dense = [&](const std::string& name, int in, int out) {
      double std_dev = 1.0 / std::sqrt(static_cast<double>(in));
      p.tensors[name + ".w"] = rng.normal_matrix(in, out) * std_dev;
      p.tensors[name + ".b"] = Eigen::MatrixXd::Zero(1, out);
    };
    auto lnorm = [&](const std::string& name, int d) {
      p.tensors[name + ".g"] = Eigen::MatrixXd::Ones(1, d);
      p.tensors[name + ".b"] = Eigen::MatrixXd::Zero(1, d);
    };
    auto attn = [&](const std::string& name, int d) {
      dense(name + ".q", d, d);
      dense(name + ".k", d, d);
      dense(name + ".v", d, d);
      dense(name + ".o", d, d);
    };

    const int dm = cfg.d_model;
    dense("in_proj", cfg.d_in, dm);
    dense("cond_proj", cfg.d_cond, dm);
    dense("t_mlp.l1", dm, dm);
    dense("t_mlp.l2", dm, dm);
    for (int i = 0; i < cfg.n_layers_enc; ++i) {
      std::string pre = "enc." + std::to_string(i) + ".";
      lnorm(pre + "ln1", dm);
      attn(pre + "attn", dm);
      lnorm(pre + "ln2", dm);
      dense(pre + "ffn.l1", dm, cfg.d_ffn());
      dense(pre + "ffn.l2", cfg.d_ffn(), dm);
    }
    lnorm("enc_ln", dm);
    for (int i = 0; i < cfg.n_layers_dec; ++i) {
      std::string pre = "dec." + std::to_string(i) + ".";
      lnorm(pre + "ln1", dm);
      attn(pre + "self", dm);
      lnorm(pre + "ln2", dm);
      attn(pre + "cross", dm);
      lnorm(pre + "ln3", dm);
      dense(pre + "ffn.l1", dm, cfg.d_ffn());
      dense(pre + "ffn.l2", cfg.d_ffn(), dm);
    }
    lnorm("dec_ln", dm);
    dense("out_proj", dm, cfg.d_in);
    return p;
  }

  std::int64_t count_params() const {
    std::int64_t n = 0;
    for (const auto& [name, m] : tensors) n += static_cast<std::int64_t>(m.size());
    return n;
  }
};

// Binds parameter tensors to tape leaves, one leaf per tensor per graph,
// shared across batch elements so gradients accumulate on the tape.
class ParamBinding {
 public:
  ParamBinding(ad::Graph& g, DenoiserParams& params) : g_(&g), params_(&params) {}

  ad::Var get(const std::string& name) {
    auto it = vars_.find(name);
    if (it != vars_.end()) return it->second;
    auto pt = params_->tensors.find(name);
    if (pt == params_->tensors.end()) throw std::out_of_range("no such parameter: " + name);
    ad::Var v = ad::leaf(*g_, pt->second, /*requires_grad=*/true);
    vars_.emplace(name, v);
    return v;
  }

  // Collect tape gradients into a name -> grad map (after backward()).
  void export_grads(std::map<std::string, Eigen::MatrixXd>& out) const {
    for (const auto& [name, v] : vars_) out[name] = v.grad();
  }

 private:
  ad::Graph* g_;
  DenoiserParams* params_;
  std::map<std::string, ad::Var> vars_;
};

namespace net_detail {

inline ad::Var dropout_mask(ad::Var x, double rate, Rng* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  ad::Mat mask(x.rows(), x.cols());
  double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      mask(i, j) = (rng->uniform() < keep) ? 1.0 / keep : 0.0;
  return ad::cmul(x, ad::constant(x.graph(), mask));
}

inline ad::Var attention(ad::Graph& g, ParamBinding& pb, const std::string& pre, ad::Var queries,
                         ad::Var memory, int n_heads, double dropout, Rng* rng) {
  using namespace ad;
  Var q = linear(queries, pb.get(pre + ".q.w"), pb.get(pre + ".q.b"));
  Var k = linear(memory, pb.get(pre + ".k.w"), pb.get(pre + ".k.b"));
  Var v = linear(memory, pb.get(pre + ".v.w"), pb.get(pre + ".v.b"));
  const int dm = static_cast<int>(q.cols());
  const int dh = dm / n_heads;
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    Var qh = slice_cols(q, h * dh, dh);
    Var kh = slice_cols(k, h * dh, dh);
    Var vh = slice_cols(v, h * dh, dh);
    Var scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    Var attn = softmax_rows(scores);
    attn = dropout_mask(attn, dropout, rng);
    heads.push_back(matmul(attn, vh));
  }
  Var merged = concat_cols(heads);
  (void)g;
  return linear(merged, pb.get(pre + ".o.w"), pb.get(pre + ".o.b"));
}

inline ad::Var ffn(ParamBinding& pb, const std::string& pre, ad::Var x, double dropout, Rng* rng) {
  using namespace ad;
  Var h = silu(linear(x, pb.get(pre + ".l1.w"), pb.get(pre + ".l1.b")));
  h = dropout_mask(h, dropout, rng);
  return linear(h, pb.get(pre + ".l2.w"), pb.get(pre + ".l2.b"));
}

inline ad::Var layer_norm(ParamBinding& pb, const std::string& pre, ad::Var x) {
  return ad::layernorm_rows(x, pb.get(pre + ".g"), pb.get(pre + ".b"));
}

}  // namespace net_detail

struct DenoiserOutput {
  ad::Var x0_hat;  // L x d_in
  ad::Var latent;  // L x d_model, the encoder output h(x_t, t)
};

// One forward pass for a single batch element. Pipeline: project the noisy
// input, add positional and timestep embeddings, run the encoder (its
// output is the latent); embed the condition the same way and run the
// decoder, whose cross-attention uses the condition stream as queries and
// the encoded noise input as keys/values; project back to input space.
inline DenoiserOutput denoise_forward(ad::Graph& g, ParamBinding& pb, const DenoiserParams& params,
                                      const Seq& x_t, const Seq& cond, int t,
                                      bool train_mode = false, Rng* dropout_rng = nullptr) {
  using namespace ad;
  const DenoiserConfig& cfg = params.config;
  const Eigen::Index L = x_t.rows();
  if (L > cfg.max_len) throw std::invalid_argument("sequence longer than max_len");
  if (x_t.cols() != cfg.d_in) throw std::invalid_argument("x_t channel mismatch");
  if (cond.rows() != L || cond.cols() != cfg.d_cond)
    throw std::invalid_argument("condition shape mismatch");
  if (t < 1) throw std::out_of_range("timestep must be >= 1");
  double rate = train_mode ? cfg.dropout : 0.0;
  Rng* rng = train_mode ? dropout_rng : nullptr;

  // timestep embedding: sinusoidal scalar embedding -> SiLU MLP, shared by
  // every position and both streams
  Var temb = constant(g, sinusoidal_embedding(static_cast<double>(t), cfg.d_model));
  temb = linear(silu(linear(temb, pb.get("t_mlp.l1.w"), pb.get("t_mlp.l1.b"))),
                pb.get("t_mlp.l2.w"), pb.get("t_mlp.l2.b"));
  Var pos = constant(g, params.pos_table.topRows(L));

  auto embed = [&](const Seq& raw, const std::string& proj) {
    Var h = linear(constant(g, raw), pb.get(proj + ".w"), pb.get(proj + ".b"));
    return add(add(h, pos), broadcast_row(temb, L));
  };

  // encoder over the noisy input (pre-norm residual blocks)
  Var h = embed(x_t, "in_proj");
  for (int i = 0; i < cfg.n_layers_enc; ++i) {
    std::string pre = "enc." + std::to_string(i) + ".";
    Var n1 = net_detail::layer_norm(pb, pre + "ln1", h);
    h = add(h, net_detail::attention(g, pb, pre + "attn", n1, n1, cfg.n_heads, rate, rng));
    h = add(h, net_detail::ffn(pb, pre + "ffn", net_detail::layer_norm(pb, pre + "ln2", h), rate, rng));
  }
  Var latent = net_detail::layer_norm(pb, "enc_ln", h);

  // decoder over the condition stream
  Var c = embed(cond, "cond_proj");
  for (int i = 0; i < cfg.n_layers_dec; ++i) {
    std::string pre = "dec." + std::to_string(i) + ".";
    Var n1 = net_detail::layer_norm(pb, pre + "ln1", c);
    c = add(c, net_detail::attention(g, pb, pre + "self", n1, n1, cfg.n_heads, rate, rng));
    Var n2 = net_detail::layer_norm(pb, pre + "ln2", c);
    c = add(c, net_detail::attention(g, pb, pre + "cross", n2, latent, cfg.n_heads, rate, rng));
    c = add(c, net_detail::ffn(pb, pre + "ffn", net_detail::layer_norm(pb, pre + "ln3", c), rate, rng));
  }
  c = net_detail::layer_norm(pb, "dec_ln", c);
  Var out = linear(c, pb.get("out_proj.w"), pb.get("out_proj.b"));
  return {out, latent};
}

// Convenience inference wrapper: evaluates the denoiser for a whole batch
// and returns plain values (no gradient consumers).
inline Batch denoise_batch(DenoiserParams& params, const Batch& x_t, const Batch& cond,
                           const std::vector<int>& t) {
  Batch out;
  out.reserve(x_t.size());
  for (std::size_t b = 0; b < x_t.size(); ++b) {
    ad::Graph g;
    ParamBinding pb(g, params);
    DenoiserOutput o = denoise_forward(g, pb, params, x_t[b], cond[b], t[b]);
    out.push_back(o.x0_hat.value());
  }
  return out;
}

// Latent extraction h(x_t, t) only (used at evaluation time).
inline Batch latent_batch(DenoiserParams& params, const Batch& x_t, const Batch& cond,
                          const std::vector<int>& t) {
  Batch out;
  out.reserve(x_t.size());
  for (std::size_t b = 0; b < x_t.size(); ++b) {
    ad::Graph g;
    ParamBinding pb(g, params);
    DenoiserOutput o = denoise_forward(g, pb, params, x_t[b], cond[b], t[b]);
    out.push_back(o.latent.value());
  }
  return out;
}

}  // namespace xmdiff
