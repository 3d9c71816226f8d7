#pragma once

#include <cmath>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace xmdiff::ad {

using Mat = Eigen::MatrixXd;

// Reverse-mode tape over dense double matrices. Nodes are appended in
// evaluation order, so a single reverse sweep over the tape is a valid
// topological order. Scalars are 1x1 matrices.
class Graph {
 public:
  struct Node {
    Mat value;
    Mat grad;  // allocated lazily, zero until backward touches it
    bool requires_grad{false};
    std::function<void(Graph&)> backward;
  };

  int add_node(Mat value, bool requires_grad, std::function<void(Graph&)> backward = nullptr) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  Mat& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  void accumulate(int id, const Mat& g) {
    if (!requires_grad(id)) return;
    grad(id) += g;
  }

  // Backpropagate from a scalar root.
  void backward(int root) {
    Node& r = nodes_[static_cast<std::size_t>(root)];
    if (r.value.size() != 1) throw std::invalid_argument("backward root must be scalar");
    grad(root).setConstant(1.0);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.backward && n.grad.size() != 0) n.backward(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

class Var {
 public:
  Var() = default;
  Var(Graph* g, int id) : g_(g), id_(id) {}
  Graph& graph() const { return *g_; }
  int id() const { return id_; }
  const Mat& value() const { return g_->value(id_); }
  const Mat& grad() const { return g_->grad(id_); }
  double scalar() const { return value()(0, 0); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const { return g_ != nullptr; }

 private:
  Graph* g_{nullptr};
  int id_{-1};
};

inline Var leaf(Graph& g, Mat value, bool requires_grad = true) {
  return Var(&g, g.add_node(std::move(value), requires_grad));
}

inline Var constant(Graph& g, Mat value) { return Var(&g, g.add_node(std::move(value), false)); }

inline Var scalar_const(Graph& g, double v) { return constant(g, Mat::Constant(1, 1, v)); }

namespace detail {

inline bool any_grad(std::initializer_list<Var> vs) {
  for (const Var& v : vs)
    if (v.graph().requires_grad(v.id())) return true;
  return false;
}

// Appends a node whose backward closure knows its own tape position.
inline Var make(Graph& g, Mat value, bool rg, std::function<void(Graph&, int)> bw) {
  int out = static_cast<int>(g.size());
  std::function<void(Graph&)> wrapped;
  if (rg && bw) wrapped = [out, bw = std::move(bw)](Graph& gr) { bw(gr, out); };
  return Var(&g, g.add_node(std::move(value), rg, std::move(wrapped)));
}

}  // namespace detail

// ---- elementwise binary ----

inline Var add(Var a, Var b) {
  Graph& g = a.graph();
  int ia = a.id(), ib = b.id();
  return detail::make(g, a.value() + b.value(), detail::any_grad({a, b}), [ia, ib](Graph& gr, int out) {
    const Mat& go = gr.grad(out);
    gr.accumulate(ia, go);
    gr.accumulate(ib, go);
  });
}

inline Var sub(Var a, Var b) {
  Graph& g = a.graph();
  int ia = a.id(), ib = b.id();
  return detail::make(g, a.value() - b.value(), detail::any_grad({a, b}), [ia, ib](Graph& gr, int out) {
    const Mat& go = gr.grad(out);
    gr.accumulate(ia, go);
    gr.accumulate(ib, -go);
  });
}

inline Var cmul(Var a, Var b) {
  Graph& g = a.graph();
  int ia = a.id(), ib = b.id();
  return detail::make(g, a.value().cwiseProduct(b.value()), detail::any_grad({a, b}),
                      [ia, ib](Graph& gr, int out) {
                        const Mat& go = gr.grad(out);
                        gr.accumulate(ia, go.cwiseProduct(gr.value(ib)));
                        gr.accumulate(ib, go.cwiseProduct(gr.value(ia)));
                      });
}

inline Var cdiv(Var a, Var b) {
  Graph& g = a.graph();
  int ia = a.id(), ib = b.id();
  return detail::make(g, a.value().cwiseQuotient(b.value()), detail::any_grad({a, b}),
                      [ia, ib](Graph& gr, int out) {
                        const Mat& go = gr.grad(out);
                        const Mat& bv = gr.value(ib);
                        gr.accumulate(ia, go.cwiseQuotient(bv));
                        gr.accumulate(ib, -go.cwiseProduct(gr.value(ia)).cwiseQuotient(bv.cwiseProduct(bv)));
                      });
}

// ---- matrix products ----

inline Var matmul(Var a, Var b) {
  Graph& g = a.graph();
  int ia = a.id(), ib = b.id();
  return detail::make(g, a.value() * b.value(), detail::any_grad({a, b}), [ia, ib](Graph& gr, int out) {
    const Mat& go = gr.grad(out);
    gr.accumulate(ia, go * gr.value(ib).transpose());
    gr.accumulate(ib, gr.value(ia).transpose() * go);
  });
}

inline Var transpose(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value().transpose(), g.requires_grad(ia),
                      [ia](Graph& gr, int out) { gr.accumulate(ia, gr.grad(out).transpose()); });
}

// ---- scalar-constant ops ----

inline Var scale(Var a, double s) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value() * s, g.requires_grad(ia),
                      [ia, s](Graph& gr, int out) { gr.accumulate(ia, gr.grad(out) * s); });
}

inline Var add_const(Var a, double c) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value().array() + c, g.requires_grad(ia),
                      [ia](Graph& gr, int out) { gr.accumulate(ia, gr.grad(out)); });
}

// ---- tape-scalar broadcast ops (s is a 1x1 node) ----

inline Var muls(Var a, Var s) {
  Graph& g = a.graph();
  int ia = a.id(), is = s.id();
  return detail::make(g, a.value() * s.scalar(), detail::any_grad({a, s}), [ia, is](Graph& gr, int out) {
    const Mat& go = gr.grad(out);
    gr.accumulate(ia, go * gr.value(is)(0, 0));
    gr.accumulate(is, Mat::Constant(1, 1, go.cwiseProduct(gr.value(ia)).sum()));
  });
}

inline Var divs(Var a, Var s) {
  Graph& g = a.graph();
  int ia = a.id(), is = s.id();
  return detail::make(g, a.value() / s.scalar(), detail::any_grad({a, s}), [ia, is](Graph& gr, int out) {
    const Mat& go = gr.grad(out);
    double sv = gr.value(is)(0, 0);
    gr.accumulate(ia, go / sv);
    gr.accumulate(is, Mat::Constant(1, 1, -go.cwiseProduct(gr.value(ia)).sum() / (sv * sv)));
  });
}

// ---- reductions ----

inline Var sum(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, Mat::Constant(1, 1, a.value().sum()), g.requires_grad(ia),
                      [ia](Graph& gr, int out) {
                        const Mat& av = gr.value(ia);
                        gr.accumulate(ia, Mat::Constant(av.rows(), av.cols(), gr.grad(out)(0, 0)));
                      });
}

inline Var mean(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  double n = static_cast<double>(a.value().size());
  return detail::make(g, Mat::Constant(1, 1, a.value().mean()), g.requires_grad(ia),
                      [ia, n](Graph& gr, int out) {
                        const Mat& av = gr.value(ia);
                        gr.accumulate(ia, Mat::Constant(av.rows(), av.cols(), gr.grad(out)(0, 0) / n));
                      });
}

// mean over columns, per row: (N x M) -> (N x 1)
inline Var rowwise_mean(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  double m = static_cast<double>(a.value().cols());
  return detail::make(g, a.value().rowwise().mean(), g.requires_grad(ia), [ia, m](Graph& gr, int out) {
    const Mat& go = gr.grad(out);  // N x 1
    gr.accumulate(ia, (go / m).replicate(1, gr.value(ia).cols()));
  });
}

// mean over rows, per column: (N x M) -> (1 x M)
inline Var colwise_mean(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  double n = static_cast<double>(a.value().rows());
  return detail::make(g, a.value().colwise().mean(), g.requires_grad(ia), [ia, n](Graph& gr, int out) {
    const Mat& go = gr.grad(out);  // 1 x M
    gr.accumulate(ia, (go / n).replicate(gr.value(ia).rows(), 1));
  });
}

// ---- broadcasts ----

// (N x 1) -> (N x M)
inline Var broadcast_col(Var a, Eigen::Index m) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value().replicate(1, m), g.requires_grad(ia),
                      [ia](Graph& gr, int out) { gr.accumulate(ia, gr.grad(out).rowwise().sum()); });
}

// (1 x M) -> (N x M)
inline Var broadcast_row(Var a, Eigen::Index n) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value().replicate(n, 1), g.requires_grad(ia),
                      [ia](Graph& gr, int out) { gr.accumulate(ia, gr.grad(out).colwise().sum()); });
}

// ---- structural ----

inline Var slice_rows(Var a, Eigen::Index r0, Eigen::Index n) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value().middleRows(r0, n), g.requires_grad(ia), [ia, r0, n](Graph& gr, int out) {
    gr.grad(ia).middleRows(r0, n) += gr.grad(out);
  });
}

inline Var slice_cols(Var a, Eigen::Index c0, Eigen::Index n) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value().middleCols(c0, n), g.requires_grad(ia), [ia, c0, n](Graph& gr, int out) {
    gr.grad(ia).middleCols(c0, n) += gr.grad(out);
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  Graph& g = parts.front().graph();
  Eigen::Index rows = parts.front().rows(), cols = 0;
  bool rg = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    cols += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
    rg = rg || g.requires_grad(p.id());
  }
  Mat v(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return detail::make(g, std::move(v), rg, [ids, widths](Graph& gr, int out) {
    const Mat& go = gr.grad(out);
    Eigen::Index c = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      gr.accumulate(ids[k], go.middleCols(c, widths[k]));
      c += widths[k];
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  Graph& g = parts.front().graph();
  Eigen::Index cols = parts.front().cols(), rows = 0;
  bool rg = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> heights;
  for (const Var& p : parts) {
    rows += p.rows();
    ids.push_back(p.id());
    heights.push_back(p.rows());
    rg = rg || g.requires_grad(p.id());
  }
  Mat v(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return detail::make(g, std::move(v), rg, [ids, heights](Graph& gr, int out) {
    const Mat& go = gr.grad(out);
    Eigen::Index r = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      gr.accumulate(ids[k], go.middleRows(r, heights[k]));
      r += heights[k];
    }
  });
}

// ---- nonlinearities ----

inline Var softmax_rows(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  Mat v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    Eigen::RowVectorXd row = v.row(i);
    double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    v.row(i) = row / row.sum();
  }
  return detail::make(g, std::move(v), g.requires_grad(ia), [ia](Graph& gr, int out) {
    const Mat& y = gr.value(out);
    const Mat& go = gr.grad(out);
    Mat gy = go.cwiseProduct(y);
    Eigen::VectorXd rs = gy.rowwise().sum();
    gr.accumulate(ia, gy - y.cwiseProduct(rs.replicate(1, y.cols())));
  });
}

inline Var silu(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  Mat s = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return detail::make(g, a.value().cwiseProduct(s), g.requires_grad(ia), [ia](Graph& gr, int out) {
    const Mat& x = gr.value(ia);
    Eigen::ArrayXXd sg = 1.0 / (1.0 + (-x.array()).exp());
    Eigen::ArrayXXd d = sg * (1.0 + x.array() * (1.0 - sg));
    gr.accumulate(ia, (gr.grad(out).array() * d).matrix());
  });
}

inline Var relu(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value().cwiseMax(0.0), g.requires_grad(ia), [ia](Graph& gr, int out) {
    Mat mask = (gr.value(ia).array() > 0.0).cast<double>();
    gr.accumulate(ia, gr.grad(out).cwiseProduct(mask));
  });
}

inline Var tanh_op(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value().array().tanh().matrix(), g.requires_grad(ia), [ia](Graph& gr, int out) {
    const Mat& y = gr.value(out);
    gr.accumulate(ia, (gr.grad(out).array() * (1.0 - y.array().square())).matrix());
  });
}

inline Var exp_op(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value().array().exp().matrix(), g.requires_grad(ia), [ia](Graph& gr, int out) {
    gr.accumulate(ia, gr.grad(out).cwiseProduct(gr.value(out)));
  });
}

inline Var log_op(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value().array().log().matrix(), g.requires_grad(ia), [ia](Graph& gr, int out) {
    gr.accumulate(ia, gr.grad(out).cwiseQuotient(gr.value(ia)));
  });
}

inline Var sqrt_op(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value().array().sqrt().matrix(), g.requires_grad(ia), [ia](Graph& gr, int out) {
    gr.accumulate(ia, (gr.grad(out).array() / (2.0 * gr.value(out).array())).matrix());
  });
}

inline Var square(Var a) {
  Graph& g = a.graph();
  int ia = a.id();
  return detail::make(g, a.value().array().square().matrix(), g.requires_grad(ia), [ia](Graph& gr, int out) {
    gr.accumulate(ia, (gr.grad(out).array() * 2.0 * gr.value(ia).array()).matrix());
  });
}

// ---- composites ----

inline Var mse(Var a, Var b) { return mean(square(sub(a, b))); }

// row-wise layer normalization with learned gain/bias row vectors
inline Var layernorm_rows(Var x, Var gain, Var bias, double eps = 1e-5) {
  Eigen::Index m = x.cols(), n = x.rows();
  Var mu = rowwise_mean(x);
  Var centered = sub(x, broadcast_col(mu, m));
  Var var = rowwise_mean(square(centered));
  Var denom = sqrt_op(add_const(var, eps));
  Var normed = cdiv(centered, broadcast_col(denom, m));
  return add(cmul(normed, broadcast_row(gain, n)), broadcast_row(bias, n));
}

// x @ W + b with b a 1 x d row vector
inline Var linear(Var x, Var w, Var b) {
  return add(matmul(x, w), broadcast_row(b, x.rows()));
}

inline Var softplus(Var a) {
  // numerically-stable log(1 + e^x) = max(x,0) + log1p(e^{-|x|}); the tape
  // has no abs op, so build from relu: softplus(x) = relu(x) + log(1+exp(-|x|))
  Graph& g = a.graph();
  int ia = a.id();
  Mat v = a.value().unaryExpr([](double x) { return std::fmax(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); });
  return detail::make(g, std::move(v), g.requires_grad(ia), [ia](Graph& gr, int out) {
    Eigen::ArrayXXd sg = 1.0 / (1.0 + (-gr.value(ia).array()).exp());
    gr.accumulate(ia, (gr.grad(out).array() * sg).matrix());
  });
}

}  // namespace xmdiff::ad
