#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace xmdiff {

using TensorMap = std::map<std::string, Eigen::MatrixXd>;

// Adaptive-moment optimizer with decoupled weight decay. One shared step
// counter drives bias correction for every tensor in the map.
class AdamW {
 public:
  AdamW() = default;
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr < 0.0) throw std::invalid_argument("learning rate must be >= 0");
  }

  void update(TensorMap& params, const TensorMap& grads) {
    ++step_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (auto& [name, p] : params) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      const Eigen::MatrixXd& g = git->second;
      auto mit = m_.find(name);
      if (mit == m_.end()) {
        mit = m_.emplace(name, Eigen::MatrixXd::Zero(p.rows(), p.cols())).first;
        v_.emplace(name, Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      }
      Eigen::MatrixXd& m = mit->second;
      Eigen::MatrixXd& v = v_[name];
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g.array().square().matrix();
      Eigen::ArrayXXd mhat = m.array() / bc1;
      Eigen::ArrayXXd vhat = v.array() / bc2;
      p.array() -= lr_ * (mhat / (vhat.sqrt() + eps_) + weight_decay_ * p.array());
    }
  }

  double lr() const { return lr_; }
  std::int64_t step_count() const { return step_; }

  // checkpoint plumbing: moments and the step counter under a name prefix
  void export_state(TensorMap& out, const std::string& prefix) const {
    for (const auto& [name, m] : m_) out[prefix + ".m." + name] = m;
    for (const auto& [name, v] : v_) out[prefix + ".v." + name] = v;
    out[prefix + ".step"] = Eigen::MatrixXd::Constant(1, 1, static_cast<double>(step_));
  }

  void import_state(const TensorMap& in, const std::string& prefix) {
    m_.clear();
    v_.clear();
    std::string mp = prefix + ".m.", vp = prefix + ".v.";
    for (const auto& [name, t] : in) {
      if (name.rfind(mp, 0) == 0) m_[name.substr(mp.size())] = t;
      else if (name.rfind(vp, 0) == 0) v_[name.substr(vp.size())] = t;
    }
    auto it = in.find(prefix + ".step");
    if (it == in.end()) throw std::runtime_error("optimizer state missing step counter");
    step_ = static_cast<std::int64_t>(it->second(0, 0));
  }

 private:
  double lr_{1e-4};
  double weight_decay_{0.0};
  double beta1_{0.9}, beta2_{0.999}, eps_{1e-8};
  std::int64_t step_{0};
  TensorMap m_, v_;
};

// shadow <- decay*shadow + (1-decay)*live; shadow starts equal to live.
inline void ema_update(Eigen::MatrixXd& shadow, const Eigen::MatrixXd& live, double decay) {
  if (shadow.rows() != live.rows() || shadow.cols() != live.cols())
    throw std::invalid_argument("ema_update: shape mismatch");
  shadow = decay * shadow + (1.0 - decay) * live;
}

inline void ema_update(TensorMap& shadow, const TensorMap& live, double decay) {
  for (const auto& [name, t] : live) {
    auto it = shadow.find(name);
    if (it == shadow.end())
      shadow.emplace(name, t);
    else
      ema_update(it->second, t, decay);
  }
}

inline void ema_update(double& shadow, double live, double decay) {
  shadow = decay * shadow + (1.0 - decay) * live;
}

}  // namespace xmdiff
