#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "xmdiff/core/rng.hpp"
#include "xmdiff/core/types.hpp"
#include "xmdiff/data/dataset.hpp"

#include <nlohmann/json.hpp>

namespace xmdiff {

enum class Dynamics { coupled_oscillators, lorenz };

inline std::string to_string(Dynamics d) {
  return d == Dynamics::coupled_oscillators ? "coupled_oscillators" : "lorenz";
}

inline Dynamics dynamics_from_string(const std::string& s) {
  if (s == "coupled_oscillators") return Dynamics::coupled_oscillators;
  if (s == "lorenz") return Dynamics::lorenz;
  throw std::invalid_argument("unknown dynamics: " + s);
}

enum class ObsMapKind { affine, affine_tanh, identity, lossy };

inline std::string to_string(ObsMapKind k) {
  switch (k) {
    case ObsMapKind::affine: return "affine";
    case ObsMapKind::affine_tanh: return "affine_tanh";
    case ObsMapKind::identity: return "identity";
    case ObsMapKind::lossy: return "lossy";
  }
  return "affine";
}

inline ObsMapKind obs_map_kind_from_string(const std::string& s) {
  if (s == "affine") return ObsMapKind::affine;
  if (s == "affine_tanh") return ObsMapKind::affine_tanh;
  if (s == "identity") return ObsMapKind::identity;
  if (s == "lossy") return ObsMapKind::lossy;
  throw std::invalid_argument("unknown observation map kind: " + s);
}

// One regime = one parameter setting of the hidden dynamics, used as the
// task label of every sequence generated under it.
struct Regime {
  // oscillators: two plane frequencies plus a coupling rotation rate
  double omega1{1.0}, omega2{2.3}, coupling{0.4};
  // lorenz
  double sigma{10.0}, rho{28.0}, beta{8.0 / 3.0};
};

struct SyntheticSystem {
  Dynamics dynamics{Dynamics::coupled_oscillators};
  ObsMapKind obs_kind_x{ObsMapKind::affine_tanh};
  ObsMapKind obs_kind_y{ObsMapKind::affine_tanh};
  int d_x{5};
  int d_y{4};
  double obs_noise_std{0.01};
  double dt{0.01};
  int n_subjects{2};
  std::vector<Regime> regimes;

  int hidden_dim() const { return dynamics == Dynamics::lorenz ? 3 : 4; }

  static SyntheticSystem default_oscillators() {
    SyntheticSystem s;
    s.regimes = {{0.7, 1.9, 0.2, 10, 28, 8.0 / 3.0},
                 {1.6, 0.9, 0.8, 10, 28, 8.0 / 3.0},
                 {2.4, 3.1, 0.05, 10, 28, 8.0 / 3.0}};
    return s;
  }

  static SyntheticSystem default_lorenz() {
    SyntheticSystem s;
    s.dynamics = Dynamics::lorenz;
    s.regimes = {{1, 1, 0, 10.0, 28.0, 8.0 / 3.0},
                 {1, 1, 0, 10.0, 35.0, 8.0 / 3.0},
                 {1, 1, 0, 14.0, 28.0, 8.0 / 3.0}};
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json regs = nlohmann::json::array();
    for (const Regime& r : regimes)
      regs.push_back({{"omega1", r.omega1}, {"omega2", r.omega2}, {"coupling", r.coupling},
                      {"sigma", r.sigma}, {"rho", r.rho}, {"beta", r.beta}});
    return {{"dynamics", to_string(dynamics)},
            {"obs_kind_x", to_string(obs_kind_x)},
            {"obs_kind_y", to_string(obs_kind_y)},
            {"d_x", d_x},
            {"d_y", d_y},
            {"obs_noise_std", obs_noise_std},
            {"dt", dt},
            {"n_subjects", n_subjects},
            {"regimes", regs}};
  }

  static SyntheticSystem from_json(const nlohmann::json& j) {
    SyntheticSystem s;
    s.dynamics = dynamics_from_string(j.at("dynamics"));
    s.obs_kind_x = obs_map_kind_from_string(j.at("obs_kind_x"));
    s.obs_kind_y = obs_map_kind_from_string(j.at("obs_kind_y"));
    s.d_x = j.at("d_x");
    s.d_y = j.at("d_y");
    s.obs_noise_std = j.at("obs_noise_std");
    s.dt = j.at("dt");
    s.n_subjects = j.at("n_subjects");
    for (const auto& r : j.at("regimes")) {
      Regime reg;
      reg.omega1 = r.at("omega1");
      reg.omega2 = r.at("omega2");
      reg.coupling = r.at("coupling");
      reg.sigma = r.at("sigma");
      reg.rho = r.at("rho");
      reg.beta = r.at("beta");
      s.regimes.push_back(reg);
    }
    return s;
  }
};

struct SyntheticDataset {
  std::vector<SequencePair> pairs;
  Batch hidden;          // test-only sidecar, one L x hidden_dim trajectory per pair
  Normalizer normalizer;  // dataset-level ranges used to map observations into [0,1]
};

namespace synth_detail {

// Fixed-per-seed smooth observation map from the hidden state into one
// modality: w2 * act(w1 * z + b1) + b2 with unit-scaled random weights.
struct ObsMap {
  ObsMapKind kind{ObsMapKind::affine};
  Eigen::MatrixXd w1, w2;
  Eigen::RowVectorXd b1, b2;

  static ObsMap make(ObsMapKind kind, int d_hidden, int d_obs, Rng& rng) {
    ObsMap m;
    m.kind = kind;
    int d_mid = (kind == ObsMapKind::lossy) ? 1 : d_obs;
    m.w1 = rng.normal_matrix(d_hidden, d_mid) / std::sqrt(static_cast<double>(d_hidden));
    m.b1 = rng.normal_matrix(1, d_mid) * 0.1;
    m.w2 = rng.normal_matrix(d_mid, d_obs) / std::sqrt(static_cast<double>(d_mid));
    m.b2 = rng.normal_matrix(1, d_obs) * 0.1;
    return m;
  }

  Seq operator()(const Seq& z) const {
    switch (kind) {
      case ObsMapKind::identity: {
        Seq out = Seq::Zero(z.rows(), w2.cols());
        Eigen::Index d = std::min(z.cols(), out.cols());
        out.leftCols(d) = z.leftCols(d);
        return out;
      }
      case ObsMapKind::affine:
        return (z * w1).rowwise() + b1;
      case ObsMapKind::affine_tanh:
      case ObsMapKind::lossy: {
        Seq h = (z * w1).rowwise() + b1;
        h = h.array().tanh();
        return (h * w2).rowwise() + b2;
      }
    }
    return z;
  }
};

// Exact rotation built from three plane rotations: the two oscillator
// planes plus a coupling rotation mixing them.
inline Eigen::Matrix4d oscillator_step(const Regime& r, double dt) {
  auto givens = [](int i, int j, double a) {
    Eigen::Matrix4d g = Eigen::Matrix4d::Identity();
    g(i, i) = std::cos(a);
    g(j, j) = std::cos(a);
    g(i, j) = -std::sin(a);
    g(j, i) = std::sin(a);
    return g;
  };
  return givens(0, 1, r.omega1 * dt) * givens(2, 3, r.omega2 * dt) * givens(1, 2, r.coupling * dt);
}

inline Eigen::Vector3d lorenz_rhs(const Eigen::Vector3d& z, const Regime& r) {
  return {r.sigma * (z(1) - z(0)), z(0) * (r.rho - z(2)) - z(1), z(0) * z(1) - r.beta * z(2)};
}

inline Eigen::Vector3d lorenz_rk4(const Eigen::Vector3d& z, const Regime& r, double dt) {
  Eigen::Vector3d k1 = lorenz_rhs(z, r);
  Eigen::Vector3d k2 = lorenz_rhs(z + 0.5 * dt * k1, r);
  Eigen::Vector3d k3 = lorenz_rhs(z + 0.5 * dt * k2, r);
  Eigen::Vector3d k4 = lorenz_rhs(z + dt * k3, r);
  return z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline Seq integrate_hidden(const SyntheticSystem& sys, const Regime& regime, int L, Rng& rng) {
  const int retries = 10;
  for (int attempt = 0; attempt < retries; ++attempt) {
    Seq z(L, sys.hidden_dim());
    bool ok = true;
    if (sys.dynamics == Dynamics::coupled_oscillators) {
      Eigen::Vector4d state = rng.normal_matrix(4, 1);
      state.normalize();
      Eigen::Matrix4d step = oscillator_step(regime, sys.dt);
      // oscillators evolve slowly at dt=0.01; advance several rotation
      // steps per recorded sample so a sequence spans real dynamics
      const int substeps = 20;
      for (int l = 0; l < L; ++l) {
        z.row(l) = state.transpose();
        for (int s = 0; s < substeps; ++s) state = step * state;
      }
    } else {
      Eigen::Vector3d state = rng.normal_matrix(3, 1) * 5.0 + Eigen::Vector3d(0, 0, 25);
      // burn-in onto the attractor
      for (int s = 0; s < 200; ++s) state = lorenz_rk4(state, regime, sys.dt);
      const int substeps = 5;
      for (int l = 0; l < L; ++l) {
        z.row(l) = state.transpose();
        for (int s = 0; s < substeps; ++s) state = lorenz_rk4(state, regime, sys.dt);
        if (state.norm() > 1e6) {
          ok = false;
          break;
        }
      }
    }
    if (ok && z.allFinite()) return z;
  }
  throw std::runtime_error("synthetic trajectory diverged after bounded retries");
}

}  // namespace synth_detail

// Generates n_sequences paired observations of one hidden trajectory each.
// Regimes are assigned round-robin (the regime index is the task label),
// likewise synthetic subject ids. Observations are min-max normalized with
// dataset-level ranges; hidden trajectories are returned raw, for tests.
inline SyntheticDataset generate_synthetic(const SyntheticSystem& sys, int n_sequences, int L,
                                           std::uint64_t seed) {
  if (n_sequences < 1 || L < 2) throw std::invalid_argument("generate_synthetic: bad sizes");
  if (sys.regimes.empty()) throw std::invalid_argument("generate_synthetic: no regimes");
  Rng map_rng(seed ^ 0x6f626d6170ULL);  // observation maps fixed per seed
  synth_detail::ObsMap ox =
      synth_detail::ObsMap::make(sys.obs_kind_x, sys.hidden_dim(), sys.d_x, map_rng);
  synth_detail::ObsMap oy =
      synth_detail::ObsMap::make(sys.obs_kind_y, sys.hidden_dim(), sys.d_y, map_rng);

  Rng rng(seed);
  SyntheticDataset ds;
  for (int i = 0; i < n_sequences; ++i) {
    int regime = i % static_cast<int>(sys.regimes.size());
    Seq z = synth_detail::integrate_hidden(sys, sys.regimes[static_cast<std::size_t>(regime)], L,
                                           rng);
    SequencePair p;
    p.x = ox(z);
    p.y = oy(z);
    if (sys.obs_noise_std > 0.0) {
      p.x += sys.obs_noise_std * rng.normal_matrix(L, sys.d_x);
      p.y += sys.obs_noise_std * rng.normal_matrix(L, sys.d_y);
    }
    p.subject_id = "s" + std::to_string(i % sys.n_subjects);
    p.profile_label = regime;
    ds.pairs.push_back(std::move(p));
    ds.hidden.push_back(std::move(z));
  }
  ds.normalizer = Normalizer::fit(ds.pairs);
  ds.pairs = ds.normalizer.apply(ds.pairs);
  return ds;
}

// Takens-style delay-coordinate embedding of a single observed channel:
// row k is [s_k, s_{k+lag}, ..., s_{k+(dim-1)lag}].
inline Eigen::MatrixXd delay_embed(const Eigen::VectorXd& series, int dim, int lag) {
  Eigen::Index n = series.size() - static_cast<Eigen::Index>(dim - 1) * lag;
  if (dim < 1 || lag < 1 || n < 1) throw std::invalid_argument("delay_embed: series too short");
  Eigen::MatrixXd e(n, dim);
  for (Eigen::Index k = 0; k < n; ++k)
    for (int j = 0; j < dim; ++j) e(k, j) = series(k + static_cast<Eigen::Index>(j) * lag);
  return e;
}

}  // namespace xmdiff
