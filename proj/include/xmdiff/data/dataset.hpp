#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "xmdiff/core/types.hpp"

#include <nlohmann/json.hpp>

namespace xmdiff {

// One paired sample: temporally aligned sequences from two modalities.
struct SequencePair {
  Seq x;  // L x d_X
  Seq y;  // L x d_Y
  std::string subject_id;
  int profile_label{0};
};

struct ModalitySchema {
  std::string name;
  std::vector<std::string> channels;

  int channel_count() const { return static_cast<int>(channels.size()); }

  static ModalitySchema kinematics() {
    ModalitySchema s;
    s.name = "kinematics";
    for (const char* joint : {"hip", "knee", "ankle", "foot", "pelvis"})
      for (const char* axis : {"x", "y", "z"})
        s.channels.push_back(std::string("theta_") + joint + "_" + axis);
    return s;
  }

  static ModalitySchema kinetics() {
    ModalitySchema s;
    s.name = "kinetics";
    for (const char* joint : {"hip", "knee", "ankle"})
      for (const char* axis : {"x", "y", "z"})
        s.channels.push_back(std::string("tau_") + joint + "_" + axis);
    return s;
  }

  static ModalitySchema grf() {
    ModalitySchema s;
    s.name = "grf";
    for (const char* axis : {"x", "y", "z"}) s.channels.push_back(std::string("grf_") + axis);
    return s;
  }

  static ModalitySchema by_name(const std::string& name) {
    if (name == "kinematics") return kinematics();
    if (name == "kinetics") return kinetics();
    if (name == "grf") return grf();
    throw std::invalid_argument("unknown modality schema: " + name);
  }
};

// Per-channel min-max scaler. Fit on the training split only; the fitted
// ranges are frozen into the fold manifest.
struct Normalizer {
  Eigen::RowVectorXd x_min, x_max, y_min, y_max;

  static Normalizer fit(const std::vector<SequencePair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("Normalizer::fit: empty split");
    Normalizer n;
    const Eigen::Index dx = pairs.front().x.cols(), dy = pairs.front().y.cols();
    n.x_min = Eigen::RowVectorXd::Constant(dx, std::numeric_limits<double>::infinity());
    n.x_max = -n.x_min;
    n.y_min = Eigen::RowVectorXd::Constant(dy, std::numeric_limits<double>::infinity());
    n.y_max = -n.y_min;
    for (const SequencePair& p : pairs) {
      n.x_min = n.x_min.cwiseMin(p.x.colwise().minCoeff());
      n.x_max = n.x_max.cwiseMax(p.x.colwise().maxCoeff());
      n.y_min = n.y_min.cwiseMin(p.y.colwise().minCoeff());
      n.y_max = n.y_max.cwiseMax(p.y.colwise().maxCoeff());
    }
    return n;
  }

  static Seq apply_one(const Seq& s, const Eigen::RowVectorXd& lo, const Eigen::RowVectorXd& hi) {
    Seq out = s;
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      double span = hi(c) - lo(c);
      if (span <= 0.0) span = 1.0;  // constant channel maps to 0
      out.col(c) = (s.col(c).array() - lo(c)) / span;
    }
    return out;
  }

  SequencePair apply(const SequencePair& p) const {
    SequencePair out = p;
    out.x = apply_one(p.x, x_min, x_max);
    out.y = apply_one(p.y, y_min, y_max);
    return out;
  }

  std::vector<SequencePair> apply(const std::vector<SequencePair>& pairs) const {
    std::vector<SequencePair> out;
    out.reserve(pairs.size());
    for (const SequencePair& p : pairs) out.push_back(apply(p));
    return out;
  }

  nlohmann::json to_json() const {
    auto vec = [](const Eigen::RowVectorXd& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    return {{"x_min", vec(x_min)}, {"x_max", vec(x_max)},
            {"y_min", vec(y_min)}, {"y_max", vec(y_max)}};
  }

  static Normalizer from_json(const nlohmann::json& j) {
    auto vec = [](const nlohmann::json& a) {
      std::vector<double> v = a.get<std::vector<double>>();
      return Eigen::RowVectorXd::Map(v.data(), static_cast<Eigen::Index>(v.size())).eval();
    };
    Normalizer n;
    n.x_min = vec(j.at("x_min"));
    n.x_max = vec(j.at("x_max"));
    n.y_min = vec(j.at("y_min"));
    n.y_max = vec(j.at("y_max"));
    return n;
  }
};

}  // namespace xmdiff
