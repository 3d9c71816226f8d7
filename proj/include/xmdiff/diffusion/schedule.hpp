#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace xmdiff {

enum class ScheduleKind { linear, cosine };

inline std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::linear ? "linear" : "cosine";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

// Per-step signal retention beta[t] in (0,1] and its cumulative product
// beta_bar[t]. beta is retention (multiplies the signal), not noise
// variance; the marginal at step t keeps sqrt(beta_bar[t]) of the signal.
// Indices are 0-based internally; step t in the diffusion sense is t+1.
struct NoiseSchedule {
  ScheduleKind kind{ScheduleKind::cosine};
  int num_steps{0};
  double retention_min{0.01};
  std::vector<double> beta;
  std::vector<double> beta_bar;

  double beta_at(int t) const { return beta.at(static_cast<std::size_t>(t - 1)); }          // t in [1, T']
  double beta_bar_at(int t) const { return beta_bar.at(static_cast<std::size_t>(t - 1)); }  // t in [1, T']
};

inline NoiseSchedule make_schedule(ScheduleKind kind, int num_steps, double retention_min = 0.01) {
  if (num_steps < 1) throw std::invalid_argument("num_steps must be >= 1");
  if (!(retention_min > 0.0 && retention_min < 1.0))
    throw std::invalid_argument("retention_min must be in (0,1)");

  NoiseSchedule s;
  s.kind = kind;
  s.num_steps = num_steps;
  s.retention_min = retention_min;
  s.beta_bar.resize(static_cast<std::size_t>(num_steps));
  s.beta.resize(static_cast<std::size_t>(num_steps));

  double T = static_cast<double>(num_steps);
  for (int i = 0; i < num_steps; ++i) {
    double t = static_cast<double>(i + 1);  // 1-based step
    if (kind == ScheduleKind::linear) {
      // beta_bar interpolates linearly from 1 (exclusive) down to retention_min
      s.beta_bar[static_cast<std::size_t>(i)] = 1.0 + (retention_min - 1.0) * t / T;
    } else {
      double c = std::cos(t / T * M_PI / 2.0);
      s.beta_bar[static_cast<std::size_t>(i)] = std::fmax(c * c, 1e-5);
    }
  }
  for (int i = 0; i < num_steps; ++i) {
    double prev = (i == 0) ? 1.0 : s.beta_bar[static_cast<std::size_t>(i - 1)];
    s.beta[static_cast<std::size_t>(i)] = s.beta_bar[static_cast<std::size_t>(i)] / prev;
  }
  return s;
}

}  // namespace xmdiff
