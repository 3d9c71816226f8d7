#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "xmdiff/core/rng.hpp"
#include "xmdiff/core/types.hpp"
#include "xmdiff/diffusion/schedule.hpp"

namespace xmdiff {

struct NoisySample {
  Batch x_t;
  std::vector<int> t;  // 1-based step per batch element
  Batch epsilon;       // the standard normal draws, kept for reconstruction
};

// Closed-form marginal of the per-step noising recursion composed t times:
// x_t = sqrt(beta_bar[t]) * x0 + sqrt(1 - beta_bar[t]) * eps.
inline NoisySample forward_noise(const Batch& x0, const std::vector<int>& t,
                                 const NoiseSchedule& schedule, std::uint64_t rng_seed) {
  if (x0.size() != t.size()) throw std::invalid_argument("batch/step count mismatch");
  if (!is_finite(x0)) throw std::invalid_argument("forward_noise: non-finite input");

  Rng rng(rng_seed);
  NoisySample out;
  out.t = t;
  out.x_t.reserve(x0.size());
  out.epsilon.reserve(x0.size());
  for (std::size_t b = 0; b < x0.size(); ++b) {
    if (t[b] < 1 || t[b] > schedule.num_steps)
      throw std::out_of_range("forward_noise: step index out of [1, T']");
    double bb = schedule.beta_bar_at(t[b]);
    Seq eps = rng.normal_matrix(x0[b].rows(), x0[b].cols());
    out.x_t.push_back(std::sqrt(bb) * x0[b] + std::sqrt(1.0 - bb) * eps);
    out.epsilon.push_back(std::move(eps));
  }
  return out;
}

}  // namespace xmdiff
