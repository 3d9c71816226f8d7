#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "xmdiff/core/rng.hpp"
#include "xmdiff/core/types.hpp"
#include "xmdiff/diffusion/schedule.hpp"

namespace xmdiff {

// Batched x0-prediction callable: (x_t, condition, per-element step) -> x0_hat.
using DenoiseFn =
    std::function<Batch(const Batch& x_t, const Batch& cond, const std::vector<int>& t)>;

// Ancestral reverse sampling for an x0-predicting model. Starts from pure
// noise at step T', at each step forms the Gaussian posterior
// q(x_{t-1} | x_t, x0_hat) implied by the retention schedule, and returns
// the final x0_hat with no added noise.
inline Batch ancestral_sample(const DenoiseFn& denoise, const Batch& condition,
                              Eigen::Index d_out, const NoiseSchedule& schedule,
                              std::uint64_t rng_seed) {
  if (condition.empty()) throw std::invalid_argument("ancestral_sample: empty condition batch");
  Rng rng(rng_seed);
  const Eigen::Index L = condition.front().rows();
  const std::size_t B = condition.size();

  Batch x(B);
  for (std::size_t b = 0; b < B; ++b) x[b] = rng.normal_matrix(L, d_out);

  Batch x0_hat;
  for (int t = schedule.num_steps; t >= 1; --t) {
    std::vector<int> steps(B, t);
    x0_hat = denoise(x, condition, steps);
    if (x0_hat.size() != B || x0_hat.front().cols() != d_out)
      throw std::runtime_error("ancestral_sample: denoiser output shape mismatch");
    if (t == 1) break;

    double bt = schedule.beta_at(t);
    double bb_t = schedule.beta_bar_at(t);
    double bb_prev = schedule.beta_bar_at(t - 1);
    double a = std::sqrt(bb_prev) * (1.0 - bt) / (1.0 - bb_t);
    double c = std::sqrt(bt) * (1.0 - bb_prev) / (1.0 - bb_t);
    double var = (1.0 - bb_prev) * (1.0 - bt) / (1.0 - bb_t);
    double sd = std::sqrt(std::fmax(var, 0.0));
    for (std::size_t b = 0; b < B; ++b)
      x[b] = a * x0_hat[b] + c * x[b] + sd * rng.normal_matrix(L, d_out);
  }
  return x0_hat;
}

}  // namespace xmdiff
