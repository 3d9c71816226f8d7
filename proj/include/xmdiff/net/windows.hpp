#pragma once

#include <stdexcept>

#include "xmdiff/core/types.hpp"

namespace xmdiff {

// Contiguous non-overlapping partition of a latent sequence into
// num_windows blocks of window_len steps; the trailing remainder is
// dropped and recorded.
struct LatentTrajectory {
  Batch z;  // B sequences, each L x d_Z
  int window_len{0};
  int num_windows{0};
  int dropped{0};

  Eigen::Index batch_size() const { return static_cast<Eigen::Index>(z.size()); }
  Eigen::Index d_latent() const { return z.empty() ? 0 : z.front().cols(); }

  // window i of batch element b, a window_len x d_Z block
  Eigen::Block<const Seq> window(std::size_t b, int i) const {
    return z[b].middleRows(static_cast<Eigen::Index>(i) * window_len, window_len);
  }
};

inline LatentTrajectory extract_windows(Batch z, int window_len) {
  if (z.empty()) throw std::invalid_argument("extract_windows: empty batch");
  const Eigen::Index L = z.front().rows();
  if (window_len < 1 || window_len > L)
    throw std::invalid_argument("extract_windows: window_len out of [1, L]");
  LatentTrajectory traj;
  traj.window_len = window_len;
  traj.num_windows = static_cast<int>(L / window_len);
  traj.dropped = static_cast<int>(L - static_cast<Eigen::Index>(traj.num_windows) * window_len);
  traj.z = std::move(z);
  return traj;
}

}  // namespace xmdiff
