#pragma once

#include <vector>

#include <Eigen/Dense>

namespace xmdiff {

// One sequence is an L x d matrix (rows = time steps, cols = channels).
using Seq = Eigen::MatrixXd;
// A batch is B sequences of identical shape.
using Batch = std::vector<Seq>;

inline bool is_finite(const Seq& m) { return m.allFinite(); }

inline bool is_finite(const Batch& b) {
  for (const Seq& s : b)
    if (!s.allFinite()) return false;
  return true;
}

}  // namespace xmdiff
