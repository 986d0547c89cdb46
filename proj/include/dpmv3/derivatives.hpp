#pragma once

#include <vector>

#include "dpmv3/model.hpp"

namespace dpmv3 {

/// Solves sum_k delta_i^k D_k = diffs_i (i, k = 1..n) for D_k = g^(k)/k!.
/// deltas must be distinct and nonzero, n <= 3.
std::vector<Vec> estimate_derivatives(const std::vector<double>& deltas, const std::vector<Vec>& diffs);

/// Divided-difference estimate: D_k uses only the k+1 values nearest the anchor.
/// values[0] is the anchor value (delta 0), values[i] sits at deltas[i-1].
std::vector<Vec> estimate_derivatives_pseudo(const std::vector<double>& deltas, const std::vector<Vec>& values);

} // namespace dpmv3
