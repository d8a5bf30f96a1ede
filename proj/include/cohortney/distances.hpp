#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "cohortney/core.hpp"

namespace cohortney {

// Base cost between two samples inside the warping recurrence.
enum class DtwBase { L1, L2sq };

// Dynamic-time-warping distance. Fills the cumulative matrix
// g(i,j) = d(x_i,y_j) + min(g(i-1,j-1), g(i-1,j), g(i,j-1)); the L2sq base
// accumulates squared deviations and reports the square root, L1 accumulates
// absolute deviations and reports the sum. O(m*n) time, O(n) memory.
inline double dtw(const std::vector<double>& x, const std::vector<double>& y,
                  DtwBase base) {
  if (x.empty() || y.empty())
    throw validation_error("dtw requires non-empty sequences");
  const std::size_t m = x.size(), n = y.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(n + 1, inf), cur(n + 1, inf);
  prev[0] = 0;
  for (std::size_t i = 1; i <= m; ++i) {
    cur[0] = inf;
    for (std::size_t j = 1; j <= n; ++j) {
      double d = x[i - 1] - y[j - 1];
      d = base == DtwBase::L2sq ? d * d : std::abs(d);
      cur[j] = d + std::min({prev[j - 1], prev[j], cur[j - 1]});
    }
    std::swap(prev, cur);
  }
  return base == DtwBase::L2sq ? std::sqrt(prev[n]) : prev[n];
}

// Linear-time lower bound on the L1 warping distance, derived from how the
// value ranges of the two sequences overlap (orientation: max(x) >= max(y)).
inline double dtw_lower_bound(const std::vector<double>& x,
                              const std::vector<double>& y) {
  if (x.empty() || y.empty())
    throw validation_error("dtw_lower_bound requires non-empty sequences");
  const std::vector<double>* a = &x;
  const std::vector<double>* b = &y;
  if (*std::max_element(a->begin(), a->end()) <
      *std::max_element(b->begin(), b->end()))
    std::swap(a, b);
  double max_a = *std::max_element(a->begin(), a->end());
  double min_a = *std::min_element(a->begin(), a->end());
  double max_b = *std::max_element(b->begin(), b->end());
  double min_b = *std::min_element(b->begin(), b->end());

  if (min_a > max_b) {
    // Disjoint ranges: every pairing crosses the gap, from either side.
    double from_a = 0, from_b = 0;
    for (double v : *a) from_a += std::abs(v - max_b);
    for (double v : *b) from_b += std::abs(v - min_a);
    return std::max(from_a, from_b);
  }
  if (min_a < min_b) {
    // Containment: only a's overshoots on both ends are unavoidable.
    double total = 0;
    for (double v : *a) {
      if (v > max_b) total += v - max_b;
      if (v < min_b) total += min_b - v;
    }
    return total;
  }
  // Overlap: a overshoots above, b undershoots below.
  double total = 0;
  for (double v : *a)
    if (v > max_b) total += v - max_b;
  for (double v : *b)
    if (v < min_a) total += min_a - v;
  return total;
}

}  // namespace cohortney
