#pragma once

#include "cohortney/distances.hpp"
#include "cohortney/sequences.hpp"

namespace cohortney {

// Dense symmetric pairwise-similarity matrix with a unit diagonal.
struct ConnectionMatrix {
  std::size_t size = 0;
  std::vector<double> data;

  explicit ConnectionMatrix(std::size_t m) : size(m), data(m * m, 0.0) {
    for (std::size_t i = 0; i < m; ++i) at(i, i) = 1.0;
  }

  double& at(std::size_t i, std::size_t j) { return data[i * size + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * size + j]; }
};

namespace detail {

// A sequence's offsets as a numeric series; silent sequences contribute the
// single point 0 so every pair still has a finite warping distance.
inline std::vector<double> offset_series(const EventSequence& seq) {
  if (seq.offsets.empty()) return {0.0};
  std::vector<double> s(seq.offsets.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = static_cast<double>(seq.offsets[i]);
  return s;
}

}  // namespace detail

// Exponential kernel over L1 warping distances: exp(-d(i, j) / sigma).
inline ConnectionMatrix similarity_matrix(
    const std::vector<EventSequence>& sequences, double sigma) {
  if (!(sigma > 0)) throw validation_error("kernel scale must be positive");
  std::size_t m = sequences.size();
  std::vector<std::vector<double>> series(m);
  for (std::size_t i = 0; i < m; ++i)
    series[i] = detail::offset_series(sequences[i]);
  ConnectionMatrix out(m);
  detail::parallel_for(m, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      double d = dtw(series[i], series[j], DtwBase::L1);
      double k = std::exp(-d / sigma);
      out.at(i, j) = k;
    }
  });
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) out.at(j, i) = out.at(i, j);
  return out;
}

// Mean similarity between a group and an outside candidate.
inline double proximity(const std::vector<std::size_t>& group,
                        std::size_t candidate, const ConnectionMatrix& m) {
  if (group.empty()) throw validation_error("group must be non-empty");
  double sum = 0;
  for (std::size_t g : group) {
    if (g == candidate)
      throw validation_error("candidate already belongs to the group");
    if (g >= m.size || candidate >= m.size)
      throw validation_error("index outside the matrix");
    sum += m.at(g, candidate);
  }
  return sum / static_cast<double>(group.size());
}

struct SpectrumOrdering {
  std::vector<std::size_t> order;  // all elements, greedy accretion order
  std::vector<double> spectrum;    // proximity recorded at each accretion
};

// Greedy accretion from a start element: repeatedly absorb the outside
// element with the highest mean similarity to the group so far (ties go to
// the smallest index), recording that value. Cheap incremental sums make the
// whole pass quadratic.
inline SpectrumOrdering build_spectrum(const ConnectionMatrix& m,
                                       std::size_t start) {
  if (m.size == 0) throw validation_error("empty matrix");
  if (start >= m.size) throw validation_error("start index outside the matrix");
  SpectrumOrdering ord;
  ord.order.reserve(m.size);
  ord.spectrum.reserve(m.size - 1);
  std::vector<char> used(m.size, 0);
  std::vector<double> sum_to(m.size, 0.0);  // sum of similarities to the group
  ord.order.push_back(start);
  used[start] = 1;
  for (std::size_t p = 0; p < m.size; ++p)
    if (!used[p]) sum_to[p] = m.at(start, p);
  for (std::size_t step = 1; step < m.size; ++step) {
    std::size_t best = m.size;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < m.size; ++p) {
      if (used[p]) continue;
      double mean = sum_to[p] / static_cast<double>(step);
      if (mean > best_mean) {
        best_mean = mean;
        best = p;
      }
    }
    ord.order.push_back(best);
    ord.spectrum.push_back(best_mean);
    used[best] = 1;
    for (std::size_t p = 0; p < m.size; ++p)
      if (!used[p]) sum_to[p] += m.at(best, p);
  }
  return ord;
}

enum class SplitRule {
  rule1,  // cut before the L-1 smallest spectrum values
  rule2,  // cut before the L-1 largest relative spectrum drops
};

// Partitions the accretion order into L contiguous groups. Rule 1 cuts where
// the spectrum is lowest; rule 2 where it falls most sharply relative to the
// previous value (the first position has no predecessor and is never ranked;
// a zero predecessor contributes a zero drop).
inline std::vector<std::vector<std::size_t>> split_spectrum(
    const SpectrumOrdering& ord, std::size_t groups, SplitRule rule) {
  std::size_t m = ord.order.size();
  if (groups < 1 || groups > m)
    throw validation_error("group count must lie in [1, element count]");
  // Score every cut position k (a cut separates order[0..k] from the rest).
  std::vector<std::size_t> positions;
  for (std::size_t k = 0; k < ord.spectrum.size(); ++k) positions.push_back(k);
  if (rule == SplitRule::rule1) {
    std::stable_sort(positions.begin(), positions.end(),
                     [&](std::size_t a, std::size_t b) {
                       return ord.spectrum[a] < ord.spectrum[b];
                     });
  } else {
    auto drop = [&](std::size_t k) {
      if (k == 0) return -std::numeric_limits<double>::infinity();
      double prev = ord.spectrum[k - 1];
      if (prev == 0) return 0.0;
      return (prev - ord.spectrum[k]) / prev;
    };
    std::stable_sort(positions.begin(), positions.end(),
                     [&](std::size_t a, std::size_t b) {
                       return drop(a) > drop(b);
                     });
  }
  positions.resize(groups - 1);
  std::sort(positions.begin(), positions.end());

  std::vector<std::vector<std::size_t>> out;
  std::size_t begin = 0;
  for (std::size_t cut : positions) {
    out.emplace_back(ord.order.begin() + static_cast<std::ptrdiff_t>(begin),
                     ord.order.begin() + static_cast<std::ptrdiff_t>(cut) + 1);
    begin = cut + 1;
  }
  out.emplace_back(ord.order.begin() + static_cast<std::ptrdiff_t>(begin),
                   ord.order.end());
  return out;
}

// Median of all pairwise L1 warping distances; the usual default for the
// kernel scale. An even pair count averages the two middle values.
inline double median_pairwise_distance(
    const std::vector<EventSequence>& sequences) {
  if (sequences.size() < 2)
    throw validation_error("need at least two sequences");
  std::vector<std::vector<double>> series(sequences.size());
  for (std::size_t i = 0; i < sequences.size(); ++i)
    series[i] = detail::offset_series(sequences[i]);
  std::vector<double> dists;
  dists.reserve(sequences.size() * (sequences.size() - 1) / 2);
  for (std::size_t i = 0; i < sequences.size(); ++i)
    for (std::size_t j = i + 1; j < sequences.size(); ++j)
      dists.push_back(dtw(series[i], series[j], DtwBase::L1));
  std::sort(dists.begin(), dists.end());
  std::size_t n = dists.size();
  if (n % 2 == 1) return dists[n / 2];
  return (dists[n / 2 - 1] + dists[n / 2]) / 2.0;
}

}  // namespace cohortney
