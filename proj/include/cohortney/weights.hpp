#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>

#include "cohortney/sequences.hpp"

namespace cohortney {

// Single-digit density code for one time cell: min(floor(log2(count+1)), 9).
inline int interval_weight(std::uint64_t event_count) {
  int w = std::bit_width(event_count + 1) - 1;
  return w > 9 ? 9 : w;
}

namespace detail {

// Cell index of offset x in the dyadic partition of (0, node] with `cells`
// equal real-width cells; the final cell is closed at the node so an event at
// exactly the node is kept. Caller guarantees (double)x <= node.
inline std::size_t cell_of(Seconds x, double node, std::size_t cells) {
  std::size_t idx =
      static_cast<std::size_t>(static_cast<double>(x) * static_cast<double>(cells) / node);
  return idx >= cells ? cells - 1 : idx;
}

inline void check_partition_args(double node, int level) {
  if (!(node > 0)) throw validation_error("partition node must be positive");
  if (level < 0 || level > 30)
    throw validation_error("partition level out of range");
}

}  // namespace detail

// Digit string of length 2^level: cell i holds the density code of the events
// falling in [i*node/2^level, (i+1)*node/2^level), last cell closed at node.
// Events beyond the node are ignored.
inline std::string weight_vector(const EventSequence& seq, double node, int level) {
  detail::check_partition_args(node, level);
  std::size_t cells = static_cast<std::size_t>(1) << level;
  std::vector<std::uint32_t> counts(cells, 0);
  for (Seconds x : seq.offsets) {
    if (static_cast<double>(x) > node) break;  // offsets sorted; rest are later
    ++counts[detail::cell_of(x, node, cells)];
  }
  std::string digits(cells, '0');
  for (std::size_t i = 0; i < cells; ++i)
    digits[i] = static_cast<char>('0' + interval_weight(counts[i]));
  return digits;
}

// The triplet identifying a cohort: grid node, partition level, digit vector.
struct ClusterKey {
  double node = 0;
  int level = 0;
  std::string digits;

  bool operator==(const ClusterKey&) const = default;

  // Canonical injective text form "<node>|<level>|<digits>"; the node part
  // round-trips to the exact double.
  std::string text() const {
    return real_text(node) + "|" + std::to_string(level) + "|" + digits;
  }
};

inline ClusterKey make_key(const EventSequence& seq, double node, int level) {
  return ClusterKey{node, level, weight_vector(seq, node, level)};
}

inline ClusterKey parse_key(const std::string& text) {
  auto p1 = text.find('|');
  auto p2 = text.find('|', p1 == std::string::npos ? p1 : p1 + 1);
  if (p1 == std::string::npos || p2 == std::string::npos)
    throw validation_error("malformed cluster key text: " + text);
  ClusterKey key;
  key.node = std::strtod(text.substr(0, p1).c_str(), nullptr);
  key.level = std::atoi(text.substr(p1 + 1, p2 - p1 - 1).c_str());
  key.digits = text.substr(p2 + 1);
  if (key.digits.size() != (static_cast<std::size_t>(1) << key.level))
    throw validation_error("cluster key digit length mismatch: " + text);
  return key;
}

}  // namespace cohortney
