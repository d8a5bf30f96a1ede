#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <unordered_map>

#include <zlib.h>

#include "cohortney/weights.hpp"

namespace cohortney {

// Parameters of the geometric node grid and the clustering pass.
struct GridConfig {
  Seconds t_base = 86400;       // node at exponent zero
  double gamma = 1.04;          // ratio between consecutive nodes
  Seconds t_horizon = 1296000;  // largest admissible node
  Seconds t_min = 600;          // smallest admissible node
  Seconds delta = 600;          // minimum partition cell width
  std::size_t min_cluster = 100;

  bool operator==(const GridConfig&) const = default;
};

struct TimeGrid {
  std::vector<double> nodes;  // strictly increasing

  bool operator==(const TimeGrid&) const = default;
};

inline void validate_config(const GridConfig& cfg) {
  if (!(cfg.gamma > 1.0)) throw validation_error("gamma must exceed 1");
  if (!(cfg.t_min > 0 && cfg.t_min <= cfg.t_base && cfg.t_base <= cfg.t_horizon))
    throw validation_error("need 0 < t_min <= t_base <= t_horizon");
  if (!(cfg.delta > 0)) throw validation_error("delta must be positive");
  if (cfg.min_cluster < 1) throw validation_error("min_cluster must be >= 1");
}

// All nodes gamma^j * t_base (integer j) inside [t_min, t_horizon].
inline TimeGrid build_grid(const GridConfig& cfg) {
  validate_config(cfg);
  double base = static_cast<double>(cfg.t_base);
  double lg = std::log(cfg.gamma);
  int j_lo = static_cast<int>(
      std::floor(std::log(static_cast<double>(cfg.t_min) / base) / lg)) - 2;
  int j_hi = static_cast<int>(
      std::ceil(std::log(static_cast<double>(cfg.t_horizon) / base) / lg)) + 2;
  TimeGrid grid;
  for (int j = j_lo; j <= j_hi; ++j) {
    double node = std::pow(cfg.gamma, j) * base;
    if (node >= static_cast<double>(cfg.t_min) &&
        node <= static_cast<double>(cfg.t_horizon))
      grid.nodes.push_back(node);
  }
  if (grid.nodes.empty())
    throw validation_error("grid window admits no nodes");
  return grid;
}

// Largest refinement level whose cell width node/2^n stays at least delta;
// the coarsest level is always admitted.
inline int max_level(double node, Seconds delta) {
  if (!(node > 0) || delta <= 0)
    throw validation_error("max_level needs positive node and delta");
  int n = 0;
  double width = node;
  while (n < 30 && width / 2.0 >= static_cast<double>(delta)) {
    width /= 2.0;
    ++n;
  }
  return n;
}

// A retained cluster: its key, members (as references into the index's id
// table, ascending), each member's first event strictly after the node
// (sorted), and how many members stayed silent after the node.
struct Cohort {
  ClusterKey key;
  std::vector<std::uint32_t> members;
  std::vector<Seconds> first_event_times;
  std::uint32_t survivor_count = 0;

  bool operator==(const Cohort&) const = default;
};

struct CohortIndex {
  GridConfig config;
  TimeGrid grid;
  std::vector<std::string> ids;  // sorted unique member ids, referenced by cohorts
  std::map<std::string, Cohort> cohorts;  // canonical key text -> cohort

  const std::string& member_id(std::uint32_t ref) const { return ids.at(ref); }

  const Cohort* find(const ClusterKey& key) const {
    auto it = cohorts.find(key.text());
    return it == cohorts.end() ? nullptr : &it->second;
  }

  bool operator==(const CohortIndex&) const = default;
};

// Raised when a lookup node carries no level-0 cohorts to anchor the search.
struct no_cohort_error : validation_error {
  using validation_error::validation_error;
};

namespace detail {

// Digit strings for every admitted level at one node, derived from a single
// finest-level bucketing pass (coarser cells are pairwise sums).
inline std::vector<std::string> digits_per_level(const EventSequence& seq,
                                                 double node, int levels) {
  std::size_t fine_cells = static_cast<std::size_t>(1) << levels;
  std::vector<std::uint32_t> counts(fine_cells, 0);
  for (Seconds x : seq.offsets) {
    if (static_cast<double>(x) > node) break;
    ++counts[cell_of(x, node, fine_cells)];
  }
  std::vector<std::string> out(static_cast<std::size_t>(levels) + 1);
  for (int lv = levels;; --lv) {
    std::size_t cells = counts.size();
    std::string digits(cells, '0');
    for (std::size_t i = 0; i < cells; ++i)
      digits[i] = static_cast<char>('0' + interval_weight(counts[i]));
    out[static_cast<std::size_t>(lv)] = std::move(digits);
    if (lv == 0) break;
    for (std::size_t i = 0; i < cells / 2; ++i)
      counts[i] = counts[2 * i] + counts[2 * i + 1];
    counts.resize(cells / 2);
  }
  return out;
}

inline std::size_t l1_digits(const std::string& a, const std::string& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    d += static_cast<std::size_t>(a[i] > b[i] ? a[i] - b[i] : b[i] - a[i]);
  return d;
}

}  // namespace detail

// Clusters every training sequence at every (node, level) triplet, prunes
// groups below min_cluster, and records first-event statistics per cohort.
// Output is independent of the training order: members are keyed by their
// position in the sorted id table.
inline CohortIndex build_cohorts(const std::vector<EventSequence>& training,
                                 const GridConfig& cfg) {
  CohortIndex index;
  index.config = cfg;
  index.grid = build_grid(cfg);
  if (training.empty()) return index;

  // Canonical member order: ascending ids.
  std::vector<std::uint32_t> order(training.size());
  for (std::uint32_t i = 0; i < training.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return training[a].id < training[b].id;
  });
  index.ids.reserve(training.size());
  std::vector<const EventSequence*> by_ref(training.size());
  for (std::uint32_t r = 0; r < order.size(); ++r) {
    const EventSequence& seq = training[order[r]];
    if (!index.ids.empty() && index.ids.back() == seq.id)
      throw validation_error("duplicate training id: " + seq.id);
    validate_offsets(seq.offsets);
    index.ids.push_back(seq.id);
    by_ref[r] = &seq;
  }

  struct LocalGroup {
    int level;
    std::string digits;
    std::vector<std::uint32_t> members;
  };
  std::vector<std::vector<std::pair<std::string, Cohort>>> per_node(
      index.grid.nodes.size());

  detail::parallel_for(index.grid.nodes.size(), [&](std::size_t ni) {
    double node = index.grid.nodes[ni];
    int levels = max_level(node, cfg.delta);
    std::unordered_map<std::string, LocalGroup> groups;
    std::vector<std::optional<Seconds>> first_event(by_ref.size());

    std::string suffix;
    for (std::uint32_t r = 0; r < by_ref.size(); ++r) {
      const EventSequence& seq = *by_ref[r];
      first_event[r] = first_after(seq, node);
      auto digits = detail::digits_per_level(seq, node, levels);
      for (int lv = 0; lv <= levels; ++lv) {
        const std::string& d = digits[static_cast<std::size_t>(lv)];
        suffix.assign(std::to_string(lv));
        suffix.push_back('|');
        suffix.append(d);
        auto [it, fresh] = groups.try_emplace(suffix);
        if (fresh) {
          it->second.level = lv;
          it->second.digits = d;
        }
        it->second.members.push_back(r);
      }
    }

    std::string node_text = real_text(node);
    for (auto& [suffix_key, group] : groups) {
      if (group.members.size() < cfg.min_cluster) continue;
      Cohort cohort;
      cohort.key = ClusterKey{node, group.level, group.digits};
      cohort.members = std::move(group.members);
      for (std::uint32_t r : cohort.members) {
        if (first_event[r])
          cohort.first_event_times.push_back(*first_event[r]);
        else
          ++cohort.survivor_count;
      }
      std::sort(cohort.first_event_times.begin(),
                cohort.first_event_times.end());
      per_node[ni].emplace_back(node_text + "|" + suffix_key,
                                std::move(cohort));
    }
  });

  for (auto& bucket : per_node)
    for (auto& [text, cohort] : bucket)
      index.cohorts.emplace(std::move(text), std::move(cohort));
  return index;
}

struct SnapResult {
  double node = 0;
  bool below_grid = false;
};

// Largest node at or below t; below-range probes snap up to the first node
// and set the flag.
inline SnapResult snap_to_grid(const TimeGrid& grid, double t) {
  if (grid.nodes.empty()) throw validation_error("empty grid");
  if (t < 0) throw validation_error("snap_to_grid needs t >= 0");
  auto it = std::upper_bound(grid.nodes.begin(), grid.nodes.end(), t);
  if (it == grid.nodes.begin()) return SnapResult{grid.nodes.front(), true};
  return SnapResult{*(it - 1), false};
}

struct NearestCohort {
  const Cohort* cohort = nullptr;
  bool below_grid = false;
};

// Level-wise search at the snapped node: exact match per level, with an
// L1-closest fallback among level-0 cohorts (ties: larger cohort, then
// lexicographically smaller digits); the deepest exact continuation wins.
inline NearestCohort nearest_cohort(const CohortIndex& index,
                                    const ObservationContext& ctx) {
  if (!ctx.sequence.offsets.empty() &&
      ctx.sequence.offsets.back() > ctx.now)
    throw validation_error("context has events after the present moment");
  SnapResult snap = snap_to_grid(index.grid, static_cast<double>(ctx.now));
  std::string node_text = real_text(snap.node);

  const Cohort* best = nullptr;
  std::string query0 = weight_vector(ctx.sequence, snap.node, 0);
  auto exact0 = index.cohorts.find(node_text + "|0|" + query0);
  if (exact0 != index.cohorts.end()) {
    best = &exact0->second;
  } else {
    std::string prefix = node_text + "|0|";
    std::size_t best_dist = 0;
    for (auto it = index.cohorts.lower_bound(prefix);
         it != index.cohorts.end() && it->first.compare(0, prefix.size(), prefix) == 0;
         ++it) {
      const Cohort& cand = it->second;
      std::size_t dist = detail::l1_digits(cand.key.digits, query0);
      bool better =
          best == nullptr || dist < best_dist ||
          (dist == best_dist &&
           (cand.members.size() > best->members.size() ||
            (cand.members.size() == best->members.size() &&
             cand.key.digits < best->key.digits)));
      if (better) {
        best = &cand;
        best_dist = dist;
      }
    }
    if (best == nullptr)
      throw no_cohort_error("no cohorts at node " + node_text);
  }

  int levels = max_level(snap.node, index.config.delta);
  for (int lv = 1; lv <= levels; ++lv) {
    std::string query = weight_vector(ctx.sequence, snap.node, lv);
    auto it = index.cohorts.find(node_text + "|" + std::to_string(lv) + "|" + query);
    if (it == index.cohorts.end()) break;
    best = &it->second;
  }
  return NearestCohort{best, snap.below_grid};
}

// --- Binary index persistence ----------------------------------------------
// Layout: magic, format version, grid config, node list, id table, cohort
// records (canonical key text, member count, survivor count, first-event
// times, member references), trailing crc32 over everything before it.

namespace detail {

constexpr char kIndexMagic[8] = {'C', 'O', 'H', 'R', 'T', 'I', 'D', 'X'};
constexpr std::uint32_t kIndexVersion = 1;

struct ByteWriter {
  std::string buf;
  template <typename T>
  void raw(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    buf.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void text(const std::string& s) {
    raw(static_cast<std::uint32_t>(s.size()));
    buf.append(s);
  }
};

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;
  template <typename T>
  T raw() {
    static_assert(std::is_trivially_copyable_v<T>);
    if (pos + sizeof(T) > buf.size()) throw io_error("index file truncated");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof v);
    pos += sizeof v;
    return v;
  }
  std::string text() {
    auto len = raw<std::uint32_t>();
    if (pos + len > buf.size()) throw io_error("index file truncated");
    std::string s = buf.substr(pos, len);
    pos += len;
    return s;
  }
};

}  // namespace detail

inline void save_index(const std::string& path, const CohortIndex& index) {
  detail::ByteWriter w;
  w.buf.append(detail::kIndexMagic, sizeof detail::kIndexMagic);
  w.raw(detail::kIndexVersion);
  w.raw(index.config.t_base);
  w.raw(index.config.gamma);
  w.raw(index.config.t_horizon);
  w.raw(index.config.t_min);
  w.raw(index.config.delta);
  w.raw(static_cast<std::uint64_t>(index.config.min_cluster));
  w.raw(static_cast<std::uint64_t>(index.grid.nodes.size()));
  for (double node : index.grid.nodes) w.raw(node);
  w.raw(static_cast<std::uint64_t>(index.ids.size()));
  for (const auto& id : index.ids) w.text(id);
  w.raw(static_cast<std::uint64_t>(index.cohorts.size()));
  for (const auto& [text, cohort] : index.cohorts) {
    w.text(text);
    w.raw(static_cast<std::uint64_t>(cohort.members.size()));
    w.raw(static_cast<std::uint64_t>(cohort.survivor_count));
    for (Seconds t : cohort.first_event_times) w.raw(t);
    for (std::uint32_t r : cohort.members) w.raw(r);
  }
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(w.buf.data()),
            static_cast<uInt>(w.buf.size())));
  w.raw(crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open for writing: " + path);
  out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw io_error("write failure on " + path);
}

inline CohortIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open for reading: " + path);
  std::string buf(std::istreambuf_iterator<char>(in),
                  std::istreambuf_iterator<char>{});
  if (buf.size() < sizeof(detail::kIndexMagic) + 8)
    throw io_error("index file truncated");
  if (std::memcmp(buf.data(), detail::kIndexMagic,
                  sizeof detail::kIndexMagic) != 0)
    throw io_error("not a cohort index file: " + path);

  detail::ByteReader r{buf, sizeof detail::kIndexMagic};
  auto version = r.raw<std::uint32_t>();
  if (version > detail::kIndexVersion)
    throw io_error("index format version " + std::to_string(version) +
                   " is newer than supported");

  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  std::uint32_t actual_crc = static_cast<std::uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(buf.size() - 4)));
  if (stored_crc != actual_crc)
    throw io_error("index checksum mismatch: " + path);

  CohortIndex index;
  index.config.t_base = r.raw<Seconds>();
  index.config.gamma = r.raw<double>();
  index.config.t_horizon = r.raw<Seconds>();
  index.config.t_min = r.raw<Seconds>();
  index.config.delta = r.raw<Seconds>();
  index.config.min_cluster = static_cast<std::size_t>(r.raw<std::uint64_t>());
  auto node_count = r.raw<std::uint64_t>();
  index.grid.nodes.reserve(node_count);
  for (std::uint64_t i = 0; i < node_count; ++i)
    index.grid.nodes.push_back(r.raw<double>());
  auto id_count = r.raw<std::uint64_t>();
  index.ids.reserve(id_count);
  for (std::uint64_t i = 0; i < id_count; ++i) index.ids.push_back(r.text());
  auto cohort_count = r.raw<std::uint64_t>();
  for (std::uint64_t i = 0; i < cohort_count; ++i) {
    std::string text = r.text();
    Cohort cohort;
    cohort.key = parse_key(text);
    auto member_count = r.raw<std::uint64_t>();
    auto survivors = r.raw<std::uint64_t>();
    if (survivors > member_count) throw io_error("corrupt cohort record");
    cohort.survivor_count = static_cast<std::uint32_t>(survivors);
    cohort.first_event_times.reserve(member_count - survivors);
    for (std::uint64_t k = 0; k < member_count - survivors; ++k)
      cohort.first_event_times.push_back(r.raw<Seconds>());
    cohort.members.reserve(member_count);
    for (std::uint64_t k = 0; k < member_count; ++k) {
      auto ref = r.raw<std::uint32_t>();
      if (ref >= index.ids.size()) throw io_error("corrupt member reference");
      cohort.members.push_back(ref);
    }
    index.cohorts.emplace(std::move(text), std::move(cohort));
  }
  return index;
}

}  // namespace cohortney
