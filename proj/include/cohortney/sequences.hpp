#pragma once

#include <algorithm>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cohortney/core.hpp"

namespace cohortney {

// One subject's event history: identifier, absolute start epoch, and event
// offsets in seconds measured from that epoch. Offsets are non-decreasing
// (duplicates allowed) and strictly positive.
struct EventSequence {
  std::string id;
  Seconds start_epoch = 0;
  std::vector<Seconds> offsets;

  bool operator==(const EventSequence&) const = default;
};

// A sequence observed up to the present moment `now`; every known event of
// the sequence lies at or before `now`.
struct ObservationContext {
  EventSequence sequence;
  Seconds now = 0;
};

inline void validate_offsets(const std::vector<Seconds>& offsets) {
  Seconds prev = 0;
  bool first = true;
  for (Seconds x : offsets) {
    if (x <= 0) throw validation_error("offsets must be strictly positive");
    if (!first && x < prev) throw validation_error("offsets must be non-decreasing");
    prev = x;
    first = false;
  }
}

// Converts raw absolute timestamps (first element = start epoch) into offsets.
inline EventSequence normalize(const std::vector<Seconds>& raw_times,
                               std::string id = {}) {
  if (raw_times.empty())
    throw validation_error("normalize: need at least the start epoch");
  EventSequence seq;
  seq.id = std::move(id);
  seq.start_epoch = raw_times.front();
  seq.offsets.reserve(raw_times.size() - 1);
  Seconds prev = raw_times.front();
  for (std::size_t i = 1; i < raw_times.size(); ++i) {
    Seconds t = raw_times[i];
    if (t < prev)
      throw validation_error("normalize: timestamps must be non-decreasing");
    if (t == seq.start_epoch)
      throw validation_error("normalize: event coincides with the start epoch");
    seq.offsets.push_back(t - seq.start_epoch);
    prev = t;
  }
  return seq;
}

// Inverse of normalize: the start epoch followed by absolute event times.
inline std::vector<Seconds> denormalize(const EventSequence& seq) {
  std::vector<Seconds> raw;
  raw.reserve(seq.offsets.size() + 1);
  raw.push_back(seq.start_epoch);
  for (Seconds x : seq.offsets) raw.push_back(seq.start_epoch + x);
  return raw;
}

// Number of events with offset in the half-open interval [lo, hi).
inline std::size_t count_in(const EventSequence& seq, Seconds lo, Seconds hi) {
  if (lo > hi) throw validation_error("count_in: interval bounds out of order");
  auto first = std::lower_bound(seq.offsets.begin(), seq.offsets.end(), lo);
  auto last = std::lower_bound(seq.offsets.begin(), seq.offsets.end(), hi);
  return static_cast<std::size_t>(last - first);
}

// Smallest offset strictly greater than t, if any. Accepts a real-valued cut
// so callers can probe against fractional grid nodes.
inline std::optional<Seconds> first_after(const EventSequence& seq, double t) {
  for (Seconds x : seq.offsets)
    if (static_cast<double>(x) > t) return x;
  return std::nullopt;
}

// --- JSONL persistence -----------------------------------------------------
// One record per line: {"id": <text>, "start_epoch": <int>, "offsets": [...]}.

inline std::vector<EventSequence> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open for reading: " + path);
  std::vector<EventSequence> result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw validation_error(path + ": line " + std::to_string(line_no) +
                             ": " + e.what());
    }
    try {
      EventSequence seq;
      seq.id = rec.at("id").get<std::string>();
      seq.start_epoch = rec.at("start_epoch").get<Seconds>();
      if (rec.contains("offsets"))
        seq.offsets = rec.at("offsets").get<std::vector<Seconds>>();
      validate_offsets(seq.offsets);
      result.push_back(std::move(seq));
    } catch (const std::exception& e) {
      throw validation_error(path + ": line " + std::to_string(line_no) +
                             ": " + e.what());
    }
  }
  if (in.bad()) throw io_error("read failure on " + path);
  return result;
}

inline void write_jsonl(const std::string& path,
                        const std::vector<EventSequence>& seqs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open for writing: " + path);
  for (const auto& seq : seqs) {
    nlohmann::ordered_json rec;
    rec["id"] = seq.id;
    rec["start_epoch"] = seq.start_epoch;
    rec["offsets"] = seq.offsets;
    out << rec.dump() << '\n';
  }
  if (!out) throw io_error("write failure on " + path);
}

}  // namespace cohortney
