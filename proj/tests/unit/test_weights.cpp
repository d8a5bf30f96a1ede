#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cohortney/weights.hpp"

using namespace cohortney;

TEST_CASE("interval_weight is the capped log2 code") {
  CHECK(interval_weight(0) == 0);
  CHECK(interval_weight(1) == 1);
  CHECK(interval_weight(5) == 2);
  CHECK(interval_weight(511) == 9);
  CHECK(interval_weight(1000000) == 9);
}

TEST_CASE("interval_weight matches the direct formula") {
  for (std::uint64_t n = 0; n < 5000; ++n) {
    int expect = std::min(static_cast<int>(std::floor(std::log2(double(n) + 1.0))), 9);
    CHECK(interval_weight(n) == expect);
  }
}

TEST_CASE("weight_vector buckets events into dyadic cells") {
  EventSequence s{"", 0, {10, 60}};
  CHECK(weight_vector(s, 128.0, 2) == "1100");
  CHECK(weight_vector(s, 128.0, 0) == "1");
  EventSequence empty{"", 0, {}};
  CHECK(weight_vector(empty, 100.0, 3) == "00000000");
}

TEST_CASE("weight_vector closes the final cell at the node") {
  EventSequence s{"", 0, {128}};
  CHECK(weight_vector(s, 128.0, 2) == "0001");
  EventSequence beyond{"", 0, {129}};
  CHECK(weight_vector(beyond, 128.0, 2) == "0000");
}

TEST_CASE("make_key reproduces the canonical triplets") {
  EventSequence none{"", 0, {}};
  ClusterKey k0 = make_key(none, 86400.0, 0);
  CHECK(k0.node == 86400.0);
  CHECK(k0.level == 0);
  CHECK(k0.digits == "0");
  CHECK(k0.text() == "86400|0|0");

  EventSequence late{"", 0, {90}};  // single event in the second half
  ClusterKey k1 = make_key(late, 128.0, 1);
  CHECK(k1.digits == "01");
  CHECK(k1.text() == "128|1|01");
}

TEST_CASE("equal digit vectors give equal keys") {
  EventSequence a{"a", 0, {10, 60}};
  EventSequence b{"b", 5, {12, 61}};
  CHECK(make_key(a, 128.0, 2) == make_key(b, 128.0, 2));
}

TEST_CASE("canonical key text round-trips exactly") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 500; ++i) {
    double node = std::pow(1.04, int(rng() % 300) - 200) * 86400.0;
    int level = static_cast<int>(rng() % 8);
    std::string digits;
    for (int c = 0; c < (1 << level); ++c)
      digits.push_back(static_cast<char>('0' + rng() % 10));
    ClusterKey key{node, level, digits};
    ClusterKey back = parse_key(key.text());
    CHECK(back == key);
  }
}

TEST_CASE("adding an event never decreases any digit") {
  std::mt19937_64 rng(29);
  for (int round = 0; round < 300; ++round) {
    EventSequence s{"", 0, {}};
    Seconds t = 0;
    int n = static_cast<int>(rng() % 15);
    for (int i = 0; i < n; ++i) {
      t += 1 + static_cast<Seconds>(rng() % 40);
      s.offsets.push_back(t);
    }
    double node = 1.0 + static_cast<double>(rng() % 600);
    int level = static_cast<int>(rng() % 5);
    std::string before = weight_vector(s, node, level);

    EventSequence grown = s;
    Seconds extra = 1 + static_cast<Seconds>(rng() % 600);
    grown.offsets.insert(
        std::upper_bound(grown.offsets.begin(), grown.offsets.end(), extra),
        extra);
    std::string after = weight_vector(grown, node, level);

    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] >= before[i]);
  }
}

TEST_CASE("level-0 digit encodes the total in-window count") {
  std::mt19937_64 rng(31);
  for (int round = 0; round < 300; ++round) {
    EventSequence s{"", 0, {}};
    Seconds t = 0;
    int n = static_cast<int>(rng() % 25);
    for (int i = 0; i < n; ++i) {
      t += 1 + static_cast<Seconds>(rng() % 30);
      s.offsets.push_back(t);
    }
    double node = 1.0 + static_cast<double>(rng() % 700);
    int level = static_cast<int>(rng() % 6);

    // Sum of per-cell counts at any level = number of events within the node.
    std::size_t in_window = 0;
    for (Seconds x : s.offsets)
      if (static_cast<double>(x) <= node) ++in_window;

    std::string coarse = weight_vector(s, node, 0);
    REQUIRE(coarse.size() == 1);
    CHECK(coarse[0] - '0' == interval_weight(in_window));

    std::string fine = weight_vector(s, node, level);
    CHECK(fine.size() == static_cast<std::size_t>(1) << level);
    for (char d : fine) {
      CHECK(d >= '0');
      CHECK(d <= '9');
    }
  }
}

TEST_CASE("per-level digits agree with independent direct bucketing") {
  std::mt19937_64 rng(37);
  for (int round = 0; round < 200; ++round) {
    EventSequence s{"", 0, {}};
    Seconds t = 0;
    int n = static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i) {
      t += 1 + static_cast<Seconds>(rng() % 50);
      s.offsets.push_back(t);
    }
    double node = std::pow(1.04, int(rng() % 120) - 60) * 86400.0;
    int level = static_cast<int>(rng() % 6);
    std::size_t cells = static_cast<std::size_t>(1) << level;

    std::vector<std::size_t> counts(cells, 0);
    for (Seconds x : s.offsets) {
      double v = static_cast<double>(x);
      if (v > node) continue;
      std::size_t idx = static_cast<std::size_t>(v * double(cells) / node);
      if (idx >= cells) idx = cells - 1;
      ++counts[idx];
    }
    std::string expect;
    for (std::size_t c : counts)
      expect.push_back(static_cast<char>('0' + interval_weight(c)));
    CHECK(weight_vector(s, node, level) == expect);
  }
}
