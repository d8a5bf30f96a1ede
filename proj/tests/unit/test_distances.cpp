#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "cohortney/distances.hpp"

using namespace cohortney;

namespace {

// Independent oracle: minimum path cost over every admissible warping path,
// enumerated recursively. Only feasible for short inputs.
double brute_force_dtw(const std::vector<double>& x, const std::vector<double>& y,
                       DtwBase base) {
  std::size_t m = x.size(), n = y.size();
  std::vector<std::vector<double>> best(
      m, std::vector<double>(n, std::numeric_limits<double>::infinity()));
  auto cell = [&](std::size_t i, std::size_t j) {
    double d = x[i] - y[j];
    return base == DtwBase::L2sq ? d * d : std::abs(d);
  };
  // Explicit DFS over the three admissible moves, tracking path cost.
  struct Frame {
    std::size_t i, j;
    double cost;
  };
  std::vector<Frame> stack{{0, 0, cell(0, 0)}};
  double best_total = std::numeric_limits<double>::infinity();
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    if (f.i == m - 1 && f.j == n - 1) {
      best_total = std::min(best_total, f.cost);
      continue;
    }
    if (f.i + 1 < m && f.j + 1 < n)
      stack.push_back({f.i + 1, f.j + 1, f.cost + cell(f.i + 1, f.j + 1)});
    if (f.i + 1 < m) stack.push_back({f.i + 1, f.j, f.cost + cell(f.i + 1, f.j)});
    if (f.j + 1 < n) stack.push_back({f.i, f.j + 1, f.cost + cell(f.i, f.j + 1)});
  }
  return base == DtwBase::L2sq ? std::sqrt(best_total) : best_total;
}

std::vector<double> random_series(std::mt19937_64& rng, std::size_t max_len,
                                  double max_value) {
  std::size_t len = 1 + rng() % max_len;
  std::vector<double> v(len);
  for (auto& e : v) e = static_cast<double>(rng() % std::uint64_t(max_value));
  return v;
}

}  // namespace

TEST_CASE("dtw of a sequence with itself is zero") {
  std::vector<double> x{1, 4, 4, 9, 12};
  CHECK(dtw(x, x, DtwBase::L1) == 0.0);
  CHECK(dtw(x, x, DtwBase::L2sq) == 0.0);
}

TEST_CASE("dtw aligns repeated samples at no cost") {
  std::vector<double> x{1, 2, 3}, y{1, 2, 2, 3};
  CHECK(dtw(x, y, DtwBase::L1) == 0.0);
  CHECK(dtw(x, y, DtwBase::L2sq) == 0.0);
}

TEST_CASE("dtw of single-element series is the base distance") {
  std::vector<double> x{0}, y{1};
  CHECK(dtw(x, y, DtwBase::L2sq) == 1.0);
  CHECK(dtw(x, y, DtwBase::L1) == 1.0);
}

TEST_CASE("dtw rejects empty input") {
  std::vector<double> x{1}, empty;
  CHECK_THROWS_AS(dtw(x, empty, DtwBase::L1), validation_error);
  CHECK_THROWS_AS(dtw(empty, x, DtwBase::L1), validation_error);
  CHECK_THROWS_AS(dtw_lower_bound(x, empty), validation_error);
}

TEST_CASE("dtw is symmetric") {
  std::mt19937_64 rng(41);
  for (int round = 0; round < 200; ++round) {
    auto x = random_series(rng, 10, 1000);
    auto y = random_series(rng, 10, 1000);
    CHECK(dtw(x, y, DtwBase::L1) == dtw(y, x, DtwBase::L1));
    CHECK(dtw(x, y, DtwBase::L2sq) == dtw(y, x, DtwBase::L2sq));
  }
}

TEST_CASE("dtw equals brute-force path enumeration on short series") {
  std::mt19937_64 rng(43);
  for (int round = 0; round < 300; ++round) {
    auto x = random_series(rng, 6, 50);
    auto y = random_series(rng, 6, 50);
    for (DtwBase base : {DtwBase::L1, DtwBase::L2sq}) {
      double got = dtw(x, y, base);
      double want = brute_force_dtw(x, y, base);
      CHECK(got == Catch::Approx(want).epsilon(0).margin(1e-9));
    }
  }
}

TEST_CASE("equal-length diagonal-only alignment reduces to euclidean") {
  // When the optimal path is the main diagonal, the L2sq base gives the
  // euclidean distance between the series.
  std::vector<double> x{0, 10, 20, 30}, y{1, 11, 21, 31};
  CHECK(dtw(x, y, DtwBase::L2sq) == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("lower bound worked examples") {
  CHECK(dtw_lower_bound({2}, {2}) == 0.0);
  // Containment: range of (5,1) strictly contains range of (3,2):
  // above-max part |5-3| plus below-min part |1-2|.
  CHECK(dtw_lower_bound({5, 1}, {3, 2}) == 3.0);
  CHECK(dtw({5, 1}, {3, 2}, DtwBase::L1) == 3.0);
  // Disjoint ranges: max(8+10, 9+8).
  CHECK(dtw_lower_bound({10, 12}, {1, 2}) == 18.0);
}

TEST_CASE("lower bound never exceeds the L1 dtw") {
  std::mt19937_64 rng(47);
  for (int round = 0; round < 2000; ++round) {
    auto x = random_series(rng, 32, 1000000);
    auto y = random_series(rng, 32, 1000000);
    CHECK(dtw_lower_bound(x, y) <= dtw(x, y, DtwBase::L1) + 1e-9);
  }
}
