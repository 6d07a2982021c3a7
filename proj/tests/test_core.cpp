#include <doctest.h>

#include "detal/core.hpp"

#include <random>

using namespace detal;

TEST_CASE("tiou counts snippets") {
  CHECK(tiou({2, 5}, {4, 7}) == doctest::Approx(2.0 / 6.0));
  CHECK(tiou({0, 3}, {0, 3}) == 1.0);
  CHECK(tiou({0, 1}, {5, 6}) == 0.0);
  CHECK(tiou({0, 1}, {2, 3}) == 0.0);  // adjacent, not overlapping
}

TEST_CASE("tiou is symmetric and falls as segments move apart") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> s(0, 30), len(0, 10);
  for (int k = 0; k < 200; ++k) {
    const int a0 = s(rng), b0 = s(rng);
    const Segment a(a0, a0 + len(rng)), b(b0, b0 + len(rng));
    CHECK(tiou(a, b) == tiou(b, a));
    CHECK((tiou(a, b) == 1.0) == (a == b));
    double prev = tiou(a, b);
    if (b.start < a.start) continue;
    for (int d = 1; d < 15; ++d) {
      const double now = tiou(a, Segment(b.start + d, b.end + d));
      CHECK(now <= prev);
      prev = now;
    }
  }
}

TEST_CASE("segment rejects bad bounds") {
  CHECK_THROWS_AS(Segment(3, 2), std::invalid_argument);
  CHECK_THROWS_AS(Segment(-1, 2), std::invalid_argument);
  CHECK(Segment(4, 4).length() == 1);
}

TEST_CASE("relative threshold") {
  Eigen::VectorXd a(2), b(3), c(3);
  a << 0.1, 0.9;
  b << 0.3, 0.3, 0.3;
  c << 0.0, 0.2, 1.0;
  CHECK(relative_threshold(a, 0.5) == doctest::Approx(0.5));
  CHECK(relative_threshold(b, 0.5) == 0.3);
  CHECK(relative_threshold(c, 0.2) == doctest::Approx(0.2));
  CHECK(relative_threshold(c, 0.0) == 0.0);
  CHECK(relative_threshold(c, 1.0) == 1.0);
  CHECK_THROWS(relative_threshold(Eigen::VectorXd(), 0.5));
}

TEST_CASE("extract segments") {
  Eigen::VectorXd a(5), b(2), c(2);
  a << 0.1, 0.9, 0.8, 0.2, 0.7;
  b << 0.9, 0.9;
  c << 0.1, 0.1;
  CHECK(extract_segments(a, 0.5) == std::vector<Segment>{{1, 2}, {4, 4}});
  CHECK(extract_segments(b, 0.5) == std::vector<Segment>{{0, 1}});
  CHECK(extract_segments(c, 0.5).empty());
  // >= rule: a value equal to the threshold counts
  CHECK(extract_segments(b, 0.9) == std::vector<Segment>{{0, 1}});
}

TEST_CASE("extract segments partitions the sequence") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd s(1 + k % 17);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = u(rng);
    const double thr = u(rng);
    const auto segs = extract_segments(s, thr);
    std::vector<int> covered(static_cast<std::size_t>(s.size()), 0);
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (i > 0) CHECK(segs[i].start > segs[i - 1].end + 1);
      for (int t = segs[i].start; t <= segs[i].end; ++t) covered[std::size_t(t)] = 1;
    }
    for (Eigen::Index t = 0; t < s.size(); ++t) CHECK((s(t) >= thr) == bool(covered[std::size_t(t)]));
  }
}

TEST_CASE("median and top-k") {
  Eigen::VectorXd odd(5), even(4);
  odd << 1.0, 1.6, 1.2, 0.8, 1.4;
  even << 4, 1, 3, 2;
  CHECK(median(odd) == 1.2);
  CHECK(median(even) == 2.5);
  CHECK(top_k_count(1, 8) == 1);
  CHECK(top_k_count(8, 8) == 1);
  CHECK(top_k_count(9, 8) == 2);
  CHECK(top_k_count(0, 8) == 0);
}

TEST_CASE("config validation") {
  Config c;
  CHECK_NOTHROW(c.validate());
  c.eta = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = Config{};
  c.mu = -0.1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = Config{};
  c.top_k_divisor = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = Config{};
  c.U = -1;  // dataset value
  CHECK_NOTHROW(c.validate());
  c.U = -2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
