#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rc/difficulty.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace rc;

namespace {

std::vector<SampleId> iota_ids(std::size_t n, SampleId first = 0) {
  std::vector<SampleId> ids(n);
  std::iota(ids.begin(), ids.end(), first);
  return ids;
}

using oracle::brute_force_raws;

// Independent rank oracle: stable sort on (easiness key, id).
std::vector<std::size_t> oracle_ranks(const std::vector<DifficultyScore>& s) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ka = s[a].metric == Metric::confidence ? -s[a].raw : s[a].raw;
    const double kb = s[b].metric == Metric::confidence ? -s[b].raw : s[b].raw;
    if (ka != kb) return ka < kb;
    return s[a].sample_id < s[b].sample_id;
  });
  std::vector<std::size_t> rank(s.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
  return rank;
}

bool is_permutation_of_range(const std::vector<DifficultyScore>& s) {
  std::vector<std::size_t> r;
  for (const auto& x : s) r.push_back(x.rank);
  std::sort(r.begin(), r.end());
  for (std::size_t i = 0; i < r.size(); ++i)
    if (r[i] != i) return false;
  return true;
}

}  // namespace

TEST_CASE("confidence scores") {
  SUBCASE("ground-truth probability is the raw score") {
    const SampleId ids[] = {4};
    const int labels[] = {0};
    const double probs[] = {0.7, 0.2, 0.1};
    const auto s = confidence_from_probabilities(ids, labels, probs, 3);
    CHECK(s[0].raw == 0.7);
    CHECK(s[0].rank == 0);
  }
  SUBCASE("higher confidence ranks easier") {
    const SampleId ids[] = {1, 2};
    const int labels[] = {0, 1};
    const double probs[] = {0.9, 0.1, 0.7, 0.3};
    const auto s = confidence_from_probabilities(ids, labels, probs, 2);
    CHECK(s[0].raw == 0.9);
    CHECK(s[1].raw == 0.3);
    CHECK(s[0].rank == 0);
    CHECK(s[1].rank == 1);
  }
  SUBCASE("ranks agree with a sort oracle on random inputs") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<DifficultyScore> s(10);
      for (std::size_t i = 0; i < s.size(); ++i) {
        // Coarse grid so that ties happen.
        s[i] = {static_cast<SampleId>(100 - i), Metric::confidence, std::round(u(rng) * 4) / 4, 0};
      }
      assign_ranks(s);
      const auto expected = oracle_ranks(s);
      for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i].rank == expected[i]);
      CHECK(is_permutation_of_range(s));
    }
  }
  SUBCASE("strictly increasing relabelling keeps ranks") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.01, 1);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<DifficultyScore> a(15);
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = {static_cast<SampleId>(i), Metric::confidence, u(rng), 0};
      auto b = a;
      for (auto& x : b) x.raw = std::pow(x.raw, 3) * 0.5 + 0.1;
      assign_ranks(a);
      assign_ranks(b);
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].rank == b[i].rank);
    }
  }
  SUBCASE("teacher scores lie in [0, 1]") {
    const Benchmark bench = rc::testing::toy_benchmark(4, 6, 1);
    CnnConfig net;
    net.num_classes = 4;
    SmallCnn teacher(net, 1);
    const auto s = confidence_scores(teacher, bench.data, bench.splits.train);
    CHECK(s.size() == bench.splits.train.size());
    for (const auto& x : s) {
      CHECK(x.raw >= 0);
      CHECK(x.raw <= 1);
    }
    CHECK(is_permutation_of_range(s));
    CnnConfig wrong;
    wrong.num_classes = 3;
    CHECK_THROWS_AS(confidence_scores(SmallCnn(wrong, 1), bench.data, bench.splits.train), ConfigError);
  }
}

TEST_CASE("distance scores") {
  SUBCASE("three-point hand case") {
    const SampleId ids[] = {1, 2, 3};
    const double f[] = {0, 0, 3, 4, 0, 8};
    const auto s = distance_from_features(ids, f, 2);
    CHECK(s[0].raw == 13);
    CHECK(s[1].raw == 10);
    CHECK(s[2].raw == 13);
    CHECK(s[1].rank == 0);
    CHECK(s[0].rank == 1);
    CHECK(s[2].rank == 2);
  }
  SUBCASE("identical features tie at zero and rank by id") {
    const SampleId ids[] = {9, 4, 6};
    const double f[] = {1, 2, 1, 2, 1, 2};
    const auto s = distance_from_features(ids, f, 2);
    for (const auto& x : s) CHECK(x.raw == 0);
    CHECK(s[1].rank == 0);
    CHECK(s[2].rank == 1);
    CHECK(s[0].rank == 2);
  }
  SUBCASE("fewer than two samples") {
    const SampleId ids[] = {1};
    const double f[] = {0, 0};
    CHECK_THROWS_AS(distance_from_features(ids, f, 2), InvalidInput);
  }
  SUBCASE("brute-force oracle, 100 random sets up to n = 64") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g(0, 3);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 2 + rng() % 63, dim = 1 + rng() % 16;
      std::vector<double> f(n * dim);
      for (auto& v : f) v = g(rng);
      const auto ids = iota_ids(n, 1000);
      const auto s = distance_from_features(ids, f, dim);
      const auto raw = brute_force_raws(f, n, dim);
      for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(s[i].raw - raw[i]));
      CHECK(is_permutation_of_range(s));
      const auto expected = oracle_ranks(s);
      for (std::size_t i = 0; i < n; ++i) CHECK(s[i].rank == expected[i]);
    }
    CHECK(worst <= 1e-9);
  }
  SUBCASE("oracle distance matrix is symmetric with a zero diagonal") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> g(0, 1);
    const std::size_t n = 12, dim = 5;
    std::vector<double> f(n * dim);
    for (auto& v : f) v = g(rng);
    auto d = [&](std::size_t i, std::size_t j) {
      double s = 0;
      for (std::size_t k = 0; k < dim; ++k) s += (f[i * dim + k] - f[j * dim + k]) * (f[i * dim + k] - f[j * dim + k]);
      return std::sqrt(s);
    };
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(d(i, i) == 0);
      for (std::size_t j = 0; j < n; ++j) CHECK(d(i, j) == d(j, i));
    }
    const auto s = distance_from_features(iota_ids(n), f, dim);
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0;
      for (std::size_t j = 0; j < n; ++j) row += d(i, j);
      CHECK(std::abs(s[i].raw - row) <= 1e-9);
    }
  }
  SUBCASE("scaling the features scales the raws and keeps the ranks") {
    std::mt19937_64 rng(14);
    std::normal_distribution<double> g(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 3 + rng() % 20, dim = 4;
      std::vector<double> f(n * dim);
      for (auto& v : f) v = g(rng);
      const double c = 0.25 + static_cast<double>(rng() % 100) / 10;
      auto scaled = f;
      for (auto& v : scaled) v *= c;
      const auto a = distance_from_features(iota_ids(n), f, dim);
      const auto b = distance_from_features(iota_ids(n), scaled, dim);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(b[i].raw - c * a[i].raw) <= 1e-9 * std::max(1.0, c * a[i].raw));
        CHECK(a[i].rank == b[i].rank);
      }
    }
  }
  SUBCASE("penultimate extractor feeds the scorer") {
    const Benchmark bench = rc::testing::toy_benchmark(3, 4, 1);
    CnnConfig net;
    net.num_classes = 3;
    SmallCnn model(net, 2);
    PenultimateExtractor ex(model);
    const auto f = ex.extract(bench.data, bench.splits.train);
    CHECK(f.size() == bench.splits.train.size() * 84);
    const auto s = distance_scores(ex, bench.data, bench.splits.train);
    const auto raw = brute_force_raws(f, bench.splits.train.size(), 84);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s[i].raw - raw[i]) <= 1e-9 * std::max(1.0, raw[i]));
  }
}

TEST_CASE("class-level difficulty") {
  SUBCASE("class means decide the order") {
    // Class A (label 0): ids 1, 2 with raws 0.9, 0.7. Class B (label 1): ids 3, 4 with raws 0.5, 0.6.
    std::vector<DifficultyScore> s{{3, Metric::confidence, 0.5, 0},
                                   {1, Metric::confidence, 0.9, 0},
                                   {4, Metric::confidence, 0.6, 0},
                                   {2, Metric::confidence, 0.7, 0}};
    assign_ranks(s);
    const int labels[] = {1, 0, 1, 0};
    const auto out = class_level(s, labels);
    REQUIRE(out.size() == 4);
    CHECK(out[0].sample_id == 1);
    CHECK(out[1].sample_id == 2);
    CHECK(out[2].sample_id == 3);
    CHECK(out[3].sample_id == 4);
    CHECK(out[0].raw == doctest::Approx(0.8));
    CHECK(out[2].raw == doctest::Approx(0.55));
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i].rank == i);
  }
  SUBCASE("one class keeps its order") {
    std::vector<DifficultyScore> s{{5, Metric::distance, 3, 0}, {2, Metric::distance, 1, 0}, {8, Metric::distance, 2, 0}};
    const int labels[] = {4, 4, 4};
    const auto out = class_level(s, labels);
    CHECK(out[0].sample_id == 5);
    CHECK(out[1].sample_id == 2);
    CHECK(out[2].sample_id == 8);
  }
  SUBCASE("equal class means: smaller minimum id first") {
    std::vector<DifficultyScore> s{{10, Metric::distance, 2, 0}, {3, Metric::distance, 1, 0},
                                   {4, Metric::distance, 3, 0},  {20, Metric::distance, 2, 0}};
    const int labels[] = {0, 1, 1, 0};
    const auto out = class_level(s, labels);
    CHECK(out[0].sample_id == 3);
    CHECK(out[1].sample_id == 4);
    CHECK(out[2].sample_id == 10);
  }
}

TEST_CASE("score dumps round-trip exactly") {
  const auto dir = rc::testing::temp_dir("scores");
  std::vector<DifficultyScore> s{{7, Metric::confidence, 0.1 + 0.2, 1}, {9, Metric::confidence, 1.0 / 3, 0}};
  write_scores(s, dir / "s.txt");
  const auto back = read_scores(dir / "s.txt");
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].sample_id == s[i].sample_id);
    CHECK(back[i].metric == s[i].metric);
    CHECK(back[i].raw == s[i].raw);
    CHECK(back[i].rank == s[i].rank);
  }
  std::filesystem::remove_all(dir);
}
