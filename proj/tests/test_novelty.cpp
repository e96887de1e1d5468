#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "esrl/es.hpp"
#include "esrl/novelty.hpp"
#include "esrl/rng.hpp"
#include "oracles.hpp"

using namespace esrl;

TEST_CASE("bc_distance basics") {
  CHECK(bc_distance({0, 0}, {3, 4}) == 5.0);
  CHECK(bc_distance({1, 1}, {1, 1}) == 0.0);
  CounterRng rng(3);
  for (int i = 0; i < 50; ++i) {
    BehaviorCharacteristic a{rng.next_uniform(-9, 9), rng.next_uniform(-9, 9)};
    BehaviorCharacteristic b{rng.next_uniform(-9, 9), rng.next_uniform(-9, 9)};
    CHECK(bc_distance(a, b) == bc_distance(b, a));
  }
}

TEST_CASE("novelty: worked examples") {
  Archive a;
  a.k = 2;
  a.add({1, 0});
  a.add({0, 1});
  a.add({5, 5});
  CHECK(a.novelty({0, 0}) == 1.0);

  Archive single;
  single.k = 10;
  single.add({0, 0});
  CHECK(single.novelty({3, 4}) == 5.0);  // k clamps to the archive size

  Archive empty;
  CHECK(std::isinf(empty.novelty({0, 0})));
}

TEST_CASE("novelty equals the brute-force oracle exactly") {
  CounterRng rng(17);
  Archive a;
  a.k = 10;
  std::vector<std::pair<double, double>> mirror;
  for (int i = 0; i < 200; ++i) {
    const double x = rng.next_uniform(0, 10), y = rng.next_uniform(0, 10);
    a.add({x, y});
    mirror.emplace_back(x, y);
  }
  for (int q = 0; q < 50; ++q) {
    const double x = rng.next_uniform(0, 10), y = rng.next_uniform(0, 10);
    CHECK(a.novelty({x, y}) == oracle::novelty_naive(x, y, mirror, a.k));
  }
}

TEST_CASE("novelty is invariant to archive permutation") {
  CounterRng rng(23);
  Archive a, b;
  a.k = b.k = 5;
  std::vector<BehaviorCharacteristic> pts;
  for (int i = 0; i < 40; ++i)
    pts.push_back({rng.next_uniform(0, 10), rng.next_uniform(0, 10)});
  for (const auto& p : pts) a.add(p);
  for (std::size_t i = pts.size(); i > 1; --i) std::swap(pts[i - 1], pts[rng.next_below(i)]);
  for (const auto& p : pts) b.add(p);
  for (int q = 0; q < 20; ++q) {
    BehaviorCharacteristic bc{rng.next_uniform(0, 10), rng.next_uniform(0, 10)};
    CHECK(a.novelty(bc) == b.novelty(bc));
  }
}

// Holds once the archive already has k entries; below that the k-clamp means a
// far-away insertion can raise the mean.
TEST_CASE("adding an entry never increases novelty (archive >= k)") {
  CounterRng rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    Archive a;
    a.k = 1 + static_cast<int>(rng.next_below(8));
    const int n = a.k + static_cast<int>(rng.next_below(30));
    for (int i = 0; i < n; ++i) a.add({rng.next_uniform(0, 10), rng.next_uniform(0, 10)});
    BehaviorCharacteristic q{rng.next_uniform(0, 10), rng.next_uniform(0, 10)};
    const double before = a.novelty(q);
    a.add({rng.next_uniform(0, 10), rng.next_uniform(0, 10)});
    CHECK(a.novelty(q) <= before);
  }
}

TEST_CASE("archive append-only bookkeeping") {
  Archive a;
  a.k = 3;
  CHECK(a.entries.empty());
  a.add({2, 2});
  CHECK(a.entries.size() == 1);
  const double before = a.novelty({2, 2});
  a.add({2, 2});  // duplicates count individually
  CHECK(a.entries.size() == 2);
  CHECK(a.novelty({2, 2}) <= before);
  CHECK(a.version == 2);
}

TEST_CASE("archive text round-trip") {
  Archive a;
  a.k = 7;
  CounterRng rng(31);
  for (int i = 0; i < 25; ++i)
    a.add({rng.next_uniform(0, 10), rng.next_normal()});
  const auto path = std::filesystem::temp_directory_path() / "esrl_archive_test.txt";
  a.save(path.string());
  const Archive b = Archive::load(path.string());
  REQUIRE(b.entries.size() == a.entries.size());
  CHECK(b.k == a.k);
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(a.entries[i].x == b.entries[i].x);
    CHECK(a.entries[i].y == b.entries[i].y);
  }
  std::filesystem::remove(path);
}

TEST_CASE("select_member: proportional frequencies") {
  CounterRng rng(41);
  auto frequencies = [&rng](const Vec& novelties, int draws) {
    Vec freq(novelties.size(), 0.0);
    for (int i = 0; i < draws; ++i)
      freq[select_member(novelties, rng.next_unit())] += 1.0 / draws;
    return freq;
  };
  const Vec f1 = frequencies({1, 3}, 100000);
  CHECK_THAT(f1[0], Catch::Matchers::WithinAbs(0.25, 0.01));
  CHECK_THAT(f1[1], Catch::Matchers::WithinAbs(0.75, 0.01));
  const Vec f2 = frequencies({2, 2, 4}, 100000);
  CHECK_THAT(f2[0], Catch::Matchers::WithinAbs(0.25, 0.01));
  CHECK_THAT(f2[1], Catch::Matchers::WithinAbs(0.25, 0.01));
  CHECK_THAT(f2[2], Catch::Matchers::WithinAbs(0.5, 0.01));
  const Vec f3 = frequencies({0, 0, 0}, 100000);
  for (double f : f3) CHECK_THAT(f, Catch::Matchers::WithinAbs(1.0 / 3.0, 0.01));
}

TEST_CASE("select_member: infinities and validation") {
  const Vec nov = {std::numeric_limits<double>::infinity(), 1.0,
                   std::numeric_limits<double>::infinity()};
  CounterRng rng(43);
  for (int i = 0; i < 1000; ++i) {
    const auto pick = select_member(nov, rng.next_unit());
    CHECK(pick != 1);
  }
  CHECK_THROWS_AS(select_member(Vec{-1.0}, 0.5), ValidationError);
  CHECK_THROWS_AS(select_member(Vec{}, 0.5), ValidationError);
}

TEST_CASE("combine_scores blends shaped scores") {
  CHECK(combine_scores(Vec{0.5}, Vec{-0.5}, 0.5) == Vec{0.0});
  const Vec f = {0.1, -0.3, 0.5}, n = {-0.5, 0.0, 0.5};
  CHECK(combine_scores(f, n, 1.0) == f);
  CHECK(combine_scores(f, n, 0.0) == n);
  CHECK_THROWS_AS(combine_scores(f, Vec{1.0}, 0.5), StructuralError);
  CHECK_THROWS_AS(combine_scores(f, n, 1.5), ValidationError);
}

// Scripted 1-D novelty-search loop: the mean's behavior walks away from a
// fixed archive cluster because per-perturbation novelty is the score.
TEST_CASE("novelty scores push the mean away from the archive") {
  NoiseTable table(404, 50000);
  Archive archive;
  archive.k = 5;
  for (int i = 0; i < 10; ++i) archive.add({0.01 * i, 0.0});
  EsState s = EsState::make(Vec{0.05}, 0.1, 0.05, 0.0, 20);
  auto bc_of = [](double theta) { return BehaviorCharacteristic{theta, 0.0}; };
  double prev = archive.novelty(bc_of(s.theta[0]));
  int improved = 0;
  for (int it = 0; it < 20; ++it) {
    Vec raw(2 * s.pop_pairs);
    std::vector<std::size_t> idx(2 * s.pop_pairs);
    std::vector<int> signs(2 * s.pop_pairs);
    for (int p = 0; p < s.pop_pairs; ++p) {
      const auto at = draw_noise_index(505, it, p, table.size(), 1);
      raw[2 * p] = archive.novelty(bc_of(perturb(s.theta, table, at, +1, s.sigma)[0]));
      raw[2 * p + 1] = archive.novelty(bc_of(perturb(s.theta, table, at, -1, s.sigma)[0]));
      idx[2 * p] = idx[2 * p + 1] = at;
      signs[2 * p] = 1;
      signs[2 * p + 1] = -1;
    }
    const Vec g = estimate_update(shape_scores(raw), idx, signs, table, s.sigma, 1);
    adam_step(s, g);
    const double now = archive.novelty(bc_of(s.theta[0]));
    if (now > prev) ++improved;
    prev = now;
  }
  CHECK(improved >= 18);
}
