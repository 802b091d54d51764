#include <catch_amalgamated.hpp>

#include <algorithm>
#include <limits>
#include <random>

#include "cascadecnn/ceu.hpp"

using namespace cascadecnn;

namespace {

std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t k) {
  std::gamma_distribution<double> g(0.5, 1.0);
  std::vector<double> p(k);
  double s = 0;
  for (double& v : p) s += v = g(rng) + 1e-9;
  for (double& v : p) v /= s;
  return p;
}

// Exhaustive tuner: every (m, n) and every threshold in the observed scores
// plus -1, judged by direct counting.
struct Best {
  std::size_t kept = 0;
  std::size_t induced = 0;
  CeuConfig cfg;
  bool found = false;
};

Best brute_force_tune(const std::vector<std::vector<double>>& probs, const Flags& lpu, const Flags& ref, double tol,
                      int m_max, int n_max) {
  const int classes = static_cast<int>(probs.front().size());
  Best best;
  for (int m = 1; m <= std::min(m_max, classes); ++m) {
    for (int n = m; n <= std::min(n_max, classes); ++n) {
      std::vector<double> ths{-1.0};
      for (const auto& p : probs) ths.push_back(gbvsb(p, m, n));
      for (double th : ths) {
        std::size_t kept = 0, induced = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
          if (gbvsb(probs[i], m, n) >= th) {
            ++kept;
            induced += !lpu[i] && ref[i];
          }
        }
        if (static_cast<double>(induced) > tol * probs.size() + 1e-9) continue;
        const auto key = [](std::size_t k, std::size_t e, const CeuConfig& c) {
          return std::make_tuple(-static_cast<long long>(k), e, c.m, c.n, c.th);
        };
        if (!best.found || key(kept, induced, {m, n, th}) < key(best.kept, best.induced, best.cfg)) {
          best = {kept, induced, {m, n, th}, true};
        }
      }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("gbvsb examples") {
  const std::vector<double> p{0.5, 0.3, 0.2};
  CHECK(gbvsb(p, 1, 2) == Catch::Approx(0.2));
  CHECK(gbvsb(p, 1, 3) == Catch::Approx(0.0));
  CHECK(gbvsb(p, 2, 3) == Catch::Approx(0.6));
  CHECK(gbvsb(p, 3, 3) == Catch::Approx(1.0));
  CHECK(gbvsb(std::vector<double>{1.0, 0.0}, 1, 2) == 1.0);
  CHECK(gbvsb(std::vector<double>{0.5, 0.5}, 1, 2) == 0.0);
  CHECK_THROWS_AS(gbvsb(p, 0, 2), std::invalid_argument);
  CHECK_THROWS_AS(gbvsb(p, 2, 1), std::invalid_argument);
  CHECK_THROWS_AS(gbvsb(p, 1, 4), std::invalid_argument);
  CHECK_THROWS_AS(gbvsb(std::vector<double>{0.5, 0.4}, 1, 2), std::invalid_argument);
}

TEST_CASE("gbvsb properties") {
  std::mt19937_64 rng(71);
  std::uniform_int_distribution<int> kdist(2, 12);
  for (int i = 0; i < 500; ++i) {
    const auto p = random_distribution(rng, static_cast<std::size_t>(kdist(rng)));
    const int k = static_cast<int>(p.size());
    std::vector<double> shuffled = p;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (int m = 1; m <= k; ++m) {
      for (int n = m; n <= k; ++n) {
        const double g = gbvsb(p, m, n);
        CHECK(g >= -1.0 - 1e-12);
        CHECK(g <= 1.0 + 1e-12);
        CHECK(gbvsb(shuffled, m, n) == Catch::Approx(g).margin(1e-12));
        if (n == m) CHECK(g >= 0.0);
      }
    }
    CHECK(gbvsb(p, k, k) == Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("is_confident and degenerate gates") {
  const std::vector<double> p{0.75, 0.25};
  CHECK(is_confident(p, {1, 2, 0.5}));
  CHECK_FALSE(is_confident(p, {1, 2, 0.5000001}));
  CHECK(is_confident(p, {1, 2, -1.0}));
  CHECK_FALSE(is_confident(p, {1, 2, std::numeric_limits<double>::infinity()}));
  CHECK_THROWS(CeuConfig{2, 1, 0}.validate(3));
  CHECK_THROWS(CeuConfig{1, 4, 0}.validate(3));
  CHECK_THROWS(CeuConfig{1, 2, std::nan("")}.validate(3));
}

TEST_CASE("gate_stats examples") {
  const Flags keep{1, 1, 0, 0, 1};
  const Flags lpu{1, 0, 1, 0, 0};
  const Flags ref{1, 1, 1, 1, 0};
  const GateStats s = gate_stats(keep, lpu, ref);
  CHECK(s.kept_fraction == Catch::Approx(0.6));
  CHECK(s.forwarded_fraction == Catch::Approx(0.4));
  CHECK(s.induced_error == Catch::Approx(0.2));
  CHECK(s.false_negative_fraction == Catch::Approx(0.2));
  CHECK_THROWS(gate_stats(Flags{1}, Flags{1, 0}, Flags{1}));
}

TEST_CASE("tune agrees with exhaustive search") {
  std::mt19937_64 rng(72);
  std::uniform_int_distribution<int> kdist(2, 7), ndist(1, 40);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t k = static_cast<std::size_t>(kdist(rng));
    const std::size_t n = static_cast<std::size_t>(ndist(rng));
    std::vector<std::vector<double>> probs;
    Flags lpu(n), ref(n);
    for (std::size_t i = 0; i < n; ++i) {
      probs.push_back(random_distribution(rng, k));
      // Confident samples are more likely correct.
      lpu[i] = u(rng) < probs.back()[0] + 0.3;
      ref[i] = lpu[i] || u(rng) < 0.7;
    }
    const double tol = std::vector<double>{0.0, 0.05, 0.1, 0.3}[trial % 4];
    const CeuGrid grid{1 + trial % 3, 2 + trial % 5};
    const TuneResult got = tune(probs, lpu, ref, tol, grid);
    const Best want = brute_force_tune(probs, lpu, ref, tol, grid.m_max, grid.n_max);
    INFO("trial " << trial);
    if (!want.found) {
      CHECK_FALSE(got.feasible);
      CHECK(got.config.th == std::numeric_limits<double>::infinity());
      CHECK(got.stats.kept_fraction == 0.0);
      continue;
    }
    REQUIRE(got.feasible);
    CHECK(got.config == want.cfg);
    CHECK(got.stats.kept_fraction == Catch::Approx(static_cast<double>(want.kept) / n));
    CHECK(got.stats.induced_error <= tol + 1e-9);
  }
}

TEST_CASE("tune properties") {
  std::mt19937_64 rng(73);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::vector<double>> probs;
  Flags lpu, ref;
  for (int i = 0; i < 200; ++i) {
    probs.push_back(random_distribution(rng, 5));
    lpu.push_back(u(rng) < probs.back()[0] + 0.4);
    ref.push_back(lpu.back() || u(rng) < 0.8);
  }
  double last_kept = -1.0;
  for (double tol : {0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 1.0}) {
    const TuneResult r = tune(probs, lpu, ref, tol);
    CHECK(r.stats.induced_error <= tol + 1e-9);
    CHECK(r.stats.kept_fraction >= last_kept);
    last_kept = r.stats.kept_fraction;
  }
  // With the whole budget every sample can be kept.
  CHECK(last_kept == 1.0);

  // When the LPU is always right, nothing induces error.
  const TuneResult all = tune(probs, Flags(200, 1), Flags(200, 1), 0.0);
  CHECK(all.stats.kept_fraction == 1.0);
  CHECK(all.config.th == -1.0);
}

TEST_CASE("tune with no admissible threshold forwards everything") {
  // One sample, wrong at the LPU and right at the reference: any kept sample
  // induces an error.
  const std::vector<std::vector<double>> probs{{0.9, 0.1}};
  const TuneResult r = tune(probs, Flags{0}, Flags{1}, 0.0);
  CHECK_FALSE(r.feasible);
  CHECK(r.config.th == std::numeric_limits<double>::infinity());
  CHECK(r.stats.forwarded_fraction == 1.0);
  CHECK_THROWS(tune(probs, Flags{0}, Flags{1}, -0.1));
  CHECK_THROWS(tune({}, Flags{}, Flags{}, 0.0));
}
