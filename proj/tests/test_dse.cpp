#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "cascadecnn/dse.hpp"
#include "cascadecnn/errors.hpp"
#include "cascadecnn/fixture.hpp"
#include "test_support.hpp"

using namespace cascadecnn;

namespace {

std::uint64_t cdiv(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

PlatformModel roomy_platform() {
  PlatformModel p;
  p.name = "roomy";
  p.avail_lut = 1e9;
  p.avail_dsp = 1e6;
  p.lut_per_macc = affine_lut_table(10, 200);
  p.macc_per_dsp = default_macc_per_dsp_table();
  p.clk_hz = default_clk_table();
  p.mem_bandwidth = 1e30;
  p.onchip_capacity = 1e30;
  p.offchip_capacity = 1e30;
  return p;
}

// Brute-force reference for the cross-layer selection, written from the
// model definitions: per-sample CONV cost, per-batch-tile FC cost, cycle
// weighted perf, bandwidth cap per layer.
struct Choice {
  TileConfig tiles;
  double perf = -1;
  std::uint64_t onchip = 0;
};

Choice brute_force_select(const Network& net, const PlatformModel& pf, int wl, std::uint64_t batch,
                          const ArchitectureReport& grid) {
  const double clk = pf.clk_hz.at(wl);
  const double roof = 2.0 * (std::floor(pf.avail_lut / pf.lut_per_macc.at(wl)) + pf.avail_dsp * pf.macc_per_dsp.at(wl));
  Choice best;
  std::vector<Choice> all;
  for (auto tr : grid.r_candidates)
    for (auto tp : grid.p_candidates)
      for (auto tc : grid.c_candidates)
        for (auto tb : grid.batch_candidates) {
          const std::uint64_t mem = 2 * (tr * tp + tp * tc + tr * tc) * wl;
          if (2.0 * tp * tc > roof || mem > pf.onchip_capacity) continue;
          double num = 0, den = 0;
          for (const auto& l : net.layers) {
            if (!l.is_matmul()) continue;
            const bool fc = l.kind == LayerKind::kFc;
            const std::uint64_t r = fc ? tb : static_cast<std::uint64_t>(l.out_h() * l.out_w());
            const std::uint64_t p = static_cast<std::uint64_t>(l.k_h * l.k_w * l.n_in);
            const std::uint64_t c = static_cast<std::uint64_t>(l.n_out);
            const double ii = static_cast<double>(cdiv(r, tr) * cdiv(p, tp) * cdiv(c, tc) * tr);
            const double oi = 2.0 * tr * p * tc / ((double(tr) * p + double(p) * tc + double(tr) * tc) * wl);
            const double lp = std::min(2.0 * r * p * c / ii * clk, oi * pf.mem_bandwidth);
            const double k = fc ? double(batch) / tb : double(batch);
            num += k * lp * ii;
            den += k * ii;
          }
          all.push_back({{tr, tp, tc, tb}, num / den, mem});
        }
  for (const auto& c : all) best.perf = std::max(best.perf, c.perf);
  Choice pick;
  bool have = false;
  for (const auto& c : all) {
    if (c.perf < best.perf * (1 - 1e-12)) continue;
    if (!have || c.onchip < pick.onchip || (c.onchip == pick.onchip && c.tiles < pick.tiles)) {
      pick = c;
      have = true;
    }
  }
  return pick;
}

}  // namespace

TEST_CASE("roofline formula examples") {
  CHECK(perf({4, 4, 4}, {2, 2, 2, 1}, 100.0) == Catch::Approx(128.0 / 16.0 * 100.0));
  CHECK(perf({1, 1, 1}, {1, 1, 1, 1}, 150e6) == Catch::Approx(300e6));
  CHECK(op_intensity({1, 1, 1, 1}, 1, 8) == Catch::Approx(2.0 / (3.0 * 8.0)));
  CHECK(op_intensity({4, 1, 4, 1}, 10, 16) == Catch::Approx(320.0 / (96.0 * 16.0)));
  CHECK(onchip_mem({1, 1, 1, 1}, 8) == 48);
  CHECK(onchip_mem({2, 3, 4, 1}, 5) == 2 * (6 + 12 + 8) * 5);

  PlatformModel p = roomy_platform();
  p.avail_lut = 1000;
  p.avail_dsp = 10;
  p.lut_per_macc = affine_lut_table(30, 30);
  const ComputeRoof r4 = compute_roof(p, 4);
  CHECK(r4.ops_per_cycle == 2.0 * (33 + 20));
  CHECK(r4.ops_per_s == Catch::Approx(2.0 * 53 * 150e6));
  CHECK(compute_roof(p, 8).ops_per_cycle == 2.0 * (33 + 10));
}

TEST_CASE("default tables") {
  const auto clk = default_clk_table();
  CHECK(clk.at(2) == 150e6);
  CHECK(clk.at(8) == 150e6);
  CHECK(clk.at(16) == Catch::Approx(131e6));
  CHECK(clk.at(12) == Catch::Approx(140.5e6));
  const auto dsp = default_macc_per_dsp_table();
  CHECK(dsp.at(5) == 2.0);
  CHECK(dsp.at(6) == 1.0);
  const auto lut = affine_lut_table(10, 38);
  CHECK(lut.at(2) == 10);
  CHECK(lut.at(9) == Catch::Approx(24));
  CHECK(lut.at(16) == 38);
  PlatformModel bad = roomy_platform();
  bad.clk_hz.erase(7);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad.clock(7), std::invalid_argument);
}

TEST_CASE("perf times II over clk recovers the workload") {
  std::mt19937_64 rng(81);
  std::uniform_int_distribution<std::uint64_t> d(1, 300), t(1, 64);
  for (int i = 0; i < 300; ++i) {
    const MatrixDims m{d(rng), d(rng), d(rng)};
    const TileConfig tc{t(rng), t(rng), t(rng), 1};
    const double clk = 131e6;
    const double ii = static_cast<double>(initiation_interval(m, tc));
    CHECK(perf(m, tc, clk) * ii / clk == Catch::Approx(2.0 * m.r * m.p * m.c).epsilon(1e-12));
  }
}

TEST_CASE("tile candidates") {
  CHECK(tile_candidates(1) == std::vector<std::uint64_t>{1});
  CHECK(tile_candidates(12) == std::vector<std::uint64_t>{1, 2, 3, 4, 6, 8, 12});
  CHECK(tile_candidates(7) == std::vector<std::uint64_t>{1, 2, 4, 7});
  CHECK(batch_tile_candidates(256) == std::vector<std::uint64_t>{1, 2, 4, 8, 16, 32, 64, 128, 256});
  CHECK(batch_tile_candidates(3072) ==
        std::vector<std::uint64_t>{1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 3072});
  CHECK(batch_tile_candidates(12) == std::vector<std::uint64_t>{1, 2, 4});
}

TEST_CASE("explore_layer on degenerate platforms") {
  const MatrixDims dims{36, 9, 4};
  const auto unbounded = explore_layer(dims, roomy_platform(), 8);
  CHECK(unbounded.size() == tile_candidates(36).size() * tile_candidates(9).size() * tile_candidates(4).size());
  for (const auto& pt : unbounded) {
    CHECK(pt.feasible);
    CHECK(pt.perf_ops_per_s == Catch::Approx(perf(dims, pt.tiles, 150e6)));
  }

  PlatformModel no_mem = roomy_platform();
  no_mem.onchip_capacity = 0;
  for (const auto& pt : explore_layer(dims, no_mem, 8)) {
    CHECK_FALSE(pt.feasible);
    CHECK(pt.reason == "on-chip memory");
  }

  PlatformModel no_bw = roomy_platform();
  no_bw.mem_bandwidth = 0;
  for (const auto& pt : explore_layer(dims, no_bw, 8)) CHECK(pt.perf_ops_per_s == 0.0);
}

TEST_CASE("explored points respect the roofline") {
  const MatrixDims dims{49, 27, 16};
  PlatformModel pf = toy_platform();
  for (int wl : {4, 8, 16}) {
    const ComputeRoof roof = compute_roof(pf, wl);
    for (const auto& pt : explore_layer(dims, pf, wl)) {
      if (!pt.feasible) continue;
      CHECK(pt.perf_ops_per_s <= roof.ops_per_s * (1 + 1e-12));
      CHECK(pt.perf_ops_per_s <= pt.op_intensity * pf.mem_bandwidth * (1 + 1e-12));
      CHECK(pt.onchip_bits <= pf.onchip_capacity);
    }
  }
}

TEST_CASE("overall_perf examples") {
  const std::vector<LayerPerf> one{{LayerKind::kConv, 5e9, 100}};
  CHECK(overall_perf(one, 8, 1) == 5e9);
  // Equal per-sample cycles: plain mean.
  const std::vector<LayerPerf> two{{LayerKind::kConv, 4.0, 10}, {LayerKind::kConv, 2.0, 10}};
  CHECK(overall_perf(two, 4, 1) == Catch::Approx(3.0));
  // FC runs batch/t_batch times while CONV runs batch times.
  const std::vector<LayerPerf> mix{{LayerKind::kConv, 6.0, 10}, {LayerKind::kFc, 2.0, 40}};
  // weights: conv 8*10 = 80, fc 2*40 = 80
  CHECK(overall_perf(mix, 8, 4) == Catch::Approx(4.0));
  CHECK_THROWS(overall_perf(std::vector<LayerPerf>{}, 1, 1));
}

TEST_CASE("select_architecture agrees with brute force") {
  const Network toy = make_toy_network(1);
  const Network small = testing::small_random_network(82);
  PlatformModel tight = toy_platform();
  for (const Network* net : {&toy, &small}) {
    for (int wl : {3, 8, 16}) {
      for (std::uint64_t batch : {1, 16}) {
        const auto rep = select_architecture(*net, tight, wl, batch);
        const Choice want = brute_force_select(*net, tight, wl, batch, rep);
        INFO("wl " << wl << " batch " << batch);
        CHECK(rep.tiles == want.tiles);
        CHECK(rep.predicted_ops_per_s == Catch::Approx(want.perf).epsilon(1e-12));
        // Full grid when small enough.
        CHECK(rep.points.size() == rep.r_candidates.size() * rep.p_candidates.size() * rep.c_candidates.size() *
                                       rep.batch_candidates.size());
      }
    }
  }
}

TEST_CASE("a one-MACC device picks unit tiles") {
  PlatformModel p = roomy_platform();
  p.avail_lut = 0;
  p.avail_dsp = 1;
  const auto rep = select_architecture(make_toy_network(1), p, 8, 4);
  CHECK(rep.tiles.t_p == 1);
  CHECK(rep.tiles.t_c == 1);
  CHECK(rep.tiles.t_r == 1);
}

TEST_CASE("more resources never lower the chosen performance") {
  const Network net = make_toy_network(2);
  PlatformModel base = toy_platform();
  double last = 0;
  for (double scale : {0.5, 1.0, 2.0, 4.0}) {
    PlatformModel p = base;
    p.avail_lut = base.avail_lut * scale;
    p.avail_dsp = std::floor(base.avail_dsp * scale);
    p.onchip_capacity = base.onchip_capacity * scale;
    p.mem_bandwidth = base.mem_bandwidth * scale;
    const double got = select_architecture(net, p, 8, 16).predicted_ops_per_s;
    CHECK(got >= last * (1 - 1e-12));
    last = got;
  }
}

TEST_CASE("infeasible platforms name the binding constraint") {
  const Network net = make_toy_network(1);
  PlatformModel p = toy_platform();
  p.onchip_capacity = 10;
  try {
    select_architecture(net, p, 8, 4);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).find("on-chip") != std::string::npos);
  }

  p = toy_platform();
  p.avail_lut = 0;
  p.avail_dsp = 0;
  try {
    select_architecture(net, p, 8, 4);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).find("compute roof") != std::string::npos);
  }

  p = toy_platform();
  p.offchip_capacity = offchip_bits(net, 4, 8) - 1;
  try {
    select_architecture(net, p, 8, 4);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).find("off-chip") != std::string::npos);
  }
  CHECK(max_batch(net, p, 8) == 3);
}

TEST_CASE("off-chip footprint") {
  const Network net = make_toy_network(1);
  // input 64, conv 144, relu 144, pool 36, fc 4, softmax 4
  CHECK(offchip_bits(net, 1, 8) == (64 + 144 + 144 + 36 + 4 + 4) * 8.0);
  CHECK(offchip_bits(net, 10, 4) == 10 * offchip_bits(net, 1, 4));
}

TEST_CASE("platform round trip") {
  testing::TempDir dir("platform");
  const PlatformModel p = toy_platform();
  save_platform(p, dir.path() / "p.json");
  const PlatformModel q = load_platform(dir.path() / "p.json");
  CHECK(q.name == p.name);
  CHECK(q.avail_lut == p.avail_lut);
  CHECK(q.lut_per_macc == p.lut_per_macc);
  CHECK(q.macc_per_dsp == p.macc_per_dsp);
  CHECK(q.clk_hz == p.clk_hz);
  CHECK(q.onchip_capacity == p.onchip_capacity);
  CHECK(q.reconfig_time == p.reconfig_time);
  CHECK_THROWS_AS(load_platform(dir.path() / "absent.json"), InputError);
}

TEST_CASE("design point CSV") {
  const auto rep = select_architecture(make_toy_network(1), toy_platform(), 4, 4);
  const std::string csv = design_points_csv(rep.points);
  CHECK(csv.rfind("t_r,t_p,t_c,t_batch,perf_ops_per_s,op_intensity,onchip_bits,feasible,reason\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == rep.points.size() + 1);
}
