#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cascadecnn/engine.hpp"
#include "cascadecnn/netmodel.hpp"

namespace cascadecnn {

/// Device resources and precision-dependent cost tables. Tables are keyed by
/// wordlength and must cover 2..16.
struct PlatformModel {
  std::string name;
  double avail_lut = 0;
  double avail_dsp = 0;
  std::map<int, double> lut_per_macc;   // LUT cost of one LUT-based MACC
  std::map<int, double> macc_per_dsp;   // MACCs packed per DSP
  std::map<int, double> clk_hz;         // achieved clock
  double mem_bandwidth = 0;             // bits/s
  double onchip_capacity = 0;           // bits
  double offchip_capacity = 0;          // bits
  double reconfig_time = 0;             // seconds

  double lut_cost(int wordlength) const;
  double dsp_packing(int wordlength) const;
  double clock(int wordlength) const;

  /// Throws std::invalid_argument on missing table entries or nonpositive values.
  void validate() const;
};

/// 150 MHz up to 8 bits, 131 MHz at 16 bits, linear in between.
std::map<int, double> default_clk_table();
/// Two MACCs per DSP at wordlengths <= 5, one otherwise.
std::map<int, double> default_macc_per_dsp_table();
/// LUT cost affine in wordlength through (2, lut_at_2) and (16, lut_at_16).
std::map<int, double> affine_lut_table(double lut_at_2, double lut_at_16);

PlatformModel load_platform(const std::filesystem::path& path);
void save_platform(const PlatformModel& platform, const std::filesystem::path& path);

/// workload / II * clk = 2RPC / (ceil(R/T_R) ceil(P/T_P) ceil(C/T_C) T_R) * clk.
double perf(const MatrixDims& dims, const TileConfig& tiles, double clk_hz);

/// Operations per off-chip bit for one output tile: 2 T_R P T_C / ((T_R P + P T_C + T_R T_C) WL).
double op_intensity(const TileConfig& tiles, std::uint64_t p_full, int wordlength);

struct ComputeRoof {
  double ops_per_cycle = 0;
  double ops_per_s = 0;
  /// MACC units the device can host at this wordlength.
  double macc_capacity() const { return ops_per_cycle / 2.0; }
};

/// 2 (floor(availLUT / LUT_MACC(WL)) + availDSP * MACC_DSP(WL)) ops per cycle.
ComputeRoof compute_roof(const PlatformModel& platform, int wordlength);

/// 2 (T_R T_P + T_P T_C + T_R T_C) WL bits, double-buffered tiles.
std::uint64_t onchip_mem(const TileConfig& tiles, int wordlength);

struct DesignPoint {
  TileConfig tiles;
  double perf_ops_per_s = 0;  // attainable, bandwidth-capped for feasible points
  double op_intensity = 0;
  std::uint64_t onchip_bits = 0;
  std::uint64_t macc_count = 0;  // t_p * t_c
  bool feasible = false;
  std::string reason;  // why an infeasible point was rejected
};

/// Tile candidates along one axis: every divisor of `extent` and every power of two up to it.
std::vector<std::uint64_t> tile_candidates(std::uint64_t extent);

/// Per-layer roofline sweep over the tile candidates of each dimension.
std::vector<DesignPoint> explore_layer(const MatrixDims& dims, const PlatformModel& platform, int wordlength);

struct LayerPerf {
  LayerKind kind = LayerKind::kConv;
  double perf = 0;          // ops/s
  std::uint64_t ii = 0;     // cycles
};

/// Cycle-share weighted performance across layers for one batch. CONV layers
/// run once per sample (weight `batch`), FC layers once per batch tile
/// (weight `batch / t_batch`). Throws std::invalid_argument on an empty list.
double overall_perf(std::span<const LayerPerf> layers, std::uint64_t batch, std::uint64_t t_batch);

/// Off-chip bits needed to hold `batch` inputs and all intermediate results.
double offchip_bits(const Network& net, std::uint64_t batch, int wordlength);

/// Largest batch fitting in off-chip memory, or 0 if not even one sample fits.
std::uint64_t max_batch(const Network& net, const PlatformModel& platform, int wordlength);

/// Candidate batch tiles: powers of two and multiples of 1024 that divide `batch`.
std::vector<std::uint64_t> batch_tile_candidates(std::uint64_t batch);

struct DseOptions {
  /// Upper bound on the (t_r, t_p, t_c, t_batch) grid size; axes are thinned
  /// to powers of two plus the extent when the full grid would exceed it.
  std::uint64_t max_grid_points = 100000;
};

struct ArchitectureReport {
  TileConfig tiles;
  double predicted_ops_per_s = 0;
  std::vector<DesignPoint> points;  // every evaluated candidate, in enumeration order
  std::vector<std::uint64_t> r_candidates, p_candidates, c_candidates, batch_candidates;
  std::uint64_t feasible_points = 0;
};

/// Chooses the tile configuration maximising overall_perf across all CONV/FC
/// layers. Ties prefer fewer on-chip bits, then smaller tiles lexicographically.
/// Throws InfeasibleError naming the binding constraint when nothing fits.
ArchitectureReport select_architecture(const Network& net, const PlatformModel& platform, int wordlength,
                                       std::uint64_t batch, const DseOptions& opts = {});

/// CSV of all evaluated points (tiles, perf, op_intensity, onchip_bits, feasible, reason).
std::string design_points_csv(const std::vector<DesignPoint>& points);

}  // namespace cascadecnn
