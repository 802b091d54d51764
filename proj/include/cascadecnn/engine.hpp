#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cascadecnn/fixedpoint.hpp"
#include "cascadecnn/matrix.hpp"
#include "cascadecnn/netmodel.hpp"

namespace cascadecnn {

/// Tile sizes of the MM unit along R, P and C, plus the batch tile that
/// replaces BatchSize as the R dimension of FC layers.
struct TileConfig {
  std::uint64_t t_r = 1;
  std::uint64_t t_p = 1;
  std::uint64_t t_c = 1;
  std::uint64_t t_batch = 1;

  /// Batch tiles are restricted to powers of two or multiples of 1024.
  static bool valid_batch_tile(std::uint64_t t);
  void validate() const;

  friend bool operator==(const TileConfig&, const TileConfig&) = default;
  friend auto operator<=>(const TileConfig&, const TileConfig&) = default;
};

/// Closed-form initiation interval ceil(R/T_R) ceil(P/T_P) ceil(C/T_C) T_R.
std::uint64_t initiation_interval(const MatrixDims& dims, const TileConfig& tiles);

/// Walks the tiled loop nest without arithmetic and counts one cycle per
/// pipelined row of each T_R x T_P tile, padded edge rows included.
std::uint64_t count_tile_cycles(const MatrixDims& dims, const TileConfig& tiles);

template <typename T>
struct MatmulResult {
  Matrix<T> product;
  std::uint64_t cycles = 0;
};

/// Tiled R x P by P x C multiplication following the MM unit's loop nest:
/// output tiles (loop1/loop2), accumulation over P tiles (loop3), pipelined
/// rows (loop4) and fully parallel columns/dot-products. Integer products
/// accumulate exactly; each output element sums its P terms in ascending order.
MatmulResult<Accumulator> tiled_matmul(const Matrix<std::int64_t>& a,
                                       const Matrix<std::int64_t>& b, const TileConfig& tiles);
MatmulResult<double> tiled_matmul(const Matrix<double>& a, const Matrix<double>& b,
                                  const TileConfig& tiles);

struct CycleReport {
  /// Initiation interval of each CONV/FC layer: per sample for CONV, per batch tile for FC.
  std::vector<std::uint64_t> per_layer_ii;
  /// Cycles counted for each CONV/FC layer over the whole run.
  std::vector<std::uint64_t> per_layer_cycles;
  std::uint64_t total_cycles = 0;
  std::uint64_t workload_ops = 0;
  std::uint64_t samples = 0;

  double cycles_per_sample() const {
    return samples == 0 ? 0.0 : static_cast<double>(total_cycles) / static_cast<double>(samples);
  }
};

/// Per-layer numeric mode: nullopt runs the layer in floating point, a value
/// quantises its weights and input activations at the plan's wordlength.
using PrecisionPlan = std::vector<std::optional<LayerScaling>>;

struct ExecutionPlan {
  int wordlength = 16;
  PrecisionPlan layers;  // one entry per CONV/FC layer
  TileConfig tiles;

  static ExecutionPlan floating(const Network& net, const TileConfig& tiles);
  static ExecutionPlan quantized(const Network& net, const QuantScheme& scheme,
                                 const TileConfig& tiles);
};

/// Tiles large enough that every CONV/FC layer of `net` is a single tile and
/// FC layers take up to `batch` samples per pass.
TileConfig covering_tiles(const Network& net, std::uint64_t batch);

/// Runs layers [begin, end) of `net` over a batch of activation volumes.
/// Activation quantisation happens on each CONV/FC input matrix; ReLU and
/// max-pool operate on dequantised reals. Cycle counts are added to `report`
/// when it is non-null.
std::vector<Volume> forward_layers(const Network& net, const ExecutionPlan& plan,
                                   std::vector<Volume> acts, std::size_t begin, std::size_t end,
                                   CycleReport* report = nullptr);

std::vector<double> softmax(std::span<const double> logits);

struct ForwardResult {
  std::vector<std::vector<double>> probabilities;
  CycleReport cycles;
};

ForwardResult run_plan(const Network& net, const ExecutionPlan& plan, std::span<const Volume> batch);

/// Floating-point reference.
ForwardResult run_float(const Network& net, std::span<const Volume> batch);

/// Integer execution under `scheme`. Throws std::invalid_argument when the
/// scheme does not match the network's CONV/FC layer count.
ForwardResult run_quantized(const Network& net, const QuantScheme& scheme,
                            std::span<const Volume> batch, const TileConfig& tiles);

/// First index of the maximum probability.
int argmax(std::span<const double> p);

/// Cycle profile of one pass over `batch` samples without touching data.
CycleReport profile_cycles(const Network& net, const TileConfig& tiles, std::uint64_t batch);

}  // namespace cascadecnn
