#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cascadecnn {

/// Per-sample boolean flags (kept, correct, ...) stored one byte each.
using Flags = std::vector<std::uint8_t>;

/// Gate parameters: a prediction is confident when
/// gbvsb(p, m, n) >= th. th = +inf forwards every sample.
struct CeuConfig {
  int m = 1;
  int n = 2;
  double th = 0.0;

  void validate(std::size_t class_count) const;

  friend bool operator==(const CeuConfig&, const CeuConfig&) = default;
};

/// Generalised best-vs-second-best: the sum of the m largest probabilities
/// minus the sum of the next n - m. Throws std::invalid_argument unless
/// 1 <= m <= n <= |p| and p sums to 1 within 1e-6.
double gbvsb(std::span<const double> p, int m, int n);

bool is_confident(std::span<const double> p, const CeuConfig& cfg);

struct GateStats {
  double kept_fraction = 0.0;
  double forwarded_fraction = 1.0;
  /// Kept by the gate, wrong at the LPU, right at the reference.
  double induced_error = 0.0;
  /// Forwarded although the LPU was right.
  double false_negative_fraction = 0.0;
};

/// Statistics of `keep` decisions against per-sample correctness flags.
GateStats gate_stats(std::span<const std::uint8_t> keep, std::span<const std::uint8_t> lpu_correct,
                     std::span<const std::uint8_t> reference_correct);

/// Tuner search grid. Thresholds are always the observed gBvSB values plus -1,
/// which keeps everything; that set is lossless for the kept fraction.
struct CeuGrid {
  int m_max = 5;
  int n_max = 10;
};

struct TuneResult {
  CeuConfig config;
  GateStats stats;
  /// False when no grid point meets the tolerance and the all-forward gate was returned.
  bool feasible = true;
};

/// Chooses the config maximising the kept fraction subject to
/// induced_error <= error_tolerance; ties go to the smaller induced error,
/// then the lexicographically smaller (m, n, th).
TuneResult tune(const std::vector<std::vector<double>>& lpu_probabilities, std::span<const std::uint8_t> lpu_correct,
                std::span<const std::uint8_t> reference_correct, double error_tolerance, const CeuGrid& grid = {});

}  // namespace cascadecnn
