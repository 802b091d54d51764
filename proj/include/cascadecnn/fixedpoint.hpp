#pragma once

#include <cstdint>
#include <vector>

namespace cascadecnn {

/// Wide accumulator for integer MACCs. Two 16-bit codes multiply into 32 bits;
/// the remaining headroom covers inner dimensions up to 2^31 terms.
using Accumulator = std::int64_t;

constexpr int kMinWordlength = 2;
constexpr int kMaxWordlength = 16;

/// Dynamic fixed-point format: a signed `wordlength`-bit code scaled by
/// 2^-frac_bits. frac_bits is unconstrained, so negative values give pure
/// power-of-two scaling and values above wordlength-1 give sub-unit ranges.
struct FixedSpec {
  int wordlength = 8;
  int frac_bits = 0;

  void validate() const;

  std::int64_t max_code() const { return (std::int64_t{1} << (wordlength - 1)) - 1; }
  std::int64_t min_code() const { return -(std::int64_t{1} << (wordlength - 1)); }
  double step() const;
  double max_value() const;
  double min_value() const;

  friend bool operator==(const FixedSpec&, const FixedSpec&) = default;
};

/// Scaling factors of one CONV/FC layer, expressed as fractional-bit counts.
struct LayerScaling {
  int weight_frac = 0;
  int act_frac = 0;

  friend bool operator==(const LayerScaling&, const LayerScaling&) = default;
  friend auto operator<=>(const LayerScaling&, const LayerScaling&) = default;
};

/// Network-level quantisation: one wordlength shared by every layer and a
/// (weights, activations) scaling pair per quantisable layer.
struct QuantScheme {
  int wordlength = 8;
  std::vector<LayerScaling> per_layer;

  FixedSpec weight_spec(std::size_t layer) const { return {wordlength, per_layer.at(layer).weight_frac}; }
  FixedSpec act_spec(std::size_t layer) const { return {wordlength, per_layer.at(layer).act_frac}; }

  friend bool operator==(const QuantScheme&, const QuantScheme&) = default;
};

/// Nearest representable code, rounding half away from zero and saturating at
/// the ends of the range. Throws std::domain_error for NaN or infinity.
std::int64_t quantize(double x, FixedSpec spec);

/// code * 2^-frac_bits. Throws std::out_of_range for codes outside the
/// signed wordlength range.
double dequantize(std::int64_t code, FixedSpec spec);

/// Round-to-nearest at an arbitrary binary scale without saturation; used
/// for biases, which live at the accumulator's product scale.
Accumulator quantize_unbounded(double x, int frac_bits);

inline Accumulator macc_exact(Accumulator acc, std::int64_t a_code, std::int64_t w_code) {
  return acc + a_code * w_code;
}

}  // namespace cascadecnn
