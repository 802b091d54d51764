#include "cascadecnn/fixedpoint.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cascadecnn {

void FixedSpec::validate() const {
  if (wordlength < kMinWordlength || wordlength > kMaxWordlength) {
    throw std::invalid_argument("FixedSpec: wordlength " + std::to_string(wordlength) +
                                " outside [2, 16]");
  }
}

double FixedSpec::step() const { return std::ldexp(1.0, -frac_bits); }
double FixedSpec::max_value() const { return std::ldexp(static_cast<double>(max_code()), -frac_bits); }
double FixedSpec::min_value() const { return std::ldexp(static_cast<double>(min_code()), -frac_bits); }

std::int64_t quantize(double x, FixedSpec spec) {
  spec.validate();
  if (!std::isfinite(x)) {
    throw std::domain_error("quantize: non-finite input");
  }
  // Clamp before scaling so that huge inputs cannot overflow the integer conversion.
  if (x >= spec.max_value()) return spec.max_code();
  if (x <= spec.min_value()) return spec.min_code();
  const double scaled = std::ldexp(x, spec.frac_bits);
  const auto code = static_cast<std::int64_t>(std::round(scaled));
  if (code > spec.max_code()) return spec.max_code();
  if (code < spec.min_code()) return spec.min_code();
  return code;
}

double dequantize(std::int64_t code, FixedSpec spec) {
  spec.validate();
  if (code < spec.min_code() || code > spec.max_code()) {
    throw std::out_of_range("dequantize: code " + std::to_string(code) + " outside " +
                            std::to_string(spec.wordlength) + "-bit range");
  }
  return std::ldexp(static_cast<double>(code), -spec.frac_bits);
}

Accumulator quantize_unbounded(double x, int frac_bits) {
  if (!std::isfinite(x)) {
    throw std::domain_error("quantize_unbounded: non-finite input");
  }
  const double scaled = std::round(std::ldexp(x, frac_bits));
  constexpr double kLimit = 9.0e18;
  if (scaled > kLimit || scaled < -kLimit) {
    throw std::overflow_error("quantize_unbounded: value exceeds accumulator range");
  }
  return static_cast<Accumulator>(scaled);
}

}  // namespace cascadecnn
