#pragma once

#include <cstdint>

#include "cascadecnn/dse.hpp"
#include "cascadecnn/io.hpp"
#include "cascadecnn/netmodel.hpp"

namespace cascadecnn {

// Synthetic workloads for tests, examples and the shipped toy fixture. All
// randomness flows from the seed.

constexpr int kToyClasses = 4;
constexpr int kToySide = 8;

/// Noisy 8x8 single-channel images of four shapes: horizontal bar, vertical
/// bar, diagonal, square blob. Labels are the generating shape.
EvalSet make_toy_eval_set(std::uint64_t seed, std::size_t samples);

/// CONV(1->4, 3x3) -> RELU -> MAXPOOL(2x2) -> FC(36->4) -> SOFTMAX. The
/// convolution holds fixed edge/blob filters; the FC layer is fitted by
/// softmax regression on a training set drawn from `seed`.
Network make_toy_network(std::uint64_t seed);

/// Small device on which the toy network's design space is constrained by
/// both the compute roof and on-chip memory.
PlatformModel toy_platform();

struct NamedFixture {
  Network net;
  EvalSet eval;
};

/// Two-input FC classifier whose float decisions survive quantisation at 8
/// bits (4 fractional) and no narrower wordlength. Labels are the float
/// predictions, so the float accuracy is 1.
NamedFixture make_exact8_fixture();

}  // namespace cascadecnn
