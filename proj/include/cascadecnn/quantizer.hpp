#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cascadecnn/engine.hpp"
#include "cascadecnn/fixedpoint.hpp"
#include "cascadecnn/io.hpp"
#include "cascadecnn/netmodel.hpp"

namespace cascadecnn {

enum class Metric { kTop1, kTop5 };

std::string_view to_string(Metric metric);
Metric metric_from_string(std::string_view name);

/// Top-1: the argmax equals the label. Top-5: the label is among the five
/// largest probabilities (ties resolved towards lower class ids).
bool is_correct(std::span<const double> probabilities, int label, Metric metric);

double accuracy(const std::vector<std::vector<double>>& probabilities, std::span<const int> labels,
                Metric metric);

struct QuantizerOptions {
  Metric metric = Metric::kTop1;
  /// Sweep window: frac bits from `frac_low` to wordlength + `frac_high_margin`
  /// for both weights and activations.
  int frac_low = -2;
  int frac_high_margin = 2;
  /// Pairs within this accuracy distance of a layer's sweep maximum survive
  /// into the combination search.
  double layer_threshold = 0.01;
  /// Number of leading eval samples used for per-layer sweeps; 0 uses all.
  std::size_t sweep_samples = 0;
  /// When set, exploration continues past the HPU wordlength until the drop
  /// is within this tolerance (or 16 bits), so later tolerance sweeps have
  /// wider candidates to choose from.
  std::optional<double> explore_tolerance;
};

struct SweepRecord {
  std::size_t layer_index = 0;  // index into Network::layers
  int wordlength = 0;
  int frac_bits_weights = 0;
  int frac_bits_activations = 0;
  double eval_accuracy = 0.0;
};

struct SchemeCandidate {
  QuantScheme scheme;
  double network_accuracy = 0.0;
  double accuracy_drop_vs_float = 0.0;
};

/// Accuracy of the hybrid network where only `layer_index` is quantised, for
/// every (weights, activations) frac pair of the sweep window. Records are
/// ordered by weight frac, then activation frac.
std::vector<SweepRecord> sweep_layer(const Network& net, std::size_t layer_index, int wordlength,
                                     const EvalSet& eval, const QuantizerOptions& opts = {});

/// Full-network accuracy of `scheme` on `eval`.
double evaluate_scheme(const Network& net, const QuantScheme& scheme, const EvalSet& eval,
                       Metric metric = Metric::kTop1);

double float_accuracy(const Network& net, const EvalSet& eval, Metric metric = Metric::kTop1);

/// Combination search over the per-layer pairs surviving `layer_threshold`:
/// starts from each layer's sweep argmax and runs coordinate descent until a
/// full pass over the layers brings no gain. `sweeps` holds one record list
/// per CONV/FC layer in network order.
SchemeCandidate select_scheme(const Network& net, int wordlength, const EvalSet& eval,
                              const std::vector<std::vector<SweepRecord>>& sweeps,
                              const QuantizerOptions& opts = {});

/// Runs the per-layer sweeps, then the combination search.
SchemeCandidate select_scheme(const Network& net, int wordlength, const EvalSet& eval,
                              const QuantizerOptions& opts = {});

struct WordlengthResult {
  SchemeCandidate best;
  std::vector<SweepRecord> sweep;  // all layers' records at this wordlength
};

struct StageSelection {
  int lpu_wordlength = 0;
  int hpu_wordlength = 0;
  SchemeCandidate lpu;
  SchemeCandidate hpu;
  bool single_stage = false;
  double float_accuracy = 0.0;
  /// Every explored wordlength, ascending from 2.
  std::vector<WordlengthResult> explored;
};

/// Accuracy below which a low-precision scheme counts as a catastrophic loss.
double catastrophic_accuracy_floor(int class_count, double float_accuracy);

/// LPU: smallest wordlength clear of catastrophic loss. HPU: smallest
/// wordlength whose drop versus float is within `error_tolerance`. When the
/// LPU would not be strictly narrower than the HPU the result is single-stage
/// with both set to the HPU. Throws InfeasibleError if no wordlength up to 16
/// meets the tolerance.
StageSelection pick_stage_wordlengths(const Network& net, const EvalSet& eval, double error_tolerance,
                                      const QuantizerOptions& opts = {});

}  // namespace cascadecnn
