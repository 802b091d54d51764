#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cascadecnn/ceu.hpp"
#include "cascadecnn/engine.hpp"
#include "cascadecnn/fixedpoint.hpp"
#include "cascadecnn/netmodel.hpp"

namespace cascadecnn {

struct StageConfig {
  QuantScheme scheme;
  TileConfig tiles;
  double clk_hz = 150e6;
};

/// Timing knobs shared by run_cascade and the tolerance sweep.
struct CascadeTiming {
  double reconfig_time = 0.0;  // seconds per reconfiguration
  int reconfig_count = 1;      // reconfigurations charged per batch
  double ceu_ratio = 0.25;     // t_ceu_sample = ceu_ratio * t_lpu_sample
  bool pipelined_ceu = true;   // CEU hidden behind the LPU (max instead of sum)
};

struct CascadePlan {
  StageConfig lpu;
  StageConfig hpu;
  CeuConfig ceu;
  std::uint64_t batch = 1;
  CascadeTiming timing;

  std::uint64_t t_batch() const { return lpu.tiles.t_batch; }

  /// Requires lpu wordlength < hpu wordlength unless `allow_single_stage`,
  /// batch a multiple of both stages' batch tiles, positive clocks.
  void validate(bool allow_single_stage = false) const;
};

enum class Source { kLpu, kHpu };
std::string_view to_string(Source source);

struct CascadePrediction {
  int cls = 0;
  Source source = Source::kLpu;
};

struct CascadeResult {
  std::vector<CascadePrediction> predictions;
  std::vector<double> gbvsb;  // LPU confidence score per sample
  std::size_t forwarded = 0;
  double forwarded_fraction = 0.0;
  double modeled_time = 0.0;        // seconds for the whole input
  double modeled_throughput = 0.0;  // samples/s
  double accuracy_vs_reference = 0.0;
  double t_lpu_sample = 0.0;
  double t_ceu_sample = 0.0;
  double t_hpu_sample = 0.0;
};

/// Per-sample seconds of one stage: engine cycles for a full batch divided by
/// the batch and the stage clock.
double stage_sample_time(const Network& net, const StageConfig& stage, std::uint64_t batch);

/// Modeled seconds for `samples` inputs processed in batches of `batch`, of
/// which `forwarded` go to the HPU. Affine in `forwarded` with slope t_hpu.
double cascade_time(std::uint64_t samples, std::uint64_t forwarded, std::uint64_t batch, double t_lpu,
                    double t_hpu, const CascadeTiming& timing);

/// Runs the LPU on every input, gates with the CEU and re-runs the forwarded
/// inputs on the HPU. `reference` holds labels or reference predictions.
/// Identical LPU and HPU schemes are accepted as a degenerate single stage.
CascadeResult run_cascade(const Network& net, const CascadePlan& plan, std::span<const Volume> inputs,
                          std::span<const int> reference);

/// baseline_time / cascade_time; throws std::invalid_argument on nonpositive times.
double model_speedup(double cascade_time_s, double baseline_time_s);

/// One precision's single-stage behaviour on the evaluation set.
struct StageProfile {
  int wordlength = 0;
  double accuracy = 0.0;
  Flags correct;
  double t_sample = 0.0;  // seconds
};

struct SweepInputs {
  std::vector<std::vector<double>> lpu_probabilities;
  StageProfile lpu;
  /// Candidate HPU precisions, wider than the LPU. They also form the pool
  /// the matched-accuracy baseline is picked from.
  std::vector<StageProfile> hpu_candidates;
  /// Accuracy the tolerance is measured against (the float network).
  double reference_accuracy = 0.0;
  std::uint64_t batch = 1;
  CascadeTiming timing;
  CeuGrid grid;
};

struct SweepRow {
  double tolerance = 0.0;
  bool cascade_found = false;  // some HPU candidate fits the tolerance
  int hpu_wordlength = 0;
  CeuConfig ceu;
  bool gate_feasible = false;
  double forwarded_fraction = 1.0;
  double cascade_accuracy = 0.0;
  double achieved_error = 0.0;  // reference_accuracy - cascade_accuracy
  double cascade_time = 0.0;
  int baseline_wordlength = 0;
  double baseline_time = 0.0;
  double speedup = 0.0;
  /// True when the cascade beats its baseline; otherwise the single-stage
  /// baseline design is the one reported.
  bool cascade_selected = false;
};

/// For each tolerance and HPU candidate, tunes the CEU on the budget left
/// after the candidate's own drop, times the cascade and compares it with the
/// smallest candidate precision whose accuracy is at least the cascade's.
/// Keeps the candidate with the best speedup. Throws std::invalid_argument on
/// an empty or unsorted tolerance list.
std::vector<SweepRow> sweep_tolerance(const SweepInputs& inputs, std::span<const double> tolerances);

std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace cascadecnn
