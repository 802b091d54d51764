#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "cascadecnn/errors.hpp"
#include "cascadecnn/quantizer.hpp"

namespace cascadecnn {

enum ExitCode : int { kExitOk = 0, kExitBadInput = 2, kExitInfeasible = 3, kExitInternal = 4 };

struct RunConfig {
  std::filesystem::path model_path;
  std::filesystem::path eval_set_path;
  std::filesystem::path platform_path;
  std::filesystem::path output_dir = "out";
  double error_tolerance = 0.01;
  Metric metric = Metric::kTop1;
  std::uint64_t batch = 256;
  std::uint64_t seed = 1;
  std::vector<double> tolerances = {0.0, 0.005, 0.01, 0.02, 0.05, 0.1};
  std::size_t fixture_samples = 200;  // make-fixture only
};

// Output file names under RunConfig::output_dir.
inline constexpr const char* kLpuSchemeFile = "lpu_scheme.json";
inline constexpr const char* kHpuSchemeFile = "hpu_scheme.json";
inline constexpr const char* kSweepFile = "sweep.csv";
inline constexpr const char* kQuantizeSummaryFile = "quantize_summary.json";
inline constexpr const char* kCeuFile = "ceu.json";
inline constexpr const char* kGateFile = "gate.csv";
inline constexpr const char* kDseLpuFile = "dse_lpu.csv";
inline constexpr const char* kDseHpuFile = "dse_hpu.csv";
inline constexpr const char* kDseSummaryFile = "dse_summary.json";
inline constexpr const char* kToleranceSweepFile = "tolerance_sweep.csv";
inline constexpr const char* kPredictionsFile = "cascade_predictions.csv";
inline constexpr const char* kSimulateSummaryFile = "simulate_summary.json";
inline constexpr const char* kReportFile = "report.json";

/// Writes toy_net.json (+ weight blobs), eval/ and platform.json under output_dir.
void cmd_make_fixture(const RunConfig& cfg);
void cmd_quantize(const RunConfig& cfg);
void cmd_tune_ceu(const RunConfig& cfg);
void cmd_dse(const RunConfig& cfg);
void cmd_simulate(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);
/// quantize, tune-ceu, dse, simulate and report in sequence.
void cmd_run(const RunConfig& cfg);

/// Parses arguments, dispatches and maps failures to exit codes.
int run_cli(int argc, char** argv);

}  // namespace cascadecnn
