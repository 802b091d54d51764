#include "cascadecnn/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cascadecnn/io.hpp"

namespace cascadecnn {

namespace {

constexpr double kAccuracyEps = 1e-12;

void check_stage(const StageConfig& s, const char* name, std::uint64_t batch) {
  s.tiles.validate();
  if (!(s.clk_hz > 0.0)) throw std::invalid_argument(std::string(name) + " clock must be positive");
  if (batch % s.tiles.t_batch != 0) {
    throw std::invalid_argument(std::string(name) + ": batch " + std::to_string(batch) +
                                " is not a multiple of t_batch " + std::to_string(s.tiles.t_batch));
  }
}

}  // namespace

void CascadePlan::validate(bool allow_single_stage) const {
  if (batch == 0) throw std::invalid_argument("cascade plan: batch must be positive");
  check_stage(lpu, "LPU", batch);
  check_stage(hpu, "HPU", batch);
  const int lw = lpu.scheme.wordlength;
  const int hw = hpu.scheme.wordlength;
  if (lw > hw || (lw == hw && !allow_single_stage)) {
    throw std::invalid_argument("cascade plan: LPU wordlength " + std::to_string(lw) +
                                " must be below HPU wordlength " + std::to_string(hw));
  }
  if (timing.reconfig_time < 0.0 || timing.reconfig_count < 0 || timing.ceu_ratio < 0.0) {
    throw std::invalid_argument("cascade plan: timing parameters must be >= 0");
  }
}

std::string_view to_string(Source source) { return source == Source::kLpu ? "LPU" : "HPU"; }

double stage_sample_time(const Network& net, const StageConfig& stage, std::uint64_t batch) {
  const CycleReport r = profile_cycles(net, stage.tiles, batch);
  return r.cycles_per_sample() / stage.clk_hz;
}

double cascade_time(std::uint64_t samples, std::uint64_t forwarded, std::uint64_t batch, double t_lpu,
                    double t_hpu, const CascadeTiming& timing) {
  if (batch == 0) throw std::invalid_argument("cascade_time: batch must be positive");
  if (forwarded > samples) throw std::invalid_argument("cascade_time: more forwarded than processed samples");
  const double n = static_cast<double>(samples);
  const double t_ceu = timing.ceu_ratio * t_lpu;
  const double front = timing.pipelined_ceu ? std::max(n * t_lpu, n * t_ceu) : n * t_lpu + n * t_ceu;
  const double batches = static_cast<double>((samples + batch - 1) / batch);
  return front + batches * timing.reconfig_count * timing.reconfig_time + static_cast<double>(forwarded) * t_hpu;
}

CascadeResult run_cascade(const Network& net, const CascadePlan& plan, std::span<const Volume> inputs,
                          std::span<const int> reference) {
  plan.validate(/*allow_single_stage=*/true);
  plan.ceu.validate(static_cast<std::size_t>(net.class_count));
  if (reference.size() != inputs.size()) {
    throw std::invalid_argument("run_cascade: reference has " + std::to_string(reference.size()) +
                                " entries for " + std::to_string(inputs.size()) + " inputs");
  }
  if (inputs.empty()) throw std::invalid_argument("run_cascade: empty input batch");

  CascadeResult res;
  const auto lpu = run_quantized(net, plan.lpu.scheme, inputs, plan.lpu.tiles);
  res.predictions.resize(inputs.size());
  res.gbvsb.resize(inputs.size());
  std::vector<Volume> forwarded_inputs;
  std::vector<std::size_t> forwarded_ids;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& p = lpu.probabilities[i];
    res.gbvsb[i] = gbvsb(p, plan.ceu.m, plan.ceu.n);
    if (res.gbvsb[i] >= plan.ceu.th) {
      res.predictions[i] = {argmax(p), Source::kLpu};
    } else {
      forwarded_inputs.push_back(inputs[i]);
      forwarded_ids.push_back(i);
    }
  }
  if (!forwarded_inputs.empty()) {
    const auto hpu = run_quantized(net, plan.hpu.scheme, forwarded_inputs, plan.hpu.tiles);
    for (std::size_t k = 0; k < forwarded_ids.size(); ++k) {
      res.predictions[forwarded_ids[k]] = {argmax(hpu.probabilities[k]), Source::kHpu};
    }
  }

  res.forwarded = forwarded_ids.size();
  res.forwarded_fraction = static_cast<double>(res.forwarded) / static_cast<double>(inputs.size());
  res.t_lpu_sample = stage_sample_time(net, plan.lpu, plan.batch);
  res.t_hpu_sample = stage_sample_time(net, plan.hpu, plan.batch);
  res.t_ceu_sample = plan.timing.ceu_ratio * res.t_lpu_sample;
  res.modeled_time =
      cascade_time(inputs.size(), res.forwarded, plan.batch, res.t_lpu_sample, res.t_hpu_sample, plan.timing);
  res.modeled_throughput = static_cast<double>(inputs.size()) / res.modeled_time;

  std::size_t hits = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) hits += res.predictions[i].cls == reference[i];
  res.accuracy_vs_reference = static_cast<double>(hits) / static_cast<double>(inputs.size());
  return res;
}

double model_speedup(double cascade_time_s, double baseline_time_s) {
  if (!(cascade_time_s > 0.0) || !(baseline_time_s > 0.0)) {
    throw std::invalid_argument("model_speedup: times must be positive");
  }
  return baseline_time_s / cascade_time_s;
}

namespace {

// Smallest-wordlength candidate at least as accurate as `target`; the most
// accurate one when none reaches it.
const StageProfile& matched_baseline(const std::vector<StageProfile>& pool, double target) {
  const StageProfile* best = nullptr;
  for (const StageProfile& s : pool) {
    if (s.accuracy >= target - kAccuracyEps && (best == nullptr || s.wordlength < best->wordlength)) best = &s;
  }
  if (best != nullptr) return *best;
  for (const StageProfile& s : pool) {
    if (best == nullptr || s.accuracy > best->accuracy ||
        (s.accuracy == best->accuracy && s.wordlength < best->wordlength)) {
      best = &s;
    }
  }
  return *best;
}

}  // namespace

std::vector<SweepRow> sweep_tolerance(const SweepInputs& in, std::span<const double> tolerances) {
  if (tolerances.empty()) throw std::invalid_argument("sweep_tolerance: empty tolerance list");
  if (!std::is_sorted(tolerances.begin(), tolerances.end())) {
    throw std::invalid_argument("sweep_tolerance: tolerances must be sorted ascending");
  }
  if (tolerances.front() < 0.0) throw std::invalid_argument("sweep_tolerance: tolerances must be >= 0");
  if (in.hpu_candidates.empty()) throw std::invalid_argument("sweep_tolerance: no HPU candidates");
  const std::size_t n = in.lpu_probabilities.size();
  if (n == 0 || in.lpu.correct.size() != n) throw std::invalid_argument("sweep_tolerance: LPU data misaligned");
  for (const StageProfile& c : in.hpu_candidates) {
    if (c.correct.size() != n) throw std::invalid_argument("sweep_tolerance: HPU data misaligned");
    if (c.wordlength <= in.lpu.wordlength) {
      throw std::invalid_argument("sweep_tolerance: HPU candidates must be wider than the LPU");
    }
  }

  std::vector<SweepRow> rows;
  for (double tol : tolerances) {
    SweepRow row;
    row.tolerance = tol;
    for (const StageProfile& cand : in.hpu_candidates) {
      const double budget = tol - (in.reference_accuracy - cand.accuracy);
      if (budget < -kAccuracyEps) continue;
      const TuneResult tr = tune(in.lpu_probabilities, in.lpu.correct, cand.correct, std::max(budget, 0.0), in.grid);

      std::size_t forwarded = 0, hits = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool keep = is_confident(in.lpu_probabilities[i], tr.config);
        forwarded += !keep;
        hits += keep ? in.lpu.correct[i] : cand.correct[i];
      }
      const double acc = static_cast<double>(hits) / static_cast<double>(n);
      const double t_cascade = cascade_time(n, forwarded, in.batch, in.lpu.t_sample, cand.t_sample, in.timing);
      const StageProfile& base = matched_baseline(in.hpu_candidates, acc);
      const double t_base = static_cast<double>(n) * base.t_sample;
      const double speedup = model_speedup(t_cascade, t_base);
      if (row.cascade_found && speedup <= row.speedup) continue;

      row.cascade_found = true;
      row.hpu_wordlength = cand.wordlength;
      row.ceu = tr.config;
      row.gate_feasible = tr.feasible;
      row.forwarded_fraction = static_cast<double>(forwarded) / static_cast<double>(n);
      row.cascade_accuracy = acc;
      row.achieved_error = in.reference_accuracy - acc;
      row.cascade_time = t_cascade;
      row.baseline_wordlength = base.wordlength;
      row.baseline_time = t_base;
      row.speedup = speedup;
      row.cascade_selected = speedup >= 1.0;
    }
    if (!row.cascade_found) {
      // No candidate precision meets the tolerance on its own.
      row.ceu = {1, std::min(2, static_cast<int>(in.lpu_probabilities.front().size())),
                 std::numeric_limits<double>::infinity()};
      row.cascade_accuracy = 0.0;
      row.achieved_error = in.reference_accuracy;
    }
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string csv =
      "tolerance,m,n,th,forwarded_fraction,achieved_error,cascade_time_s,baseline_time_s,speedup,"
      "hpu_wordlength,baseline_wordlength,selected\n";
  for (const SweepRow& r : rows) {
    const std::string selected = !r.cascade_found ? "infeasible" : r.cascade_selected ? "cascade" : "single-stage";
    csv += format_double(r.tolerance) + "," + std::to_string(r.ceu.m) + "," + std::to_string(r.ceu.n) + "," +
           format_double(r.ceu.th) + "," + format_double(r.forwarded_fraction) + "," +
           format_double(r.achieved_error) + "," + format_double(r.cascade_time) + "," +
           format_double(r.baseline_time) + "," + format_double(r.speedup) + "," + std::to_string(r.hpu_wordlength) +
           "," + std::to_string(r.baseline_wordlength) + "," + selected + "\n";
  }
  return csv;
}

}  // namespace cascadecnn
