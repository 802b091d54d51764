#include "cascadecnn/quantizer.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

#include "cascadecnn/errors.hpp"

namespace cascadecnn {

namespace {

constexpr double kAccuracyEps = 1e-12;

std::vector<std::size_t> layer_positions(const Network& net) { return net.matmul_layers(); }

}  // namespace

std::string_view to_string(Metric metric) { return metric == Metric::kTop1 ? "top1" : "top5"; }

Metric metric_from_string(std::string_view name) {
  if (name == "top1") return Metric::kTop1;
  if (name == "top5") return Metric::kTop5;
  throw std::invalid_argument("unknown metric '" + std::string(name) + "' (expected top1 or top5)");
}

bool is_correct(std::span<const double> probabilities, int label, Metric metric) {
  if (label < 0 || static_cast<std::size_t>(label) >= probabilities.size()) return false;
  if (metric == Metric::kTop1) return argmax(probabilities) == label;
  const double p = probabilities[static_cast<std::size_t>(label)];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < probabilities.size(); ++j) {
    if (probabilities[j] > p || (probabilities[j] == p && j < static_cast<std::size_t>(label))) ++rank;
  }
  return rank < 5;
}

double accuracy(const std::vector<std::vector<double>>& probabilities, std::span<const int> labels,
                Metric metric) {
  if (probabilities.size() != labels.size()) {
    throw std::invalid_argument("accuracy: predictions and labels differ in length");
  }
  if (labels.empty()) throw std::invalid_argument("accuracy: empty evaluation set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += is_correct(probabilities[i], labels[i], metric);
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double evaluate_scheme(const Network& net, const QuantScheme& scheme, const EvalSet& eval, Metric metric) {
  const auto res = run_quantized(net, scheme, eval.inputs, covering_tiles(net, eval.size()));
  return accuracy(res.probabilities, eval.labels, metric);
}

double float_accuracy(const Network& net, const EvalSet& eval, Metric metric) {
  return accuracy(run_float(net, eval.inputs).probabilities, eval.labels, metric);
}

std::vector<SweepRecord> sweep_layer(const Network& net, std::size_t layer_index, int wordlength,
                                     const EvalSet& eval, const QuantizerOptions& opts) {
  if (layer_index >= net.layers.size() || !net.layers[layer_index].is_matmul()) {
    throw std::invalid_argument("sweep_layer: layer " + std::to_string(layer_index) + " is not CONV/FC");
  }
  FixedSpec{wordlength, 0}.validate();
  if (!eval.labelled()) throw std::invalid_argument("sweep_layer: evaluation set must be non-empty and labelled");

  const EvalSet set = opts.sweep_samples == 0 || opts.sweep_samples >= eval.size()
                          ? eval
                          : eval.subset(0, opts.sweep_samples);
  const TileConfig tiles = covering_tiles(net, set.size());
  ExecutionPlan plan = ExecutionPlan::floating(net, tiles);
  plan.wordlength = wordlength;

  std::size_t mm = 0;
  for (std::size_t i = 0; i < layer_index; ++i) mm += net.layers[i].is_matmul() ? 1 : 0;

  // Layers ahead of the swept one stay in float, so their output is shared by all pairs.
  const std::vector<Volume> prefix = forward_layers(net, plan, set.inputs, 0, layer_index);

  std::vector<SweepRecord> records;
  const int hi = wordlength + opts.frac_high_margin;
  for (int fw = opts.frac_low; fw <= hi; ++fw) {
    for (int fa = opts.frac_low; fa <= hi; ++fa) {
      plan.layers[mm] = LayerScaling{fw, fa};
      const auto out = forward_layers(net, plan, prefix, layer_index, net.layers.size());
      std::vector<std::vector<double>> probs;
      probs.reserve(out.size());
      for (const Volume& v : out) probs.push_back(softmax(v.data));
      records.push_back({layer_index, wordlength, fw, fa, accuracy(probs, set.labels, opts.metric)});
    }
  }
  return records;
}

SchemeCandidate select_scheme(const Network& net, int wordlength, const EvalSet& eval,
                              const std::vector<std::vector<SweepRecord>>& sweeps,
                              const QuantizerOptions& opts) {
  const std::size_t layers = net.matmul_count();
  if (sweeps.size() != layers) {
    throw std::invalid_argument("select_scheme: expected sweeps for " + std::to_string(layers) + " layers");
  }

  std::vector<std::vector<LayerScaling>> surviving(layers);
  QuantScheme current{wordlength, std::vector<LayerScaling>(layers)};
  for (std::size_t j = 0; j < layers; ++j) {
    if (sweeps[j].empty()) {
      throw InfeasibleError("select_scheme: no sweep records for CONV/FC layer " + std::to_string(j) +
                            "; widen the sweep window or loosen the layer threshold");
    }
    const auto best = std::max_element(sweeps[j].begin(), sweeps[j].end(),
                                       [](const SweepRecord& a, const SweepRecord& b) {
                                         return a.eval_accuracy < b.eval_accuracy;
                                       });
    current.per_layer[j] = {best->frac_bits_weights, best->frac_bits_activations};
    for (const SweepRecord& r : sweeps[j]) {
      if (r.wordlength != wordlength) {
        throw std::invalid_argument("select_scheme: sweep record wordlength does not match");
      }
      if (r.eval_accuracy >= best->eval_accuracy - opts.layer_threshold - kAccuracyEps) {
        surviving[j].push_back({r.frac_bits_weights, r.frac_bits_activations});
      }
    }
    if (surviving[j].empty()) {
      throw InfeasibleError("select_scheme: no scaling pair of layer " + std::to_string(j) +
                            " survives the threshold; use a looser layer threshold");
    }
  }

  std::map<std::vector<LayerScaling>, double> memo;
  auto score = [&](const QuantScheme& s) {
    auto it = memo.find(s.per_layer);
    if (it != memo.end()) return it->second;
    const double acc = evaluate_scheme(net, s, eval, opts.metric);
    memo.emplace(s.per_layer, acc);
    return acc;
  };

  double current_acc = score(current);
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t j = 0; j < layers; ++j) {
      for (const LayerScaling& pair : surviving[j]) {
        if (pair == current.per_layer[j]) continue;
        QuantScheme trial = current;
        trial.per_layer[j] = pair;
        const double acc = score(trial);
        if (acc > current_acc + kAccuracyEps) {
          current = std::move(trial);
          current_acc = acc;
          improved = true;
        }
      }
    }
  }

  SchemeCandidate out;
  out.scheme = std::move(current);
  out.network_accuracy = current_acc;
  out.accuracy_drop_vs_float = float_accuracy(net, eval, opts.metric) - current_acc;
  return out;
}

SchemeCandidate select_scheme(const Network& net, int wordlength, const EvalSet& eval,
                              const QuantizerOptions& opts) {
  std::vector<std::vector<SweepRecord>> sweeps;
  for (std::size_t idx : layer_positions(net)) sweeps.push_back(sweep_layer(net, idx, wordlength, eval, opts));
  return select_scheme(net, wordlength, eval, sweeps, opts);
}

double catastrophic_accuracy_floor(int class_count, double float_accuracy) {
  const double chance = class_count > 0 ? 1.0 / class_count : 0.0;
  return std::max(2.0 * chance, 0.25 * float_accuracy);
}

StageSelection pick_stage_wordlengths(const Network& net, const EvalSet& eval, double error_tolerance,
                                      const QuantizerOptions& opts) {
  if (!(error_tolerance >= 0.0)) throw std::invalid_argument("error tolerance must be >= 0");
  StageSelection sel;
  sel.float_accuracy = float_accuracy(net, eval, opts.metric);
  const double floor = catastrophic_accuracy_floor(net.class_count, sel.float_accuracy);

  int lpu = 0;
  for (int wl = kMinWordlength; wl <= kMaxWordlength; ++wl) {
    WordlengthResult res;
    std::vector<std::vector<SweepRecord>> sweeps;
    for (std::size_t idx : layer_positions(net)) {
      sweeps.push_back(sweep_layer(net, idx, wl, eval, opts));
      res.sweep.insert(res.sweep.end(), sweeps.back().begin(), sweeps.back().end());
    }
    res.best = select_scheme(net, wl, eval, sweeps, opts);
    sel.explored.push_back(res);
    const SchemeCandidate& best = sel.explored.back().best;

    if (lpu == 0 && best.network_accuracy >= floor - kAccuracyEps) {
      lpu = wl;
      sel.lpu = best;
    }
    if (sel.hpu_wordlength == 0 && best.accuracy_drop_vs_float <= error_tolerance + kAccuracyEps) {
      sel.hpu_wordlength = wl;
      sel.hpu = best;
    }
    const double stop = std::min(error_tolerance, opts.explore_tolerance.value_or(error_tolerance));
    if (sel.hpu_wordlength != 0 && best.accuracy_drop_vs_float <= stop + kAccuracyEps) break;
  }
  if (sel.hpu_wordlength == 0) {
    throw InfeasibleError("no wordlength up to 16 bits keeps the accuracy drop within the tolerance of " +
                          std::to_string(error_tolerance));
  }
  if (lpu != 0 && lpu < sel.hpu_wordlength) {
    sel.lpu_wordlength = lpu;
  } else {
    sel.single_stage = true;
    sel.lpu_wordlength = sel.hpu_wordlength;
    sel.lpu = sel.hpu;
  }
  return sel;
}

}  // namespace cascadecnn
