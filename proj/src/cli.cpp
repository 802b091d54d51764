#include "cascadecnn/cli.hpp"

#include <charconv>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "cascadecnn/cascade.hpp"
#include "cascadecnn/ceu.hpp"
#include "cascadecnn/dse.hpp"
#include "cascadecnn/errors.hpp"
#include "cascadecnn/fixture.hpp"
#include "cascadecnn/io.hpp"
#include "json.hpp"

namespace cascadecnn {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void require_input(const fs::path& p, const char* what) {
  if (p.empty()) throw InputError(std::string("missing required --") + what);
  if (!fs::exists(p)) throw InputError("input not found: " + p.string());
}

fs::path upstream(const RunConfig& cfg, const char* name, const char* producer) {
  const fs::path p = cfg.output_dir / name;
  if (!fs::exists(p)) {
    throw InputError("missing upstream artifact " + p.string() + "; run '" + producer + "' first");
  }
  return p;
}

json read_json(const fs::path& p) { return json::parse(read_text_file(p)); }

void write_json(const fs::path& p, const json& j) { write_text_file(p, j.dump(2) + "\n"); }

// JSON has no infinity; an always-forwarding threshold is stored as null.
json threshold_to_json(double th) { return std::isinf(th) && th > 0 ? json(nullptr) : json(th); }
double threshold_from_json(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

json tiles_to_json(const TileConfig& t) {
  return {{"t_r", t.t_r}, {"t_p", t.t_p}, {"t_c", t.t_c}, {"t_batch", t.t_batch}};
}
TileConfig tiles_from_json(const json& j) {
  TileConfig t{j.at("t_r").get<std::uint64_t>(), j.at("t_p").get<std::uint64_t>(), j.at("t_c").get<std::uint64_t>(),
               j.at("t_batch").get<std::uint64_t>()};
  t.validate();
  return t;
}

json scheme_to_json(const Network& net, const SchemeCandidate& c) {
  json layers = json::array();
  const auto mm = net.matmul_layers();
  for (std::size_t k = 0; k < mm.size(); ++k) {
    layers.push_back({{"layer_index", mm[k]},
                      {"frac_bits_weights", c.scheme.per_layer[k].weight_frac},
                      {"frac_bits_activations", c.scheme.per_layer[k].act_frac}});
  }
  return {{"wordlength", c.scheme.wordlength},
          {"layers", layers},
          {"accuracy", c.network_accuracy},
          {"accuracy_drop_vs_float", c.accuracy_drop_vs_float}};
}

SchemeCandidate scheme_from_json(const Network& net, const json& j) {
  SchemeCandidate c;
  c.scheme.wordlength = j.at("wordlength").get<int>();
  for (const json& l : j.at("layers")) {
    c.scheme.per_layer.push_back({l.at("frac_bits_weights").get<int>(), l.at("frac_bits_activations").get<int>()});
  }
  if (c.scheme.per_layer.size() != net.matmul_count()) {
    throw InputError("scheme has " + std::to_string(c.scheme.per_layer.size()) + " layers, model has " +
                     std::to_string(net.matmul_count()) + "; rerun 'quantize'");
  }
  c.network_accuracy = j.value("accuracy", 0.0);
  c.accuracy_drop_vs_float = j.value("accuracy_drop_vs_float", 0.0);
  return c;
}

struct Inputs {
  Network net;
  EvalSet eval;
};

Inputs load_inputs(const RunConfig& cfg) {
  require_input(cfg.model_path, "model");
  require_input(cfg.eval_set_path, "eval-set");
  Inputs in{load_network(cfg.model_path), load_eval_set(cfg.eval_set_path)};
  if (!in.eval.labelled()) throw InputError("evaluation set must be non-empty and labelled");
  const Volume& v = in.eval.inputs.front();
  if (v.channels != in.net.input_channels() || v.height != in.net.input_height() ||
      v.width != in.net.input_width()) {
    throw InputError("evaluation inputs do not match the model's input shape");
  }
  return in;
}

PlatformModel load_platform_checked(const RunConfig& cfg) {
  require_input(cfg.platform_path, "platform");
  return load_platform(cfg.platform_path);
}

Flags correctness(const std::vector<std::vector<double>>& probs, const std::vector<int>& labels, Metric metric) {
  Flags f(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) f[i] = is_correct(probs[i], labels[i], metric);
  return f;
}

QuantizerOptions quantizer_options(const RunConfig& cfg) {
  QuantizerOptions o;
  o.metric = cfg.metric;
  // Explore up to an exact match with float so the tolerance sweep has
  // every useful HPU candidate.
  o.explore_tolerance = 0.0;
  return o;
}

std::vector<SchemeCandidate> explored_schemes(const Network& net, const json& summary) {
  std::vector<SchemeCandidate> out;
  for (const json& e : summary.at("explored")) out.push_back(scheme_from_json(net, e));
  return out;
}

double error_budget(double tolerance, double float_acc, double hpu_acc) {
  return std::max(0.0, tolerance - (float_acc - hpu_acc));
}

json stage_dse_json(const Network& net, const PlatformModel& platform, int wl, std::uint64_t batch,
                    const ArchitectureReport& r) {
  StageConfig stage{{wl, {}}, r.tiles, platform.clock(wl)};
  const CycleReport cycles = profile_cycles(net, r.tiles, batch);
  return {{"wordlength", wl},
          {"tiles", tiles_to_json(r.tiles)},
          {"predicted_ops_per_s", r.predicted_ops_per_s},
          {"clk_hz", platform.clock(wl)},
          {"points", r.points.size()},
          {"feasible_points", r.feasible_points},
          {"cycles_per_sample", cycles.cycles_per_sample()},
          {"t_sample_s", stage_sample_time(net, stage, batch)}};
}

// Parses a CSV into an array of objects, numeric fields as numbers.
json csv_to_json(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  json rows = json::array();
  auto split = [](const std::string& l) {
    std::vector<std::string> f;
    std::string cur;
    std::istringstream ls(l);
    while (std::getline(ls, cur, ',')) f.push_back(cur);
    if (!l.empty() && l.back() == ',') f.emplace_back();
    return f;
  };
  if (!std::getline(in, line)) return rows;
  header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line);
    json row = json::object();
    for (std::size_t k = 0; k < header.size() && k < fields.size(); ++k) {
      const std::string& f = fields[k];
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec == std::errc() && ptr == f.data() + f.size() && std::isfinite(v)) {
        row[header[k]] = v;
      } else {
        row[header[k]] = f;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

void cmd_make_fixture(const RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  const Network net = make_toy_network(cfg.seed);
  save_network(net, cfg.output_dir / "toy_net.json");
  save_eval_set(make_toy_eval_set(cfg.seed + 1, cfg.fixture_samples), cfg.output_dir / "eval");
  save_platform(toy_platform(), cfg.output_dir / "platform.json");
}

void cmd_quantize(const RunConfig& cfg) {
  if (!(cfg.error_tolerance >= 0.0)) throw std::invalid_argument("--tolerance must be >= 0");
  const Inputs in = load_inputs(cfg);
  const StageSelection sel = pick_stage_wordlengths(in.net, in.eval, cfg.error_tolerance, quantizer_options(cfg));
  fs::create_directories(cfg.output_dir);
  write_json(cfg.output_dir / kLpuSchemeFile, scheme_to_json(in.net, sel.lpu));
  write_json(cfg.output_dir / kHpuSchemeFile, scheme_to_json(in.net, sel.hpu));

  std::string csv = "wordlength,layer_index,frac_bits_weights,frac_bits_activations,eval_accuracy\n";
  json explored = json::array();
  for (const WordlengthResult& r : sel.explored) {
    for (const SweepRecord& s : r.sweep) {
      csv += std::to_string(s.wordlength) + "," + std::to_string(s.layer_index) + "," +
             std::to_string(s.frac_bits_weights) + "," + std::to_string(s.frac_bits_activations) + "," +
             format_double(s.eval_accuracy) + "\n";
    }
    explored.push_back(scheme_to_json(in.net, r.best));
  }
  write_text_file(cfg.output_dir / kSweepFile, csv);
  write_json(cfg.output_dir / kQuantizeSummaryFile,
             {{"metric", std::string(to_string(cfg.metric))},
              {"tolerance", cfg.error_tolerance},
              {"samples", in.eval.size()},
              {"float_accuracy", sel.float_accuracy},
              {"single_stage", sel.single_stage},
              {"lpu_wordlength", sel.lpu_wordlength},
              {"hpu_wordlength", sel.hpu_wordlength},
              {"explored", explored}});
}

void cmd_tune_ceu(const RunConfig& cfg) {
  const Inputs in = load_inputs(cfg);
  const SchemeCandidate lpu = scheme_from_json(in.net, read_json(upstream(cfg, kLpuSchemeFile, "quantize")));
  const SchemeCandidate hpu = scheme_from_json(in.net, read_json(upstream(cfg, kHpuSchemeFile, "quantize")));
  const json qsum = read_json(upstream(cfg, kQuantizeSummaryFile, "quantize"));
  const double float_acc = qsum.at("float_accuracy").get<double>();

  const TileConfig tiles = covering_tiles(in.net, in.eval.size());
  const auto lp = run_quantized(in.net, lpu.scheme, in.eval.inputs, tiles).probabilities;
  const auto hp = run_quantized(in.net, hpu.scheme, in.eval.inputs, tiles).probabilities;
  const Flags lc = correctness(lp, in.eval.labels, cfg.metric);
  const Flags hc = correctness(hp, in.eval.labels, cfg.metric);
  const double budget = error_budget(cfg.error_tolerance, float_acc, accuracy(hp, in.eval.labels, cfg.metric));
  const bool single = lpu.scheme.wordlength >= hpu.scheme.wordlength;

  TuneResult tr;
  if (single) {
    // One stage: the LPU already is the HPU, keep everything.
    tr.config = {1, std::min(2, in.net.class_count), -1.0};
    Flags keep(lc.size(), 1);
    tr.stats = gate_stats(keep, lc, hc);
  } else {
    tr = tune(lp, lc, hc, budget);
  }

  std::string csv = "sample_id,gbvsb,lpu_class,hpu_class,label,kept\n";
  for (std::size_t i = 0; i < lp.size(); ++i) {
    const double g = gbvsb(lp[i], tr.config.m, tr.config.n);
    csv += std::to_string(i) + "," + format_double(g) + "," + std::to_string(argmax(lp[i])) + "," +
           std::to_string(argmax(hp[i])) + "," + std::to_string(in.eval.labels[i]) + "," +
           (g >= tr.config.th ? "1" : "0") + "\n";
  }
  fs::create_directories(cfg.output_dir);
  write_text_file(cfg.output_dir / kGateFile, csv);
  write_json(cfg.output_dir / kCeuFile, {{"m", tr.config.m},
                                         {"n", tr.config.n},
                                         {"th", threshold_to_json(tr.config.th)},
                                         {"feasible", tr.feasible},
                                         {"single_stage", single},
                                         {"error_budget", budget},
                                         {"kept_fraction", tr.stats.kept_fraction},
                                         {"forwarded_fraction", tr.stats.forwarded_fraction},
                                         {"induced_error", tr.stats.induced_error},
                                         {"false_negative_fraction", tr.stats.false_negative_fraction}});
}

void cmd_dse(const RunConfig& cfg) {
  require_input(cfg.model_path, "model");
  const Network net = load_network(cfg.model_path);
  const PlatformModel platform = load_platform_checked(cfg);
  const SchemeCandidate lpu = scheme_from_json(net, read_json(upstream(cfg, kLpuSchemeFile, "quantize")));
  const SchemeCandidate hpu = scheme_from_json(net, read_json(upstream(cfg, kHpuSchemeFile, "quantize")));

  const ArchitectureReport lr = select_architecture(net, platform, lpu.scheme.wordlength, cfg.batch);
  const ArchitectureReport hr = select_architecture(net, platform, hpu.scheme.wordlength, cfg.batch);
  fs::create_directories(cfg.output_dir);
  write_text_file(cfg.output_dir / kDseLpuFile, design_points_csv(lr.points));
  write_text_file(cfg.output_dir / kDseHpuFile, design_points_csv(hr.points));
  write_json(cfg.output_dir / kDseSummaryFile,
             {{"platform", platform.name},
              {"batch", cfg.batch},
              {"max_batch_lpu", max_batch(net, platform, lpu.scheme.wordlength)},
              {"max_batch_hpu", max_batch(net, platform, hpu.scheme.wordlength)},
              {"lpu", stage_dse_json(net, platform, lpu.scheme.wordlength, cfg.batch, lr)},
              {"hpu", stage_dse_json(net, platform, hpu.scheme.wordlength, cfg.batch, hr)}});
}

void cmd_simulate(const RunConfig& cfg) {
  const Inputs in = load_inputs(cfg);
  const PlatformModel platform = load_platform_checked(cfg);
  const SchemeCandidate lpu = scheme_from_json(in.net, read_json(upstream(cfg, kLpuSchemeFile, "quantize")));
  const SchemeCandidate hpu = scheme_from_json(in.net, read_json(upstream(cfg, kHpuSchemeFile, "quantize")));
  const json qsum = read_json(upstream(cfg, kQuantizeSummaryFile, "quantize"));
  const json ceu = read_json(upstream(cfg, kCeuFile, "tune-ceu"));
  const json dse = read_json(upstream(cfg, kDseSummaryFile, "dse"));
  if (dse.at("batch").get<std::uint64_t>() != cfg.batch) {
    throw InputError("dse_summary.json was produced for batch " + dse.at("batch").dump() + "; rerun 'dse'");
  }

  CascadePlan plan;
  plan.lpu = {lpu.scheme, tiles_from_json(dse.at("lpu").at("tiles")), platform.clock(lpu.scheme.wordlength)};
  plan.hpu = {hpu.scheme, tiles_from_json(dse.at("hpu").at("tiles")), platform.clock(hpu.scheme.wordlength)};
  plan.ceu = {ceu.at("m").get<int>(), ceu.at("n").get<int>(), threshold_from_json(ceu.at("th"))};
  plan.batch = cfg.batch;
  plan.timing.reconfig_time = platform.reconfig_time;

  const CascadeResult res = run_cascade(in.net, plan, in.eval.inputs, in.eval.labels);
  std::string csv = "sample_id,class_id,source,gbvsb,label\n";
  for (std::size_t i = 0; i < res.predictions.size(); ++i) {
    csv += std::to_string(i) + "," + std::to_string(res.predictions[i].cls) + "," +
           std::string(to_string(res.predictions[i].source)) + "," + format_double(res.gbvsb[i]) + "," +
           std::to_string(in.eval.labels[i]) + "\n";
  }

  // Tolerance sweep over every explored precision wider than the LPU.
  const double float_acc = qsum.at("float_accuracy").get<double>();
  const TileConfig cover = covering_tiles(in.net, in.eval.size());
  SweepInputs sw;
  sw.lpu_probabilities = run_quantized(in.net, lpu.scheme, in.eval.inputs, cover).probabilities;
  sw.lpu = {lpu.scheme.wordlength, accuracy(sw.lpu_probabilities, in.eval.labels, cfg.metric),
            correctness(sw.lpu_probabilities, in.eval.labels, cfg.metric),
            stage_sample_time(in.net, plan.lpu, cfg.batch)};
  sw.reference_accuracy = float_acc;
  sw.batch = cfg.batch;
  sw.timing = plan.timing;
  for (const SchemeCandidate& c : explored_schemes(in.net, qsum)) {
    if (c.scheme.wordlength <= lpu.scheme.wordlength) continue;
    const auto probs = run_quantized(in.net, c.scheme, in.eval.inputs, cover).probabilities;
    const int wl = c.scheme.wordlength;
    const ArchitectureReport arch = select_architecture(in.net, platform, wl, cfg.batch);
    const StageConfig stage{c.scheme, arch.tiles, platform.clock(wl)};
    sw.hpu_candidates.push_back({wl, accuracy(probs, in.eval.labels, cfg.metric),
                                 correctness(probs, in.eval.labels, cfg.metric),
                                 stage_sample_time(in.net, stage, cfg.batch)});
  }
  std::vector<double> tolerances = cfg.tolerances;
  std::sort(tolerances.begin(), tolerances.end());
  const std::vector<SweepRow> rows =
      sw.hpu_candidates.empty() ? std::vector<SweepRow>{} : sweep_tolerance(sw, tolerances);

  fs::create_directories(cfg.output_dir);
  write_text_file(cfg.output_dir / kPredictionsFile, csv);
  write_text_file(cfg.output_dir / kToleranceSweepFile, sweep_csv(rows));
  write_json(cfg.output_dir / kSimulateSummaryFile,
             {{"samples", in.eval.size()},
              {"batch", cfg.batch},
              {"lpu_wordlength", lpu.scheme.wordlength},
              {"hpu_wordlength", hpu.scheme.wordlength},
              {"ceu", {{"m", plan.ceu.m}, {"n", plan.ceu.n}, {"th", threshold_to_json(plan.ceu.th)}}},
              {"forwarded", res.forwarded},
              {"forwarded_fraction", res.forwarded_fraction},
              {"accuracy", res.accuracy_vs_reference},
              {"float_accuracy", float_acc},
              {"t_lpu_sample_s", res.t_lpu_sample},
              {"t_ceu_sample_s", res.t_ceu_sample},
              {"t_hpu_sample_s", res.t_hpu_sample},
              {"reconfig_time_s", plan.timing.reconfig_time},
              {"modeled_time_s", res.modeled_time},
              {"modeled_throughput_per_s", res.modeled_throughput},
              {"tolerance_sweep_rows", rows.size()}});
}

void cmd_report(const RunConfig& cfg) {
  json report;
  report["quantize"] = read_json(upstream(cfg, kQuantizeSummaryFile, "quantize"));
  report["ceu"] = read_json(upstream(cfg, kCeuFile, "tune-ceu"));
  report["dse"] = read_json(upstream(cfg, kDseSummaryFile, "dse"));
  report["simulate"] = read_json(upstream(cfg, kSimulateSummaryFile, "simulate"));
  report["tolerance_sweep"] = csv_to_json(read_text_file(upstream(cfg, kToleranceSweepFile, "simulate")));
  write_json(cfg.output_dir / kReportFile, report);
}

void cmd_run(const RunConfig& cfg) {
  cmd_quantize(cfg);
  cmd_tune_ceu(cfg);
  cmd_dse(cfg);
  cmd_simulate(cfg);
  cmd_report(cfg);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Two-stage precision cascade toolflow for CNN inference"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string metric = "top1";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model_path, "network manifest JSON");
    sub->add_option("--eval-set", cfg.eval_set_path, "evaluation set directory");
    sub->add_option("--platform", cfg.platform_path, "platform JSON");
    sub->add_option("--tolerance", cfg.error_tolerance, "error tolerance as a fraction")->check(CLI::NonNegativeNumber);
    sub->add_option("--metric", metric, "top1 or top5")->check(CLI::IsMember({"top1", "top5"}));
    sub->add_option("--batch", cfg.batch, "batch size")->check(CLI::PositiveNumber);
    sub->add_option("--out", cfg.output_dir, "output directory");
    sub->add_option("--seed", cfg.seed, "seed for fixture generation");
    sub->add_option("--tolerances", cfg.tolerances, "tolerance sweep points")->delimiter(',');
  };

  struct Command {
    const char* name;
    const char* help;
    void (*fn)(const RunConfig&);
  };
  const Command commands[] = {
      {"make-fixture", "generate the synthetic toy network, eval set and platform", cmd_make_fixture},
      {"quantize", "pick LPU/HPU wordlengths and per-layer scaling", cmd_quantize},
      {"tune-ceu", "tune the confidence gate to the tolerance", cmd_tune_ceu},
      {"dse", "roofline design-space exploration for both stages", cmd_dse},
      {"simulate", "run the cascade and the tolerance sweep", cmd_simulate},
      {"report", "merge stage outputs into report.json", cmd_report},
      {"run", "quantize, tune-ceu, dse, simulate, report", cmd_run},
  };
  std::vector<std::pair<CLI::App*, void (*)(const RunConfig&)>> subs;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    if (std::string_view(c.name) == "make-fixture") {
      sub->add_option("--samples", cfg.fixture_samples, "eval-set size")->check(CLI::PositiveNumber);
    }
    subs.emplace_back(sub, c.fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitBadInput;
  }

  try {
    cfg.metric = metric_from_string(metric);
    for (const auto& [sub, fn] : subs) {
      if (sub->parsed()) fn(cfg);
    }
    return kExitOk;
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const NetworkError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace cascadecnn
