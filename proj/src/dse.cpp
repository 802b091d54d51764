#include "cascadecnn/dse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "cascadecnn/errors.hpp"
#include "cascadecnn/fixedpoint.hpp"
#include "cascadecnn/io.hpp"
#include "json.hpp"

namespace cascadecnn {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

double table_lookup(const std::map<int, double>& table, int wordlength, const char* name) {
  auto it = table.find(wordlength);
  if (it == table.end()) {
    throw std::invalid_argument(std::string("platform table ") + name + " has no entry for wordlength " +
                                std::to_string(wordlength));
  }
  return it->second;
}

// Relative tolerance under which two performance values count as a tie.
constexpr double kPerfTieRel = 1e-12;

bool perf_tied_or_above(double value, double best) {
  return value >= best - kPerfTieRel * std::abs(best);
}

}  // namespace

double PlatformModel::lut_cost(int wordlength) const { return table_lookup(lut_per_macc, wordlength, "lut_per_macc"); }
double PlatformModel::dsp_packing(int wordlength) const { return table_lookup(macc_per_dsp, wordlength, "macc_per_dsp"); }
double PlatformModel::clock(int wordlength) const { return table_lookup(clk_hz, wordlength, "clk_hz"); }

void PlatformModel::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("platform: ") + name + " must be >= 0");
  };
  nonneg(avail_lut, "avail_lut");
  nonneg(avail_dsp, "avail_dsp");
  nonneg(mem_bandwidth, "mem_bandwidth");
  nonneg(onchip_capacity, "onchip_capacity");
  nonneg(offchip_capacity, "offchip_capacity");
  nonneg(reconfig_time, "reconfig_time");
  for (int wl = kMinWordlength; wl <= kMaxWordlength; ++wl) {
    if (!(lut_cost(wl) > 0.0)) throw std::invalid_argument("platform: lut_per_macc must be positive");
    if (!(dsp_packing(wl) >= 1.0)) throw std::invalid_argument("platform: macc_per_dsp must be >= 1");
    if (!(clock(wl) > 0.0)) throw std::invalid_argument("platform: clk_hz must be positive");
  }
}

std::map<int, double> default_clk_table() {
  std::map<int, double> t;
  for (int wl = kMinWordlength; wl <= kMaxWordlength; ++wl) {
    if (wl <= 8) {
      t[wl] = 150e6;
    } else {
      t[wl] = 150e6 + (131e6 - 150e6) * static_cast<double>(wl - 8) / 8.0;
    }
  }
  return t;
}

std::map<int, double> default_macc_per_dsp_table() {
  std::map<int, double> t;
  for (int wl = kMinWordlength; wl <= kMaxWordlength; ++wl) t[wl] = wl <= 5 ? 2.0 : 1.0;
  return t;
}

std::map<int, double> affine_lut_table(double lut_at_2, double lut_at_16) {
  std::map<int, double> t;
  for (int wl = kMinWordlength; wl <= kMaxWordlength; ++wl) {
    t[wl] = lut_at_2 + (lut_at_16 - lut_at_2) * static_cast<double>(wl - 2) / 14.0;
  }
  return t;
}

namespace {

std::map<int, double> table_from_json(const json& j) {
  std::map<int, double> t;
  for (auto it = j.begin(); it != j.end(); ++it) t[std::stoi(it.key())] = it.value().get<double>();
  return t;
}

json table_to_json(const std::map<int, double>& t) {
  json j = json::object();
  for (const auto& [wl, v] : t) j[std::to_string(wl)] = v;
  return j;
}

}  // namespace

PlatformModel load_platform(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("input not found: " + path.string());
  const json j = json::parse(read_text_file(path));
  PlatformModel p;
  p.name = j.value("name", path.stem().string());
  p.avail_lut = j.at("avail_lut").get<double>();
  p.avail_dsp = j.at("avail_dsp").get<double>();
  if (j.contains("lut_per_macc")) {
    p.lut_per_macc = table_from_json(j.at("lut_per_macc"));
  } else {
    const auto ends = j.at("lut_per_macc_affine").get<std::vector<double>>();
    if (ends.size() != 2) throw std::invalid_argument("lut_per_macc_affine must be [lut_at_2, lut_at_16]");
    p.lut_per_macc = affine_lut_table(ends[0], ends[1]);
  }
  p.macc_per_dsp = j.contains("macc_per_dsp") ? table_from_json(j.at("macc_per_dsp")) : default_macc_per_dsp_table();
  p.clk_hz = j.contains("clk_hz") ? table_from_json(j.at("clk_hz")) : default_clk_table();
  p.mem_bandwidth = j.at("mem_bandwidth_bits_per_s").get<double>();
  p.onchip_capacity = j.at("onchip_capacity_bits").get<double>();
  p.offchip_capacity = j.at("offchip_capacity_bits").get<double>();
  p.reconfig_time = j.value("reconfig_time_s", 0.0);
  p.validate();
  return p;
}

void save_platform(const PlatformModel& p, const fs::path& path) {
  json j;
  j["name"] = p.name;
  j["avail_lut"] = p.avail_lut;
  j["avail_dsp"] = p.avail_dsp;
  j["lut_per_macc"] = table_to_json(p.lut_per_macc);
  j["macc_per_dsp"] = table_to_json(p.macc_per_dsp);
  j["clk_hz"] = table_to_json(p.clk_hz);
  j["mem_bandwidth_bits_per_s"] = p.mem_bandwidth;
  j["onchip_capacity_bits"] = p.onchip_capacity;
  j["offchip_capacity_bits"] = p.offchip_capacity;
  j["reconfig_time_s"] = p.reconfig_time;
  write_text_file(path, j.dump(2) + "\n");
}

double perf(const MatrixDims& dims, const TileConfig& tiles, double clk_hz) {
  const double workload = 2.0 * static_cast<double>(dims.r) * static_cast<double>(dims.p) * static_cast<double>(dims.c);
  return workload / static_cast<double>(initiation_interval(dims, tiles)) * clk_hz;
}

double op_intensity(const TileConfig& tiles, std::uint64_t p_full, int wordlength) {
  const double tr = static_cast<double>(tiles.t_r);
  const double tc = static_cast<double>(tiles.t_c);
  const double p = static_cast<double>(p_full);
  return 2.0 * tr * p * tc / ((tr * p + p * tc + tr * tc) * wordlength);
}

ComputeRoof compute_roof(const PlatformModel& platform, int wordlength) {
  const double lut_maccs = std::floor(platform.avail_lut / platform.lut_cost(wordlength));
  const double dsp_maccs = platform.avail_dsp * platform.dsp_packing(wordlength);
  ComputeRoof roof;
  roof.ops_per_cycle = 2.0 * (lut_maccs + dsp_maccs);
  roof.ops_per_s = roof.ops_per_cycle * platform.clock(wordlength);
  return roof;
}

std::uint64_t onchip_mem(const TileConfig& t, int wordlength) {
  return 2 * (t.t_r * t.t_p + t.t_p * t.t_c + t.t_r * t.t_c) * static_cast<std::uint64_t>(wordlength);
}

std::vector<std::uint64_t> tile_candidates(std::uint64_t extent) {
  std::set<std::uint64_t> out;
  for (std::uint64_t d = 1; d * d <= extent; ++d) {
    if (extent % d == 0) {
      out.insert(d);
      out.insert(extent / d);
    }
  }
  for (std::uint64_t p = 1; p <= extent; p <<= 1) out.insert(p);
  return {out.begin(), out.end()};
}

namespace {

std::vector<std::uint64_t> power_of_two_candidates(std::uint64_t extent) {
  std::vector<std::uint64_t> out;
  for (std::uint64_t p = 1; p < extent; p <<= 1) out.push_back(p);
  out.push_back(extent);
  return out;
}

// Feasibility shared by per-layer and cross-layer exploration.
void classify(DesignPoint& pt, const PlatformModel& platform, const ComputeRoof& roof, double clk, int wordlength) {
  pt.macc_count = pt.tiles.t_p * pt.tiles.t_c;
  pt.onchip_bits = onchip_mem(pt.tiles, wordlength);
  pt.feasible = true;
  if (2.0 * static_cast<double>(pt.macc_count) * clk > roof.ops_per_s) {
    pt.feasible = false;
    pt.reason = "compute roof";
  } else if (static_cast<double>(pt.onchip_bits) > platform.onchip_capacity) {
    pt.feasible = false;
    pt.reason = "on-chip memory";
  }
}

}  // namespace

std::vector<DesignPoint> explore_layer(const MatrixDims& dims, const PlatformModel& platform, int wordlength) {
  if (dims.r == 0 || dims.p == 0 || dims.c == 0) throw std::invalid_argument("explore_layer: dims must be positive");
  const ComputeRoof roof = compute_roof(platform, wordlength);
  const double clk = platform.clock(wordlength);
  std::vector<DesignPoint> points;
  for (std::uint64_t tr : tile_candidates(dims.r)) {
    for (std::uint64_t tp : tile_candidates(dims.p)) {
      for (std::uint64_t tc : tile_candidates(dims.c)) {
        DesignPoint pt;
        pt.tiles = {tr, tp, tc, 1};
        classify(pt, platform, roof, clk, wordlength);
        pt.op_intensity = op_intensity(pt.tiles, dims.p, wordlength);
        pt.perf_ops_per_s = perf(dims, pt.tiles, clk);
        if (pt.feasible) pt.perf_ops_per_s = std::min(pt.perf_ops_per_s, pt.op_intensity * platform.mem_bandwidth);
        points.push_back(std::move(pt));
      }
    }
  }
  return points;
}

double overall_perf(std::span<const LayerPerf> layers, std::uint64_t batch, std::uint64_t t_batch) {
  if (layers.empty()) throw std::invalid_argument("overall_perf: no layers");
  if (batch == 0 || t_batch == 0) throw std::invalid_argument("overall_perf: batch and t_batch must be positive");
  double num = 0.0;
  double den = 0.0;
  for (const LayerPerf& l : layers) {
    const double k = l.kind == LayerKind::kFc ? static_cast<double>(batch) / static_cast<double>(t_batch)
                                              : static_cast<double>(batch);
    num += k * l.perf * static_cast<double>(l.ii);
    den += k * static_cast<double>(l.ii);
  }
  return num / den;
}

double offchip_bits(const Network& net, std::uint64_t batch, int wordlength) {
  double elems = static_cast<double>(net.layers.front().input_elements());
  for (const LayerDesc& l : net.layers) elems += static_cast<double>(l.output_elements());
  return elems * wordlength * static_cast<double>(batch);
}

std::uint64_t max_batch(const Network& net, const PlatformModel& platform, int wordlength) {
  const double per_sample = offchip_bits(net, 1, wordlength);
  return static_cast<std::uint64_t>(std::floor(platform.offchip_capacity / per_sample));
}

std::vector<std::uint64_t> batch_tile_candidates(std::uint64_t batch) {
  std::set<std::uint64_t> out;
  for (std::uint64_t p = 1; p <= batch; p <<= 1) {
    if (batch % p == 0) out.insert(p);
  }
  for (std::uint64_t m = 1024; m <= batch; m += 1024) {
    if (batch % m == 0) out.insert(m);
  }
  return {out.begin(), out.end()};
}

ArchitectureReport select_architecture(const Network& net, const PlatformModel& platform, int wordlength,
                                       std::uint64_t batch, const DseOptions& opts) {
  if (batch == 0) throw std::invalid_argument("select_architecture: batch must be positive");
  const auto mm = net.matmul_layers();
  if (mm.empty()) throw std::invalid_argument("select_architecture: network has no CONV/FC layer");
  FixedSpec{wordlength, 0}.validate();

  const double needed = offchip_bits(net, batch, wordlength);
  if (needed > platform.offchip_capacity) {
    throw InfeasibleError("off-chip memory: batch " + std::to_string(batch) + " needs " + format_double(needed) +
                          " bits, capacity is " + format_double(platform.offchip_capacity));
  }

  bool has_fc = false;
  std::uint64_t r_extent = 1, p_extent = 1, c_extent = 1;
  for (std::size_t i : mm) {
    const LayerDesc& l = net.layers[i];
    const MatrixDims d = matrix_dims(l, 1);
    if (l.kind == LayerKind::kFc) {
      has_fc = true;
    } else {
      r_extent = std::max(r_extent, d.r);
    }
    p_extent = std::max(p_extent, d.p);
    c_extent = std::max(c_extent, d.c);
  }

  ArchitectureReport report;
  report.batch_candidates = has_fc ? batch_tile_candidates(batch) : std::vector<std::uint64_t>{1};
  if (has_fc) r_extent = std::max(r_extent, report.batch_candidates.back());
  report.r_candidates = tile_candidates(r_extent);
  report.p_candidates = tile_candidates(p_extent);
  report.c_candidates = tile_candidates(c_extent);

  auto grid_size = [&report] {
    return report.r_candidates.size() * report.p_candidates.size() * report.c_candidates.size() *
           report.batch_candidates.size();
  };
  if (grid_size() > opts.max_grid_points) report.r_candidates = power_of_two_candidates(r_extent);
  if (grid_size() > opts.max_grid_points) report.p_candidates = power_of_two_candidates(p_extent);
  if (grid_size() > opts.max_grid_points) report.c_candidates = power_of_two_candidates(c_extent);

  const ComputeRoof roof = compute_roof(platform, wordlength);
  const double clk = platform.clock(wordlength);
  std::vector<LayerPerf> layer_perf(mm.size());
  report.points.reserve(grid_size());

  for (std::uint64_t tr : report.r_candidates) {
    for (std::uint64_t tp : report.p_candidates) {
      for (std::uint64_t tc : report.c_candidates) {
        for (std::uint64_t tb : report.batch_candidates) {
          DesignPoint pt;
          pt.tiles = {tr, tp, tc, tb};
          classify(pt, platform, roof, clk, wordlength);
          double min_intensity = std::numeric_limits<double>::infinity();
          for (std::size_t k = 0; k < mm.size(); ++k) {
            const LayerDesc& l = net.layers[mm[k]];
            const MatrixDims d = matrix_dims(l, l.kind == LayerKind::kFc ? tb : 1);
            const double intensity = op_intensity(pt.tiles, d.p, wordlength);
            min_intensity = std::min(min_intensity, intensity);
            layer_perf[k] = {l.kind, std::min(perf(d, pt.tiles, clk), intensity * platform.mem_bandwidth),
                             initiation_interval(d, pt.tiles)};
          }
          pt.op_intensity = min_intensity;
          pt.perf_ops_per_s = overall_perf(layer_perf, batch, tb);
          if (pt.feasible) ++report.feasible_points;
          report.points.push_back(std::move(pt));
        }
      }
    }
  }

  if (report.feasible_points == 0) {
    bool compute_bound = false;
    for (const DesignPoint& pt : report.points) compute_bound |= pt.reason == "compute roof";
    const bool all_compute = std::all_of(report.points.begin(), report.points.end(),
                                         [](const DesignPoint& pt) { return pt.reason == "compute roof"; });
    throw InfeasibleError(std::string("no feasible design point: ") +
                          (all_compute ? "every point exceeds the compute roof"
                                       : compute_bound ? "points exceed the compute roof or on-chip memory"
                                                       : "every point exceeds on-chip memory"));
  }

  double best_perf = -1.0;
  for (const DesignPoint& pt : report.points) {
    if (pt.feasible) best_perf = std::max(best_perf, pt.perf_ops_per_s);
  }
  const DesignPoint* chosen = nullptr;
  for (const DesignPoint& pt : report.points) {
    if (!pt.feasible || !perf_tied_or_above(pt.perf_ops_per_s, best_perf)) continue;
    if (chosen == nullptr || pt.onchip_bits < chosen->onchip_bits ||
        (pt.onchip_bits == chosen->onchip_bits && pt.tiles < chosen->tiles)) {
      chosen = &pt;
    }
  }
  report.tiles = chosen->tiles;
  report.predicted_ops_per_s = chosen->perf_ops_per_s;
  return report;
}

std::string design_points_csv(const std::vector<DesignPoint>& points) {
  std::string csv = "t_r,t_p,t_c,t_batch,perf_ops_per_s,op_intensity,onchip_bits,feasible,reason\n";
  for (const DesignPoint& pt : points) {
    csv += std::to_string(pt.tiles.t_r) + "," + std::to_string(pt.tiles.t_p) + "," + std::to_string(pt.tiles.t_c) +
           "," + std::to_string(pt.tiles.t_batch) + "," + format_double(pt.perf_ops_per_s) + "," +
           format_double(pt.op_intensity) + "," + std::to_string(pt.onchip_bits) + "," + (pt.feasible ? "1" : "0") +
           "," + pt.reason + "\n";
  }
  return csv;
}

}  // namespace cascadecnn
