#include "cascadecnn/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace cascadecnn {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

void check_tiles(const TileConfig& t) {
  if (t.t_r == 0 || t.t_p == 0 || t.t_c == 0) {
    throw std::invalid_argument("tile sizes must be >= 1");
  }
}

template <typename In, typename Acc>
MatmulResult<Acc> tiled_matmul_impl(const Matrix<In>& a, const Matrix<In>& b, const TileConfig& tiles) {
  check_tiles(tiles);
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("tiled_matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + ")");
  }
  const std::size_t R = a.rows();
  const std::size_t P = a.cols();
  const std::size_t C = b.cols();

  // Columns of B become contiguous rows, i.e. the PEs' weight vectors.
  Matrix<In> bt(C, P);
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t c = 0; c < C; ++c) bt(c, p) = b(p, c);
  }

  MatmulResult<Acc> result{Matrix<Acc>(R, C, Acc{}), 0};
  const std::size_t t_r = tiles.t_r;
  const std::size_t t_p = tiles.t_p;
  const std::size_t t_c = tiles.t_c;
  std::vector<Acc> reg;

  for (std::size_t r0 = 0; r0 < R; r0 += t_r) {                 // loop1
    const std::size_t rows = std::min(t_r, R - r0);
    for (std::size_t c0 = 0; c0 < C; c0 += t_c) {               // loop2
      const std::size_t cols = std::min(t_c, C - c0);
      reg.assign(rows * cols, Acc{});
      for (std::size_t p0 = 0; p0 < P; p0 += t_p) {             // loop3
        const std::size_t depth = std::min(t_p, P - p0);
        for (std::size_t rr = 0; rr < t_r; ++rr) {              // loop4, one row per cycle
          ++result.cycles;
          if (rr >= rows) continue;  // zero-padded edge row
          const In* arow = a.row(r0 + rr) + p0;
          for (std::size_t cc = 0; cc < cols; ++cc) {           // loop5, parallel PEs
            const In* brow = bt.row(c0 + cc) + p0;
            Acc dot{};
            for (std::size_t pp = 0; pp < depth; ++pp) {
              if constexpr (std::is_integral_v<In>) {
                dot = macc_exact(dot, arow[pp], brow[pp]);
              } else {
                dot += arow[pp] * brow[pp];
              }
            }
            reg[rr * cols + cc] += dot;
          }
        }
      }
      for (std::size_t rr = 0; rr < rows; ++rr) {
        for (std::size_t cc = 0; cc < cols; ++cc) {
          result.product(r0 + rr, c0 + cc) = reg[rr * cols + cc];
        }
      }
    }
  }
  return result;
}

}  // namespace

bool TileConfig::valid_batch_tile(std::uint64_t t) {
  if (t == 0) return false;
  return (t & (t - 1)) == 0 || t % 1024 == 0;
}

void TileConfig::validate() const {
  check_tiles(*this);
  if (!valid_batch_tile(t_batch)) {
    throw std::invalid_argument("t_batch " + std::to_string(t_batch) +
                                " is neither a power of two nor a multiple of 1024");
  }
}

std::uint64_t initiation_interval(const MatrixDims& dims, const TileConfig& tiles) {
  check_tiles(tiles);
  return ceil_div(dims.r, tiles.t_r) * ceil_div(dims.p, tiles.t_p) * ceil_div(dims.c, tiles.t_c) *
         tiles.t_r;
}

std::uint64_t count_tile_cycles(const MatrixDims& dims, const TileConfig& tiles) {
  check_tiles(tiles);
  std::uint64_t cycles = 0;
  for (std::uint64_t r0 = 0; r0 < dims.r; r0 += tiles.t_r) {
    for (std::uint64_t c0 = 0; c0 < dims.c; c0 += tiles.t_c) {
      for (std::uint64_t p0 = 0; p0 < dims.p; p0 += tiles.t_p) {
        cycles += tiles.t_r;  // loop4 trip count
      }
    }
  }
  return cycles;
}

MatmulResult<Accumulator> tiled_matmul(const Matrix<std::int64_t>& a, const Matrix<std::int64_t>& b,
                                       const TileConfig& tiles) {
  return tiled_matmul_impl<std::int64_t, Accumulator>(a, b, tiles);
}

MatmulResult<double> tiled_matmul(const Matrix<double>& a, const Matrix<double>& b,
                                  const TileConfig& tiles) {
  return tiled_matmul_impl<double, double>(a, b, tiles);
}

ExecutionPlan ExecutionPlan::floating(const Network& net, const TileConfig& tiles) {
  return {16, PrecisionPlan(net.matmul_count()), tiles};
}

ExecutionPlan ExecutionPlan::quantized(const Network& net, const QuantScheme& scheme,
                                       const TileConfig& tiles) {
  if (scheme.per_layer.size() != net.matmul_count()) {
    throw std::invalid_argument("quantisation scheme has " + std::to_string(scheme.per_layer.size()) +
                                " layer entries, network has " + std::to_string(net.matmul_count()) +
                                " CONV/FC layers");
  }
  FixedSpec{scheme.wordlength, 0}.validate();
  ExecutionPlan plan{scheme.wordlength, {}, tiles};
  for (const LayerScaling& s : scheme.per_layer) plan.layers.emplace_back(s);
  return plan;
}

TileConfig covering_tiles(const Network& net, std::uint64_t batch) {
  TileConfig t;
  t.t_batch = 1;
  while (t.t_batch < batch) t.t_batch <<= 1;
  for (std::size_t i : net.matmul_layers()) {
    const LayerDesc& l = net.layers[i];
    const MatrixDims d = matrix_dims(l, l.kind == LayerKind::kFc ? t.t_batch : 1);
    t.t_r = std::max(t.t_r, d.r);
    t.t_p = std::max(t.t_p, d.p);
    t.t_c = std::max(t.t_c, d.c);
  }
  return t;
}

namespace {

// One CONV/FC layer over a group of rows. `rows` is the im2col (CONV) or
// stacked-sample (FC) activation matrix; the result is R x C in reals.
Matrix<double> matmul_layer(const Matrix<double>& rows, const LayerWeights& lw,
                            const std::optional<LayerScaling>& scaling, int wordlength,
                            const TileConfig& tiles, std::uint64_t& cycles) {
  const std::size_t P = lw.kernels.cols();
  const std::size_t C = lw.kernels.rows();
  if (!scaling) {
    Matrix<double> b(P, C);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t p = 0; p < P; ++p) b(p, c) = lw.kernels(c, p);
    }
    auto res = tiled_matmul(rows, b, tiles);
    cycles += res.cycles;
    if (!lw.bias.empty()) {
      for (std::size_t r = 0; r < res.product.rows(); ++r) {
        for (std::size_t c = 0; c < C; ++c) res.product(r, c) += lw.bias[c];
      }
    }
    return std::move(res.product);
  }

  const FixedSpec wspec{wordlength, scaling->weight_frac};
  const FixedSpec aspec{wordlength, scaling->act_frac};
  Matrix<std::int64_t> b(P, C);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < P; ++p) b(p, c) = quantize(lw.kernels(c, p), wspec);
  }
  Matrix<std::int64_t> a(rows.rows(), rows.cols());
  for (std::size_t i = 0; i < rows.data().size(); ++i) a.data()[i] = quantize(rows.data()[i], aspec);

  auto res = tiled_matmul(a, b, tiles);
  cycles += res.cycles;
  const int product_frac = scaling->weight_frac + scaling->act_frac;
  Matrix<double> out(res.product.rows(), C);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < C; ++c) {
      Accumulator acc = res.product(r, c);
      if (!lw.bias.empty()) acc += quantize_unbounded(lw.bias[c], product_frac);
      out(r, c) = std::ldexp(static_cast<double>(acc), -product_frac);
    }
  }
  return out;
}

Volume apply_relu(Volume v) {
  for (double& x : v.data) x = std::max(0.0, x);
  return v;
}

Volume apply_maxpool(const Volume& in, const LayerDesc& l) {
  Volume out(l.n_in, l.out_h(), l.out_w());
  for (int c = 0; c < l.n_in; ++c) {
    for (int oy = 0; oy < out.height; ++oy) {
      for (int ox = 0; ox < out.width; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        for (int ky = 0; ky < l.k_h; ++ky) {
          const int iy = oy * l.s_h - l.z + ky;
          if (iy < 0 || iy >= l.h) continue;
          for (int kx = 0; kx < l.k_w; ++kx) {
            const int ix = ox * l.s_w - l.z + kx;
            if (ix < 0 || ix >= l.w) continue;
            best = std::max(best, in.at(c, iy, ix));
          }
        }
        out.at(c, oy, ox) = best;
      }
    }
  }
  return out;
}

void check_volume(const Volume& v, const LayerDesc& l, std::size_t index) {
  const bool ok = l.kind == LayerKind::kFc
                      ? v.size() == l.input_elements()
                      : v.channels == l.n_in && v.height == l.h && v.width == l.w;
  if (!ok) {
    throw std::invalid_argument("layer " + std::to_string(index) + " (" + std::string(to_string(l.kind)) +
                                "): input volume " + std::to_string(v.channels) + "x" +
                                std::to_string(v.height) + "x" + std::to_string(v.width) +
                                " does not match the layer");
  }
}

}  // namespace

std::vector<Volume> forward_layers(const Network& net, const ExecutionPlan& plan, std::vector<Volume> acts,
                                   std::size_t begin, std::size_t end, CycleReport* report) {
  if (end > net.layers.size() || begin > end) throw std::out_of_range("forward_layers: bad layer range");
  if (plan.layers.size() != net.matmul_count()) {
    throw std::invalid_argument("execution plan does not match the network's CONV/FC layer count");
  }
  plan.tiles.validate();
  if (report) {
    report->per_layer_ii.resize(net.matmul_count(), 0);
    report->per_layer_cycles.resize(net.matmul_count(), 0);
  }
  std::size_t mm = 0;
  for (std::size_t i = 0; i < begin; ++i) mm += net.layers[i].is_matmul() ? 1 : 0;

  for (std::size_t i = begin; i < end; ++i) {
    const LayerDesc& l = net.layers[i];
    for (const Volume& v : acts) check_volume(v, l, i);
    switch (l.kind) {
      case LayerKind::kRelu:
        for (Volume& v : acts) v = apply_relu(std::move(v));
        break;
      case LayerKind::kMaxPool:
        for (Volume& v : acts) v = apply_maxpool(v, l);
        break;
      case LayerKind::kSoftmax:
        break;  // applied to the final logits by the caller
      case LayerKind::kConv: {
        std::uint64_t cycles = 0;
        const MatrixDims per_sample = matrix_dims(l, 1);
        for (Volume& v : acts) {
          const Matrix<double> out =
              matmul_layer(im2col(v, l), net.weights[mm], plan.layers[mm], plan.wordlength, plan.tiles, cycles);
          Volume next(l.n_out, l.out_h(), l.out_w());
          for (int c = 0; c < l.n_out; ++c) {
            for (std::size_t r = 0; r < out.rows(); ++r) {
              next.data[static_cast<std::size_t>(c) * out.rows() + r] = out(r, static_cast<std::size_t>(c));
            }
          }
          v = std::move(next);
          if (report) report->workload_ops += 2 * per_sample.r * per_sample.p * per_sample.c;
        }
        if (report) {
          report->per_layer_ii[mm] = initiation_interval(per_sample, plan.tiles);
          report->per_layer_cycles[mm] += cycles;
          report->total_cycles += cycles;
        }
        ++mm;
        break;
      }
      case LayerKind::kFc: {
        std::uint64_t cycles = 0;
        const std::size_t group = static_cast<std::size_t>(plan.tiles.t_batch);
        for (std::size_t s0 = 0; s0 < acts.size(); s0 += group) {
          const std::size_t count = std::min(group, acts.size() - s0);
          Matrix<double> rows(count, static_cast<std::size_t>(l.n_in));
          for (std::size_t s = 0; s < count; ++s) {
            std::copy(acts[s0 + s].data.begin(), acts[s0 + s].data.end(), rows.row(s));
          }
          const Matrix<double> out =
              matmul_layer(rows, net.weights[mm], plan.layers[mm], plan.wordlength, plan.tiles, cycles);
          for (std::size_t s = 0; s < count; ++s) {
            Volume next(l.n_out, 1, 1);
            std::copy(out.row(s), out.row(s) + l.n_out, next.data.begin());
            acts[s0 + s] = std::move(next);
          }
          if (report) {
            const MatrixDims d = matrix_dims(l, count);
            report->workload_ops += 2 * d.r * d.p * d.c;
          }
        }
        if (report) {
          report->per_layer_ii[mm] = initiation_interval(matrix_dims(l, plan.tiles.t_batch), plan.tiles);
          report->per_layer_cycles[mm] += cycles;
          report->total_cycles += cycles;
        }
        ++mm;
        break;
      }
    }
  }
  return acts;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

ForwardResult run_plan(const Network& net, const ExecutionPlan& plan, std::span<const Volume> batch) {
  ForwardResult result;
  result.cycles.samples = batch.size();
  std::vector<Volume> acts(batch.begin(), batch.end());
  acts = forward_layers(net, plan, std::move(acts), 0, net.layers.size(), &result.cycles);
  result.probabilities.reserve(acts.size());
  for (const Volume& v : acts) result.probabilities.push_back(softmax(v.data));
  return result;
}

ForwardResult run_float(const Network& net, std::span<const Volume> batch) {
  return run_plan(net, ExecutionPlan::floating(net, covering_tiles(net, std::max<std::size_t>(batch.size(), 1))),
                  batch);
}

ForwardResult run_quantized(const Network& net, const QuantScheme& scheme, std::span<const Volume> batch,
                            const TileConfig& tiles) {
  return run_plan(net, ExecutionPlan::quantized(net, scheme, tiles), batch);
}

int argmax(std::span<const double> p) {
  if (p.empty()) throw std::invalid_argument("argmax: empty vector");
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

CycleReport profile_cycles(const Network& net, const TileConfig& tiles, std::uint64_t batch) {
  tiles.validate();
  CycleReport report;
  report.samples = batch;
  for (std::size_t i : net.matmul_layers()) {
    const LayerDesc& l = net.layers[i];
    std::uint64_t cycles = 0;
    std::uint64_t ii = 0;
    if (l.kind == LayerKind::kConv) {
      const MatrixDims d = matrix_dims(l, 1);
      ii = initiation_interval(d, tiles);
      cycles = count_tile_cycles(d, tiles) * batch;
      report.workload_ops += 2 * d.r * d.p * d.c * batch;
    } else {
      ii = initiation_interval(matrix_dims(l, tiles.t_batch), tiles);
      for (std::uint64_t s0 = 0; s0 < batch; s0 += tiles.t_batch) {
        const MatrixDims d = matrix_dims(l, std::min(tiles.t_batch, batch - s0));
        cycles += count_tile_cycles(d, tiles);
        report.workload_ops += 2 * d.r * d.p * d.c;
      }
    }
    report.per_layer_ii.push_back(ii);
    report.per_layer_cycles.push_back(cycles);
    report.total_cycles += cycles;
  }
  return report;
}

}  // namespace cascadecnn
