#pragma once

// Independent oracles and helpers shared by the test binaries. Nothing here
// calls into the tiled engine, im2col or the cycle model.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cascadecnn/matrix.hpp"
#include "cascadecnn/netmodel.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("cascadecnn_" + tag + "_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

template <typename T>
cascadecnn::Matrix<T> naive_matmul(const cascadecnn::Matrix<T>& a, const cascadecnn::Matrix<T>& b) {
  cascadecnn::Matrix<T> c(a.rows(), b.cols(), T{});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T s{};
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

/// Direct nested-loop convolution: out[o][y][x] = sum_c sum_ky sum_kx in * w.
/// `w` is n_out x (n_in*k_h*k_w) in channel, kernel-row, kernel-column order.
inline cascadecnn::Volume direct_conv(const cascadecnn::Volume& in, const cascadecnn::LayerDesc& l,
                                      const std::vector<double>& w, const std::vector<double>& bias) {
  const int oh = (l.h + 2 * l.z - l.k_h) / l.s_h + 1;
  const int ow = (l.w + 2 * l.z - l.k_w) / l.s_w + 1;
  cascadecnn::Volume out(l.n_out, oh, ow);
  for (int o = 0; o < l.n_out; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (int c = 0; c < l.n_in; ++c) {
          for (int ky = 0; ky < l.k_h; ++ky) {
            for (int kx = 0; kx < l.k_w; ++kx) {
              const int iy = y * l.s_h + ky - l.z;
              const int ix = x * l.s_w + kx - l.z;
              if (iy < 0 || iy >= l.h || ix < 0 || ix >= l.w) continue;
              s += in.at(c, iy, ix) * w[((o * l.n_in + c) * l.k_h + ky) * l.k_w + kx];
            }
          }
        }
        out.at(o, y, x) = s;
      }
    }
  }
  return out;
}

inline cascadecnn::Volume direct_maxpool(const cascadecnn::Volume& in, int k, int s) {
  const int oh = (in.height - k) / s + 1;
  const int ow = (in.width - k) / s + 1;
  cascadecnn::Volume out(in.channels, oh, ow);
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double m = -INFINITY;
        for (int dy = 0; dy < k; ++dy) {
          for (int dx = 0; dx < k; ++dx) m = std::max(m, in.at(c, y * s + dy, x * s + dx));
        }
        out.at(c, y, x) = m;
      }
    }
  }
  return out;
}

inline std::vector<double> reference_softmax(const std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += e[i] = std::exp(z[i] - mx);
  for (double& v : e) v /= sum;
  return e;
}

/// Float forward pass of a network by nested loops.
inline std::vector<double> reference_forward(const cascadecnn::Network& net, cascadecnn::Volume v) {
  std::size_t mm = 0;
  for (const cascadecnn::LayerDesc& l : net.layers) {
    using cascadecnn::LayerKind;
    if (l.is_matmul()) {
      const auto& wt = net.weights[mm++];
      std::vector<double> w(wt.kernels.data().begin(), wt.kernels.data().end());
      std::vector<double> b(wt.bias.begin(), wt.bias.end());
      if (l.kind == LayerKind::kFc) {
        cascadecnn::Volume out(l.n_out, 1, 1);
        for (int o = 0; o < l.n_out; ++o) {
          double s = b.empty() ? 0.0 : b[o];
          for (int i = 0; i < l.n_in; ++i) s += v.data[i] * w[o * l.n_in + i];
          out.data[o] = s;
        }
        v = out;
      } else {
        v = direct_conv(v, l, w, b);
      }
    } else if (l.kind == LayerKind::kRelu) {
      for (double& d : v.data) d = std::max(d, 0.0);
    } else if (l.kind == LayerKind::kMaxPool) {
      v = direct_maxpool(v, l.k_h, l.s_h);
    }
  }
  return reference_softmax(v.data);
}

inline cascadecnn::Volume random_volume(std::mt19937_64& rng, int c, int h, int w, double lo = -1.0,
                                        double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  cascadecnn::Volume v(c, h, w);
  for (double& d : v.data) d = u(rng);
  return v;
}

inline cascadecnn::LayerWeights random_weights(std::mt19937_64& rng, int n_out, int p, bool bias = true) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  cascadecnn::LayerWeights w{cascadecnn::Matrix<float>(n_out, p, 0.0f), {}};
  for (float& f : w.kernels.data()) f = u(rng);
  if (bias) {
    w.bias.resize(n_out);
    for (float& f : w.bias) f = u(rng);
  }
  return w;
}

/// CONV(2->3, 3x3, pad 1) -> RELU -> MAXPOOL 2x2 -> FC(48->5) -> SOFTMAX.
inline cascadecnn::Network small_random_network(std::uint64_t seed) {
  using cascadecnn::LayerDesc;
  std::mt19937_64 rng(seed);
  cascadecnn::Network net;
  net.class_count = 5;
  net.layers = {LayerDesc::conv(8, 8, 2, 3, 3, 3, 1, 1, 1), LayerDesc::relu(3, 8, 8), LayerDesc::maxpool(3, 8, 8, 2, 2),
                LayerDesc::fc(48, 5), LayerDesc::softmax(5)};
  net.weights = {random_weights(rng, 3, 18), random_weights(rng, 5, 48)};
  net.validate();
  return net;
}

}  // namespace testing
