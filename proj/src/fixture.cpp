#include "cascadecnn/fixture.hpp"

#include <cmath>
#include <random>

#include "cascadecnn/engine.hpp"

namespace cascadecnn {

namespace {

Volume draw_shape(int cls, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pos(1, kToySide - 2);
  std::uniform_real_distribution<double> gain(0.7, 1.3);
  std::normal_distribution<double> noise(0.0, 0.10);
  Volume v(1, kToySide, kToySide);
  const double g = gain(rng);
  switch (cls) {
    case 0: {
      const int r = pos(rng);
      for (int x = 0; x < kToySide; ++x) v.at(0, r, x) = g;
      break;
    }
    case 1: {
      const int c = pos(rng);
      for (int y = 0; y < kToySide; ++y) v.at(0, y, c) = g;
      break;
    }
    case 2: {
      const bool anti = std::bernoulli_distribution(0.5)(rng);
      const int off = std::uniform_int_distribution<int>(-2, 2)(rng);
      for (int y = 0; y < kToySide; ++y) {
        const int x = (anti ? kToySide - 1 - y : y) + off;
        if (x >= 0 && x < kToySide) v.at(0, y, x) = g;
      }
      break;
    }
    default: {
      const int y0 = std::uniform_int_distribution<int>(0, kToySide - 3)(rng);
      const int x0 = std::uniform_int_distribution<int>(0, kToySide - 3)(rng);
      for (int y = y0; y < y0 + 3; ++y) {
        for (int x = x0; x < x0 + 3; ++x) v.at(0, y, x) = g;
      }
      break;
    }
  }
  for (double& d : v.data) d += noise(rng);
  return v;
}

EvalSet draw_set(std::mt19937_64& rng, std::size_t samples) {
  EvalSet set;
  std::uniform_int_distribution<int> cls(0, kToyClasses - 1);
  for (std::size_t i = 0; i < samples; ++i) {
    const int c = cls(rng);
    set.inputs.push_back(draw_shape(c, rng));
    set.labels.push_back(c);
  }
  return set;
}

// Horizontal edge, vertical edge, diagonal, box.
Matrix<float> toy_filters() {
  const std::vector<float> k = {
      -0.5f, -0.5f, -0.5f, 1.0f,  1.0f,  1.0f,  -0.5f, -0.5f, -0.5f,
      -0.5f, 1.0f,  -0.5f, -0.5f, 1.0f,  -0.5f, -0.5f, 1.0f,  -0.5f,
      1.0f,  -0.5f, 0.0f,  -0.5f, 1.0f,  -0.5f, 0.0f,  -0.5f, 1.0f,
      0.25f, 0.25f, 0.25f, 0.25f, 0.25f, 0.25f, 0.25f, 0.25f, 0.25f,
  };
  return Matrix<float>(4, 9, k);
}

}  // namespace

EvalSet make_toy_eval_set(std::uint64_t seed, std::size_t samples) {
  std::mt19937_64 rng(seed);
  return draw_set(rng, samples);
}

Network make_toy_network(std::uint64_t seed) {
  Network net;
  net.class_count = kToyClasses;
  net.layers = {
      LayerDesc::conv(kToySide, kToySide, 1, 4, 3, 3, 1, 1, 0),
      LayerDesc::relu(4, 6, 6),
      LayerDesc::maxpool(4, 6, 6, 2, 2),
      LayerDesc::fc(36, kToyClasses),
      LayerDesc::softmax(kToyClasses),
  };
  net.weights.push_back({toy_filters(), std::vector<float>(4, 0.0f)});
  net.weights.push_back({Matrix<float>(kToyClasses, 36, 0.0f), std::vector<float>(kToyClasses, 0.0f)});

  // Features of a training set through the fixed front end.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const EvalSet train = draw_set(rng, 1200);
  ExecutionPlan plan = ExecutionPlan::floating(net, covering_tiles(net, train.size()));
  const std::vector<Volume> feats = forward_layers(net, plan, train.inputs, 0, 3);

  // Softmax regression by full-batch gradient descent.
  const std::size_t n = feats.size();
  std::vector<double> w(kToyClasses * 36, 0.0), b(kToyClasses, 0.0);
  const double lr = 0.5;
  const double l2 = 1e-3;
  for (int epoch = 0; epoch < 1500; ++epoch) {
    std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<double> z(kToyClasses);
      for (int c = 0; c < kToyClasses; ++c) {
        z[c] = b[c];
        for (int j = 0; j < 36; ++j) z[c] += w[c * 36 + j] * feats[s].data[j];
      }
      const std::vector<double> p = softmax(z);
      for (int c = 0; c < kToyClasses; ++c) {
        const double err = p[c] - (train.labels[s] == c ? 1.0 : 0.0);
        gb[c] += err;
        for (int j = 0; j < 36; ++j) gw[c * 36 + j] += err * feats[s].data[j];
      }
    }
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (gw[i] / n + l2 * w[i]);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i] / n;
  }
  for (int c = 0; c < kToyClasses; ++c) {
    for (int j = 0; j < 36; ++j) net.weights[1].kernels(c, j) = static_cast<float>(w[c * 36 + j]);
    net.weights[1].bias[c] = static_cast<float>(b[c]);
  }
  net.validate();
  return net;
}

PlatformModel toy_platform() {
  PlatformModel p;
  p.name = "toy";
  p.avail_lut = 3000;
  p.avail_dsp = 8;
  p.lut_per_macc = affine_lut_table(12.0, 280.0);
  p.macc_per_dsp = default_macc_per_dsp_table();
  p.clk_hz = default_clk_table();
  p.mem_bandwidth = 2e9;
  p.onchip_capacity = 16384;
  p.offchip_capacity = 64e6;
  p.reconfig_time = 2e-5;
  return p;
}

NamedFixture make_exact8_fixture() {
  NamedFixture f;
  f.net.class_count = 2;
  f.net.layers = {LayerDesc::fc(2, 2), LayerDesc::softmax(2)};
  f.net.weights.push_back({Matrix<float>(2, 2, std::vector<float>{1.0f, -1.0f, -1.0f, 1.0f}), {}});
  f.net.validate();
  // Pairs one step of 1/16 apart near the ends of the 8-bit, 4-fractional-bit range.
  const std::vector<std::pair<double, double>> pairs = {
      {7.875, 7.9375}, {7.9375, 7.875}, {0.0625, 0.125}, {0.125, 0.0625},
      {-8.0, -7.9375}, {-7.9375, -8.0}, {-3.0, 2.5},     {5.0, -6.0},
  };
  for (const auto& [a, b] : pairs) {
    Volume v(2, 1, 1);
    v.data = {a, b};
    f.eval.inputs.push_back(v);
    f.eval.labels.push_back(b > a ? 1 : 0);
  }
  return f;
}

}  // namespace cascadecnn
