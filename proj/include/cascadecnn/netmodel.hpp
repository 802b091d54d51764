#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cascadecnn/matrix.hpp"

namespace cascadecnn {

enum class LayerKind { kConv, kFc, kRelu, kMaxPool, kSoftmax };

std::string_view to_string(LayerKind kind);

/// Shape descriptor CONV<H, W, N_IN, N_OUT, K_H, K_W, S_H, S_W, Z>.
///
/// FC layers use the same fields as CONV<1,1,N_IN,N_OUT,1,1,1,1,0>. RELU and
/// SOFTMAX use (h, w, n_in) as their input volume; MAXPOOL additionally reads
/// the kernel, stride and padding fields. For non-CONV/FC layers n_out equals
/// n_in.
struct LayerDesc {
  LayerKind kind = LayerKind::kConv;
  int h = 1;
  int w = 1;
  int n_in = 1;
  int n_out = 1;
  int k_h = 1;
  int k_w = 1;
  int s_h = 1;
  int s_w = 1;
  int z = 0;

  static LayerDesc conv(int h, int w, int n_in, int n_out, int k_h, int k_w, int s_h, int s_w,
                        int z);
  static LayerDesc fc(int n_in, int n_out);
  static LayerDesc relu(int channels, int h, int w);
  static LayerDesc maxpool(int channels, int h, int w, int k, int s);
  static LayerDesc softmax(int classes);

  bool is_matmul() const { return kind == LayerKind::kConv || kind == LayerKind::kFc; }
  int out_h() const;
  int out_w() const;
  int out_channels() const { return is_matmul() ? n_out : n_in; }
  std::size_t input_elements() const;
  std::size_t output_elements() const;

  /// Throws std::invalid_argument when the descriptor is malformed.
  void validate() const;

  friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

/// R x P input-activation matrix times P x C weight matrix.
struct MatrixDims {
  std::uint64_t r = 0;
  std::uint64_t p = 0;
  std::uint64_t c = 0;

  friend bool operator==(const MatrixDims&, const MatrixDims&) = default;
};

/// R counts sliding-window positions per sample times `batch` for CONV, and
/// equals `batch` for FC. Throws std::invalid_argument for non-CONV/FC layers.
MatrixDims matrix_dims(const LayerDesc& layer, std::uint64_t batch);

/// Activation volume in channel-major (C, H, W) raster order.
struct Volume {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Volume() = default;
  Volume(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t size() const { return data.size(); }
};

/// Unrolls every sliding-window position into one row. Rows follow raster
/// order of output positions; columns run channel-major, then kernel row, then
/// kernel column, matching the weight unrolling. Padding contributes zeros.
Matrix<double> im2col(const Volume& input, const LayerDesc& layer);

/// Weights of one CONV/FC layer: `kernels` is n_out x P with each row a kernel
/// unrolled like an im2col row, i.e. the transpose of the P x C weight matrix.
struct LayerWeights {
  Matrix<float> kernels;
  std::vector<float> bias;  // empty or n_out entries

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct Network {
  std::vector<LayerDesc> layers;
  std::vector<LayerWeights> weights;  // one entry per CONV/FC layer, in order
  int class_count = 0;

  /// Indices into `layers` of the CONV/FC layers.
  std::vector<std::size_t> matmul_layers() const;
  std::size_t matmul_count() const;
  int input_channels() const;
  int input_height() const;
  int input_width() const;

  /// Checks descriptors, layer chaining, weight shapes and class count.
  void validate() const;

  friend bool operator==(const Network&, const Network&) = default;
};

enum class NetErrc {
  kMalformedManifest,
  kMissingBlob,
  kShapeMismatch,
  kUnknownLayerKind,
  kChecksumMismatch,
  kIo,
};

std::string_view to_string(NetErrc code);

class NetworkError : public std::runtime_error {
 public:
  NetworkError(NetErrc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  NetErrc code() const { return code_; }

 private:
  NetErrc code_;
};

/// Reads a JSON manifest plus its little-endian binary32 weight blobs.
Network load_network(const std::filesystem::path& manifest_path);

/// Writes the manifest and one blob per weight/bias tensor next to it. Blob
/// names derive from the manifest stem; the output is byte-stable.
void save_network(const Network& net, const std::filesystem::path& manifest_path);

}  // namespace cascadecnn
