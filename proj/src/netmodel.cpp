#include "cascadecnn/netmodel.hpp"

#include <sstream>

#include "cascadecnn/io.hpp"
#include "json.hpp"

namespace cascadecnn {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConv: return "CONV";
    case LayerKind::kFc: return "FC";
    case LayerKind::kRelu: return "RELU";
    case LayerKind::kMaxPool: return "MAXPOOL";
    case LayerKind::kSoftmax: return "SOFTMAX";
  }
  return "?";
}

std::string_view to_string(NetErrc code) {
  switch (code) {
    case NetErrc::kMalformedManifest: return "malformed manifest";
    case NetErrc::kMissingBlob: return "missing weight blob";
    case NetErrc::kShapeMismatch: return "shape mismatch";
    case NetErrc::kUnknownLayerKind: return "unknown layer kind";
    case NetErrc::kChecksumMismatch: return "checksum mismatch";
    case NetErrc::kIo: return "i/o error";
  }
  return "?";
}

LayerDesc LayerDesc::conv(int h, int w, int n_in, int n_out, int k_h, int k_w, int s_h, int s_w,
                          int z) {
  return {LayerKind::kConv, h, w, n_in, n_out, k_h, k_w, s_h, s_w, z};
}

LayerDesc LayerDesc::fc(int n_in, int n_out) {
  return {LayerKind::kFc, 1, 1, n_in, n_out, 1, 1, 1, 1, 0};
}

LayerDesc LayerDesc::relu(int channels, int h, int w) {
  return {LayerKind::kRelu, h, w, channels, channels, 1, 1, 1, 1, 0};
}

LayerDesc LayerDesc::maxpool(int channels, int h, int w, int k, int s) {
  return {LayerKind::kMaxPool, h, w, channels, channels, k, k, s, s, 0};
}

LayerDesc LayerDesc::softmax(int classes) {
  return {LayerKind::kSoftmax, 1, 1, classes, classes, 1, 1, 1, 1, 0};
}

namespace {

// ceil((size + 2z - (k - 1)) / s)
int window_positions(int size, int k, int s, int z) {
  const int span = size + 2 * z - (k - 1);
  return (span + s - 1) / s;
}

}  // namespace

int LayerDesc::out_h() const {
  switch (kind) {
    case LayerKind::kConv:
    case LayerKind::kMaxPool: return window_positions(h, k_h, s_h, z);
    case LayerKind::kFc: return 1;
    default: return h;
  }
}

int LayerDesc::out_w() const {
  switch (kind) {
    case LayerKind::kConv:
    case LayerKind::kMaxPool: return window_positions(w, k_w, s_w, z);
    case LayerKind::kFc: return 1;
    default: return w;
  }
}

std::size_t LayerDesc::input_elements() const {
  return static_cast<std::size_t>(n_in) * h * w;
}

std::size_t LayerDesc::output_elements() const {
  return static_cast<std::size_t>(out_channels()) * out_h() * out_w();
}

void LayerDesc::validate() const {
  auto fail = [this](const std::string& why) {
    throw std::invalid_argument(std::string(to_string(kind)) + " layer: " + why);
  };
  if (h < 1 || w < 1 || n_in < 1 || n_out < 1) fail("dimensions must be positive");
  if (k_h < 1 || k_w < 1) fail("kernel must be at least 1x1");
  if (s_h < 1 || s_w < 1) fail("strides must be >= 1");
  if (z < 0) fail("padding must be nonnegative");
  switch (kind) {
    case LayerKind::kConv:
    case LayerKind::kMaxPool:
      if (k_h > h + 2 * z || k_w > w + 2 * z) fail("kernel larger than padded input");
      if (kind == LayerKind::kMaxPool && n_out != n_in) fail("n_out must equal n_in");
      break;
    case LayerKind::kFc:
      if (h != 1 || w != 1 || k_h != 1 || k_w != 1 || s_h != 1 || s_w != 1 || z != 0) {
        fail("must have the form CONV<1,1,N_IN,N_OUT,1,1,1,1,0>");
      }
      break;
    case LayerKind::kRelu:
    case LayerKind::kSoftmax:
      if (n_out != n_in) fail("n_out must equal n_in");
      break;
  }
}

MatrixDims matrix_dims(const LayerDesc& layer, std::uint64_t batch) {
  if (!layer.is_matmul()) {
    throw std::invalid_argument("matrix_dims: " + std::string(to_string(layer.kind)) +
                                " layer does not map onto the MM unit");
  }
  if (batch == 0) throw std::invalid_argument("matrix_dims: batch must be positive");
  const std::uint64_t p = static_cast<std::uint64_t>(layer.k_h) * layer.k_w * layer.n_in;
  const std::uint64_t c = static_cast<std::uint64_t>(layer.n_out);
  if (layer.kind == LayerKind::kFc) return {batch, p, c};
  const std::uint64_t per_sample = static_cast<std::uint64_t>(layer.out_h()) * layer.out_w();
  return {per_sample * batch, p, c};
}

Matrix<double> im2col(const Volume& input, const LayerDesc& layer) {
  if (layer.kind == LayerKind::kFc) {
    if (input.size() != static_cast<std::size_t>(layer.n_in)) {
      throw std::invalid_argument("im2col: FC input has " + std::to_string(input.size()) +
                                  " elements, layer expects " + std::to_string(layer.n_in));
    }
    return Matrix<double>(1, input.size(), input.data);
  }
  if (layer.kind != LayerKind::kConv) {
    throw std::invalid_argument("im2col: layer is not CONV/FC");
  }
  if (input.channels != layer.n_in || input.height != layer.h || input.width != layer.w) {
    throw std::invalid_argument("im2col: input volume does not match layer shape");
  }
  const int oh = layer.out_h();
  const int ow = layer.out_w();
  const std::size_t p = static_cast<std::size_t>(layer.k_h) * layer.k_w * layer.n_in;
  Matrix<double> out(static_cast<std::size_t>(oh) * ow, p, 0.0);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* row = out.row(static_cast<std::size_t>(oy) * ow + ox);
      std::size_t col = 0;
      for (int c = 0; c < layer.n_in; ++c) {
        for (int ky = 0; ky < layer.k_h; ++ky) {
          const int iy = oy * layer.s_h - layer.z + ky;
          for (int kx = 0; kx < layer.k_w; ++kx, ++col) {
            const int ix = ox * layer.s_w - layer.z + kx;
            if (iy >= 0 && iy < layer.h && ix >= 0 && ix < layer.w) {
              row[col] = input.at(c, iy, ix);
            }
          }
        }
      }
    }
  }
  return out;
}

std::vector<std::size_t> Network::matmul_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].is_matmul()) out.push_back(i);
  }
  return out;
}

std::size_t Network::matmul_count() const { return matmul_layers().size(); }

int Network::input_channels() const { return layers.at(0).n_in; }
int Network::input_height() const { return layers.at(0).h; }
int Network::input_width() const { return layers.at(0).w; }

void Network::validate() const {
  if (layers.empty()) throw std::invalid_argument("network has no layers");
  std::size_t mm = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDesc& l = layers[i];
    l.validate();
    if (l.kind == LayerKind::kSoftmax && i + 1 != layers.size()) {
      throw std::invalid_argument("SOFTMAX is only allowed as the final layer");
    }
    if (i > 0) {
      const LayerDesc& prev = layers[i - 1];
      const bool chains =
          l.kind == LayerKind::kFc
              ? prev.output_elements() == l.input_elements()
              : prev.out_channels() == l.n_in && prev.out_h() == l.h && prev.out_w() == l.w;
      if (!chains) {
        throw std::invalid_argument("layer " + std::to_string(i) + " (" +
                                    std::string(to_string(l.kind)) +
                                    ") input does not match the previous layer's output");
      }
    }
    if (l.is_matmul()) {
      if (mm >= weights.size()) throw std::invalid_argument("missing weights for layer " + std::to_string(i));
      const LayerWeights& lw = weights[mm];
      const MatrixDims d = matrix_dims(l, 1);
      if (lw.kernels.rows() != d.c || lw.kernels.cols() != d.p) {
        throw std::invalid_argument("layer " + std::to_string(i) + ": weight tensor shape does not match (P, C)");
      }
      if (!lw.bias.empty() && lw.bias.size() != d.c) {
        throw std::invalid_argument("layer " + std::to_string(i) + ": bias length does not match N_OUT");
      }
      ++mm;
    }
  }
  if (mm == 0) throw std::invalid_argument("network has no CONV/FC layer");
  if (mm != weights.size()) throw std::invalid_argument("more weight tensors than CONV/FC layers");
  if (class_count != layers.back().out_channels() ||
      layers.back().out_h() != 1 || layers.back().out_w() != 1) {
    throw std::invalid_argument("class_count does not match the final layer's output");
  }
}

namespace {

LayerKind parse_kind(const std::string& s) {
  if (s == "CONV") return LayerKind::kConv;
  if (s == "FC") return LayerKind::kFc;
  if (s == "RELU") return LayerKind::kRelu;
  if (s == "MAXPOOL") return LayerKind::kMaxPool;
  if (s == "SOFTMAX") return LayerKind::kSoftmax;
  throw NetworkError(NetErrc::kUnknownLayerKind, "'" + s + "'");
}

json layer_to_json(const LayerDesc& l) {
  json j;
  j["kind"] = std::string(to_string(l.kind));
  j["h"] = l.h;
  j["w"] = l.w;
  j["n_in"] = l.n_in;
  j["n_out"] = l.n_out;
  j["k_h"] = l.k_h;
  j["k_w"] = l.k_w;
  j["s_h"] = l.s_h;
  j["s_w"] = l.s_w;
  j["z"] = l.z;
  return j;
}

LayerDesc layer_from_json(const json& j) {
  LayerDesc l;
  l.kind = parse_kind(j.at("kind").get<std::string>());
  auto field = [&j](const char* name, int fallback) {
    return j.contains(name) ? j.at(name).get<int>() : fallback;
  };
  switch (l.kind) {
    case LayerKind::kFc:
      l = LayerDesc::fc(j.at("n_in").get<int>(), j.at("n_out").get<int>());
      break;
    case LayerKind::kConv:
      l = LayerDesc::conv(j.at("h").get<int>(), j.at("w").get<int>(), j.at("n_in").get<int>(),
                          j.at("n_out").get<int>(), j.at("k_h").get<int>(), j.at("k_w").get<int>(),
                          j.at("s_h").get<int>(), j.at("s_w").get<int>(), j.at("z").get<int>());
      break;
    default:
      l.h = j.at("h").get<int>();
      l.w = j.at("w").get<int>();
      l.n_in = j.at("n_in").get<int>();
      l.n_out = field("n_out", l.n_in);
      l.k_h = field("k_h", 1);
      l.k_w = field("k_w", 1);
      l.s_h = field("s_h", 1);
      l.s_w = field("s_w", 1);
      l.z = field("z", 0);
      break;
  }
  // Extra fields on FC must still agree with CONV<1,1,N_IN,N_OUT,1,1,1,1,0>.
  if (l.kind == LayerKind::kFc) {
    for (const char* name : {"h", "w", "k_h", "k_w", "s_h", "s_w"}) {
      if (j.contains(name) && j.at(name).get<int>() != 1) {
        throw NetworkError(NetErrc::kShapeMismatch, std::string("FC field ") + name + " must be 1");
      }
    }
    if (j.contains("z") && j.at("z").get<int>() != 0) {
      throw NetworkError(NetErrc::kShapeMismatch, "FC padding must be 0");
    }
  }
  return l;
}

std::vector<float> read_blob(const fs::path& base, const json& ref, std::size_t expected,
                             const std::string& what) {
  const auto rel = ref.at("path").get<std::string>();
  const fs::path full = base / rel;
  if (!fs::exists(full)) {
    throw NetworkError(NetErrc::kMissingBlob, what + " blob '" + rel + "' not found");
  }
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(full);
  } catch (const std::exception& e) {
    throw NetworkError(NetErrc::kIo, e.what());
  }
  if (bytes.size() != expected * 4) {
    throw NetworkError(NetErrc::kShapeMismatch, what + " blob '" + rel + "' has " +
                                                    std::to_string(bytes.size()) + " bytes, expected " +
                                                    std::to_string(expected * 4));
  }
  if (ref.contains("sha256")) {
    const auto digest = sha256_hex(bytes);
    if (digest != ref.at("sha256").get<std::string>()) {
      throw NetworkError(NetErrc::kChecksumMismatch, what + " blob '" + rel + "'");
    }
  }
  return decode_f32_le(bytes);
}

json write_blob(const fs::path& dir, const std::string& name, std::span<const float> values) {
  const auto bytes = encode_f32_le(values);
  try {
    write_file_bytes(dir / name, bytes);
  } catch (const std::exception& e) {
    throw NetworkError(NetErrc::kIo, e.what());
  }
  return {{"path", name}, {"sha256", sha256_hex(bytes)}};
}

}  // namespace

Network load_network(const fs::path& manifest_path) {
  if (!fs::exists(manifest_path)) {
    throw NetworkError(NetErrc::kIo, "manifest '" + manifest_path.string() + "' not found");
  }
  json doc;
  try {
    doc = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw NetworkError(NetErrc::kMalformedManifest, e.what());
  }
  const fs::path base = manifest_path.parent_path();
  Network net;
  try {
    net.class_count = doc.at("class_count").get<int>();
    for (const json& jl : doc.at("layers")) {
      LayerDesc l = layer_from_json(jl);
      net.layers.push_back(l);
      if (!l.is_matmul()) continue;
      try {
        l.validate();
      } catch (const std::invalid_argument& e) {
        throw NetworkError(NetErrc::kShapeMismatch, e.what());
      }
      const MatrixDims d = matrix_dims(l, 1);
      const std::string what = "layer " + std::to_string(net.layers.size() - 1);
      if (!jl.contains("weights")) {
        throw NetworkError(NetErrc::kMalformedManifest, what + " has no weights entry");
      }
      LayerWeights lw;
      lw.kernels = Matrix<float>(d.c, d.p, read_blob(base, jl.at("weights"), d.c * d.p, what + " weights"));
      if (jl.contains("bias")) {
        lw.bias = read_blob(base, jl.at("bias"), d.c, what + " bias");
      }
      net.weights.push_back(std::move(lw));
    }
  } catch (const json::exception& e) {
    throw NetworkError(NetErrc::kMalformedManifest, e.what());
  }
  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw NetworkError(NetErrc::kShapeMismatch, e.what());
  }
  return net;
}

void save_network(const Network& net, const fs::path& manifest_path) {
  net.validate();
  const fs::path dir = manifest_path.parent_path().empty() ? fs::path(".") : manifest_path.parent_path();
  fs::create_directories(dir);
  const std::string stem = manifest_path.stem().string();
  json doc;
  doc["format"] = "cascadecnn-network";
  doc["version"] = 1;
  doc["class_count"] = net.class_count;
  json layers = json::array();
  std::size_t mm = 0;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    json jl = layer_to_json(net.layers[i]);
    if (net.layers[i].is_matmul()) {
      const LayerWeights& lw = net.weights[mm++];
      const std::string prefix = stem + "_layer" + std::to_string(i);
      jl["weights"] = write_blob(dir, prefix + "_weights.bin", lw.kernels.data());
      if (!lw.bias.empty()) jl["bias"] = write_blob(dir, prefix + "_bias.bin", lw.bias);
    }
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);
  try {
    write_text_file(manifest_path, doc.dump(2) + "\n");
  } catch (const std::exception& e) {
    throw NetworkError(NetErrc::kIo, e.what());
  }
}

}  // namespace cascadecnn
