#include "cascadecnn/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "cascadecnn/errors.hpp"
#include "json.hpp"

namespace cascadecnn {

namespace fs = std::filesystem;
using json = nlohmann::json;

EvalSet EvalSet::subset(std::size_t begin, std::size_t count) const {
  if (begin + count > inputs.size()) {
    throw std::out_of_range("EvalSet::subset: range exceeds set size");
  }
  EvalSet out;
  out.inputs.assign(inputs.begin() + static_cast<std::ptrdiff_t>(begin),
                    inputs.begin() + static_cast<std::ptrdiff_t>(begin + count));
  if (labels.size() == inputs.size()) {
    out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  std::ostringstream hex;
  hex << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::setw(2) << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::vector<std::uint8_t> encode_f32_le(std::span<const float> values) {
  std::vector<std::uint8_t> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) {
      out[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
  }
  return out;
}

std::vector<float> decode_f32_le(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) {
    throw std::invalid_argument("decode_f32_le: byte count not a multiple of 4");
  }
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    }
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return {buf, res.ptr};
}

namespace {

fs::path sidecar_path(const fs::path& bin_path) {
  fs::path p = bin_path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

std::vector<Volume> load_input_batch(const fs::path& bin_path) {
  const fs::path meta_path = sidecar_path(bin_path);
  if (!fs::exists(bin_path)) throw InputError("input not found: " + bin_path.string());
  if (!fs::exists(meta_path)) throw InputError("input not found: " + meta_path.string());
  const json meta = json::parse(read_text_file(meta_path));
  const auto shape = meta.at("shape").get<std::vector<int>>();
  const auto count = meta.at("count").get<std::size_t>();
  if (shape.size() != 3 || shape[0] <= 0 || shape[1] <= 0 || shape[2] <= 0) {
    throw InputError("input batch sidecar: shape must be [C, H, W]");
  }
  const std::size_t per_sample = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
  const auto values = decode_f32_le(read_file_bytes(bin_path));
  if (values.size() != per_sample * count) {
    throw InputError("input batch " + bin_path.string() + ": expected " +
                             std::to_string(per_sample * count) + " values, found " +
                             std::to_string(values.size()));
  }
  std::vector<Volume> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Volume v(shape[0], shape[1], shape[2]);
    for (std::size_t i = 0; i < per_sample; ++i) {
      v.data[i] = values[s * per_sample + i];
    }
    out.push_back(std::move(v));
  }
  return out;
}

void save_input_batch(std::span<const Volume> inputs, const fs::path& bin_path) {
  if (inputs.empty()) throw std::invalid_argument("save_input_batch: empty batch");
  const Volume& first = inputs.front();
  std::vector<float> flat;
  flat.reserve(inputs.size() * first.size());
  for (const Volume& v : inputs) {
    if (v.channels != first.channels || v.height != first.height || v.width != first.width) {
      throw std::invalid_argument("save_input_batch: inconsistent sample shapes");
    }
    for (double x : v.data) flat.push_back(static_cast<float>(x));
  }
  write_file_bytes(bin_path, encode_f32_le(flat));
  json meta;
  meta["shape"] = {first.channels, first.height, first.width};
  meta["count"] = inputs.size();
  write_text_file(sidecar_path(bin_path), meta.dump(2) + "\n");
}

EvalSet load_eval_set(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("input not found: " + dir.string());
  EvalSet set;
  set.inputs = load_input_batch(dir / "inputs.bin");
  const fs::path labels_path = dir / "labels.csv";
  if (!fs::exists(labels_path)) throw InputError("input not found: " + labels_path.string());
  std::istringstream in(read_text_file(labels_path));
  std::string line;
  std::getline(in, line);  // header
  set.labels.assign(set.inputs.size(), -1);
  std::size_t seen = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InputError("labels.csv: malformed line '" + line + "'");
    const std::size_t id = std::stoul(line.substr(0, comma));
    const int cls = std::stoi(line.substr(comma + 1));
    if (id >= set.inputs.size()) throw InputError("labels.csv: sample_id out of range");
    set.labels[id] = cls;
    ++seen;
  }
  if (seen != set.inputs.size()) {
    throw InputError("labels.csv: expected " + std::to_string(set.inputs.size()) +
                             " labels, found " + std::to_string(seen));
  }
  return set;
}

void save_eval_set(const EvalSet& set, const fs::path& dir) {
  if (!set.labelled()) throw std::invalid_argument("save_eval_set: set must be labelled");
  fs::create_directories(dir);
  save_input_batch(set.inputs, dir / "inputs.bin");
  std::string csv = "sample_id,class_id\n";
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    csv += std::to_string(i) + "," + std::to_string(set.labels[i]) + "\n";
  }
  write_text_file(dir / "labels.csv", csv);
}

}  // namespace cascadecnn
