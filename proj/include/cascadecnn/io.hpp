#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cascadecnn/netmodel.hpp"

namespace cascadecnn {

/// Labelled samples. `labels` may be empty for unlabelled input batches.
struct EvalSet {
  std::vector<Volume> inputs;
  std::vector<int> labels;

  std::size_t size() const { return inputs.size(); }
  bool labelled() const { return labels.size() == inputs.size() && !inputs.empty(); }
  EvalSet subset(std::size_t begin, std::size_t count) const;
};

/// Input batch on disk: `<stem>.bin` holds count x C x H x W little-endian
/// binary32 values, `<stem>.json` is the sidecar {"shape": [C, H, W], "count": N}.
std::vector<Volume> load_input_batch(const std::filesystem::path& bin_path);
void save_input_batch(std::span<const Volume> inputs, const std::filesystem::path& bin_path);

/// Eval-set directory: inputs.bin + inputs.json + labels.csv (sample_id,class_id).
EvalSet load_eval_set(const std::filesystem::path& dir);
void save_eval_set(const EvalSet& set, const std::filesystem::path& dir);

std::string sha256_hex(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_f32_le(std::span<const float> values);
std::vector<float> decode_f32_le(std::span<const std::uint8_t> bytes);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

}  // namespace cascadecnn
