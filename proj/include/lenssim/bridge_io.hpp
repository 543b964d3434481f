#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lenssim/bridge.hpp"

namespace lenssim {

// Weight file, little-endian:
//   "PALW" | version u32 | record count u32
//   then per record: name_len u32 | name | layout_len u32 | layout | ndim u32
//   | dims u32[ndim] | prod(dims) f32
// Layout strings name the axis order, e.g. "OIHW", "OI", "C".
//
// Tensor dump, little-endian:
//   "FTNS" | version u32 | ndim u32 | dims u32[ndim] | prod(dims) f32

struct ParameterRecord {
  std::string name;
  std::string layout;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

std::vector<ParameterRecord> weight_records(const BridgeWeights<double>& w);
BridgeWeights<double> weights_from_records(const std::vector<ParameterRecord>& records);

std::vector<std::uint8_t> encode_weights(const BridgeWeights<double>& w);
BridgeWeights<double> decode_weights(std::span<const std::uint8_t> bytes);
void write_weights(const std::filesystem::path& path, const BridgeWeights<double>& w);
BridgeWeights<double> read_weights(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_tensor(const FeatureTensor<double>& t);
FeatureTensor<double> decode_tensor(std::span<const std::uint8_t> bytes);
void write_tensor(const std::filesystem::path& path, const FeatureTensor<double>& t);
FeatureTensor<double> read_tensor(const std::filesystem::path& path);

}  // namespace lenssim
