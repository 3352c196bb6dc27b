#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pcbdet/tensor.hpp"

namespace pcbdet {

/// Ordered (name, tensor) list; order is preserved through save/load.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian "PCBD" container:
///   magic "PCBD", u32 version, u32 count,
///   per tensor: u32 name_len, name bytes, u32 rank, u32 dims[rank], f64 data[].
std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

/// Lookup helper; throws std::out_of_range naming the missing entry.
const Tensor& find_tensor(const NamedTensors& tensors, const std::string& name);

}  // namespace pcbdet
