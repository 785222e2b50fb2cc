#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "vcl/net.hpp"

namespace vcl::ckpt {

inline constexpr char kMagic[4] = {'V', 'C', 'L', 'B'};
inline constexpr std::uint32_t kVersion = 1;

/// Layout: "VCLB", u32 version, u64 config-JSON length, config JSON, then every
/// parameter as a little-endian IEEE double in for_each_tensor order.
std::string serialize(const net::ModelParams& params);
/// Throws FormatError on bad magic, unsupported version or truncation.
net::ModelParams deserialize(std::string_view bytes);

void save(const net::ModelParams& params, const std::string& path);
net::ModelParams load(const std::string& path);

/// Byte count of everything before the parameter block.
std::size_t header_size(const net::ModelConfig& config);

}  // namespace vcl::ckpt
