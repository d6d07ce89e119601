#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace datscore {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Derives an independent 64-bit stream seed from a master seed and a label.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index = 0);

}  // namespace datscore
