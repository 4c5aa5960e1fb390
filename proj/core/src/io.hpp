#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace ibowimg::detail {

std::string read_file(const std::filesystem::path& file);
void write_file(const std::filesystem::path& file, std::string_view bytes);

// Parses JSON, converting syntax errors into ErrorKind::kParse with the byte
// offset of the failure.
nlohmann::json parse_json(std::string_view text, std::string_view source);

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace ibowimg::detail
