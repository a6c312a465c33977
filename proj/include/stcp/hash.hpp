#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace stcp {

/// Lower-case hex SHA-256.
[[nodiscard]] std::string sha256_hex(std::string_view bytes);
[[nodiscard]] std::string sha256_file(const std::filesystem::path& path);

/// SHA-256 of the compact dump (object keys are sorted by nlohmann::json).
[[nodiscard]] std::string json_hash(const nlohmann::json& j);

}  // namespace stcp
