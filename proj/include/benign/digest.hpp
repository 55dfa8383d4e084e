#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace benign {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// Stable id derived from content, used when a record arrives without one.
std::string content_id(std::string_view text);

}  // namespace benign
