#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace benign::text {

std::string trim(std::string_view s);

// Trim plus collapse every internal whitespace run to one space. Case is kept.
std::string normalize_ws(std::string_view s);

std::string to_lower(std::string_view s);

bool contains_ci(std::string_view haystack, std::string_view needle);

// Number of UTF-8 code points; continuation bytes are not counted.
std::size_t char_count(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

bool is_blank(std::string_view s);

}  // namespace benign::text
