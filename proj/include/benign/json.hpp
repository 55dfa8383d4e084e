#pragma once

#include <json.hpp>

#include <string>
#include <string_view>

namespace benign {

// Insertion-ordered so emitted key order is exactly the order fields are written.
using Json = nlohmann::ordered_json;

// Parses one JSON document; failures become Errc::parse_error.
Json parse_json(std::string_view text);

// Compact single-line form used for every line-delimited file.
std::string dump_line(const Json& j);

// Field accessors that raise Errc::parse_error with the field name.
const Json& require(const Json& obj, const char* key);
std::string require_string(const Json& obj, const char* key);
std::string optional_string(const Json& obj, const char* key, std::string fallback = {});

}  // namespace benign
