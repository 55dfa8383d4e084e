#include "benign/json.hpp"

#include "benign/error.hpp"

namespace benign {

Json parse_json(std::string_view text) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::parse_error, e.what());
    }
}

std::string dump_line(const Json& j) {
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
}

const Json& require(const Json& obj, const char* key) {
    if (!obj.is_object()) throw Error(Errc::parse_error, "object expected");
    auto it = obj.find(key);
    if (it == obj.end()) throw Error(Errc::parse_error, std::string("missing field: ") + key);
    return *it;
}

std::string require_string(const Json& obj, const char* key) {
    const Json& v = require(obj, key);
    if (!v.is_string()) throw Error(Errc::parse_error, std::string("field is not a string: ") + key);
    return v.get<std::string>();
}

std::string optional_string(const Json& obj, const char* key, std::string fallback) {
    if (!obj.is_object()) return fallback;
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return fallback;
    if (!it->is_string()) throw Error(Errc::parse_error, std::string("field is not a string: ") + key);
    return it->get<std::string>();
}

}  // namespace benign
