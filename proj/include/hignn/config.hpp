#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"

namespace hignn {

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view where);

/// Reads `j[key]` into `out` if present; wrong JSON types raise ConfigError.
template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out, std::string_view where);

/// 64-bit FNV-1a of the compact JSON dump, hex encoded.
std::string config_hash(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

} // namespace hignn

#include "hignn/error.hpp"

namespace hignn {

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out, std::string_view where) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(where) + "." + key + ": " + e.what());
    }
}

} // namespace hignn
