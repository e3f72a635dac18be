#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "evopress/errors.hpp"

namespace evopress::detail {

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline void expect_object(const nlohmann::json& j, std::string_view what) {
    if (!j.is_object()) {
        throw ConfigError(std::string(what) + ": expected a JSON object");
    }
}

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                                std::string_view what) {
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (auto a : allowed) {
            known = known || key == a;
        }
        if (!known) {
            throw ConfigError(std::string(what) + ": unknown field \"" + key + "\"");
        }
    }
}

template <typename T>
T require(const nlohmann::json& j, std::string_view key, std::string_view what) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw ConfigError(std::string(what) + ": missing field \"" + std::string(key) + "\"");
    }
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(what) + ": field \"" + std::string(key) + "\": " + e.what());
    }
}

template <typename T>
T optional_field(const nlohmann::json& j, std::string_view key, T fallback, std::string_view what) {
    if (!j.contains(key)) {
        return fallback;
    }
    return require<T>(j, key, what);
}

}  // namespace evopress::detail
