#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "stylebc/core.hpp"

namespace stylebc::config {

/// Carries every problem found in a configuration, not just the first.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

private:
    std::vector<std::string> violations_;
};

using Violations = std::vector<std::string>;

/// Throws ConfigError when `v` is non-empty.
void raise_if_any(const Violations& v);

std::string scoped(const std::string& scope, std::string_view key);

void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                    const std::string& scope, Violations& out);

/// Reads j[key] into dst when present; a type mismatch is recorded instead of thrown.
template <class T>
void read(const nlohmann::json& j, std::string_view key, T& dst, const std::string& scope, Violations& out) {
    const auto it = j.find(std::string(key));
    if (it == j.end()) return;
    const nlohmann::json& v = *it;
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) return out.push_back(scoped(scope, key) + ": expected a boolean");
        dst = v.get<bool>();
    } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) return out.push_back(scoped(scope, key) + ": expected a non-negative integer");
        dst = v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) return out.push_back(scoped(scope, key) + ": expected an integer");
        dst = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) return out.push_back(scoped(scope, key) + ": expected a number");
        dst = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) return out.push_back(scoped(scope, key) + ": expected a string");
        dst = v.get<std::string>();
    } else {
        try {
            dst = v.get<T>();
        } catch (const nlohmann::json::exception&) {
            out.push_back(scoped(scope, key) + ": wrong type");
        }
    }
}

}  // namespace stylebc::config
