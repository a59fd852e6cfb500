#include "stylebc/config.hpp"

namespace stylebc::config {

namespace {

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : "; ") + s;
    return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error("invalid configuration: " + join(violations)), violations_(std::move(violations)) {}

void raise_if_any(const Violations& v) {
    if (!v.empty()) throw ConfigError(v);
}

std::string scoped(const std::string& scope, std::string_view key) {
    return scope.empty() ? std::string(key) : scope + "." + std::string(key);
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known, const std::string& scope,
                    Violations& out) {
    for (const auto& [k, _] : j.items()) {
        bool ok = false;
        for (auto name : known) ok = ok || name == k;
        if (!ok) out.push_back(scoped(scope, k) + ": unknown key");
    }
}

}  // namespace stylebc::config
