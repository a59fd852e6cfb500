#include "stylebc/config.hpp"
#include "stylebc/maze.hpp"

namespace stylebc {

using nlohmann::json;

namespace {

const char* init_mode_name(InitMode m) {
    switch (m) {
        case InitMode::fixed: return "fixed";
        case InitMode::pseudo_random: return "pseudo_random";
        case InitMode::fully_random: return "fully_random";
    }
    return "fixed";
}

InitMode init_mode_from(const std::string& s) {
    if (s == "fixed") return InitMode::fixed;
    if (s == "pseudo_random") return InitMode::pseudo_random;
    if (s == "fully_random") return InitMode::fully_random;
    throw Error("unknown init_mode '" + s + "'");
}

}  // namespace

void EnvConfig::merge_json(const json& j, std::vector<std::string>& out, const std::string& scope) {
    if (!j.is_object()) {
        out.push_back(scope + ": expected a JSON object");
        return;
    }
    config::reject_unknown(j,
                           {"init_mode", "init_radius", "transition_noise_sigma", "sticky_walls", "stick_steps",
                            "max_steps", "checkpoint_radius", "goal_radius", "step_size", "seed"},
                           scope, out);
    std::string mode;
    config::read(j, "init_mode", mode, scope, out);
    if (!mode.empty()) {
        try {
            init_mode = init_mode_from(mode);
        } catch (const Error& e) {
            out.push_back(config::scoped(scope, "init_mode") + ": " + e.what());
        }
    }
    config::read(j, "init_radius", init_radius, scope, out);
    config::read(j, "transition_noise_sigma", transition_noise_sigma, scope, out);
    config::read(j, "sticky_walls", sticky_walls, scope, out);
    config::read(j, "stick_steps", stick_steps, scope, out);
    config::read(j, "max_steps", max_steps, scope, out);
    config::read(j, "checkpoint_radius", checkpoint_radius, scope, out);
    config::read(j, "goal_radius", goal_radius, scope, out);
    config::read(j, "step_size", step_size, scope, out);
    config::read(j, "seed", seed, scope, out);
}

EnvConfig env_config_from_json(const json& j, EnvConfig cfg) {
    config::Violations v;
    cfg.merge_json(j, v);
    cfg.check(v);
    config::raise_if_any(v);
    return cfg;
}

json to_json(const EnvConfig& cfg) {
    return json{{"init_mode", init_mode_name(cfg.init_mode)},
                {"init_radius", cfg.init_radius},
                {"transition_noise_sigma", cfg.transition_noise_sigma},
                {"sticky_walls", cfg.sticky_walls},
                {"stick_steps", cfg.stick_steps},
                {"max_steps", cfg.max_steps},
                {"checkpoint_radius", cfg.checkpoint_radius},
                {"goal_radius", cfg.goal_radius},
                {"step_size", cfg.step_size},
                {"seed", cfg.seed}};
}

}  // namespace stylebc
