#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylebc/core.hpp"
#include "stylebc/maze.hpp"
#include "stylebc/rng.hpp"

namespace stylebc::experts {

/// A stylized expert: the checkpoint sequence it drives through (ending at
/// the goal 0), its speed and its per-step action jitter.
struct Route {
    std::vector<int> waypoints;
    double speed_scale = 1.0;
    double noise_sigma = 0.0;

    BehaviorId label() const { return behavior_of(waypoints, true); }
    void validate(const MazeSpec& maze) const;
};

struct RecipeEntry {
    Route route;
    int count = 1;
};

/// Mixture of routes with explicit counts; the counts play the role of the
/// expert-selection distribution.
struct DatasetRecipe {
    std::string name;
    std::string maze_name;
    std::vector<RecipeEntry> routes;
    EnvConfig env;
    std::uint64_t seed = 0;

    int total() const;
};

DatasetRecipe recipe_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetRecipe& r);
DatasetRecipe load_recipe(const std::filesystem::path& path);

/// Precomputed path for one route: string-pulled cell-center points from
/// the start through every waypoint. `checkpoint_at[k]` holds the waypoint
/// index reached at point k, or -1.
struct ExpertPlan {
    std::vector<State> points;
    std::vector<int> checkpoint_at;
};

ExpertPlan plan_route(const MazeSpec& maze, const Route& route, State start);

/// Cursor into an ExpertPlan.
struct Progress {
    std::size_t cursor = 0;
};

/// Distance at which the expert switches to the next path point.
inline constexpr double kAdvanceRadius = 0.3;

Action expert_action(const ExpertPlan& plan, const Route& route, State pos, Progress& progress,
                     RngStream& rng, double step_size = 0.25);

/// Runs one expert episode.
Trajectory run_expert(const MazeSpec& maze, const Route& route, const EnvConfig& env, RngStream& rng);

/// Generates the dataset; throws Error("route failed: ...") if any expert
/// episode misses the goal or produces a different behavior label.
Dataset generate_dataset(const MazeSpec& maze, const DatasetRecipe& recipe);

}  // namespace stylebc::experts
