#include "stylebc/experts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace stylebc::experts {

using nlohmann::json;

void Route::validate(const MazeSpec& maze) const {
    if (waypoints.empty() || waypoints.back() != 0) throw Error("route must end at the goal (checkpoint 0)");
    if (!(speed_scale > 0.0 && speed_scale <= 1.0)) throw Error("speed_scale must be in (0, 1]");
    if (noise_sigma < 0.0) throw Error("noise_sigma must be >= 0");
    std::set<int> seen;
    Cell from = maze.default_start;
    for (int w : waypoints) {
        if (!seen.insert(w).second) throw Error("route " + label() + " repeats checkpoint " + std::to_string(w));
        const Cell to = maze.checkpoint_cell(w);
        if (shortest_path(maze, from, to).empty())
            throw Error("route " + label() + ": checkpoint " + std::to_string(w) + " unreachable");
        from = to;
    }
}

int DatasetRecipe::total() const {
    int t = 0;
    for (const auto& e : routes) t += e.count;
    return t;
}

DatasetRecipe recipe_from_json(const json& j) {
    DatasetRecipe r;
    try {
        r.name = j.value("name", std::string{"recipe"});
        r.maze_name = j.at("maze").get<std::string>();
        r.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("env")) r.env = env_config_from_json(j["env"]);
        for (const auto& e : j.at("routes")) {
            RecipeEntry entry;
            entry.route.waypoints = e.at("waypoints").get<std::vector<int>>();
            entry.route.speed_scale = e.value("speed_scale", 1.0);
            entry.route.noise_sigma = e.value("noise_sigma", 0.0);
            entry.count = e.value("count", 1);
            if (entry.count < 1) throw Error("route count must be >= 1");
            r.routes.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        throw Error(std::string("invalid recipe: ") + e.what());
    }
    if (r.routes.empty()) throw Error("recipe has no routes");
    return r;
}

json to_json(const DatasetRecipe& r) {
    json routes = json::array();
    for (const auto& e : r.routes)
        routes.push_back({{"waypoints", e.route.waypoints},
                          {"speed_scale", e.route.speed_scale},
                          {"noise_sigma", e.route.noise_sigma},
                          {"count", e.count}});
    return json{{"name", r.name}, {"maze", r.maze_name}, {"seed", r.seed}, {"env", to_json(r.env)}, {"routes", routes}};
}

DatasetRecipe load_recipe(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open recipe " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error("recipe " + path.string() + ": " + e.what());
    }
    return recipe_from_json(j);
}

namespace {

// True if a point agent can travel the straight segment keeping `margin`
// clearance from wall cells.
bool line_of_sight(const MazeSpec& maze, State a, State b, double margin = 0.3) {
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const int n = std::max(1, static_cast<int>(std::ceil(len / 0.05)));
    for (int k = 0; k <= n; ++k) {
        const double t = static_cast<double>(k) / n;
        const State p{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
        for (double ox : {-margin, margin})
            for (double oy : {-margin, margin})
                if (maze.is_wall(cell_of({p.x + ox, p.y + oy}))) return false;
    }
    return true;
}

}  // namespace

ExpertPlan plan_route(const MazeSpec& maze, const Route& route, State start) {
    // Dense cell-center path, tagging the cells that hold waypoints.
    std::vector<State> dense{start};
    std::vector<int> tag{-1};
    Cell from = cell_of(start);
    for (int w : route.waypoints) {
        const Cell to = maze.checkpoint_cell(w);
        const auto cells = shortest_path(maze, from, to);
        if (cells.empty()) throw Error("route " + route.label() + " unreachable from start");
        for (std::size_t k = 1; k < cells.size(); ++k) {
            dense.push_back(cell_center(cells[k]));
            tag.push_back(k + 1 == cells.size() ? w : -1);
        }
        if (cells.size() == 1) {
            dense.push_back(cell_center(to));
            tag.push_back(w);
        }
        from = to;
    }

    // String pulling: from each kept point jump to the farthest visible point,
    // never skipping a checkpoint.
    ExpertPlan plan;
    std::size_t i = 0;
    while (i + 1 < dense.size()) {
        std::size_t j = i + 1;
        while (j + 1 < dense.size() && tag[j] < 0 && line_of_sight(maze, dense[i], dense[j + 1])) ++j;
        plan.points.push_back(dense[j]);
        plan.checkpoint_at.push_back(tag[j]);
        i = j;
    }
    return plan;
}

Action expert_action(const ExpertPlan& plan, const Route& route, State pos, Progress& progress, RngStream& rng,
                     double step_size) {
    const std::size_t last = plan.points.size() - 1;
    while (progress.cursor < last) {
        const State t = plan.points[progress.cursor];
        if (std::hypot(t.x - pos.x, t.y - pos.y) >= kAdvanceRadius) break;
        ++progress.cursor;
    }
    const State target = plan.points[std::min(progress.cursor, last)];
    const double dx = target.x - pos.x;
    const double dy = target.y - pos.y;
    const double d = std::hypot(dx, dy);
    const double reach = route.speed_scale * step_size;
    Action a{0.0, 0.0};
    if (d > 0.0) {
        const double scale = d <= reach ? 1.0 / step_size : route.speed_scale / d;
        a = {dx * scale, dy * scale};
    }
    if (route.noise_sigma > 0.0) {
        a.dx += rng.normal(0.0, route.noise_sigma);
        a.dy += rng.normal(0.0, route.noise_sigma);
    }
    return clamp_action(a);
}

Trajectory run_expert(const MazeSpec& maze, const Route& route, const EnvConfig& env, RngStream& rng) {
    RngStream env_rng = rng.derive("env");
    RngStream act_rng = rng.derive("expert");
    EnvState st = reset(maze, env, env_rng);
    const ExpertPlan plan = plan_route(maze, route, st.position);
    Progress progress;
    Trajectory traj;
    traj.states.push_back(st.position);
    while (!st.done) {
        const Action a = expert_action(plan, route, st.position, progress, act_rng, env.step_size);
        StepOutcome o = step(maze, st, a, env, env_rng);
        traj.actions.push_back(o.applied);
        st = std::move(o.state);
        traj.states.push_back(st.position);
    }
    traj.checkpoints = st.visited;
    traj.success = st.success;
    return traj;
}

Dataset generate_dataset(const MazeSpec& maze, const DatasetRecipe& recipe) {
    if (recipe.routes.empty()) throw Error("recipe has no routes");
    Dataset ds;
    ds.meta.maze_name = maze.name;
    ds.meta.generator = "experts:" + recipe.name;
    ds.meta.seed = recipe.seed;
    std::set<BehaviorId> labels;
    const RngStream root(recipe.seed, "dataset/" + recipe.name);
    for (std::size_t r = 0; r < recipe.routes.size(); ++r) {
        const auto& entry = recipe.routes[r];
        entry.route.validate(maze);
        const BehaviorId label = entry.route.label();
        labels.insert(label);
        for (int rep = 0; rep < entry.count; ++rep) {
            RngStream rng = root.derive("route", r).derive("rep", static_cast<std::uint64_t>(rep));
            Trajectory t = run_expert(maze, entry.route, recipe.env, rng);
            if (!t.success) throw Error("route failed: " + label + " (repetition " + std::to_string(rep) + ")");
            const BehaviorId got = behavior_of(t);
            if (got != label)
                throw Error("route failed: " + label + " produced behavior " + got + " (repetition " +
                            std::to_string(rep) + ")");
            t.id = static_cast<int>(ds.trajectories.size());
            ds.trajectories.push_back(std::move(t));
        }
    }
    ds.meta.ground_truth_k = static_cast<int>(labels.size());
    return ds;
}

}  // namespace stylebc::experts
