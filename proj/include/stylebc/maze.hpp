#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stylebc/core.hpp"
#include "stylebc/rng.hpp"

namespace stylebc {

struct Cell {
    int row = 0;
    int col = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

inline State cell_center(Cell c) { return {c.col + 0.5, c.row + 0.5}; }
inline Cell cell_of(State s) {
    return {static_cast<int>(std::floor(s.y)), static_cast<int>(std::floor(s.x))};
}

/// Declarative maze layout. Walls are whole cells; doors and goal are
/// checkpoints located at cell centers, the goal being checkpoint 0.
class MazeSpec {
public:
    std::string name;
    int width = 0;
    int height = 0;
    std::vector<bool> wall;        // row-major, width * height
    std::map<int, Cell> doors;     // checkpoint index (>= 1) -> cell
    Cell goal;
    Cell default_start;

    bool in_bounds(Cell c) const { return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width; }
    /// Out-of-bounds cells count as walls.
    bool is_wall(Cell c) const { return !in_bounds(c) || wall[static_cast<std::size_t>(c.row * width + c.col)]; }
    bool is_free(Cell c) const { return !is_wall(c); }
    std::vector<Cell> free_cells() const;
    /// Cell of a checkpoint; 0 resolves to the goal.
    Cell checkpoint_cell(int index) const;

    /// Checks door/goal placement and start-to-goal reachability.
    void validate() const;
    /// Grid rendering in the maze-file grammar.
    std::string render() const;
};

class MazeParseError : public Error {
public:
    MazeParseError(int line, int column, const std::string& what);
    int line;
    int column;
};

// Maze file grammar: rows of `#` wall, `.` free, `S` start, `G` goal and
// `1`-`9` doors, rectangular and newline-separated. Optional directive lines
// follow the grid:
//   @name <text>
//   @door <index> <row> <col>
//   @start <row> <col>
//   @goal <row> <col>
// A missing `S` places the start on the goal cell.
MazeSpec load_maze(std::string_view text, std::string_view default_name = "maze");
MazeSpec load_maze_file(const std::filesystem::path& path);

/// Shortest 4-connected path over free cells, inclusive of both ends.
/// Returns an empty vector if `to` is unreachable.
std::vector<Cell> shortest_path(const MazeSpec& maze, Cell from, Cell to);

enum class InitMode { fixed, pseudo_random, fully_random };

struct EnvConfig {
    InitMode init_mode = InitMode::fixed;
    double init_radius = 1.0;               // pseudo_random only
    double transition_noise_sigma = 0.0;
    bool sticky_walls = false;
    int stick_steps = 3;
    int max_steps = 300;
    double checkpoint_radius = 0.5;
    double goal_radius = 0.5;
    double step_size = 0.25;
    std::uint64_t seed = 0;

    void validate() const;
    /// Appends every out-of-range field to `out`, keys prefixed by `scope`.
    void check(std::vector<std::string>& out, const std::string& scope = "env") const;
    /// Overlays the keys present in `j`; problems go to `out` instead of throwing.
    void merge_json(const nlohmann::json& j, std::vector<std::string>& out, const std::string& scope = "env");
    /// True when reset and step consume no randomness.
    bool deterministic() const {
        return init_mode == InitMode::fixed && transition_noise_sigma == 0.0;
    }
};

inline constexpr double kContactEps = 1e-4;

/// Named stochastic variants: "determinist", "pseudo-r-init", "r-init",
/// "noise-transi", "sticky".
EnvConfig env_preset(std::string_view name);

/// JSON keys mirror the field names; init_mode is "fixed", "pseudo_random"
/// or "fully_random". Keys absent from `j` keep their value from `base`;
/// unknown keys are rejected.
EnvConfig env_config_from_json(const nlohmann::json& j, EnvConfig base = {});
nlohmann::json to_json(const EnvConfig& cfg);

struct EnvState {
    State position;
    std::vector<int> visited;
    int steps = 0;
    bool done = false;
    bool success = false;
    int stuck_remaining = 0;
};

EnvState reset(const MazeSpec& maze, const EnvConfig& cfg, RngStream& rng);

struct StepOutcome {
    EnvState state;
    Action applied;   // clamped command
    bool contact = false;
};

/// Advances one step. Throws Error("step after done") on finished episodes.
StepOutcome step(const MazeSpec& maze, const EnvState& state, Action action, const EnvConfig& cfg,
                 RngStream& rng);

/// Anything that maps (state, style) to an action.
class ConditionedPolicy {
public:
    virtual ~ConditionedPolicy() = default;
    virtual std::size_t style_dim() const = 0;
    virtual Action act(const State& s, std::span<const double> z, RngStream& rng) const = 0;
};

Trajectory rollout(const MazeSpec& maze, const ConditionedPolicy& policy, std::span<const double> z,
                   const EnvConfig& cfg, RngStream& rng);

}  // namespace stylebc
