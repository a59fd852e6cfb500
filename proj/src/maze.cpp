#include "stylebc/maze.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>
#include <sstream>

#include "stylebc/config.hpp"

namespace stylebc {

MazeParseError::MazeParseError(int line_, int column_, const std::string& what)
    : Error("maze parse error at line " + std::to_string(line_) + ", column " + std::to_string(column_) +
            ": " + what),
      line(line_),
      column(column_) {}

std::vector<Cell> MazeSpec::free_cells() const {
    std::vector<Cell> out;
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c)
            if (is_free({r, c})) out.push_back({r, c});
    return out;
}

Cell MazeSpec::checkpoint_cell(int index) const {
    if (index == 0) return goal;
    auto it = doors.find(index);
    if (it == doors.end()) throw Error("unknown checkpoint " + std::to_string(index));
    return it->second;
}

void MazeSpec::validate() const {
    if (width <= 0 || height <= 0) throw Error("maze has no cells");
    if (wall.size() != static_cast<std::size_t>(width * height)) throw Error("wall grid size mismatch");
    if (is_wall(goal)) throw Error("goal on wall cell");
    if (is_wall(default_start)) throw Error("start on wall cell");
    for (const auto& [idx, cell] : doors) {
        if (idx <= 0) throw Error("door indices must be >= 1 (0 is the goal)");
        if (is_wall(cell)) throw Error("door on wall cell");
    }
    if (shortest_path(*this, default_start, goal).empty()) throw Error("unreachable goal");
}

std::string MazeSpec::render() const {
    std::string out;
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const Cell cell{r, c};
            char ch = is_wall(cell) ? '#' : '.';
            if (cell == default_start) ch = 'S';
            for (const auto& [idx, dc] : doors)
                if (dc == cell) ch = idx <= 9 ? static_cast<char>('0' + idx) : '*';
            if (cell == goal) ch = 'G';
            out += ch;
        }
        out += '\n';
    }
    return out;
}

namespace {

int parse_int(const std::string& tok, int line, int col) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw MazeParseError(line, col, "expected integer, got '" + tok + "'");
    }
}

}  // namespace

MazeSpec load_maze(std::string_view text, std::string_view default_name) {
    MazeSpec m;
    m.name = std::string(default_name);
    std::vector<std::string> grid;
    struct Directive {
        int line;
        std::vector<std::string> tokens;
    };
    std::vector<Directive> directives;

    std::istringstream in{std::string(text)};
    std::string raw;
    int lineno = 0;
    bool grid_done = false;
    while (std::getline(in, raw)) {
        ++lineno;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        if (raw.empty()) {
            if (!grid.empty()) grid_done = true;
            continue;
        }
        if (raw.front() == '@') {
            grid_done = !grid.empty();
            std::istringstream ds(raw.substr(1));
            Directive d{lineno, {}};
            for (std::string tok; ds >> tok;) d.tokens.push_back(tok);
            if (d.tokens.empty()) throw MazeParseError(lineno, 1, "empty directive");
            directives.push_back(std::move(d));
            continue;
        }
        if (grid_done) throw MazeParseError(lineno, 1, "grid rows must be contiguous");
        if (!grid.empty() && raw.size() != grid.front().size())
            throw MazeParseError(lineno, static_cast<int>(std::min(raw.size(), grid.front().size())) + 1,
                                 "maze is not rectangular");
        grid.push_back(raw);
    }
    if (grid.empty()) throw MazeParseError(lineno + 1, 1, "no grid rows");

    m.height = static_cast<int>(grid.size());
    m.width = static_cast<int>(grid.front().size());
    m.wall.assign(static_cast<std::size_t>(m.width * m.height), false);
    bool have_start = false;
    bool have_goal = false;
    for (int r = 0; r < m.height; ++r) {
        for (int c = 0; c < m.width; ++c) {
            const char ch = grid[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            const int line = r + 1;
            const int col = c + 1;
            switch (ch) {
                case '#': m.wall[static_cast<std::size_t>(r * m.width + c)] = true; break;
                case '.': break;
                case 'S':
                    if (have_start) throw MazeParseError(line, col, "duplicate start");
                    m.default_start = {r, c};
                    have_start = true;
                    break;
                case 'G':
                    if (have_goal) throw MazeParseError(line, col, "duplicate goal");
                    m.goal = {r, c};
                    have_goal = true;
                    break;
                default:
                    if (ch >= '1' && ch <= '9') {
                        const int idx = ch - '0';
                        if (m.doors.count(idx)) throw MazeParseError(line, col, "duplicate door " + std::string(1, ch));
                        m.doors[idx] = {r, c};
                    } else {
                        throw MazeParseError(line, col, std::string("unexpected character '") + ch + "'");
                    }
            }
        }
    }

    for (const auto& d : directives) {
        const auto& t = d.tokens;
        auto need = [&](std::size_t n) {
            if (t.size() != n) throw MazeParseError(d.line, 2, "directive @" + t[0] + " expects " + std::to_string(n - 1) + " arguments");
        };
        if (t[0] == "name") {
            need(2);
            m.name = t[1];
        } else if (t[0] == "door") {
            need(4);
            const int idx = parse_int(t[1], d.line, 2);
            if (idx <= 0) throw MazeParseError(d.line, 2, "door index must be >= 1");
            m.doors[idx] = {parse_int(t[2], d.line, 2), parse_int(t[3], d.line, 2)};
        } else if (t[0] == "start") {
            need(3);
            m.default_start = {parse_int(t[1], d.line, 2), parse_int(t[2], d.line, 2)};
            have_start = true;
        } else if (t[0] == "goal") {
            need(3);
            m.goal = {parse_int(t[1], d.line, 2), parse_int(t[2], d.line, 2)};
            have_goal = true;
        } else {
            throw MazeParseError(d.line, 2, "unknown directive @" + t[0]);
        }
    }
    if (!have_goal) throw MazeParseError(lineno + 1, 1, "maze has no goal");
    if (!have_start) m.default_start = m.goal;
    m.validate();
    return m;
}

MazeSpec load_maze_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open maze file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return load_maze(ss.str(), path.stem().string());
}

std::vector<Cell> shortest_path(const MazeSpec& maze, Cell from, Cell to) {
    if (maze.is_wall(from) || maze.is_wall(to)) return {};
    const auto idx = [&](Cell c) { return static_cast<std::size_t>(c.row * maze.width + c.col); };
    std::vector<int> parent(static_cast<std::size_t>(maze.width * maze.height), -1);
    std::vector<bool> seen(parent.size(), false);
    std::deque<Cell> queue{from};
    seen[idx(from)] = true;
    // Fixed neighbor order keeps the chosen path deterministic.
    constexpr int dr[] = {-1, 1, 0, 0};
    constexpr int dc[] = {0, 0, -1, 1};
    while (!queue.empty()) {
        const Cell cur = queue.front();
        queue.pop_front();
        if (cur == to) break;
        for (int k = 0; k < 4; ++k) {
            const Cell nb{cur.row + dr[k], cur.col + dc[k]};
            if (maze.is_wall(nb) || seen[idx(nb)]) continue;
            seen[idx(nb)] = true;
            parent[idx(nb)] = static_cast<int>(idx(cur));
            queue.push_back(nb);
        }
    }
    if (!seen[idx(to)]) return {};
    std::vector<Cell> path{to};
    for (int p = parent[idx(to)]; p >= 0; p = parent[static_cast<std::size_t>(p)])
        path.push_back({p / maze.width, p % maze.width});
    std::reverse(path.begin(), path.end());
    return path;
}

void EnvConfig::validate() const {
    config::Violations v;
    check(v);
    config::raise_if_any(v);
}

void EnvConfig::check(std::vector<std::string>& out, const std::string& scope) const {
    auto bad = [&](std::string_view key, const std::string& what) { out.push_back(config::scoped(scope, key) + what); };
    if (max_steps < 1) bad("max_steps", " must be >= 1");
    if (!(checkpoint_radius > 0.0)) bad("checkpoint_radius", " must be > 0");
    if (!(goal_radius > 0.0)) bad("goal_radius", " must be > 0");
    if (!(transition_noise_sigma >= 0.0)) bad("transition_noise_sigma", " must be >= 0");
    if (stick_steps < 0) bad("stick_steps", " must be >= 0");
    if (!(init_radius >= 0.0)) bad("init_radius", " must be >= 0");
    if (!(step_size > 0.0)) bad("step_size", " must be > 0");
}

EnvConfig env_preset(std::string_view name) {
    EnvConfig cfg;
    if (name == "determinist" || name == "deterministic") return cfg;
    if (name == "pseudo-r-init") {
        cfg.init_mode = InitMode::pseudo_random;
        cfg.init_radius = 1.0;
        return cfg;
    }
    if (name == "r-init") {
        cfg.init_mode = InitMode::fully_random;
        return cfg;
    }
    if (name == "noise-transi") {
        cfg.transition_noise_sigma = 0.05;
        return cfg;
    }
    if (name == "sticky") {
        cfg.sticky_walls = true;
        cfg.stick_steps = 3;
        return cfg;
    }
    throw Error("unknown environment preset '" + std::string(name) + "'");
}

EnvState reset(const MazeSpec& maze, const EnvConfig& cfg, RngStream& rng) {
    EnvState st;
    const State start = cell_center(maze.default_start);
    switch (cfg.init_mode) {
        case InitMode::fixed: st.position = start; break;
        case InitMode::pseudo_random: {
            if (cfg.init_radius == 0.0) {
                st.position = start;
                break;
            }
            // Uniform in the disc, rejected until the point lies in a free cell.
            for (;;) {
                const double r = cfg.init_radius * std::sqrt(rng.uniform());
                const double th = 2.0 * std::numbers::pi * rng.uniform();
                const State p{start.x + r * std::cos(th), start.y + r * std::sin(th)};
                if (maze.is_free(cell_of(p))) {
                    st.position = p;
                    break;
                }
            }
            break;
        }
        case InitMode::fully_random: {
            const auto cells = maze.free_cells();
            const Cell c = cells[rng.uniform_index(cells.size())];
            st.position = {c.col + rng.uniform(), c.row + rng.uniform()};
            break;
        }
    }
    return st;
}

namespace {

// Moves along one axis, stopping contact_eps short of the first wall cell
// crossed. Returns true on contact.
bool move_axis(const MazeSpec& maze, State& pos, double delta, bool along_x) {
    if (delta == 0.0) return false;
    double& coord = along_x ? pos.x : pos.y;
    const double other = along_x ? pos.y : pos.x;
    const int fixed_index = static_cast<int>(std::floor(other));
    const double target = coord + delta;
    const int start_index = static_cast<int>(std::floor(coord));
    const int end_index = static_cast<int>(std::floor(target));
    const int dir = delta > 0 ? 1 : -1;
    for (int i = start_index + dir; dir > 0 ? i <= end_index : i >= end_index; i += dir) {
        const Cell c = along_x ? Cell{fixed_index, i} : Cell{i, fixed_index};
        if (maze.is_wall(c)) {
            coord = dir > 0 ? i - kContactEps : i + 1 + kContactEps;
            return true;
        }
    }
    coord = target;
    return false;
}

double dist(State a, State b) { return std::hypot(a.x - b.x, a.y - b.y); }

}  // namespace

StepOutcome step(const MazeSpec& maze, const EnvState& state, Action action, const EnvConfig& cfg,
                 RngStream& rng) {
    if (state.done) throw Error("step after done");
    StepOutcome out{state, clamp_action(action), false};
    EnvState& st = out.state;

    if (st.stuck_remaining > 0) {
        --st.stuck_remaining;
    } else {
        double dx = out.applied.dx * cfg.step_size;
        double dy = out.applied.dy * cfg.step_size;
        if (cfg.transition_noise_sigma > 0.0) {
            dx += rng.normal(0.0, cfg.transition_noise_sigma);
            dy += rng.normal(0.0, cfg.transition_noise_sigma);
        }
        const bool cx = move_axis(maze, st.position, dx, true);
        const bool cy = move_axis(maze, st.position, dy, false);
        out.contact = cx || cy;
        if (out.contact && cfg.sticky_walls) st.stuck_remaining = cfg.stick_steps;
    }
    ++st.steps;

    // Doors reached this step, nearest first.
    std::vector<std::pair<double, int>> hits;
    for (const auto& [idx, cell] : maze.doors) {
        if (std::find(st.visited.begin(), st.visited.end(), idx) != st.visited.end()) continue;
        const double d = dist(st.position, cell_center(cell));
        if (d <= cfg.checkpoint_radius) hits.emplace_back(d, idx);
    }
    std::sort(hits.begin(), hits.end());
    for (const auto& h : hits) st.visited.push_back(h.second);

    if (dist(st.position, cell_center(maze.goal)) <= cfg.goal_radius) {
        st.visited.push_back(0);
        st.done = true;
        st.success = true;
    } else if (st.steps >= cfg.max_steps) {
        st.done = true;
    }
    return out;
}

Trajectory rollout(const MazeSpec& maze, const ConditionedPolicy& policy, std::span<const double> z,
                   const EnvConfig& cfg, RngStream& rng) {
    if (z.size() != policy.style_dim())
        throw Error("style dimension " + std::to_string(z.size()) + " does not match policy (" +
                    std::to_string(policy.style_dim()) + ")");
    RngStream env_rng = rng.derive("env");
    RngStream policy_rng = rng.derive("policy");
    EnvState st = reset(maze, cfg, env_rng);
    Trajectory traj;
    traj.states.push_back(st.position);
    while (!st.done) {
        const Action a = policy.act(st.position, z, policy_rng);
        StepOutcome o = step(maze, st, a, cfg, env_rng);
        traj.actions.push_back(o.applied);
        st = std::move(o.state);
        traj.states.push_back(st.position);
    }
    traj.checkpoints = st.visited;
    traj.success = st.success;
    return traj;
}

}  // namespace stylebc
