#include <doctest.h>

#include <cmath>
#include <set>

#include "stylebc/maze.hpp"
#include "test_support.hpp"

using namespace stylebc;

namespace {

const char* kBox =
    "#####\n"
    "#...#\n"
    "#...#\n"
    "#S.G#\n"
    "#####\n";

class ConstantPolicy : public ConditionedPolicy {
public:
    explicit ConstantPolicy(Action a) : a_(a) {}
    std::size_t style_dim() const override { return 0; }
    Action act(const State&, std::span<const double>, RngStream&) const override { return a_; }

private:
    Action a_;
};

class RandomPolicy : public ConditionedPolicy {
public:
    std::size_t style_dim() const override { return 0; }
    Action act(const State&, std::span<const double>, RngStream& rng) const override {
        return {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
    }
};

// Independent reachability oracle: iterative flood fill over free cells.
std::set<std::pair<int, int>> flood(const MazeSpec& m, Cell from) {
    std::set<std::pair<int, int>> seen{{from.row, from.col}};
    std::vector<Cell> stack{from};
    while (!stack.empty()) {
        const Cell c = stack.back();
        stack.pop_back();
        const Cell nbs[] = {{c.row + 1, c.col}, {c.row - 1, c.col}, {c.row, c.col + 1}, {c.row, c.col - 1}};
        for (const Cell& n : nbs) {
            if (m.is_wall(n) || seen.count({n.row, n.col})) continue;
            seen.insert({n.row, n.col});
            stack.push_back(n);
        }
    }
    return seen;
}

}  // namespace

TEST_CASE("bundled medium_maze has eight reachable doors and a goal") {
    const MazeSpec m = test::medium_maze();
    CHECK(m.name == "medium_maze");
    REQUIRE(m.doors.size() == 8);
    for (int i = 1; i <= 8; ++i) CHECK(m.doors.count(i) == 1);
    const auto reach = flood(m, m.default_start);
    CHECK(reach.count({m.goal.row, m.goal.col}) == 1);
    for (const auto& [idx, cell] : m.doors) CHECK(reach.count({cell.row, cell.col}) == 1);
}

TEST_CASE("a 1x1 maze with the goal as start is valid") {
    const MazeSpec m = load_maze("G\n");
    CHECK(m.width == 1);
    CHECK(m.height == 1);
    CHECK(m.default_start == m.goal);
    CHECK(shortest_path(m, m.default_start, m.goal).size() == 1);
}

TEST_CASE("a door placed inside a wall is rejected") {
    CHECK_THROWS_WITH_AS(load_maze("#####\n#S.G#\n#####\n@door 3 0 2\n"), "door on wall cell", Error);
}

TEST_CASE("maze parse errors carry line and column") {
    try {
        load_maze("#####\n#S.x#\n#####\n");
        FAIL("expected a parse error");
    } catch (const MazeParseError& e) {
        CHECK(e.line == 2);
        CHECK(e.column == 4);
    }
    CHECK_THROWS_AS(load_maze("####\n#S.G#\n"), MazeParseError);
    CHECK_THROWS_AS(load_maze("#####\n#S..#\n#####\n"), MazeParseError);
    CHECK_THROWS_WITH_AS(load_maze("#####\n#S#G#\n#####\n"), "unreachable goal", Error);
}

TEST_CASE("render reproduces the grammar") {
    const MazeSpec m = load_maze(kBox);
    CHECK(m.render() == kBox);
    const MazeSpec again = load_maze(m.render());
    CHECK(again.wall == m.wall);
    CHECK(again.goal == m.goal);
}

TEST_CASE("fixed reset always returns the start cell center") {
    const MazeSpec m = load_maze(kBox);
    EnvConfig cfg;
    RngStream rng(1, "reset");
    for (int i = 0; i < 20; ++i) CHECK(reset(m, cfg, rng).position == State{1.5, 3.5});
}

TEST_CASE("pseudo-random reset with radius 0 equals fixed") {
    const MazeSpec m = test::medium_maze();
    EnvConfig fixed;
    EnvConfig pr;
    pr.init_mode = InitMode::pseudo_random;
    pr.init_radius = 0.0;
    RngStream a(2, "r");
    RngStream b(2, "r");
    for (int i = 0; i < 20; ++i) CHECK(reset(m, pr, a).position == reset(m, fixed, b).position);
}

TEST_CASE("pseudo-random reset stays within the radius and off walls") {
    const MazeSpec m = test::medium_maze();
    const EnvConfig cfg = env_preset("pseudo-r-init");
    RngStream rng(3, "r");
    const State s0 = cell_center(m.default_start);
    for (int i = 0; i < 500; ++i) {
        const State p = reset(m, cfg, rng).position;
        CHECK(std::hypot(p.x - s0.x, p.y - s0.y) <= 1.0 + 1e-12);
        CHECK(m.is_free(cell_of(p)));
    }
}

TEST_CASE("fully random reset is uniform over free cells") {
    const MazeSpec m = test::medium_maze();
    const EnvConfig cfg = env_preset("r-init");
    const auto cells = m.free_cells();
    const double n = 1000.0;
    const double p = 1.0 / static_cast<double>(cells.size());
    const double sigma = std::sqrt(n * p * (1.0 - p));
    std::map<std::pair<int, int>, int> counts;
    RngStream rng(4, "r");
    for (int i = 0; i < 1000; ++i) {
        const Cell c = cell_of(reset(m, cfg, rng).position);
        REQUIRE(m.is_free(c));
        ++counts[{c.row, c.col}];
    }
    double chi2 = 0.0;
    for (const Cell& c : cells) {
        const double k = counts[{c.row, c.col}];
        CHECK(std::abs(k - n * p) <= 3.0 * sigma);
        chi2 += (k - n * p) * (k - n * p) / (n * p);
    }
    // Wilson-Hilferty 0.999 quantile for cells - 1 degrees of freedom.
    const double dof = static_cast<double>(cells.size() - 1);
    const double z = 3.09;
    const double q = dof * std::pow(1.0 - 2.0 / (9.0 * dof) + z * std::sqrt(2.0 / (9.0 * dof)), 3.0);
    CHECK(chi2 < q);
}

TEST_CASE("a step in an open cell moves by step_size") {
    const MazeSpec m = load_maze(kBox);
    EnvConfig cfg;
    RngStream rng(0, "s");
    EnvState st;
    st.position = {1.5, 1.5};
    const StepOutcome o = step(m, st, {1.0, 0.0}, cfg, rng);
    CHECK(o.state.position.x == doctest::Approx(1.75).epsilon(1e-15));
    CHECK(o.state.position.y == 1.5);
    CHECK_FALSE(o.contact);
    CHECK(o.state.steps == 1);
}

TEST_CASE("a diagonal step into a wall clips x and slides along y") {
    const MazeSpec m = load_maze(kBox);
    EnvConfig cfg;
    RngStream rng(0, "s");
    EnvState st;
    st.position = {3.9, 1.5};  // the wall column starts at x = 4
    const StepOutcome o = step(m, st, {1.0, 1.0}, cfg, rng);
    CHECK(o.state.position.x == doctest::Approx(4.0 - kContactEps).epsilon(1e-15));
    CHECK(o.state.position.y == doctest::Approx(1.75).epsilon(1e-15));
    CHECK(o.contact);
}

TEST_CASE("actions are clamped before they are applied") {
    const MazeSpec m = load_maze(kBox);
    EnvConfig cfg;
    RngStream rng(0, "s");
    EnvState st;
    st.position = {1.5, 1.5};
    const StepOutcome o = step(m, st, {2.0, 0.0}, cfg, rng);
    CHECK(o.applied == Action{1.0, 0.0});
    CHECK(o.state.position.x == doctest::Approx(1.75));
}

TEST_CASE("reaching the goal radius records 0 and ends the episode") {
    const MazeSpec m = load_maze(kBox);
    EnvConfig cfg;
    RngStream rng(0, "s");
    EnvState st;
    st.position = {3.5 - 0.3, 3.5};
    const StepOutcome o = step(m, st, {0.0, 0.0}, cfg, rng);
    CHECK(o.state.done);
    CHECK(o.state.success);
    REQUIRE_FALSE(o.state.visited.empty());
    CHECK(o.state.visited.back() == 0);
    CHECK_THROWS_WITH_AS(step(m, o.state, {0, 0}, cfg, rng), "step after done", Error);
}

TEST_CASE("sticky walls hold the agent after contact") {
    const MazeSpec m = load_maze(kBox);
    EnvConfig cfg = env_preset("sticky");
    RngStream rng(0, "s");
    EnvState st;
    st.position = {3.9, 1.5};
    auto o = step(m, st, {1.0, 0.0}, cfg, rng);
    REQUIRE(o.contact);
    const State held = o.state.position;
    for (int k = 0; k < cfg.stick_steps; ++k) {
        o = step(m, o.state, {-1.0, 0.0}, cfg, rng);
        CHECK(o.state.position == held);
    }
    o = step(m, o.state, {-1.0, 0.0}, cfg, rng);
    CHECK(o.state.position.x < held.x);
}

TEST_CASE("a null policy idles for max_steps and fails") {
    const MazeSpec m = test::medium_maze();
    EnvConfig cfg;
    RngStream rng(9, "rollout");
    const ConstantPolicy idle({0.0, 0.0});
    const Trajectory t = rollout(m, idle, {}, cfg, rng);
    CHECK(t.length() == static_cast<std::size_t>(cfg.max_steps));
    CHECK_FALSE(t.success);
    for (const auto& s : t.states) CHECK(s == t.states.front());
    CHECK(behavior_of(t) == kFailBehavior);
}

TEST_CASE("rollouts are pure functions of the seed") {
    const MazeSpec m = test::medium_maze();
    const RandomPolicy pol;
    for (const char* preset : {"determinist", "noise-transi", "pseudo-r-init", "r-init", "sticky"}) {
        const EnvConfig cfg = env_preset(preset);
        RngStream a(11, "rollout");
        RngStream b(11, "rollout");
        CHECK(rollout(m, pol, {}, cfg, a) == rollout(m, pol, {}, cfg, b));
    }
}

TEST_CASE("rollout rejects a style of the wrong size") {
    const MazeSpec m = load_maze(kBox);
    RngStream rng(0, "r");
    const ConstantPolicy idle({0, 0});
    const std::vector<double> z{1.0};
    CHECK_THROWS_AS(rollout(m, idle, z, EnvConfig{}, rng), Error);
}

TEST_CASE("random walks never penetrate walls and keep checkpoint lists clean") {
    const MazeSpec m = test::medium_maze();
    const RandomPolicy pol;
    for (const char* preset : {"determinist", "noise-transi", "r-init", "sticky"}) {
        const EnvConfig cfg = env_preset(preset);
        for (int ep = 0; ep < 40; ++ep) {
            RngStream rng(static_cast<std::uint64_t>(ep), preset);
            const Trajectory t = rollout(m, pol, {}, cfg, rng);
            CHECK(t.length() <= static_cast<std::size_t>(cfg.max_steps));
            for (const auto& s : t.states) {
                // Anything closer than contact_eps to a wall face still maps to a free cell.
                CHECK(m.is_free(cell_of(s)));
            }
            std::set<int> uniq(t.checkpoints.begin(), t.checkpoints.end());
            CHECK(uniq.size() == t.checkpoints.size());
            if (t.success) CHECK(t.checkpoints.back() == 0);
        }
    }
}

TEST_CASE("env presets and config validation") {
    CHECK(env_preset("determinist").deterministic());
    CHECK_FALSE(env_preset("noise-transi").deterministic());
    CHECK(env_preset("noise-transi").transition_noise_sigma == 0.05);
    CHECK_FALSE(env_preset("pseudo-r-init").deterministic());
    CHECK_THROWS_AS(env_preset("windy"), Error);
    EnvConfig bad;
    bad.max_steps = 0;
    bad.goal_radius = -1.0;
    std::vector<std::string> problems;
    bad.check(problems);
    CHECK(problems.size() == 2);
}

TEST_CASE("env config JSON round-trips and rejects unknown keys") {
    const EnvConfig cfg = env_preset("pseudo-r-init");
    const EnvConfig back = env_config_from_json(to_json(cfg));
    CHECK(to_json(back) == to_json(cfg));
    CHECK_THROWS_AS(env_config_from_json(nlohmann::json{{"wind", 1}}), Error);
    CHECK_THROWS_AS(env_config_from_json(nlohmann::json{{"max_steps", "many"}}), Error);
}
