#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stylebc {

/// Base exception for every recoverable error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Position in maze units; x grows with the column, y with the row.
struct State {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const State&, const State&) = default;
};

/// Per-step displacement command in [-1, 1] per component after clamping.
struct Action {
    double dx = 0.0;
    double dy = 0.0;
    friend bool operator==(const Action&, const Action&) = default;
};

Action clamp_action(Action a);

struct Trajectory {
    int id = 0;
    std::vector<State> states;    // T + 1 entries
    std::vector<Action> actions;  // T entries
    std::vector<int> checkpoints; // first-visit order, goal is 0
    bool success = false;

    std::size_t length() const { return actions.size(); }
    /// Throws Error if the structural invariants do not hold.
    void validate() const;
    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct DatasetMeta {
    std::string maze_name;
    std::string generator;
    std::optional<int> ground_truth_k;
    std::uint64_t seed = 0;
    friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

struct Dataset {
    std::vector<Trajectory> trajectories;
    DatasetMeta meta;

    std::size_t size() const { return trajectories.size(); }
    /// Checks contiguous ids and each trajectory's invariants.
    void validate() const;
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Behavior label: visited checkpoint indices concatenated in first-visit
/// order, or "FAIL" for a run that never reached the goal.
using BehaviorId = std::string;
inline const BehaviorId kFailBehavior = "FAIL";

BehaviorId behavior_of(const Trajectory& traj);
BehaviorId behavior_of(std::span<const int> checkpoints, bool success);

/// Normalized frequency distribution over behavior labels.
struct BehaviorHistogram {
    std::map<BehaviorId, double> bins;

    double mass(const BehaviorId& b) const {
        auto it = bins.find(b);
        return it == bins.end() ? 0.0 : it->second;
    }
    double total() const;
};

BehaviorHistogram histogram(std::span<const BehaviorId> behaviors);
BehaviorHistogram histogram_of(std::span<const Trajectory> trajs);

}  // namespace stylebc
