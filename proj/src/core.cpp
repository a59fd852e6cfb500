#include "stylebc/core.hpp"

#include <algorithm>
#include <cmath>

namespace stylebc {

Action clamp_action(Action a) {
    return {std::clamp(a.dx, -1.0, 1.0), std::clamp(a.dy, -1.0, 1.0)};
}

void Trajectory::validate() const {
    if (states.size() < 2) throw Error("trajectory " + std::to_string(id) + ": fewer than 2 states");
    if (states.size() != actions.size() + 1)
        throw Error("trajectory " + std::to_string(id) + ": expected len(states) = len(actions) + 1");
    for (const auto& s : states)
        if (!std::isfinite(s.x) || !std::isfinite(s.y))
            throw Error("trajectory " + std::to_string(id) + ": non-finite state");
    const bool ends_at_goal = !checkpoints.empty() && checkpoints.back() == 0;
    if (ends_at_goal != success)
        throw Error("trajectory " + std::to_string(id) + ": checkpoint list must end with 0 iff success");
}

void Dataset::validate() const {
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        if (trajectories[i].id != static_cast<int>(i))
            throw Error("dataset ids must be contiguous from 0 (found id " +
                        std::to_string(trajectories[i].id) + " at position " + std::to_string(i) + ")");
        trajectories[i].validate();
    }
}

BehaviorId behavior_of(std::span<const int> checkpoints, bool success) {
    if (!success) return kFailBehavior;
    const bool wide = std::any_of(checkpoints.begin(), checkpoints.end(), [](int c) { return c > 9; });
    BehaviorId out;
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        if (wide && i > 0) out += '-';
        out += std::to_string(checkpoints[i]);
    }
    return out;
}

BehaviorId behavior_of(const Trajectory& traj) { return behavior_of(traj.checkpoints, traj.success); }

double BehaviorHistogram::total() const {
    double t = 0.0;
    for (const auto& [_, m] : bins) t += m;
    return t;
}

BehaviorHistogram histogram(std::span<const BehaviorId> behaviors) {
    if (behaviors.empty()) throw Error("empty sample");
    std::map<BehaviorId, std::size_t> counts;
    for (const auto& b : behaviors) ++counts[b];
    BehaviorHistogram h;
    const double n = static_cast<double>(behaviors.size());
    for (const auto& [b, c] : counts) h.bins[b] = static_cast<double>(c) / n;
    return h;
}

BehaviorHistogram histogram_of(std::span<const Trajectory> trajs) {
    std::vector<BehaviorId> labels;
    labels.reserve(trajs.size());
    for (const auto& t : trajs) labels.push_back(behavior_of(t));
    return histogram(labels);
}

}  // namespace stylebc
