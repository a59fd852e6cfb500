#include "stylebc/dataset_io.hpp"

#include <fstream>
#include <sstream>

namespace stylebc {

using nlohmann::json;

json to_json(const Trajectory& traj) {
    json states = json::array();
    for (const auto& s : traj.states) states.push_back({s.x, s.y});
    json actions = json::array();
    for (const auto& a : traj.actions) actions.push_back({a.dx, a.dy});
    return json{{"id", traj.id},
                {"states", std::move(states)},
                {"actions", std::move(actions)},
                {"checkpoints", traj.checkpoints},
                {"success", traj.success}};
}

Trajectory trajectory_from_json(const json& j) {
    Trajectory t;
    try {
        t.id = j.at("id").get<int>();
        for (const auto& s : j.at("states")) {
            if (s.size() != 2) throw Error("state must have 2 components");
            t.states.push_back({s[0].get<double>(), s[1].get<double>()});
        }
        for (const auto& a : j.at("actions")) {
            if (a.size() != 2) throw Error("action must have 2 components");
            t.actions.push_back({a[0].get<double>(), a[1].get<double>()});
        }
        t.checkpoints = j.at("checkpoints").get<std::vector<int>>();
        t.success = j.at("success").get<bool>();
    } catch (const json::exception& e) {
        throw Error(std::string("malformed trajectory: ") + e.what());
    }
    t.validate();
    return t;
}

json to_json(const DatasetMeta& meta) {
    json j{{"maze_name", meta.maze_name}, {"generator", meta.generator}, {"seed", meta.seed}};
    j["ground_truth_K"] = meta.ground_truth_k ? json(*meta.ground_truth_k) : json(nullptr);
    return j;
}

DatasetMeta meta_from_json(const json& j) {
    DatasetMeta m;
    m.maze_name = j.value("maze_name", std::string{});
    m.generator = j.value("generator", std::string{});
    m.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("ground_truth_K") && !j["ground_truth_K"].is_null())
        m.ground_truth_k = j["ground_truth_K"].get<int>();
    return m;
}

json to_json(const BehaviorHistogram& h) {
    json j = json::object();
    for (const auto& [b, m] : h.bins) j[b] = m;
    return j;
}

void write_dataset(std::ostream& out, const Dataset& ds) {
    json header{{"format", kDatasetFormat}, {"version", kDatasetVersion}, {"meta", to_json(ds.meta)}};
    out << header.dump() << '\n';
    for (const auto& t : ds.trajectories) out << to_json(t).dump() << '\n';
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    write_dataset(out, ds);
}

Dataset read_dataset(std::istream& in) {
    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!have_header) {
            if (j.value("format", std::string{}) != kDatasetFormat)
                throw Error("dataset line 1: missing stylebc-dataset header");
            if (j.value("version", 0) != kDatasetVersion)
                throw Error("dataset line 1: unsupported version");
            ds.meta = meta_from_json(j.value("meta", json::object()));
            have_header = true;
            continue;
        }
        try {
            ds.trajectories.push_back(trajectory_from_json(j));
        } catch (const Error& e) {
            throw Error("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_header) throw Error("dataset is empty");
    ds.validate();
    return ds;
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open dataset " + path.string());
    return read_dataset(in);
}

int append_trajectory(const std::filesystem::path& path, const DatasetMeta& meta, Trajectory traj) {
    int next_id = 0;
    if (std::filesystem::exists(path)) {
        next_id = static_cast<int>(read_dataset(path).size());
    } else {
        Dataset empty;
        empty.meta = meta;
        write_dataset(path, empty);
    }
    traj.id = next_id;
    traj.validate();
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot append to " + path.string());
    out << to_json(traj).dump() << '\n';
    return next_id;
}

}  // namespace stylebc
