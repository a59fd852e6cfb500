#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "stylebc/core.hpp"

namespace stylebc {

// JSON Lines dataset format. Line 1 is the header
//   {"format":"stylebc-dataset","version":1,"meta":{...}}
// and each further line holds one trajectory object.

inline constexpr const char* kDatasetFormat = "stylebc-dataset";
inline constexpr int kDatasetVersion = 1;

nlohmann::json to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetMeta& meta);
DatasetMeta meta_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BehaviorHistogram& h);

void write_dataset(std::ostream& out, const Dataset& ds);
void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

/// Appends one trajectory line to an existing dataset file, creating the
/// file with `meta` as header if it does not exist yet. The trajectory id is
/// rewritten to the next free index; the assigned id is returned.
int append_trajectory(const std::filesystem::path& path, const DatasetMeta& meta, Trajectory traj);

}  // namespace stylebc
