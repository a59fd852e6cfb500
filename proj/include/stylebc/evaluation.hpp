#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylebc/core.hpp"
#include "stylebc/maze.hpp"
#include "stylebc/neural.hpp"
#include "stylebc/similarity.hpp"

namespace stylebc::evaluation {

struct EvalConfig {
    std::size_t n_rollouts = 500;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    EnvConfig env;
    bool greedy = true;

    void validate() const;
    void check(std::vector<std::string>& out, const std::string& scope = "eval") const;
    void merge_json(const nlohmann::json& j, std::vector<std::string>& out, const std::string& scope = "eval");
    nlohmann::json to_json() const;
    static EvalConfig from_json(const nlohmann::json& j, EvalConfig base);
    static EvalConfig from_json(const nlohmann::json& j) { return from_json(j, EvalConfig{}); }
};

/// Styles to condition on: a uniform choice among codebook rows, or one
/// explicit vector. An empty source with no explicit vector means "no style"
/// (plain BC policies).
struct StyleSource {
    std::vector<std::size_t> rows;
    std::optional<std::vector<double>> fixed;

    static StyleSource uniform(std::size_t codebook_rows);
    static StyleSource single_row(std::size_t row) { return StyleSource{{row}, std::nullopt}; }
    static StyleSource explicit_vector(std::vector<double> z) { return StyleSource{{}, std::move(z)}; }
};

/// Default source for a model: uniform over its codebook, or none for BC.
StyleSource default_source(const neural::Model& model);

/// Rollouts with styles drawn from `source`. Episodes run in lockstep with
/// batched forward passes. Episode k uses the streams derived from (seed, k).
std::vector<Trajectory> generate(const neural::Model& model, const MazeSpec& maze, const EnvConfig& env,
                                 std::size_t n_rollouts, std::uint64_t seed, const StyleSource& source,
                                 bool greedy = true, std::vector<std::size_t>* chosen_rows = nullptr);

double l1_distance(const BehaviorHistogram& ref, const BehaviorHistogram& gen);
double success_rate(std::span<const Trajectory> trajs);

/// Weighted state-visitation mass on a res x res grid over the maze
/// bounding box, conditioned on reference trajectory `ref`.
struct DensityGrid {
    std::size_t resolution = 64;
    double width = 0.0;
    double height = 0.0;
    std::vector<double> mass;  // row-major: index = gy * resolution + gx

    double total() const;
    std::size_t cell_index(const State& s) const;
};

DensityGrid density(const Dataset& ds, const similarity::DissimilarityMatrix& nu, double beta, std::size_t ref,
                    std::size_t resolution, double width, double height);

/// Trajectory metric used for property conditioning.
using MetricFn = std::function<double(const Trajectory&)>;
void register_metric(const std::string& name, MetricFn fn);
bool has_metric(const std::string& name);

/// Psi(tau): metric(tau) in [min, max], or for metric "behavior" the label
/// lying in `labels`.
struct Property {
    std::string metric = "length";
    double min = 0.0;
    double max = 0.0;
    std::set<BehaviorId> labels;

    bool holds(const Trajectory& t) const;
    void validate() const;
    nlohmann::json to_json() const;
    static Property from_json(const nlohmann::json& j);
};

/// Uniform source over the codebook rows of trajectories satisfying the
/// property. Throws Error("property unsatisfiable on dataset") if none do.
StyleSource conditioned_styles(const Dataset& ds, const neural::Model& model, const Property& prop);

struct SeedMetrics {
    std::uint64_t seed = 0;
    double l1 = 0.0;
    double success_rate = 0.0;
    BehaviorHistogram generated;
};

struct EvalResult {
    BehaviorHistogram reference;
    std::vector<SeedMetrics> per_seed;
    double l1_mean = 0.0, l1_std = 0.0;
    double success_mean = 0.0, success_std = 0.0;

    nlohmann::json metrics_json() const;
    nlohmann::json histograms_json() const;
};

EvalResult evaluate(const neural::Model& model, const MazeSpec& maze, const Dataset& ds, const EvalConfig& cfg);
EvalResult evaluate(const neural::Model& model, const MazeSpec& maze, const Dataset& ds, const EvalConfig& cfg,
                    const StyleSource& source);

struct ControlSeed {
    std::uint64_t seed = 0;
    BehaviorHistogram free_eval;
    BehaviorHistogram controlled_eval;
    double l1_free = 0.0;        // vs property-restricted train
    double l1_controlled = 0.0;  // vs property-restricted train
    double l1_train = 0.0;       // full train vs property-restricted train
    double controlled_in_band = 0.0;  // fraction of controlled rollouts satisfying the property
    std::vector<std::size_t> controlled_lengths;
    std::vector<std::size_t> free_lengths;
};

struct ControlReport {
    Property property;
    BehaviorHistogram full_train;
    BehaviorHistogram restricted_train;
    std::vector<ControlSeed> per_seed;

    nlohmann::json to_json() const;
};

ControlReport control_report(const neural::Model& model, const MazeSpec& maze, const Dataset& ds, const Property& prop,
                             const EvalConfig& cfg);

std::pair<double, double> mean_std(std::span<const double> xs);

}  // namespace stylebc::evaluation
