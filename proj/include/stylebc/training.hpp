#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stylebc/core.hpp"
#include "stylebc/maze.hpp"
#include "stylebc/neural.hpp"
#include "stylebc/rng.hpp"
#include "stylebc/similarity.hpp"

namespace stylebc::training {

enum class Algorithm { bc, zbc, wzbc };

std::string algorithm_name(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

struct TrainConfig {
    Algorithm algorithm = Algorithm::zbc;
    std::size_t steps = 100000;
    std::size_t batch_size = 16;
    double beta = 10.0;
    double relabel_p = 0.8;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    std::size_t log_every = 100;
    std::size_t eval_every = 0;  // 0 disables the evaluation hook
    std::size_t style_dim = 10;
    std::size_t hidden_dim = 128;
    std::size_t num_hidden = 10;
    std::size_t residual_every = 2;

    void validate() const;
    void check(std::vector<std::string>& out, const std::string& scope = "train") const;
    void merge_json(const nlohmann::json& j, std::vector<std::string>& out, const std::string& scope = "train");
    nlohmann::json to_json() const;
    /// Keys absent from `j` keep their value from `base`. Unknown keys and
    /// invalid values are all reported together in one ConfigError.
    static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
    static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
};

/// One sampled training element: transition t of trajectory i cloned under
/// the style of trajectory j.
struct BatchElement {
    std::size_t data_index = 0;   // i
    std::size_t style_index = 0;  // j
    std::size_t t = 0;
    State s;
    Action a;
    double weight = 1.0;
    bool stop_grad = false;
};

/// Draws a batch. Every element independently picks i uniformly, then (WZBC
/// only) relabels to a uniform j != i with probability p, then a uniform
/// timestep of trajectory i. `nu` is required for WZBC only.
std::vector<BatchElement> sample_batch(const Dataset& ds, const TrainConfig& cfg,
                                       const similarity::DissimilarityMatrix* nu, RngStream& rng);

/// Reweights a batch to the ZBC objective: own-style elements keep weight 1,
/// relabeled elements get weight 0.
std::vector<BatchElement> as_zbc(std::vector<BatchElement> batch);

std::vector<neural::LossItem> to_loss_items(std::span<const BatchElement> batch);

/// Network shape from the config; positions are standardized with the
/// per-axis mean and standard deviation of the dataset's states.
neural::ArchConfig arch_for(const TrainConfig& cfg, const Dataset& ds);

/// Owns the model and optimizer for one training run.
class Trainer {
public:
    Trainer(neural::Model model, double learning_rate);

    /// One optimizer step on the weighted negative log-likelihood; returns
    /// the batch loss before the update.
    double train_step(std::span<const BatchElement> batch);

    const neural::Model& model() const { return model_; }
    neural::Model& model() { return model_; }
    const neural::Gradients& last_gradients() const { return grads_; }
    std::uint64_t steps_taken() const { return opt_.step; }

private:
    neural::Model model_;
    neural::OptimState opt_;
    neural::Gradients grads_;
};

struct LossPoint {
    std::size_t step = 0;
    double loss = 0.0;
};

struct TrainReport {
    TrainConfig config;
    std::vector<LossPoint> loss_curve;
    double wall_seconds = 0.0;
    std::string checkpoint_path;
    std::string kernel_backend;

    nlohmann::json to_json() const;
};

struct TrainResult {
    neural::Model model;
    TrainReport report;
};

using EvalHook = std::function<void(std::size_t step, const neural::Model&)>;

/// Full run. The batch for step k is drawn from the stream derived from
/// (seed, k), so runs are reproducible and step-aligned across algorithms.
TrainResult train(const Dataset& ds, const TrainConfig& cfg,
                  const similarity::DissimilarityMatrix* nu = nullptr, const EvalHook& hook = {});

/// Writes checkpoint.swr, report.json and loss.csv under `dir`.
void write_outputs(const std::filesystem::path& dir, TrainResult& result);

}  // namespace stylebc::training
