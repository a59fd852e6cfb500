#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "stylebc/core.hpp"
#include "stylebc/maze.hpp"
#include "stylebc/rng.hpp"

namespace stylebc::neural {

/// Shape of the policy network and its fixed input normalization.
struct ArchConfig {
    std::size_t style_dim = 10;
    std::size_t hidden_dim = 128;
    std::size_t num_hidden = 10;
    /// Hidden layer l (l >= k, l % k == 0) adds the output of layer l - k.
    /// 0 disables skip connections.
    std::size_t residual_every = 2;
    /// Whether the style vector is fed to the network (false for plain BC).
    bool use_style = true;
    double obs_offset[2] = {0.0, 0.0};
    double obs_scale[2] = {1.0, 1.0};

    std::size_t input_dim() const { return 2 + (use_style ? style_dim : 0); }
    void validate() const;
    nlohmann::json to_json() const;
    static ArchConfig from_json(const nlohmann::json& j);
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Layer parameter offsets into the flat parameter vector.
struct LayerView {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;  // out x in, row-major
    std::size_t bias_offset = 0;
};

/// Deep ReLU MLP: input (normalized state ++ style) -> hidden layers -> action
/// mean, plus two state-independent log standard deviations.
///
/// Flat parameter order: for each layer (stem, hidden..., output) the weight
/// matrix row-major followed by its bias, then the two log_std entries.
class MlpPolicy {
public:
    MlpPolicy() = default;
    explicit MlpPolicy(const ArchConfig& arch);

    const ArchConfig& arch() const { return arch_; }
    const std::vector<LayerView>& layers() const { return layers_; }
    std::size_t num_params() const { return params.size(); }
    std::size_t log_std_offset() const { return params.size() - 2; }
    double log_std(std::size_t k) const;

    std::vector<double> params;

private:
    ArchConfig arch_;
    std::vector<LayerView> layers_;
};

/// One trainable style row per training trajectory.
struct StyleCodebook {
    std::size_t rows = 0;
    std::size_t dim = 0;
    std::vector<double> table;

    std::span<const double> row(std::size_t i) const { return {table.data() + i * dim, dim}; }
    std::span<double> row(std::size_t i) { return {table.data() + i * dim, dim}; }
};

struct Model {
    MlpPolicy policy;
    StyleCodebook codebook;
};

/// Fan-in scaled Gaussian weights, zero biases, zero log_std, standard
/// normal codebook entries.
Model init(const ArchConfig& arch, std::size_t num_styles, RngStream& rng);

struct ActionDistribution {
    Action mean;
    double log_std[2] = {0.0, 0.0};
};

ActionDistribution forward(const MlpPolicy& policy, const State& s, std::span<const double> z);
/// Batched means: `styles` holds one style row per state (ignored when the
/// policy does not use styles).
std::vector<Action> forward_means(const MlpPolicy& policy, std::span<const State> states,
                                  std::span<const double> styles);

double gaussian_log_prob(const ActionDistribution& dist, const Action& a);
double log_prob(const MlpPolicy& policy, const State& s, std::span<const double> z, const Action& a);

/// One weighted transition in a loss batch. The style comes from codebook
/// row `style_index`; when `stop_grad` is set no gradient reaches that row.
struct LossItem {
    State s;
    Action a;
    std::size_t style_index = 0;
    double weight = 1.0;
    bool stop_grad = false;
};

struct Gradients {
    std::vector<double> policy;
    std::vector<double> codebook;
};

/// loss = -(1/B) sum_b weight_b * log pi(a_b | s_b, z_{style_b}).
double batch_loss(const Model& model, std::span<const LossItem> batch);

/// Loss and exact reverse-mode gradients. Throws Error("divergence ...") if
/// the loss is not finite.
double loss_and_gradients(const Model& model, std::span<const LossItem> batch, Gradients& grads);

/// Adaptive-moment optimizer state covering policy and codebook parameters.
struct OptimState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<double> m_policy, v_policy, m_codebook, v_codebook;
};

OptimState make_optimizer(const Model& model, double learning_rate = 1e-3);
/// Bias-corrected Adam update. Throws Error on non-finite gradients.
void opt_step(OptimState& opt, Model& model, const Gradients& grads);

/// Rollout adapter: greedy mean actions, or sampled ones when `sample` is set.
class PolicyHandle : public ConditionedPolicy {
public:
    PolicyHandle(const MlpPolicy& policy, bool sample) : policy_(&policy), sample_(sample) {}
    std::size_t style_dim() const override;
    Action act(const State& s, std::span<const double> z, RngStream& rng) const override;

private:
    const MlpPolicy* policy_;
    bool sample_;
};

// Checkpoint file: magic "SWRCK1", u64 length + arch JSON bytes, u64 |D|,
// u64 d_z, u64 parameter count, policy parameters, then |D| * d_z codebook
// entries; all integers and float64 values little-endian.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace stylebc::neural
