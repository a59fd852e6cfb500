#include "stylebc/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>

#include "stylebc/config.hpp"
#include "stylebc/kernels.hpp"

namespace stylebc::training {

using nlohmann::json;

std::string algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::bc: return "bc";
        case Algorithm::zbc: return "zbc";
        case Algorithm::wzbc: return "wzbc";
    }
    return "zbc";
}

Algorithm parse_algorithm(const std::string& s) {
    if (s == "bc" || s == "BC") return Algorithm::bc;
    if (s == "zbc" || s == "ZBC") return Algorithm::zbc;
    if (s == "wzbc" || s == "WZBC") return Algorithm::wzbc;
    throw Error("unknown algorithm '" + s + "' (expected bc, zbc or wzbc)");
}

void TrainConfig::validate() const {
    config::Violations v;
    check(v);
    config::raise_if_any(v);
}

void TrainConfig::check(std::vector<std::string>& out, const std::string& scope) const {
    auto bad = [&](std::string_view key, const std::string& what) { out.push_back(config::scoped(scope, key) + what); };
    if (batch_size < 1) bad("batch_size", " must be >= 1");
    if (!(relabel_p >= 0.0 && relabel_p <= 1.0)) bad("relabel_p", " must be in [0, 1]");
    if (!(beta >= 0.0)) bad("beta", " must be >= 0");
    if (!(learning_rate > 0.0)) bad("learning_rate", " must be > 0");
    if (log_every < 1) bad("log_every", " must be >= 1");
    if (hidden_dim < 1) bad("hidden_dim", " must be >= 1");
    if (num_hidden < 1) bad("num_hidden", " must be >= 1");
    if (algorithm != Algorithm::bc && style_dim < 1) bad("style_dim", " must be >= 1");
}

void TrainConfig::merge_json(const json& j, std::vector<std::string>& out, const std::string& scope) {
    if (!j.is_object()) {
        out.push_back(scope + ": expected a JSON object");
        return;
    }
    config::reject_unknown(j,
                           {"algorithm", "steps", "batch_size", "beta", "relabel_p", "learning_rate", "seed",
                            "log_every", "eval_every", "style_dim", "hidden_dim", "num_hidden", "residual_every"},
                           scope, out);
    std::string algo;
    config::read(j, "algorithm", algo, scope, out);
    if (!algo.empty()) {
        try {
            algorithm = parse_algorithm(algo);
        } catch (const Error& e) {
            out.push_back(config::scoped(scope, "algorithm") + ": " + e.what());
        }
    }
    config::read(j, "steps", steps, scope, out);
    config::read(j, "batch_size", batch_size, scope, out);
    config::read(j, "beta", beta, scope, out);
    config::read(j, "relabel_p", relabel_p, scope, out);
    config::read(j, "learning_rate", learning_rate, scope, out);
    config::read(j, "seed", seed, scope, out);
    config::read(j, "log_every", log_every, scope, out);
    config::read(j, "eval_every", eval_every, scope, out);
    config::read(j, "style_dim", style_dim, scope, out);
    config::read(j, "hidden_dim", hidden_dim, scope, out);
    config::read(j, "num_hidden", num_hidden, scope, out);
    config::read(j, "residual_every", residual_every, scope, out);
}

json TrainConfig::to_json() const {
    return json{{"algorithm", algorithm_name(algorithm)},
                {"steps", steps},
                {"batch_size", batch_size},
                {"beta", beta},
                {"relabel_p", relabel_p},
                {"learning_rate", learning_rate},
                {"seed", seed},
                {"log_every", log_every},
                {"eval_every", eval_every},
                {"style_dim", style_dim},
                {"hidden_dim", hidden_dim},
                {"num_hidden", num_hidden},
                {"residual_every", residual_every}};
}

TrainConfig TrainConfig::from_json(const json& j, TrainConfig c) {
    config::Violations v;
    c.merge_json(j, v);
    c.check(v);
    config::raise_if_any(v);
    return c;
}

std::vector<BatchElement> sample_batch(const Dataset& ds, const TrainConfig& cfg,
                                       const similarity::DissimilarityMatrix* nu, RngStream& rng) {
    const std::size_t n = ds.size();
    if (n == 0) throw Error("cannot sample from an empty dataset");
    if (cfg.algorithm == Algorithm::wzbc) {
        if (nu == nullptr) throw Error("WZBC sampling needs a dissimilarity matrix");
        if (nu->n != n) throw Error("dissimilarity matrix does not match dataset size");
    }
    std::vector<BatchElement> batch(cfg.batch_size);
    for (auto& e : batch) {
        e.data_index = rng.uniform_index(n);
        e.style_index = e.data_index;
        if (cfg.algorithm == Algorithm::wzbc) {
            const double u = rng.uniform();
            if (n > 1 && u < cfg.relabel_p) {
                std::size_t j = rng.uniform_index(n - 1);
                if (j >= e.data_index) ++j;
                e.style_index = j;
                e.stop_grad = true;
            }
            e.weight = similarity::weight((*nu)(e.data_index, e.style_index), cfg.beta);
        }
        const Trajectory& tr = ds.trajectories[e.data_index];
        e.t = rng.uniform_index(tr.actions.size());
        e.s = tr.states[e.t];
        e.a = tr.actions[e.t];
    }
    return batch;
}

std::vector<BatchElement> as_zbc(std::vector<BatchElement> batch) {
    for (auto& e : batch) {
        const bool own = e.data_index == e.style_index;
        e.weight = own ? 1.0 : 0.0;
        e.stop_grad = !own;
    }
    return batch;
}

std::vector<neural::LossItem> to_loss_items(std::span<const BatchElement> batch) {
    std::vector<neural::LossItem> items;
    items.reserve(batch.size());
    for (const auto& e : batch) items.push_back({e.s, e.a, e.style_index, e.weight, e.stop_grad});
    return items;
}

neural::ArchConfig arch_for(const TrainConfig& cfg, const Dataset& ds) {
    neural::ArchConfig a;
    a.style_dim = cfg.style_dim;
    a.hidden_dim = cfg.hidden_dim;
    a.num_hidden = cfg.num_hidden;
    a.residual_every = cfg.residual_every;
    a.use_style = cfg.algorithm != Algorithm::bc;
    // Per-axis standardization over every demonstrated state.
    double n = 0.0, sum[2] = {0.0, 0.0}, sq[2] = {0.0, 0.0};
    for (const auto& t : ds.trajectories)
        for (const auto& s : t.states) {
            n += 1.0;
            sum[0] += s.x;
            sum[1] += s.y;
            sq[0] += s.x * s.x;
            sq[1] += s.y * s.y;
        }
    for (int k = 0; k < 2; ++k) {
        if (n == 0.0) break;
        const double mean = sum[k] / n;
        const double var = sq[k] / n - mean * mean;
        a.obs_offset[k] = mean;
        a.obs_scale[k] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
    return a;
}

Trainer::Trainer(neural::Model model, double learning_rate)
    : model_(std::move(model)), opt_(neural::make_optimizer(model_, learning_rate)) {}

double Trainer::train_step(std::span<const BatchElement> batch) {
    const auto items = to_loss_items(batch);
    double loss = 0.0;
    try {
        loss = neural::loss_and_gradients(model_, items, grads_);
    } catch (const Error& e) {
        throw Error(std::string(e.what()) + " at step " + std::to_string(opt_.step));
    }
#ifndef NDEBUG
    // Relabeled styles must not receive gradient.
    if (model_.policy.arch().use_style) {
        std::vector<bool> own(model_.codebook.rows, false);
        for (const auto& e : batch)
            if (!e.stop_grad) own[e.style_index] = true;
        for (std::size_t r = 0; r < own.size(); ++r)
            if (!own[r])
                for (std::size_t c = 0; c < model_.codebook.dim; ++c)
                    if (grads_.codebook[r * model_.codebook.dim + c] != 0.0)
                        throw Error("stop-gradient violated on codebook row " + std::to_string(r));
    }
#endif
    neural::opt_step(opt_, model_, grads_);
    return loss;
}

json TrainReport::to_json() const {
    json curve = json::array();
    for (const auto& p : loss_curve) curve.push_back({{"step", p.step}, {"loss", p.loss}});
    return json{{"config", config.to_json()},
                {"loss_curve", curve},
                {"wall_seconds", wall_seconds},
                {"checkpoint", checkpoint_path},
                {"kernels", kernel_backend}};
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg,
                  const similarity::DissimilarityMatrix* nu, const EvalHook& hook) {
    cfg.validate();
    if (ds.size() == 0) throw Error("training dataset is empty");
    similarity::DissimilarityMatrix own_nu;
    if (cfg.algorithm == Algorithm::wzbc && nu == nullptr) {
        own_nu = similarity::dissimilarity_matrix(ds);
        nu = &own_nu;
    }

    const auto t0 = std::chrono::steady_clock::now();
    const RngStream root(cfg.seed, "train");
    RngStream init_rng = root.derive("init");
    Trainer trainer(neural::init(arch_for(cfg, ds), ds.size(), init_rng), cfg.learning_rate);

    TrainResult result;
    result.report.config = cfg;
    result.report.kernel_backend = std::string(kernels::backend_name(kernels::active_backend()));
    double window = 0.0;
    std::size_t window_n = 0;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        RngStream rng = root.derive("batch", step);
        const auto batch = sample_batch(ds, cfg, nu, rng);
        window += trainer.train_step(batch);
        ++window_n;
        if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps) {
            result.report.loss_curve.push_back({step + 1, window / static_cast<double>(window_n)});
            window = 0.0;
            window_n = 0;
        }
        if (hook && cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) hook(step + 1, trainer.model());
    }
    result.model = std::move(trainer.model());
    result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

void write_outputs(const std::filesystem::path& dir, TrainResult& result) {
    std::filesystem::create_directories(dir);
    const auto ck = dir / "checkpoint.swr";
    neural::save_checkpoint(ck, result.model);
    result.report.checkpoint_path = ck.string();
    std::ofstream(dir / "report.json") << result.report.to_json().dump(2) << '\n';
    std::ofstream csv(dir / "loss.csv");
    csv << "step,loss\n" << std::setprecision(17);
    for (const auto& p : result.report.loss_curve) csv << p.step << ',' << p.loss << '\n';
}

}  // namespace stylebc::training
