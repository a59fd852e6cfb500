#include "stylebc/cli.hpp"

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "stylebc/config.hpp"
#include "stylebc/dataset_io.hpp"
#include "stylebc/evaluation.hpp"
#include "stylebc/experts.hpp"
#include "stylebc/kernels.hpp"
#include "stylebc/server.hpp"
#include "stylebc/similarity.hpp"
#include "stylebc/training.hpp"

#ifndef STYLEBC_DATA_DIR
#define STYLEBC_DATA_DIR "data"
#endif

namespace stylebc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

/// A maze given by path, or looked up by name next to `hint` and in the
/// bundled data directory.
MazeSpec resolve_maze(const std::string& path, const std::string& name, const fs::path& hint) {
    if (!path.empty()) return load_maze_file(path);
    if (name.empty()) throw Error("no maze given and none named by the input file");
    const std::vector<fs::path> candidates{hint / (name + ".txt"), hint / ".." / "mazes" / (name + ".txt"),
                                           fs::path(STYLEBC_DATA_DIR) / "mazes" / (name + ".txt")};
    for (const auto& c : candidates)
        if (fs::exists(c)) return load_maze_file(c);
    throw Error("maze '" + name + "' not found; pass --maze");
}

EnvConfig env_from_flags(const std::string& preset, const std::string& config_path) {
    EnvConfig env = preset.empty() ? EnvConfig{} : env_preset(preset);
    if (!config_path.empty()) env = env_config_from_json(read_json_file(config_path), env);
    return env;
}

void write_density_csv(const fs::path& path, const evaluation::DensityGrid& g) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "gx,gy,x,y,mass\n" << std::setprecision(17);
    const double cw = g.width / static_cast<double>(g.resolution);
    const double ch = g.height / static_cast<double>(g.resolution);
    for (std::size_t gy = 0; gy < g.resolution; ++gy)
        for (std::size_t gx = 0; gx < g.resolution; ++gx)
            out << gx << ',' << gy << ',' << (gx + 0.5) * cw << ',' << (gy + 0.5) * ch << ','
                << g.mass[gy * g.resolution + gx] << '\n';
}

json density_json(const evaluation::DensityGrid& g, double beta, std::size_t ref) {
    return json{{"resolution", g.resolution}, {"width", g.width}, {"height", g.height},
                {"beta", beta},             {"ref", ref},       {"total", g.total()},
                {"mass", g.mass}};
}

similarity::DissimilarityMatrix load_or_compute_nu(const std::string& nu_path, const Dataset& ds) {
    if (nu_path.empty()) return similarity::dissimilarity_matrix(ds);
    auto nu = similarity::read_matrix(nu_path);
    if (nu.n != ds.size()) throw Error("dissimilarity matrix size does not match the dataset");
    return nu;
}

// Namespaced run configuration: {"train": {...}, "eval": {...}}.
struct RunConfig {
    training::TrainConfig train;
    evaluation::EvalConfig eval;
};

RunConfig load_run_config(const std::string& path, config::Violations& v) {
    RunConfig rc;
    if (path.empty()) return rc;
    const json j = read_json_file(path);
    if (!j.is_object()) {
        v.push_back("config: expected a JSON object");
        return rc;
    }
    config::reject_unknown(j, {"train", "eval"}, "", v);
    if (j.contains("train")) rc.train.merge_json(j["train"], v);
    if (j.contains("eval")) rc.eval.merge_json(j["eval"], v);
    return rc;
}

struct Common {
    std::string config;
    std::string out;
    std::string kernels;
};

void apply_kernels(const std::string& name) {
    if (name.empty()) return;
    if (name == "scalar") {
        kernels::set_backend(kernels::Backend::scalar);
    } else if (name == "avx2") {
        kernels::set_backend(kernels::Backend::avx2);
    } else {
        throw Error("unknown kernel backend '" + name + "'");
    }
}

int cmd_gen_data(const std::string& recipe_path, const std::string& maze_path, std::optional<std::uint64_t> seed,
                 const std::string& out_dir, std::ostream& out) {
    auto recipe = experts::load_recipe(recipe_path);
    if (seed) recipe.seed = *seed;
    const MazeSpec maze = resolve_maze(maze_path, recipe.maze_name, fs::path(recipe_path).parent_path());
    const Dataset ds = experts::generate_dataset(maze, recipe);
    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / (recipe.name + ".jsonl");
    write_dataset(path, ds);
    const auto h = histogram_of(ds.trajectories);
    out << "wrote " << ds.size() << " trajectories (" << h.bins.size() << " behaviors) to " << path.string() << '\n';
    return kExitOk;
}

int cmd_dissim(const std::string& dataset_path, const std::string& out_dir, std::ostream& out) {
    const Dataset ds = read_dataset(fs::path(dataset_path));
    const auto nu = similarity::dissimilarity_matrix(ds);
    fs::create_directories(out_dir);
    similarity::write_matrix(fs::path(out_dir) / "nu.bin", nu);
    similarity::write_matrix_csv(fs::path(out_dir) / "nu.csv", nu);
    out << "wrote " << nu.n << "x" << nu.n << " dissimilarities (pad length " << nu.pad_length << ") to "
        << out_dir << '\n';
    return kExitOk;
}

struct TrainFlags {
    std::string algo, dataset, nu;
    std::optional<std::size_t> steps, batch_size;
    std::optional<double> beta, relabel_p, lr;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainFlags& f, const Common& c, std::ostream& out) {
    config::Violations v;
    RunConfig rc = load_run_config(c.config, v);
    auto& cfg = rc.train;
    if (!f.algo.empty()) {
        try {
            cfg.algorithm = training::parse_algorithm(f.algo);
        } catch (const Error& e) {
            v.push_back(std::string("--algo: ") + e.what());
        }
    }
    if (f.steps) cfg.steps = *f.steps;
    if (f.batch_size) cfg.batch_size = *f.batch_size;
    if (f.beta) cfg.beta = *f.beta;
    if (f.relabel_p) cfg.relabel_p = *f.relabel_p;
    if (f.lr) cfg.learning_rate = *f.lr;
    if (f.seed) cfg.seed = *f.seed;
    cfg.check(v);
    config::raise_if_any(v);

    const Dataset ds = read_dataset(fs::path(f.dataset));
    std::optional<similarity::DissimilarityMatrix> nu;
    if (cfg.algorithm == training::Algorithm::wzbc) nu = load_or_compute_nu(f.nu, ds);
    auto result = training::train(ds, cfg, nu ? &*nu : nullptr);
    training::write_outputs(c.out, result);
    out << training::algorithm_name(cfg.algorithm) << ": " << cfg.steps << " steps in " << std::fixed
        << std::setprecision(1) << result.report.wall_seconds << " s, final loss " << std::setprecision(4)
        << (result.report.loss_curve.empty() ? 0.0 : result.report.loss_curve.back().loss) << '\n';
    return kExitOk;
}

struct EvalFlags {
    std::string checkpoint, dataset, maze, env, env_config, nu;
    std::optional<std::size_t> rollouts;
    std::vector<std::uint64_t> seeds;
    bool sample = false;
    double density_beta = 10.0;
    std::size_t density_ref = 0;
    std::size_t density_resolution = 64;
};

struct EvalInputs {
    neural::Model model;
    Dataset ds;
    MazeSpec maze;
    evaluation::EvalConfig cfg;
};

EvalInputs load_eval_inputs(const EvalFlags& f, const Common& c) {
    config::Violations v;
    RunConfig rc = load_run_config(c.config, v);
    auto& cfg = rc.eval;
    if (f.rollouts) cfg.n_rollouts = *f.rollouts;
    if (!f.seeds.empty()) cfg.seeds = f.seeds;
    if (f.sample) cfg.greedy = false;
    if (!f.env.empty() || !f.env_config.empty()) {
        try {
            cfg.env = env_from_flags(f.env, f.env_config);
        } catch (const config::ConfigError& e) {
            v.insert(v.end(), e.violations().begin(), e.violations().end());
        } catch (const Error& e) {
            v.push_back(std::string("--env: ") + e.what());
        }
    }
    cfg.check(v);
    config::raise_if_any(v);
    EvalInputs in{neural::load_checkpoint(f.checkpoint), read_dataset(fs::path(f.dataset)), {}, cfg};
    in.maze = resolve_maze(f.maze, in.ds.meta.maze_name, fs::path(f.dataset).parent_path());
    if (in.model.policy.arch().use_style && in.model.codebook.rows != in.ds.size())
        throw Error("checkpoint codebook has " + std::to_string(in.model.codebook.rows) +
                    " rows but the dataset has " + std::to_string(in.ds.size()) + " trajectories");
    return in;
}

int cmd_eval(const EvalFlags& f, const Common& c, std::ostream& out) {
    const EvalInputs in = load_eval_inputs(f, c);
    if (f.density_ref >= in.ds.size()) throw Error("--density-ref out of range");
    const auto result = evaluation::evaluate(in.model, in.maze, in.ds, in.cfg);
    const auto nu = load_or_compute_nu(f.nu, in.ds);
    const auto grid = evaluation::density(in.ds, nu, f.density_beta, f.density_ref, f.density_resolution,
                                          in.maze.width, in.maze.height);
    fs::create_directories(c.out);
    write_json_file(fs::path(c.out) / "histograms.json", result.histograms_json());
    write_json_file(fs::path(c.out) / "metrics.json", result.metrics_json());
    write_density_csv(fs::path(c.out) / "density.csv", grid);
    out << std::fixed << std::setprecision(4) << "l1 " << result.l1_mean << " +- " << result.l1_std << ", success "
        << result.success_mean << " +- " << result.success_std << " over " << result.per_seed.size() << " seeds\n";
    return kExitOk;
}

struct ControlFlags {
    EvalFlags eval;
    std::string metric = "length";
    double min = 0.0, max = 0.0;
    std::vector<std::string> labels;
};

int cmd_control(const ControlFlags& f, const Common& c, std::ostream& out) {
    evaluation::Property prop;
    prop.metric = f.metric;
    prop.min = f.min;
    prop.max = f.max;
    prop.labels.insert(f.labels.begin(), f.labels.end());
    prop.validate();
    const EvalInputs in = load_eval_inputs(f.eval, c);
    const auto rep = evaluation::control_report(in.model, in.maze, in.ds, prop, in.cfg);
    fs::create_directories(c.out);
    write_json_file(fs::path(c.out) / "control.json", rep.to_json());
    out << std::fixed << std::setprecision(4);
    for (const auto& s : rep.per_seed)
        out << "seed " << s.seed << ": free l1 " << s.l1_free << ", controlled l1 " << s.l1_controlled
            << ", in band " << s.controlled_in_band << '\n';
    return kExitOk;
}

int cmd_density(const std::string& dataset_path, const std::string& maze_path, const std::string& nu_path,
                double beta, std::size_t ref, std::size_t resolution, const Common& c, std::ostream& out) {
    const Dataset ds = read_dataset(fs::path(dataset_path));
    if (ref >= ds.size()) throw Error("--ref out of range");
    const MazeSpec maze = resolve_maze(maze_path, ds.meta.maze_name, fs::path(dataset_path).parent_path());
    const auto nu = load_or_compute_nu(nu_path, ds);
    const auto grid = evaluation::density(ds, nu, beta, ref, resolution, maze.width, maze.height);
    fs::create_directories(c.out);
    write_density_csv(fs::path(c.out) / "density.csv", grid);
    write_json_file(fs::path(c.out) / "density.json", density_json(grid, beta, ref));
    out << "density grid " << resolution << "x" << resolution << ", total mass " << std::setprecision(12)
        << grid.total() << '\n';
    return kExitOk;
}

int cmd_validate_maze(const std::string& path, std::ostream& out) {
    const MazeSpec maze = load_maze_file(path);
    out << maze.name << ": " << maze.width << "x" << maze.height << ", " << maze.doors.size() << " doors\n"
        << maze.render();
    return kExitOk;
}

struct ServeFlags {
    std::string address = "127.0.0.1";
    unsigned short port = 8080;
    std::string maze, checkpoint, dataset, record, static_dir, env, env_config;
    std::uint64_t seed = 0;
};

server::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

int cmd_serve(const ServeFlags& f, std::ostream& out) {
    server::ServerOptions o;
    o.address = f.address;
    o.port = f.port;
    o.maze = load_maze_file(f.maze);
    o.env = env_from_flags(f.env, f.env_config);
    if (!f.checkpoint.empty()) o.model = neural::load_checkpoint(f.checkpoint);
    if (!f.dataset.empty()) o.dataset = read_dataset(fs::path(f.dataset));
    o.record_path = f.record;
    o.static_dir = f.static_dir;
    o.seed = f.seed;
    server::Server srv(std::move(o));
    out << "serving on http://" << f.address << ':' << srv.port() << std::endl;
    g_server = &srv;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    srv.run();
    g_server = nullptr;
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Style-conditioned imitation learning workbench", "stylebc"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--kernels", common.kernels, "Kernel backend: scalar or avx2")->check(CLI::IsMember({"scalar", "avx2"}));

    auto* gen = app.add_subcommand("gen-data", "Generate an expert dataset from a recipe");
    std::string recipe, gen_maze;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--recipe", recipe, "Recipe JSON file")->required()->check(CLI::ExistingFile);
    gen->add_option("--maze", gen_maze, "Maze file (default: resolved from the recipe)");
    gen->add_option("--seed", gen_seed, "Override the recipe seed");
    gen->add_option("--out", common.out, "Output directory")->required();

    auto* dis = app.add_subcommand("dissim", "Precompute the trajectory dissimilarity matrix");
    std::string dis_dataset;
    dis->add_option("--dataset", dis_dataset, "Dataset file")->required()->check(CLI::ExistingFile);
    dis->add_option("--out", common.out, "Output directory")->required();

    auto* tr = app.add_subcommand("train", "Train a BC, ZBC or WZBC policy");
    TrainFlags tf;
    tr->add_option("--algo", tf.algo, "bc, zbc or wzbc")->check(CLI::IsMember({"bc", "zbc", "wzbc"}));
    tr->add_option("--dataset", tf.dataset, "Dataset file")->required()->check(CLI::ExistingFile);
    tr->add_option("--nu", tf.nu, "Precomputed dissimilarity matrix (nu.bin)")->check(CLI::ExistingFile);
    tr->add_option("--steps", tf.steps, "Optimizer steps");
    tr->add_option("--batch-size", tf.batch_size, "Batch size")->check(CLI::PositiveNumber);
    tr->add_option("--beta", tf.beta, "Weight bandwidth");
    tr->add_option("--relabel-p", tf.relabel_p, "Relabel probability");
    tr->add_option("--lr", tf.lr, "Adam learning rate");
    tr->add_option("--seed", tf.seed, "Run seed");
    tr->add_option("--config", common.config, "JSON config with a \"train\" section")->check(CLI::ExistingFile);
    tr->add_option("--out", common.out, "Output directory")->required();

    auto add_eval_flags = [&](CLI::App* sub, EvalFlags& ef) {
        sub->add_option("--checkpoint", ef.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
        sub->add_option("--dataset", ef.dataset, "Training dataset file")->required()->check(CLI::ExistingFile);
        sub->add_option("--maze", ef.maze, "Maze file (default: resolved from the dataset)");
        sub->add_option("--rollouts", ef.rollouts, "Rollouts per seed")->check(CLI::PositiveNumber);
        sub->add_option("--seeds", ef.seeds, "Evaluation seeds");
        sub->add_option("--env", ef.env, "Environment preset")
            ->check(CLI::IsMember({"determinist", "pseudo-r-init", "r-init", "noise-transi", "sticky"}));
        sub->add_option("--env-config", ef.env_config, "Environment config JSON")->check(CLI::ExistingFile);
        sub->add_flag("--sample", ef.sample, "Sample actions instead of taking the mean");
        sub->add_option("--config", common.config, "JSON config with an \"eval\" section")->check(CLI::ExistingFile);
        sub->add_option("--out", common.out, "Output directory")->required();
    };

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint against its training dataset");
    EvalFlags ef;
    add_eval_flags(ev, ef);
    ev->add_option("--nu", ef.nu, "Precomputed dissimilarity matrix")->check(CLI::ExistingFile);
    ev->add_option("--density-beta", ef.density_beta, "Bandwidth for density.csv")->check(CLI::NonNegativeNumber);
    ev->add_option("--density-ref", ef.density_ref, "Reference trajectory for density.csv");
    ev->add_option("--density-resolution", ef.density_resolution, "Grid resolution")->check(CLI::PositiveNumber);

    auto* ct = app.add_subcommand("control", "Property-conditioned versus free evaluation");
    ControlFlags cf;
    add_eval_flags(ct, cf.eval);
    ct->add_option("--metric", cf.metric, "Trajectory metric (length or behavior)");
    ct->add_option("--min", cf.min, "Lower bound");
    ct->add_option("--max", cf.max, "Upper bound");
    ct->add_option("--label", cf.labels, "Behavior labels for --metric behavior");

    auto* de = app.add_subcommand("density", "Export the style-weighted state density");
    std::string de_dataset, de_maze, de_nu;
    double de_beta = 10.0;
    std::size_t de_ref = 0, de_res = 64;
    de->add_option("--dataset", de_dataset, "Dataset file")->required()->check(CLI::ExistingFile);
    de->add_option("--maze", de_maze, "Maze file (default: resolved from the dataset)");
    de->add_option("--nu", de_nu, "Precomputed dissimilarity matrix")->check(CLI::ExistingFile);
    de->add_option("--beta", de_beta, "Bandwidth")->check(CLI::NonNegativeNumber);
    de->add_option("--ref", de_ref, "Reference trajectory index");
    de->add_option("--resolution", de_res, "Grid resolution")->check(CLI::PositiveNumber);
    de->add_option("--out", common.out, "Output directory")->required();

    auto* vm = app.add_subcommand("validate-maze", "Parse a maze file and print its layout");
    std::string vm_path;
    vm->add_option("maze", vm_path, "Maze file")->required()->check(CLI::ExistingFile);

    auto* sv = app.add_subcommand("serve", "Serve the REST/WebSocket API");
    ServeFlags sf;
    sv->add_option("--address", sf.address, "Bind address");
    sv->add_option("--port", sf.port, "Port (0 picks a free one)");
    sv->add_option("--maze", sf.maze, "Maze file")->required()->check(CLI::ExistingFile);
    sv->add_option("--checkpoint", sf.checkpoint, "Checkpoint for /rollout")->check(CLI::ExistingFile);
    sv->add_option("--dataset", sf.dataset, "Dataset for summaries and property rollouts")
        ->check(CLI::ExistingFile);
    sv->add_option("--record", sf.record, "Dataset file that saved sessions are appended to");
    sv->add_option("--static", sf.static_dir, "UI bundle directory")->check(CLI::ExistingDirectory);
    sv->add_option("--env", sf.env, "Environment preset for new sessions");
    sv->add_option("--env-config", sf.env_config, "Environment config JSON")->check(CLI::ExistingFile);
    sv->add_option("--seed", sf.seed, "Session seed");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const CLI::App* failed = &app;
        for (const auto* sub : app.get_subcommands()) failed = sub;
        err << failed->help();
        return kExitUsage;
    }

    try {
        apply_kernels(common.kernels);
        if (*gen) return cmd_gen_data(recipe, gen_maze, gen_seed, common.out, out);
        if (*dis) return cmd_dissim(dis_dataset, common.out, out);
        if (*tr) return cmd_train(tf, common, out);
        if (*ev) return cmd_eval(ef, common, out);
        if (*ct) return cmd_control(cf, common, out);
        if (*de) return cmd_density(de_dataset, de_maze, de_nu, de_beta, de_ref, de_res, common, out);
        if (*vm) return cmd_validate_maze(vm_path, out);
        if (*sv) return cmd_serve(sf, out);
    } catch (const config::ConfigError& e) {
        err << "invalid configuration:\n";
        for (const auto& v : e.violations()) err << "  " << v << '\n';
        return kExitUsage;
    } catch (const MazeParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

}  // namespace stylebc::cli
