// Acceptance run: one PASS/FAIL line per headline criterion, on the fixed
// harness (seeded synthetic data, 2e4 training steps, 500 rollouts x 5 seeds,
// deterministic env, greedy actions).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <map>
#include <string>

#include "stylebc/cli.hpp"
#include "stylebc/evaluation.hpp"
#include "stylebc/experts.hpp"
#include "stylebc/training.hpp"

using namespace stylebc;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kHarnessSteps = 20000;

const fs::path kData = STYLEBC_TEST_DATA;

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string per_seed_l1(const evaluation::EvalResult& r) {
    std::string s = "[";
    for (std::size_t k = 0; k < r.per_seed.size(); ++k) s += fmt(k ? " %.3f" : "%.3f", r.per_seed[k].l1);
    return s + "]";
}

struct Setup {
    MazeSpec maze = load_maze_file(kData / "mazes" / "medium_maze.txt");
    Dataset one_side = experts::generate_dataset(maze, experts::load_recipe(kData / "recipes" / "one_side.json"));
    Dataset only_forward =
        experts::generate_dataset(maze, experts::load_recipe(kData / "recipes" / "only_forward.json"));
    std::map<std::string, neural::Model> models;

    const neural::Model& model(const std::string& recipe, training::Algorithm algo) {
        const std::string key = recipe + "/" + training::algorithm_name(algo);
        if (auto it = models.find(key); it != models.end()) return it->second;
        training::TrainConfig cfg;
        cfg.algorithm = algo;
        cfg.steps = kHarnessSteps;
        const Dataset& ds = recipe == "one_side" ? one_side : only_forward;
        const auto t0 = std::chrono::steady_clock::now();
        auto result = training::train(ds, cfg, nullptr);
        std::cerr << "  trained " << key << " in "
                  << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
        return models.emplace(key, std::move(result.model)).first->second;
    }

    evaluation::EvalResult eval(const std::string& recipe, training::Algorithm algo, const std::string& env = "") {
        evaluation::EvalConfig cfg;
        if (!env.empty()) cfg.env = env_preset(env);
        return evaluation::evaluate(model(recipe, algo), maze, recipe == "one_side" ? one_side : only_forward, cfg);
    }
};

using training::Algorithm;

Verdict mode_collapse(Setup& s) {
    const auto bc = s.eval("one_side", Algorithm::bc);
    const auto zbc = s.eval("one_side", Algorithm::zbc);
    bool every = true;
    for (std::size_t k = 0; k < bc.per_seed.size(); ++k) every = every && zbc.per_seed[k].l1 < bc.per_seed[k].l1;
    return {bc.l1_mean >= 0.8 && zbc.l1_mean <= 0.15 && every,
            fmt("BC L1 %.3f (>= 0.8), ZBC L1 %.3f (<= 0.15), per seed BC %s ZBC %s", bc.l1_mean, zbc.l1_mean,
                per_seed_l1(bc).c_str(), per_seed_l1(zbc).c_str())};
}

Verdict diversity(Setup& s) {
    const auto bc = s.eval("only_forward", Algorithm::bc);
    const auto zbc = s.eval("only_forward", Algorithm::zbc);
    const auto wzbc = s.eval("only_forward", Algorithm::wzbc);
    const bool ok = zbc.l1_mean <= 0.4 && zbc.success_mean >= 0.95 && wzbc.l1_mean <= 0.4 &&
                    wzbc.success_mean >= 0.95 && bc.l1_mean >= 1.0;
    return {ok, fmt("ZBC L1 %.3f success %.3f, WZBC L1 %.3f success %.3f (L1 <= 0.4, success >= 0.95), BC L1 %.3f "
                    "(>= 1.0)",
                    zbc.l1_mean, zbc.success_mean, wzbc.l1_mean, wzbc.success_mean, bc.l1_mean)};
}

Verdict robustness(Setup& s) {
    std::string detail;
    bool ordered = true, margin = false;
    for (const char* env : {"noise-transi", "pseudo-r-init"}) {
        const auto z = s.eval("only_forward", Algorithm::zbc, env);
        const auto w = s.eval("only_forward", Algorithm::wzbc, env);
        ordered = ordered && w.success_mean >= z.success_mean;
        margin = margin || w.success_mean - z.success_mean >= 0.05;
        detail += fmt("%s%s: WZBC %.3f vs ZBC %.3f", detail.empty() ? "" : ", ", env, w.success_mean, z.success_mean);
    }
    return {ordered && margin, detail + " (WZBC >= ZBC on both, margin >= 0.05 on one)"};
}

Verdict control(Setup& s) {
    evaluation::Property prop;
    prop.metric = "length";
    prop.min = 70;
    prop.max = 80;
    const auto rep =
        evaluation::control_report(s.model("only_forward", Algorithm::zbc), s.maze, s.only_forward, prop, {});
    bool every = true;
    std::size_t in_band = 0, total = 0;
    std::string seeds;
    for (const auto& c : rep.per_seed) {
        every = every && c.l1_controlled < c.l1_free;
        for (std::size_t len : c.controlled_lengths) in_band += len >= 65 && len <= 85;
        total += c.controlled_lengths.size();
        seeds += fmt(" %.3f<%.3f", c.l1_controlled, c.l1_free);
    }
    const double frac = total ? double(in_band) / double(total) : 0.0;
    return {every && frac >= 0.7,
            fmt("controlled<free L1 per seed:%s; %.1f%% of controlled lengths in [65,85] (>= 70%%)", seeds.c_str(),
                100.0 * frac)};
}

Verdict limits(Setup& s) {
    // (a) beta = 0 gives unit weights on every draw.
    training::TrainConfig cfg;
    cfg.algorithm = Algorithm::wzbc;
    cfg.beta = 0.0;
    const auto nu = similarity::dissimilarity_matrix(s.only_forward);
    bool unit = true;
    std::size_t relabeled = 0;
    for (std::size_t k = 0; k < 2000; ++k) {
        RngStream rng = RngStream(1, "limit").derive("batch", k);
        for (const auto& e : training::sample_batch(s.only_forward, cfg, &nu, rng)) {
            unit = unit && e.weight == 1.0;
            relabeled += e.stop_grad;
        }
    }

    // (b) indicator dissimilarity at beta = 100 against ZBC on the same draws.
    training::TrainConfig wcfg;
    wcfg.algorithm = Algorithm::wzbc;
    wcfg.beta = 100.0;
    wcfg.seed = 3;
    const auto ind = similarity::indicator_matrix(s.only_forward.size());
    RngStream init_rng = RngStream(wcfg.seed, "train").derive("init");
    const neural::Model start = neural::init(training::arch_for(wcfg, s.only_forward), s.only_forward.size(), init_rng);
    training::Trainer w(start, wcfg.learning_rate), z(start, wcfg.learning_rate);
    for (std::size_t k = 0; k < 1000; ++k) {
        RngStream rng = RngStream(wcfg.seed, "train").derive("batch", k);
        const auto batch = training::sample_batch(s.only_forward, wcfg, &ind, rng);
        w.train_step(batch);
        z.train_step(training::as_zbc(batch));
    }
    double diff = 0.0;
    for (std::size_t k = 0; k < w.model().policy.params.size(); ++k)
        diff = std::max(diff, std::abs(w.model().policy.params[k] - z.model().policy.params[k]));
    for (std::size_t k = 0; k < w.model().codebook.table.size(); ++k)
        diff = std::max(diff, std::abs(w.model().codebook.table[k] - z.model().codebook.table[k]));
    return {unit && relabeled > 0 && diff <= 1e-6,
            fmt("beta=0: all %zu relabeled weights %s 1; indicator beta=100 vs ZBC max |dtheta| %.3g after 1000 steps "
                "(<= 1e-6)",
                relabeled, unit ? "==" : "!=", diff)};
}

Trajectory straight(std::vector<State> states) {
    Trajectory t;
    t.states = std::move(states);
    for (std::size_t k = 0; k + 1 < t.states.size(); ++k)
        t.actions.push_back({t.states[k + 1].x - t.states[k].x, t.states[k + 1].y - t.states[k].y});
    t.checkpoints = {0};
    t.success = true;
    return t;
}

Dataset dataset_of(std::vector<Trajectory> trajs) {
    Dataset ds;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        trajs[i].id = static_cast<int>(i);
        ds.trajectories.push_back(std::move(trajs[i]));
    }
    return ds;
}

Verdict dissimilarity() {
    std::mt19937_64 gen(2024);
    std::uniform_int_distribution<int> count(2, 12), len(1, 40);
    std::uniform_real_distribution<double> coord(0.0, 11.0);
    double worst_diag = 0.0, worst_range = 0.0, worst_max = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<Trajectory> trajs;
        const int n = count(gen);
        for (int i = 0; i < n; ++i) {
            std::vector<State> st(static_cast<std::size_t>(len(gen)));
            for (auto& x : st) x = {coord(gen), coord(gen)};
            trajs.push_back(straight(st));
        }
        const auto m = similarity::dissimilarity_matrix(dataset_of(std::move(trajs)));
        for (std::size_t i = 0; i < m.n; ++i) {
            worst_diag = std::max(worst_diag, std::abs(m(i, i)));
            double mx = 0.0;
            for (std::size_t j = 0; j < m.n; ++j) {
                worst_range = std::max({worst_range, -m(i, j), m(i, j) - 1.0});
                if (j != i) mx = std::max(mx, m(i, j));
            }
            worst_max = std::max(worst_max, std::abs(mx - 1.0));
        }
    }
    const auto hand = similarity::dissimilarity_matrix(
        dataset_of({straight({{0, 0}, {1, 0}}), straight({{0, 0}, {0, 1}}), straight({{0, 0}, {2, 0}})}));
    const double hand_err =
        std::max({std::abs(hand(0, 0)), std::abs(hand(0, 1) - 1.0), std::abs(hand(0, 2) - 1.0 / std::sqrt(2.0))});
    return {worst_diag == 0.0 && worst_range <= 0.0 && worst_max <= 1e-12 && hand_err <= 1e-12,
            fmt("200 sets: max |diag| %.3g, range excess %.3g, |row max - 1| %.3g; hand row error %.3g", worst_diag,
                worst_range, worst_max, hand_err)};
}

Verdict gradients(Setup& s) {
    training::TrainConfig cfg;
    cfg.algorithm = Algorithm::wzbc;
    cfg.hidden_dim = 8;
    cfg.num_hidden = 2;
    cfg.batch_size = 64;
    const Dataset& ds = s.only_forward;
    const auto nu = similarity::dissimilarity_matrix(ds);
    RngStream init_rng(11, "init");
    neural::Model m = neural::init(training::arch_for(cfg, ds), ds.size(), init_rng);
    std::mt19937_64 gen(11);
    std::normal_distribution<double> jitter(0.0, 0.1);
    for (double& v : m.policy.params) v += jitter(gen);
    RngStream batch_rng(11, "batch");
    const auto batch = training::to_loss_items(training::sample_batch(ds, cfg, &nu, batch_rng));

    neural::Gradients g;
    neural::loss_and_gradients(m, batch, g);

    // Oracle: relabeled items read a frozen copy of the codebook, so finite
    // differences on the live rows see exactly the stop-gradient objective.
    neural::Model frozen = m;
    frozen.codebook.table.insert(frozen.codebook.table.end(), m.codebook.table.begin(), m.codebook.table.end());
    frozen.codebook.rows *= 2;
    auto fbatch = batch;
    for (auto& it : fbatch)
        if (it.stop_grad) {
            it.style_index += m.codebook.rows;
            it.stop_grad = false;
        }
    const double h = 1e-5;
    double worst = 0.0;
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-7); };
    auto probe = [&](double& slot, double analytic) {
        const double keep = slot;
        slot = keep + h;
        const double up = neural::batch_loss(frozen, fbatch);
        slot = keep - h;
        const double down = neural::batch_loss(frozen, fbatch);
        slot = keep;
        worst = std::max(worst, rel((up - down) / (2 * h), analytic));
    };
    for (std::size_t k = 0; k < frozen.policy.params.size(); ++k) probe(frozen.policy.params[k], g.policy[k]);
    for (std::size_t k = 0; k < m.codebook.table.size(); ++k) probe(frozen.codebook.table[k], g.codebook[k]);

    // Rows used only as relabeled styles must receive nothing.
    std::vector<bool> own(ds.size(), false), relabel(ds.size(), false);
    for (const auto& it : batch) (it.stop_grad ? relabel : own)[it.style_index] = true;
    std::size_t checked = 0;
    bool zero = true;
    for (std::size_t r = 0; r < ds.size(); ++r) {
        if (!relabel[r] || own[r]) continue;
        ++checked;
        for (std::size_t k = 0; k < m.codebook.dim; ++k) zero = zero && g.codebook[r * m.codebook.dim + k] == 0.0;
    }
    return {worst < 1e-4 && zero && checked > 0,
            fmt("2x8 policy, %zu-item WZBC batch: max relative error %.3g (< 1e-4); %zu stop-gradient rows %s zero",
                batch.size(), worst, checked, zero ? "exactly" : "NOT")};
}

Verdict density(Setup& s) {
    const auto nu = similarity::dissimilarity_matrix(s.only_forward);
    double worst = 0.0;
    for (std::size_t res : {16, 64, 256})
        for (std::size_t ref : {0, 57, 99}) {
            const auto g = evaluation::density(s.only_forward, nu, 0.0, ref, res, s.maze.width, s.maze.height);
            worst = std::max(worst, std::abs(g.total() - 1.0));
        }
    return {worst <= 1e-9, fmt("beta=0 at 16/64/256: max |mass - 1| %.3g (<= 1e-9)", worst)};
}

BehaviorHistogram random_histogram(std::mt19937_64& gen) {
    std::uniform_int_distribution<int> bins(1, 6), label(0, 9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<BehaviorId> draws;
    const int n = bins(gen) * 5;
    for (int k = 0; k < n; ++k) draws.push_back(u(gen) < 0.1 ? kFailBehavior : std::to_string(label(gen) * 7));
    return histogram(draws);
}

Verdict metric_laws() {
    std::mt19937_64 gen(99);
    std::size_t bad_range = 0, bad_sym = 0, bad_id = 0, bad_tri = 0;
    for (int k = 0; k < 10000; ++k) {
        const auto a = random_histogram(gen), b = random_histogram(gen), c = random_histogram(gen);
        const double ab = evaluation::l1_distance(a, b), ba = evaluation::l1_distance(b, a);
        const double bc = evaluation::l1_distance(b, c), ac = evaluation::l1_distance(a, c);
        bad_range += !(ab >= 0.0 && ab <= 2.0 + 1e-12);
        bad_sym += ab != ba;
        bad_id += evaluation::l1_distance(a, a) != 0.0;
        bad_tri += ac > ab + bc + 1e-12;
    }
    return {bad_range + bad_sym + bad_id + bad_tri == 0,
            fmt("10^4 triples: %zu range, %zu symmetry, %zu identity, %zu triangle violations", bad_range, bad_sym,
                bad_id, bad_tri)};
}

Verdict determinism() {
    auto run_pipeline = [](const fs::path& dir) -> std::string {
        fs::remove_all(dir);
        std::ostringstream out, err;
        const std::string maze = (kData / "mazes" / "medium_maze.txt").string();
        const std::string ds = (dir / "data" / "only_forward.jsonl").string();
        auto step = [&](std::vector<std::string> args) {
            if (cli::run(args, out, err) != cli::kExitOk) throw Error("pipeline step failed: " + err.str());
        };
        step({"gen-data", "--recipe", (kData / "recipes" / "only_forward.json").string(), "--maze", maze, "--out",
              (dir / "data").string()});
        step({"dissim", "--dataset", ds, "--out", (dir / "nu").string()});
        step({"train", "--algo", "wzbc", "--dataset", ds, "--nu", (dir / "nu" / "nu.bin").string(),
              "--steps", std::to_string(kHarnessSteps), "--seed", "0", "--out", (dir / "run").string()});
        step({"eval", "--checkpoint", (dir / "run" / "checkpoint.swr").string(), "--dataset", ds, "--maze", maze,
              "--out", (dir / "eval").string()});
        std::ifstream in(dir / "eval" / "metrics.json", std::ios::binary);
        return {std::istreambuf_iterator<char>(in), {}};
    };
    const auto base = fs::temp_directory_path() / "stylebc_acceptance";
    const std::string a = run_pipeline(base / "a");
    const std::string b = run_pipeline(base / "b");
    return {!a.empty() && a == b, fmt("two gen-data/dissim/train/eval runs: metrics.json %zu bytes, %s", a.size(),
                                      a == b ? "identical" : "DIFFERENT")};
}

}  // namespace

int main() {
    Setup setup;
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"mode-collapse separation", [&] { return mode_collapse(setup); }},
        {"diversity reconstruction", [&] { return diversity(setup); }},
        {"robustness ordering", [&] { return robustness(setup); }},
        {"control", [&] { return control(setup); }},
        {"limit equivalences", [&] { return limits(setup); }},
        {"dissimilarity suite", [] { return dissimilarity(); }},
        {"gradient correctness", [&] { return gradients(setup); }},
        {"density normalization", [&] { return density(setup); }},
        {"histogram metric laws", [] { return metric_laws(); }},
        {"determinism", [] { return determinism(); }},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        failed += !v.pass;
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
