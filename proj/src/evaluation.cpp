#include "stylebc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "stylebc/config.hpp"
#include "stylebc/dataset_io.hpp"

namespace stylebc::evaluation {

using nlohmann::json;

void EvalConfig::validate() const {
    config::Violations v;
    check(v);
    config::raise_if_any(v);
}

void EvalConfig::check(std::vector<std::string>& out, const std::string& scope) const {
    if (n_rollouts < 1) out.push_back(config::scoped(scope, "n_rollouts") + " must be >= 1");
    if (seeds.empty()) out.push_back(config::scoped(scope, "seeds") + " must name at least one seed");
    env.check(out, config::scoped(scope, "env"));
}

void EvalConfig::merge_json(const json& j, std::vector<std::string>& out, const std::string& scope) {
    if (!j.is_object()) {
        out.push_back(scope + ": expected a JSON object");
        return;
    }
    config::reject_unknown(j, {"n_rollouts", "seeds", "env", "greedy"}, scope, out);
    config::read(j, "n_rollouts", n_rollouts, scope, out);
    config::read(j, "seeds", seeds, scope, out);
    config::read(j, "greedy", greedy, scope, out);
    if (j.contains("env")) env.merge_json(j["env"], out, config::scoped(scope, "env"));
}

json EvalConfig::to_json() const {
    return json{{"n_rollouts", n_rollouts}, {"seeds", seeds}, {"env", stylebc::to_json(env)}, {"greedy", greedy}};
}

EvalConfig EvalConfig::from_json(const json& j, EvalConfig c) {
    config::Violations v;
    c.merge_json(j, v);
    c.check(v);
    config::raise_if_any(v);
    return c;
}

StyleSource StyleSource::uniform(std::size_t codebook_rows) {
    StyleSource s;
    s.rows.resize(codebook_rows);
    for (std::size_t i = 0; i < codebook_rows; ++i) s.rows[i] = i;
    return s;
}

StyleSource default_source(const neural::Model& model) {
    if (!model.policy.arch().use_style) return {};
    return StyleSource::uniform(model.codebook.rows);
}

namespace {

struct Episode {
    std::size_t index = 0;
    std::vector<double> z;
    RngStream env_rng;
    RngStream policy_rng;
    EnvState state;
    Trajectory traj;
};

}  // namespace

std::vector<Trajectory> generate(const neural::Model& model, const MazeSpec& maze, const EnvConfig& env,
                                 std::size_t n_rollouts, std::uint64_t seed, const StyleSource& source, bool greedy,
                                 std::vector<std::size_t>* chosen_rows) {
    env.validate();
    const auto& arch = model.policy.arch();
    const std::size_t dz = arch.use_style ? arch.style_dim : 0;
    if (arch.use_style && source.rows.empty() && !source.fixed) throw Error("styled policy needs a style source");
    if (source.fixed && source.fixed->size() != dz) throw Error("explicit style has wrong dimension");
    for (std::size_t r : source.rows)
        if (r >= model.codebook.rows) throw Error("style source row out of range");

    const RngStream root(seed, "eval");
    RngStream style_rng = root.derive("styles");
    // Key per episode: codebook row, or n for the fixed / empty style.
    std::vector<std::size_t> keys(n_rollouts, model.codebook.rows);
    for (auto& key : keys)
        if (!source.fixed && !source.rows.empty()) key = source.rows[style_rng.uniform_index(source.rows.size())];
    if (chosen_rows) *chosen_rows = keys;

    const bool memo = greedy && env.deterministic();
    std::vector<std::size_t> run;  // episodes actually simulated
    std::map<std::size_t, std::size_t> first_of_key;
    for (std::size_t k = 0; k < n_rollouts; ++k) {
        if (memo) {
            if (first_of_key.emplace(keys[k], k).second) run.push_back(k);
        } else {
            run.push_back(k);
        }
    }

    std::vector<Episode> eps;
    eps.reserve(run.size());
    for (std::size_t k : run) {
        const RngStream ep_root = root.derive("episode", k);
        Episode e{k, {}, ep_root.derive("env"), ep_root.derive("policy"), {}, {}};
        if (source.fixed) {
            e.z = *source.fixed;
        } else if (dz > 0) {
            const auto row = model.codebook.row(keys[k]);
            e.z.assign(row.begin(), row.end());
        }
        e.state = reset(maze, env, e.env_rng);
        e.traj.id = static_cast<int>(k);
        e.traj.states.push_back(e.state.position);
        eps.push_back(std::move(e));
    }

    std::vector<std::size_t> active(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) active[i] = i;
    std::vector<State> states;
    std::vector<double> styles;
    const double sd[2] = {std::exp(model.policy.log_std(0)), std::exp(model.policy.log_std(1))};
    while (!active.empty()) {
        states.clear();
        styles.clear();
        for (std::size_t i : active) {
            states.push_back(eps[i].state.position);
            styles.insert(styles.end(), eps[i].z.begin(), eps[i].z.end());
        }
        const auto means = neural::forward_means(model.policy, states, styles);
        std::vector<std::size_t> still;
        for (std::size_t a = 0; a < active.size(); ++a) {
            Episode& e = eps[active[a]];
            Action act = means[a];
            if (!greedy) {
                act.dx += sd[0] * e.policy_rng.normal();
                act.dy += sd[1] * e.policy_rng.normal();
            }
            StepOutcome o = step(maze, e.state, act, env, e.env_rng);
            e.traj.actions.push_back(o.applied);
            e.state = std::move(o.state);
            e.traj.states.push_back(e.state.position);
            if (!e.state.done) still.push_back(active[a]);
        }
        active.swap(still);
    }

    std::vector<Trajectory> out(n_rollouts);
    std::map<std::size_t, std::size_t> ep_of_key;
    for (std::size_t i = 0; i < eps.size(); ++i) {
        eps[i].traj.checkpoints = eps[i].state.visited;
        eps[i].traj.success = eps[i].state.success;
        ep_of_key[keys[eps[i].index]] = i;
        out[eps[i].index] = std::move(eps[i].traj);
    }
    if (memo) {
        for (std::size_t k = 0; k < n_rollouts; ++k) {
            const std::size_t src = first_of_key.at(keys[k]);
            if (src != k) {
                out[k] = out[src];
                out[k].id = static_cast<int>(k);
            }
        }
    }
    return out;
}

double l1_distance(const BehaviorHistogram& ref, const BehaviorHistogram& gen) {
    // Zero-padded union of supports, summed in label order so swapping the arguments gives the same bits.
    double d = 0.0;
    auto a = ref.bins.begin(), b = gen.bins.begin();
    while (a != ref.bins.end() || b != gen.bins.end()) {
        if (b == gen.bins.end() || (a != ref.bins.end() && a->first < b->first)) {
            d += std::abs(a->second);
            ++a;
        } else if (a == ref.bins.end() || b->first < a->first) {
            d += std::abs(b->second);
            ++b;
        } else {
            d += std::abs(a->second - b->second);
            ++a;
            ++b;
        }
    }
    return d;
}

double success_rate(std::span<const Trajectory> trajs) {
    if (trajs.empty()) throw Error("success_rate of an empty sample");
    std::size_t ok = 0;
    for (const auto& t : trajs) ok += t.success ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(trajs.size());
}

double DensityGrid::total() const {
    double t = 0.0;
    for (double m : mass) t += m;
    return t;
}

std::size_t DensityGrid::cell_index(const State& s) const {
    const auto bin = [&](double v, double extent) {
        const double f = std::floor(v / extent * static_cast<double>(resolution));
        return static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(resolution - 1)));
    };
    return bin(s.y, height) * resolution + bin(s.x, width);
}

DensityGrid density(const Dataset& ds, const similarity::DissimilarityMatrix& nu, double beta, std::size_t ref,
                    std::size_t resolution, double width, double height) {
    if (resolution < 1) throw Error("density resolution must be >= 1");
    if (nu.n != ds.size()) throw Error("dissimilarity matrix does not match dataset");
    if (ref >= ds.size()) throw Error("reference trajectory out of range");
    DensityGrid g;
    g.resolution = resolution;
    g.width = width;
    g.height = height;
    g.mass.assign(resolution * resolution, 0.0);
    const double n = static_cast<double>(ds.size());
    for (std::size_t j = 0; j < ds.size(); ++j) {
        const auto& states = ds.trajectories[j].states;
        const double w = similarity::weight(nu(ref, j), beta) / (n * static_cast<double>(states.size()));
        for (const auto& s : states) g.mass[g.cell_index(s)] += w;
    }
    return g;
}

namespace {

std::mutex& registry_mutex() {
    static std::mutex m;
    return m;
}

std::map<std::string, MetricFn>& registry() {
    static std::map<std::string, MetricFn> r{
        {"length", [](const Trajectory& t) { return static_cast<double>(t.length()); }},
    };
    return r;
}

}  // namespace

void register_metric(const std::string& name, MetricFn fn) {
    if (name == "behavior") throw Error("'behavior' is a reserved metric name");
    std::lock_guard lock(registry_mutex());
    registry()[name] = std::move(fn);
}

bool has_metric(const std::string& name) {
    if (name == "behavior") return true;
    std::lock_guard lock(registry_mutex());
    return registry().count(name) > 0;
}

bool Property::holds(const Trajectory& t) const {
    if (metric == "behavior") return labels.count(behavior_of(t)) > 0;
    MetricFn fn;
    {
        std::lock_guard lock(registry_mutex());
        auto it = registry().find(metric);
        if (it == registry().end()) throw Error("unknown metric '" + metric + "'");
        fn = it->second;
    }
    const double v = fn(t);
    return v >= min && v <= max;
}

void Property::validate() const {
    if (!has_metric(metric)) throw Error("unknown metric '" + metric + "'");
    if (metric == "behavior") {
        if (labels.empty()) throw Error("behavior property needs at least one label");
    } else if (!(min <= max)) {
        throw Error("property range must satisfy min <= max");
    }
}

json Property::to_json() const {
    if (metric == "behavior") return json{{"metric", metric}, {"labels", labels}};
    return json{{"metric", metric}, {"min", min}, {"max", max}};
}

Property Property::from_json(const json& j) {
    Property p;
    try {
        p.metric = j.at("metric").get<std::string>();
        if (p.metric == "behavior") {
            if (j.contains("labels")) {
                for (const auto& l : j["labels"]) p.labels.insert(l.get<std::string>());
            } else {
                p.labels.insert(j.at("label").get<std::string>());
            }
        } else {
            p.min = j.at("min").get<double>();
            p.max = j.at("max").get<double>();
        }
    } catch (const json::exception& e) {
        throw Error(std::string("invalid property: ") + e.what());
    }
    p.validate();
    return p;
}

StyleSource conditioned_styles(const Dataset& ds, const neural::Model& model, const Property& prop) {
    prop.validate();
    if (!model.policy.arch().use_style) throw Error("property conditioning needs a styled policy");
    if (model.codebook.rows != ds.size()) throw Error("codebook does not match dataset");
    StyleSource s;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (prop.holds(ds.trajectories[i])) s.rows.push_back(i);
    if (s.rows.empty()) throw Error("property unsatisfiable on dataset");
    return s;
}

std::pair<double, double> mean_std(std::span<const double> xs) {
    if (xs.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return {m, std::sqrt(v / static_cast<double>(xs.size()))};
}

EvalResult evaluate(const neural::Model& model, const MazeSpec& maze, const Dataset& ds, const EvalConfig& cfg) {
    return evaluate(model, maze, ds, cfg, default_source(model));
}

EvalResult evaluate(const neural::Model& model, const MazeSpec& maze, const Dataset& ds, const EvalConfig& cfg,
                    const StyleSource& source) {
    cfg.validate();
    EvalResult r;
    r.reference = histogram_of(ds.trajectories);
    std::vector<double> l1s, succ;
    for (std::uint64_t seed : cfg.seeds) {
        const auto trajs = generate(model, maze, cfg.env, cfg.n_rollouts, seed, source, cfg.greedy);
        SeedMetrics m;
        m.seed = seed;
        m.generated = histogram_of(trajs);
        m.l1 = l1_distance(r.reference, m.generated);
        m.success_rate = success_rate(trajs);
        l1s.push_back(m.l1);
        succ.push_back(m.success_rate);
        r.per_seed.push_back(std::move(m));
    }
    std::tie(r.l1_mean, r.l1_std) = mean_std(l1s);
    std::tie(r.success_mean, r.success_std) = mean_std(succ);
    return r;
}

json EvalResult::metrics_json() const {
    json seeds = json::array();
    for (const auto& s : per_seed) seeds.push_back({{"seed", s.seed}, {"l1", s.l1}, {"success_rate", s.success_rate}});
    return json{{"l1", {{"mean", l1_mean}, {"std", l1_std}}},
                {"success_rate", {{"mean", success_mean}, {"std", success_std}}},
                {"per_seed", seeds}};
}

json EvalResult::histograms_json() const {
    std::set<BehaviorId> support;
    for (const auto& [b, _] : reference.bins) support.insert(b);
    for (const auto& s : per_seed)
        for (const auto& [b, _] : s.generated.bins) support.insert(b);
    json ref = json::object();
    for (const auto& b : support) ref[b] = reference.mass(b);
    json gens = json::array();
    for (const auto& s : per_seed) {
        json g = json::object();
        for (const auto& b : support) g[b] = s.generated.mass(b);
        gens.push_back({{"seed", s.seed}, {"histogram", g}});
    }
    return json{{"support", support}, {"reference", ref}, {"generated", gens}};
}

ControlReport control_report(const neural::Model& model, const MazeSpec& maze, const Dataset& ds, const Property& prop,
                             const EvalConfig& cfg) {
    cfg.validate();
    const StyleSource controlled = conditioned_styles(ds, model, prop);
    const StyleSource free = default_source(model);
    ControlReport rep;
    rep.property = prop;
    rep.full_train = histogram_of(ds.trajectories);
    std::vector<Trajectory> restricted;
    for (std::size_t i : controlled.rows) restricted.push_back(ds.trajectories[i]);
    rep.restricted_train = histogram_of(restricted);
    for (std::uint64_t seed : cfg.seeds) {
        ControlSeed cs;
        cs.seed = seed;
        const auto f = generate(model, maze, cfg.env, cfg.n_rollouts, seed, free, cfg.greedy);
        const auto c = generate(model, maze, cfg.env, cfg.n_rollouts, seed, controlled, cfg.greedy);
        cs.free_eval = histogram_of(f);
        cs.controlled_eval = histogram_of(c);
        cs.l1_free = l1_distance(rep.restricted_train, cs.free_eval);
        cs.l1_controlled = l1_distance(rep.restricted_train, cs.controlled_eval);
        cs.l1_train = l1_distance(rep.restricted_train, rep.full_train);
        std::size_t in_band = 0;
        for (const auto& t : c) {
            cs.controlled_lengths.push_back(t.length());
            in_band += prop.holds(t) ? 1 : 0;
        }
        for (const auto& t : f) cs.free_lengths.push_back(t.length());
        cs.controlled_in_band = static_cast<double>(in_band) / static_cast<double>(c.size());
        rep.per_seed.push_back(std::move(cs));
    }
    return rep;
}

json ControlReport::to_json() const {
    json seeds = json::array();
    for (const auto& s : per_seed)
        seeds.push_back({{"seed", s.seed},
                         {"free_eval", stylebc::to_json(s.free_eval)},
                         {"controlled_eval", stylebc::to_json(s.controlled_eval)},
                         {"l1_free", s.l1_free},
                         {"l1_controlled", s.l1_controlled},
                         {"l1_full_train", s.l1_train},
                         {"controlled_in_band", s.controlled_in_band},
                         {"controlled_lengths", s.controlled_lengths},
                         {"free_lengths", s.free_lengths}});
    return json{{"property", property.to_json()},
                {"full_train", stylebc::to_json(full_train)},
                {"restricted_train", stylebc::to_json(restricted_train)},
                {"per_seed", seeds}};
}

}  // namespace stylebc::evaluation
