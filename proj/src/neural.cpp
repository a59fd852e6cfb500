#include "stylebc/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "stylebc/kernels.hpp"

namespace stylebc::neural {

using nlohmann::json;

void ArchConfig::validate() const {
    if (hidden_dim == 0 || num_hidden == 0) throw Error("network needs at least one hidden layer");
    if (use_style && style_dim == 0) throw Error("style_dim must be > 0 for styled policies");
    if (obs_scale[0] <= 0.0 || obs_scale[1] <= 0.0) throw Error("obs_scale must be > 0");
}

json ArchConfig::to_json() const {
    return json{{"style_dim", style_dim},
                {"hidden_dim", hidden_dim},
                {"num_hidden", num_hidden},
                {"residual_every", residual_every},
                {"use_style", use_style},
                {"obs_offset", {obs_offset[0], obs_offset[1]}},
                {"obs_scale", {obs_scale[0], obs_scale[1]}}};
}

ArchConfig ArchConfig::from_json(const json& j) {
    ArchConfig a;
    try {
        a.style_dim = j.at("style_dim").get<std::size_t>();
        a.hidden_dim = j.at("hidden_dim").get<std::size_t>();
        a.num_hidden = j.at("num_hidden").get<std::size_t>();
        a.residual_every = j.at("residual_every").get<std::size_t>();
        a.use_style = j.at("use_style").get<bool>();
        for (int k = 0; k < 2; ++k) {
            a.obs_offset[k] = j.at("obs_offset").at(static_cast<std::size_t>(k)).get<double>();
            a.obs_scale[k] = j.at("obs_scale").at(static_cast<std::size_t>(k)).get<double>();
        }
    } catch (const json::exception& e) {
        throw Error(std::string("invalid arch config: ") + e.what());
    }
    a.validate();
    return a;
}

MlpPolicy::MlpPolicy(const ArchConfig& arch) : arch_(arch) {
    arch_.validate();
    std::size_t offset = 0;
    auto add = [&](std::size_t in, std::size_t out) {
        LayerView v{in, out, offset, offset + in * out};
        offset += in * out + out;
        layers_.push_back(v);
    };
    add(arch_.input_dim(), arch_.hidden_dim);
    for (std::size_t l = 1; l < arch_.num_hidden; ++l) add(arch_.hidden_dim, arch_.hidden_dim);
    add(arch_.hidden_dim, 2);
    params.assign(offset + 2, 0.0);
}

double MlpPolicy::log_std(std::size_t k) const {
    return std::clamp(params[log_std_offset() + k], kLogStdMin, kLogStdMax);
}

namespace {

bool has_skip(const ArchConfig& a, std::size_t l) {
    return a.residual_every > 0 && l >= a.residual_every && l % a.residual_every == 0;
}

// Second moment of each layer's input at init, assuming unit-Gaussian
// network input and unit-variance pre-activations. A rectified unit Gaussian
// has mean 1/sqrt(2 pi) and second moment 1/2; a skip sum adds the moments of
// both terms plus the cross term of their means.
std::vector<double> input_moments(const ArchConfig& a) {
    const double relu_mean = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    std::vector<double> mean(a.num_hidden), m2(a.num_hidden);
    std::vector<double> in_m2{1.0};
    for (std::size_t l = 0; l < a.num_hidden; ++l) {
        mean[l] = relu_mean;
        m2[l] = 0.5;
        if (has_skip(a, l)) {
            const std::size_t src = l - a.residual_every;
            m2[l] += m2[src] + 2.0 * relu_mean * mean[src];
            mean[l] += mean[src];
        }
        in_m2.push_back(m2[l]);
    }
    return in_m2;
}

void write_input(const ArchConfig& a, const State& s, std::span<const double> z, double* x) {
    x[0] = (s.x - a.obs_offset[0]) / a.obs_scale[0];
    x[1] = (s.y - a.obs_offset[1]) / a.obs_scale[1];
    if (a.use_style) std::copy(z.begin(), z.end(), x + 2);
}

void check_style(const ArchConfig& a, std::span<const double> z) {
    const std::size_t want = a.use_style ? a.style_dim : 0;
    if (z.size() != want)
        throw Error("style dimension mismatch: got " + std::to_string(z.size()) + ", expected " +
                    std::to_string(want));
}

// Activations for a batch of inputs, laid out [layer][sample][unit].
struct Activations {
    std::size_t batch = 0;
    std::vector<double> input;                 // batch x input_dim
    std::vector<std::vector<double>> pre;      // per hidden layer
    std::vector<std::vector<double>> post;     // per hidden layer
    std::vector<double> mean;                  // batch x 2
};

void run_forward(const MlpPolicy& policy, Activations& act) {
    const auto& a = policy.arch();
    const auto& layers = policy.layers();
    const auto& k = kernels::active();
    const double* p = policy.params.data();
    const std::size_t H = a.hidden_dim;
    const std::size_t B = act.batch;
    act.pre.assign(a.num_hidden, std::vector<double>(B * H));
    act.post.assign(a.num_hidden, std::vector<double>(B * H));
    act.mean.assign(B * 2, 0.0);
    for (std::size_t l = 0; l < a.num_hidden; ++l) {
        const LayerView& v = layers[l];
        const double* x = l == 0 ? act.input.data() : act.post[l - 1].data();
        k.gemm_nt(p + v.weight_offset, x, p + v.bias_offset, act.pre[l].data(), v.out, v.in, B);
        const double* pre = act.pre[l].data();
        double* post = act.post[l].data();
        if (has_skip(a, l)) {
            const double* res = act.post[l - a.residual_every].data();
            for (std::size_t u = 0; u < B * H; ++u) post[u] = std::max(pre[u], 0.0) + res[u];
        } else {
            for (std::size_t u = 0; u < B * H; ++u) post[u] = std::max(pre[u], 0.0);
        }
    }
    const LayerView& out = layers.back();
    k.gemm_nt(p + out.weight_offset, act.post.back().data(), p + out.bias_offset, act.mean.data(), 2, H, B);
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)

}  // namespace

Model init(const ArchConfig& arch, std::size_t num_styles, RngStream& rng) {
    Model m;
    m.policy = MlpPolicy(arch);
    RngStream wrng = rng.derive("weights");
    const auto& layers = m.policy.layers();
    const auto m2 = input_moments(arch);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerView& v = layers[l];
        const double sd = std::sqrt(1.0 / (m2[l] * static_cast<double>(v.in)));
        for (std::size_t i = 0; i < v.in * v.out; ++i) m.policy.params[v.weight_offset + i] = wrng.normal(0.0, sd);
    }
    if (arch.use_style) {
        m.codebook.rows = num_styles;
        m.codebook.dim = arch.style_dim;
        m.codebook.table.resize(num_styles * arch.style_dim);
        RngStream crng = rng.derive("codebook");
        for (double& v : m.codebook.table) v = crng.normal();
    }
    return m;
}

ActionDistribution forward(const MlpPolicy& policy, const State& s, std::span<const double> z) {
    check_style(policy.arch(), z);
    Activations act;
    act.batch = 1;
    act.input.resize(policy.arch().input_dim());
    write_input(policy.arch(), s, z, act.input.data());
    run_forward(policy, act);
    ActionDistribution d;
    d.mean = {act.mean[0], act.mean[1]};
    d.log_std[0] = policy.log_std(0);
    d.log_std[1] = policy.log_std(1);
    return d;
}

std::vector<Action> forward_means(const MlpPolicy& policy, std::span<const State> states,
                                  std::span<const double> styles) {
    const auto& a = policy.arch();
    const std::size_t dz = a.use_style ? a.style_dim : 0;
    if (styles.size() != states.size() * dz) throw Error("forward_means: style block size mismatch");
    Activations act;
    act.batch = states.size();
    const std::size_t in0 = a.input_dim();
    act.input.resize(act.batch * in0);
    for (std::size_t b = 0; b < act.batch; ++b)
        write_input(a, states[b], styles.subspan(b * dz, dz), act.input.data() + b * in0);
    run_forward(policy, act);
    std::vector<Action> out(act.batch);
    for (std::size_t b = 0; b < act.batch; ++b) out[b] = {act.mean[2 * b], act.mean[2 * b + 1]};
    return out;
}

double gaussian_log_prob(const ActionDistribution& dist, const Action& a) {
    const double diff[2] = {a.dx - dist.mean.dx, a.dy - dist.mean.dy};
    double lp = 0.0;
    for (int k = 0; k < 2; ++k) {
        const double inv_var = std::exp(-2.0 * dist.log_std[k]);
        lp += -0.5 * diff[k] * diff[k] * inv_var - dist.log_std[k] - kHalfLog2Pi;
    }
    return lp;
}

double log_prob(const MlpPolicy& policy, const State& s, std::span<const double> z, const Action& a) {
    return gaussian_log_prob(forward(policy, s, z), a);
}

namespace {

void fill_inputs(const Model& model, std::span<const LossItem> batch, Activations& act) {
    const auto& a = model.policy.arch();
    const std::size_t in0 = a.input_dim();
    act.batch = batch.size();
    act.input.resize(act.batch * in0);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        std::span<const double> z;
        if (a.use_style) {
            if (batch[b].style_index >= model.codebook.rows) throw Error("style index out of range");
            z = model.codebook.row(batch[b].style_index);
        }
        write_input(a, batch[b].s, z, act.input.data() + b * in0);
    }
}

double loss_from_means(const Model& model, std::span<const LossItem> batch, const Activations& act) {
    double total = 0.0;
    ActionDistribution d;
    d.log_std[0] = model.policy.log_std(0);
    d.log_std[1] = model.policy.log_std(1);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        d.mean = {act.mean[2 * b], act.mean[2 * b + 1]};
        total += batch[b].weight * gaussian_log_prob(d, batch[b].a);
    }
    return -total / static_cast<double>(batch.size());
}

}  // namespace

double batch_loss(const Model& model, std::span<const LossItem> batch) {
    if (batch.empty()) throw Error("empty batch");
    Activations act;
    fill_inputs(model, batch, act);
    run_forward(model.policy, act);
    return loss_from_means(model, batch, act);
}

double loss_and_gradients(const Model& model, std::span<const LossItem> batch, Gradients& grads) {
    if (batch.empty()) throw Error("empty batch");
    const MlpPolicy& policy = model.policy;
    const auto& a = policy.arch();
    const auto& layers = policy.layers();
    const auto& k = kernels::active();
    const double* p = policy.params.data();
    const std::size_t H = a.hidden_dim;
    const std::size_t B = batch.size();
    const std::size_t in0 = a.input_dim();

    Activations act;
    fill_inputs(model, batch, act);
    run_forward(policy, act);
    const double loss = loss_from_means(model, batch, act);
    if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "divergence: non-finite loss " << loss << " (log_std = " << policy.params[policy.log_std_offset()]
            << ", " << policy.params[policy.log_std_offset() + 1] << ", batch size " << B << ")";
        throw Error(msg.str());
    }

    grads.policy.assign(policy.num_params(), 0.0);
    grads.codebook.assign(model.codebook.table.size(), 0.0);
    double* g = grads.policy.data();

    double log_std[2];
    double inv_var[2];
    for (int c = 0; c < 2; ++c) {
        log_std[c] = policy.log_std(static_cast<std::size_t>(c));
        inv_var[c] = std::exp(-2.0 * log_std[c]);
    }
    const double invB = 1.0 / static_cast<double>(B);

    // Backward pass layer by layer over the whole batch, so each weight row is
    // loaded once per layer. Per-element accumulation order matches a
    // sample-at-a-time pass.
    std::vector<std::vector<double>> dh(a.num_hidden, std::vector<double>(B * H, 0.0));
    std::vector<double> da(B * H);
    std::vector<double> dx(B * in0, 0.0);
    double dlog_std[2] = {0.0, 0.0};

    const LayerView& out = layers.back();
    const double* h_last = act.post.back().data();
    for (std::size_t b = 0; b < B; ++b) {
        const LossItem& item = batch[b];
        const double w = item.weight;
        const double diff[2] = {item.a.dx - act.mean[2 * b], item.a.dy - act.mean[2 * b + 1]};
        for (std::size_t c = 0; c < 2; ++c) {
            const double dmean = -w * invB * diff[c] * inv_var[c];
            dlog_std[c] += -w * invB * (diff[c] * diff[c] * inv_var[c] - 1.0);
            if (w == 0.0) continue;
            k.axpy(dmean, h_last + b * H, g + out.weight_offset + c * H, H);
            g[out.bias_offset + c] += dmean;
            k.axpy(dmean, p + out.weight_offset + c * H, dh.back().data() + b * H, H);
        }
    }

    for (std::size_t l = a.num_hidden; l-- > 0;) {
        const LayerView& v = layers[l];
        const double* pre = act.pre[l].data();
        const double* dhl = dh[l].data();
        for (std::size_t u = 0; u < B * H; ++u) da[u] = pre[u] > 0.0 ? dhl[u] : 0.0;
        if (has_skip(a, l)) k.axpy(1.0, dhl, dh[l - a.residual_every].data(), B * H);
        const double* x = l == 0 ? act.input.data() : act.post[l - 1].data();
        double* dprev = l > 0 ? dh[l - 1].data() : dx.data();
        for (std::size_t o = 0; o < v.out; ++o) {
            double* gw = g + v.weight_offset + o * v.in;
            const double* wrow = p + v.weight_offset + o * v.in;
            for (std::size_t b = 0; b < B; ++b) {
                const double d = da[b * H + o];
                if (d == 0.0) continue;
                k.axpy(d, x + b * v.in, gw, v.in);
                g[v.bias_offset + o] += d;
                const bool need_input_grad = l > 0 || (a.use_style && !batch[b].stop_grad);
                if (need_input_grad) k.axpy(d, wrow, dprev + b * v.in, v.in);
            }
        }
    }
    if (a.use_style) {
        for (std::size_t b = 0; b < B; ++b) {
            if (batch[b].stop_grad) continue;
            double* gz = grads.codebook.data() + batch[b].style_index * a.style_dim;
            for (std::size_t c = 0; c < a.style_dim; ++c) gz[c] += dx[b * in0 + 2 + c];
        }
    }
    for (std::size_t c = 0; c < 2; ++c) {
        const double raw = policy.params[policy.log_std_offset() + c];
        // Clamped log_std passes no gradient.
        if (raw > kLogStdMin && raw < kLogStdMax) g[policy.log_std_offset() + c] = dlog_std[c];
    }
    return loss;
}

OptimState make_optimizer(const Model& model, double learning_rate) {
    OptimState o;
    o.learning_rate = learning_rate;
    o.m_policy.assign(model.policy.num_params(), 0.0);
    o.v_policy.assign(model.policy.num_params(), 0.0);
    o.m_codebook.assign(model.codebook.table.size(), 0.0);
    o.v_codebook.assign(model.codebook.table.size(), 0.0);
    return o;
}

namespace {

// Moments of idle parameters decay geometrically into subnormals, which
// are very slow on x86; the update kernels flush them below this floor.
constexpr double kMomentFloor = 1e-250;

}  // namespace

void opt_step(OptimState& opt, Model& model, const Gradients& grads) {
    if (grads.policy.size() != model.policy.num_params() || grads.codebook.size() != model.codebook.table.size() ||
        opt.m_policy.size() != grads.policy.size() || opt.m_codebook.size() != grads.codebook.size())
        throw Error("opt_step: shape mismatch");
    for (double v : grads.policy)
        if (!std::isfinite(v)) throw Error("opt_step: non-finite policy gradient");
    for (double v : grads.codebook)
        if (!std::isfinite(v)) throw Error("opt_step: non-finite codebook gradient");
    ++opt.step;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    const kernels::AdamStep st{opt.learning_rate, opt.beta1, opt.beta2, opt.eps, bc1, bc2, kMomentFloor};
    const auto& k = kernels::active();
    k.adam(model.policy.params.data(), grads.policy.data(), opt.m_policy.data(), opt.v_policy.data(),
           model.policy.params.size(), st);
    k.adam(model.codebook.table.data(), grads.codebook.data(), opt.m_codebook.data(), opt.v_codebook.data(),
           model.codebook.table.size(), st);
}

std::size_t PolicyHandle::style_dim() const {
    return policy_->arch().use_style ? policy_->arch().style_dim : 0;
}

Action PolicyHandle::act(const State& s, std::span<const double> z, RngStream& rng) const {
    const ActionDistribution d = forward(*policy_, s, z);
    if (!sample_) return d.mean;
    return {d.mean.dx + std::exp(d.log_std[0]) * rng.normal(), d.mean.dy + std::exp(d.log_std[1]) * rng.normal()};
}

namespace {

constexpr char kCkMagic[6] = {'S', 'W', 'R', 'C', 'K', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw Error("truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64s(std::ostream& out, std::span<const double> xs) {
    for (double x : xs) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof bits);
        put_u64(out, bits);
    }
}

void get_f64s(std::istream& in, std::span<double> xs) {
    for (double& x : xs) {
        const std::uint64_t bits = get_u64(in);
        std::memcpy(&x, &bits, sizeof x);
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string());
    out.write(kCkMagic, sizeof kCkMagic);
    const std::string arch = model.policy.arch().to_json().dump();
    put_u64(out, arch.size());
    out.write(arch.data(), static_cast<std::streamsize>(arch.size()));
    put_u64(out, model.codebook.rows);
    put_u64(out, model.codebook.dim);
    put_u64(out, model.policy.num_params());
    put_f64s(out, model.policy.params);
    put_f64s(out, model.codebook.table);
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    char magic[6];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kCkMagic, sizeof kCkMagic) != 0) throw Error("not a checkpoint file");
    const std::uint64_t arch_len = get_u64(in);
    if (arch_len > (1u << 20)) throw Error("corrupt checkpoint header");
    std::string arch_text(arch_len, '\0');
    in.read(arch_text.data(), static_cast<std::streamsize>(arch_len));
    if (!in) throw Error("truncated checkpoint");
    const ArchConfig arch = ArchConfig::from_json(json::parse(arch_text));
    Model m;
    m.policy = MlpPolicy(arch);
    m.codebook.rows = get_u64(in);
    m.codebook.dim = get_u64(in);
    const std::uint64_t n_params = get_u64(in);
    if (n_params != m.policy.num_params()) throw Error("checkpoint parameter count does not match its architecture");
    if (m.codebook.rows > 0 && m.codebook.dim != arch.style_dim) throw Error("checkpoint codebook dim mismatch");
    get_f64s(in, m.policy.params);
    m.codebook.table.resize(m.codebook.rows * m.codebook.dim);
    get_f64s(in, m.codebook.table);
    return m;
}

}  // namespace stylebc::neural
