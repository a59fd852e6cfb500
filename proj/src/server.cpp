#include "stylebc/server.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <json.hpp>

#include "stylebc/config.hpp"
#include "stylebc/dataset_io.hpp"
#include "stylebc/evaluation.hpp"
#include "stylebc/similarity.hpp"

namespace stylebc::server {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

/// Failure with an HTTP status and a short machine-readable tag.
struct ApiError : Error {
    ApiError(http::status s, std::string c, const std::string& what, json more = json::object())
        : Error(what), status(s), code(std::move(c)), extra(std::move(more)) {}
    http::status status;
    std::string code;
    json extra;
};

json error_body(const std::string& code, const std::string& message) {
    return json{{"error", message}, {"code", code}};
}

struct Session {
    std::string id;
    MazeSpec maze;
    EnvConfig env;
    std::uint64_t seed = 0;
    std::uint64_t episode = 0;
    RngStream rng{0, "session"};
    EnvState state;
    Trajectory recording;
};

std::string_view target_of(const http::request<http::string_body>& req) {
    return {req.target().data(), req.target().size()};
}

json pair_json(double a, double b) { return json::array({a, b}); }

json state_json(const Session& s) {
    return json{{"id", s.id},
                {"maze", s.maze.name},
                {"s", pair_json(s.state.position.x, s.state.position.y)},
                {"visited", s.state.visited},
                {"done", s.state.done},
                {"success", s.state.success},
                {"steps", s.state.steps},
                {"recorded", s.recording.actions.size()},
                {"env_config", to_json(s.env)}};
}

void start_episode(Session& s) {
    s.rng = RngStream(s.seed, "session/" + s.id).derive("episode", s.episode++);
    s.state = reset(s.maze, s.env, s.rng);
    s.recording = Trajectory{};
    s.recording.states.push_back(s.state.position);
    s.recording.checkpoints = s.state.visited;
}

std::vector<std::string> split_path(std::string_view target) {
    const auto q = target.find('?');
    if (q != std::string_view::npos) target = target.substr(0, q);
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i < target.size()) {
        while (i < target.size() && target[i] == '/') ++i;
        std::size_t j = i;
        while (j < target.size() && target[j] != '/') ++j;
        if (j > i) parts.emplace_back(target.substr(i, j - i));
        i = j;
    }
    return parts;
}

std::map<std::string, std::string> query_params(std::string_view target) {
    std::map<std::string, std::string> out;
    const auto q = target.find('?');
    if (q == std::string_view::npos) return out;
    std::string_view rest = target.substr(q + 1);
    while (!rest.empty()) {
        const auto amp = rest.find('&');
        const std::string_view kv = rest.substr(0, amp);
        const auto eq = kv.find('=');
        if (eq == std::string_view::npos) {
            out[std::string(kv)] = "";
        } else {
            out[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
        }
        if (amp == std::string_view::npos) break;
        rest = rest.substr(amp + 1);
    }
    return out;
}

template <class T>
T parse_number(const std::string& text, const std::string& name) {
    T value{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end)
        throw ApiError(http::status::bad_request, "bad_query", "query parameter '" + name + "' is not a valid number");
    return value;
}

json parse_body(const std::string& body) {
    if (body.empty()) return json::object();
    try {
        json j = json::parse(body);
        if (!j.is_object()) throw ApiError(http::status::bad_request, "bad_request", "request body must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw ApiError(http::status::bad_request, "bad_json", std::string("malformed JSON: ") + e.what());
    }
}

std::string mime_type(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".html") return "text/html";
    if (ext == ".js" || ext == ".mjs") return "application/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".png") return "image/png";
    if (ext == ".wasm") return "application/wasm";
    return "application/octet-stream";
}

}  // namespace

struct Server::Impl {
    explicit Impl(ServerOptions o) : opt(std::move(o)), acceptor(ioc) {}

    ServerOptions opt;
    net::io_context ioc{1};
    tcp::acceptor acceptor;
    std::thread thread;
    std::map<std::string, std::shared_ptr<Session>> sessions;
    std::uint64_t next_session = 1;
    std::uint64_t next_rollout_seed = 0;
    std::optional<similarity::DissimilarityMatrix> nu;

    void listen() {
        try {
            const tcp::endpoint ep(net::ip::make_address(opt.address), opt.port);
            acceptor.open(ep.protocol());
            acceptor.set_option(net::socket_base::reuse_address(true));
            acceptor.bind(ep);
            acceptor.listen(net::socket_base::max_listen_connections);
        } catch (const boost::system::system_error& e) {
            throw Error("cannot listen on " + opt.address + ":" + std::to_string(opt.port) + ": " + e.what());
        }
    }

    void accept();

    std::shared_ptr<Session> find_session(const std::string& id) {
        const auto it = sessions.find(id);
        if (it == sessions.end()) throw ApiError(http::status::not_found, "no_session", "unknown session '" + id + "'");
        return it->second;
    }

    json create_session(const json& body) {
        config::Violations v;
        config::reject_unknown(body, {"maze", "env_config", "seed"}, "", v);
        auto s = std::make_shared<Session>();
        s->maze = opt.maze;
        s->env = opt.env;
        s->seed = opt.seed;
        if (body.contains("maze")) {
            if (!body["maze"].is_string()) {
                v.push_back("maze: expected a maze name or layout string");
            } else {
                const auto text = body["maze"].get<std::string>();
                if (text.find('\n') != std::string::npos) {
                    try {
                        s->maze = load_maze(text, "custom");
                    } catch (const Error& e) {
                        v.push_back(std::string("maze: ") + e.what());
                    }
                } else if (!text.empty() && text != opt.maze.name) {
                    v.push_back("maze: unknown maze '" + text + "' (server has '" + opt.maze.name + "')");
                }
            }
        }
        if (body.contains("env_config")) s->env.merge_json(body["env_config"], v, "env_config");
        config::read(body, "seed", s->seed, "", v);
        s->env.check(v, "env_config");
        if (!v.empty())
            throw ApiError(http::status::bad_request, "bad_config", config::ConfigError(v).what(),
                           json{{"violations", v}});
        s->id = std::to_string(next_session++);
        start_episode(*s);
        sessions[s->id] = s;
        return state_json(*s);
    }

    json save_session(Session& s) {
        if (opt.record_path.empty())
            throw ApiError(http::status::conflict, "no_record_file", "server was started without a recording file");
        if (s.recording.actions.empty())
            throw ApiError(http::status::conflict, "empty_recording", "nothing recorded since the last reset");
        Trajectory t = s.recording;
        t.success = s.state.success;
        DatasetMeta meta;
        meta.maze_name = s.maze.name;
        meta.generator = "serve";
        meta.seed = s.seed;
        const int id = append_trajectory(opt.record_path, meta, t);
        s.recording.states = {s.state.position};
        s.recording.actions.clear();
        return json{{"id", id}, {"success", t.success}, {"length", t.actions.size()}, {"path", opt.record_path.string()}};
    }

    const Dataset& dataset() const {
        if (!opt.dataset) throw ApiError(http::status::conflict, "no_dataset", "server was started without a dataset");
        return *opt.dataset;
    }

    const similarity::DissimilarityMatrix& dissimilarities() {
        if (!nu) nu = similarity::dissimilarity_matrix(dataset());
        return *nu;
    }

    json rollout(const json& body) {
        if (!opt.model) throw ApiError(http::status::conflict, "no_policy", "server was started without a checkpoint");
        const neural::Model& model = *opt.model;
        config::Violations v;
        config::reject_unknown(body, {"style_index", "property", "seed", "greedy", "env_config"}, "", v);
        std::optional<std::size_t> style_index;
        if (body.contains("style_index")) {
            std::size_t idx = 0;
            config::read(body, "style_index", idx, "", v);
            style_index = idx;
        }
        std::uint64_t seed = next_rollout_seed;
        bool greedy = true;
        config::read(body, "seed", seed, "", v);
        config::read(body, "greedy", greedy, "", v);
        EnvConfig env = opt.env;
        if (body.contains("env_config")) env.merge_json(body["env_config"], v, "env_config");
        env.check(v, "env_config");
        if (!v.empty())
            throw ApiError(http::status::bad_request, "bad_request", config::ConfigError(v).what(),
                           json{{"violations", v}});
        if (!body.contains("seed")) ++next_rollout_seed;

        evaluation::StyleSource source = evaluation::default_source(model);
        const bool styled = model.policy.arch().use_style;
        if (style_index && body.contains("property"))
            throw ApiError(http::status::bad_request, "bad_request", "give either style_index or property, not both");
        if (style_index) {
            if (!styled) throw ApiError(http::status::bad_request, "no_style", "the loaded policy takes no style input");
            if (*style_index >= model.codebook.rows)
                throw ApiError(http::status::bad_request, "bad_style", "style_index out of range");
            source = evaluation::StyleSource::single_row(*style_index);
        } else if (body.contains("property")) {
            if (!styled) throw ApiError(http::status::bad_request, "no_style", "the loaded policy takes no style input");
            evaluation::Property prop;
            try {
                prop = evaluation::Property::from_json(body["property"]);
                prop.validate();
            } catch (const Error& e) {
                throw ApiError(http::status::bad_request, "bad_property", e.what());
            }
            try {
                source = evaluation::conditioned_styles(dataset(), model, prop);
            } catch (const ApiError&) {
                throw;
            } catch (const Error& e) {
                throw ApiError(http::status::unprocessable_entity, "unsatisfiable", e.what());
            }
        }
        std::vector<std::size_t> chosen;
        const auto trajs = evaluation::generate(model, opt.maze, env, 1, seed, source, greedy, &chosen);
        json out{{"seed", seed}, {"candidates", source.rows}, {"trajectory", to_json(trajs.front())}};
        out["style_index"] = styled && !chosen.empty() ? json(chosen.front()) : json(nullptr);
        return out;
    }

    json density(const std::string& target) {
        const auto q = query_params(target);
        double beta = 10.0;
        std::size_t ref = 0, resolution = 64;
        if (q.count("beta")) beta = parse_number<double>(q.at("beta"), "beta");
        if (q.count("ref")) ref = parse_number<std::size_t>(q.at("ref"), "ref");
        if (q.count("resolution")) resolution = parse_number<std::size_t>(q.at("resolution"), "resolution");
        if (!(beta >= 0.0)) throw ApiError(http::status::bad_request, "bad_query", "beta must be >= 0");
        if (resolution < 1 || resolution > 1024)
            throw ApiError(http::status::bad_request, "bad_query", "resolution must be in [1, 1024]");
        const Dataset& ds = dataset();
        if (ref >= ds.size()) throw ApiError(http::status::bad_request, "bad_query", "ref out of range");
        const auto g = evaluation::density(ds, dissimilarities(), beta, ref, resolution, opt.maze.width, opt.maze.height);
        return json{{"resolution", g.resolution}, {"width", g.width}, {"height", g.height}, {"beta", beta},
                    {"ref", ref},               {"total", g.total()}, {"mass", g.mass}};
    }

    json summary() {
        const Dataset& ds = dataset();
        std::vector<std::size_t> lengths;
        for (const auto& t : ds.trajectories) lengths.push_back(t.length());
        return json{{"size", ds.size()},
                    {"maze", ds.meta.maze_name},
                    {"histogram", to_json(histogram_of(ds.trajectories))},
                    {"lengths", lengths}};
    }

    /// Handles one WebSocket step frame; never throws.
    json step_frame(Session& s, const std::string& text) {
        json frame;
        try {
            frame = json::parse(text);
        } catch (const json::parse_error& e) {
            return error_body("bad_frame", std::string("malformed JSON: ") + e.what());
        }
        if (!frame.is_object() || !frame.contains("a") || !frame["a"].is_array() || frame["a"].size() != 2 ||
            !frame["a"][0].is_number() || !frame["a"][1].is_number())
            return error_body("bad_frame", "expected {\"a\": [dx, dy]}");
        const Action a{frame["a"][0].get<double>(), frame["a"][1].get<double>()};
        if (!std::isfinite(a.dx) || !std::isfinite(a.dy)) return error_body("bad_frame", "action must be finite");
        if (s.state.done) return error_body("episode_done", "episode finished; reset the session");
        const StepOutcome o = step(s.maze, s.state, a, s.env, s.rng);
        s.state = o.state;
        s.recording.states.push_back(o.state.position);
        s.recording.actions.push_back(o.applied);
        s.recording.checkpoints = o.state.visited;
        s.recording.success = o.state.success;
        return json{{"s", pair_json(o.state.position.x, o.state.position.y)},
                    {"visited", o.state.visited},
                    {"done", o.state.done},
                    {"success", o.state.success},
                    {"steps", o.state.steps},
                    {"clamped_a", pair_json(o.applied.dx, o.applied.dy)}};
    }

    http::response<http::string_body> static_file(const http::request<http::string_body>& req) {
        std::string path(target_of(req).substr(0, target_of(req).find('?')));
        if (path.empty() || path == "/") path = "/index.html";
        if (opt.static_dir.empty() || path.find("..") != std::string::npos)
            throw ApiError(http::status::not_found, "not_found", "no such resource");
        const auto file = opt.static_dir / path.substr(1);
        std::ifstream in(file, std::ios::binary);
        if (!in) throw ApiError(http::status::not_found, "not_found", "no such resource");
        std::ostringstream buf;
        buf << in.rdbuf();
        http::response<http::string_body> res{http::status::ok, req.version()};
        res.set(http::field::content_type, mime_type(file));
        res.body() = buf.str();
        return res;
    }

    http::response<http::string_body> route(const http::request<http::string_body>& req) {
        const auto parts = split_path(target_of(req));
        const auto method = req.method();
        auto ok = [&](const json& j) {
            http::response<http::string_body> res{http::status::ok, req.version()};
            res.set(http::field::content_type, "application/json");
            res.body() = j.dump();
            return res;
        };
        auto require = [&](http::verb v) {
            if (method != v) throw ApiError(http::status::method_not_allowed, "bad_method", "method not allowed");
        };
        if (!parts.empty() && parts[0] == "session") {
            if (parts.size() == 1) {
                require(http::verb::post);
                return ok(create_session(parse_body(req.body())));
            }
            auto s = find_session(parts[1]);
            if (parts.size() == 3 && parts[2] == "reset") {
                require(http::verb::post);
                start_episode(*s);
                return ok(state_json(*s));
            }
            if (parts.size() == 3 && parts[2] == "state") {
                require(http::verb::get);
                return ok(state_json(*s));
            }
            if (parts.size() == 3 && parts[2] == "save") {
                require(http::verb::post);
                return ok(save_session(*s));
            }
            if (parts.size() == 3 && parts[2] == "step")
                throw ApiError(http::status::upgrade_required, "upgrade_required", "step requires a WebSocket");
        } else if (parts.size() == 1 && parts[0] == "rollout") {
            require(http::verb::post);
            return ok(rollout(parse_body(req.body())));
        } else if (parts.size() == 2 && parts[0] == "dataset" && parts[1] == "summary") {
            require(http::verb::get);
            return ok(summary());
        } else if (parts.size() == 1 && parts[0] == "density") {
            require(http::verb::get);
            return ok(density(std::string(target_of(req))));
        } else if (parts.size() == 1 && parts[0] == "maze") {
            require(http::verb::get);
            return ok(json{{"name", opt.maze.name},
                           {"width", opt.maze.width},
                           {"height", opt.maze.height},
                           {"layout", opt.maze.render()}});
        }
        if (method == http::verb::get) return static_file(req);
        throw ApiError(http::status::not_found, "not_found", "no such resource");
    }

    http::response<http::string_body> handle(const http::request<http::string_body>& req) {
        http::response<http::string_body> res;
        if (req.method() == http::verb::options) {
            res = {http::status::no_content, req.version()};
        } else {
            try {
                res = route(req);
            } catch (const ApiError& e) {
                res = {e.status, req.version()};
                res.set(http::field::content_type, "application/json");
                json body = error_body(e.code, e.what());
                body.update(e.extra);
                res.body() = body.dump();
            } catch (const std::exception& e) {
                res = {http::status::internal_server_error, req.version()};
                res.set(http::field::content_type, "application/json");
                res.body() = error_body("internal", e.what()).dump();
            }
        }
        res.set(http::field::access_control_allow_origin, "*");
        res.set(http::field::access_control_allow_headers, "Content-Type");
        res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
        res.keep_alive(req.keep_alive());
        res.prepare_payload();
        return res;
    }
};

namespace {

class WsConnection : public std::enable_shared_from_this<WsConnection> {
public:
    WsConnection(tcp::socket socket, Server::Impl& impl, std::shared_ptr<Session> session)
        : ws_(std::move(socket)), impl_(impl), session_(std::move(session)) {}

    void start(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
            if (!ec) self->read();
        });
    }

private:
    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return;
            const std::string text = beast::buffers_to_string(self->buffer_.data());
            self->buffer_.consume(self->buffer_.size());
            self->reply_ = self->impl_.step_frame(*self->session_, text).dump();
            self->ws_.text(true);
            self->ws_.async_write(net::buffer(self->reply_), [self](beast::error_code ec2, std::size_t) {
                if (!ec2) self->read();
            });
        });
    }

    websocket::stream<beast::tcp_stream> ws_;
    Server::Impl& impl_;
    std::shared_ptr<Session> session_;
    beast::flat_buffer buffer_;
    std::string reply_;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
public:
    HttpConnection(tcp::socket socket, Server::Impl& impl) : stream_(std::move(socket)), impl_(impl) {}

    void start() { read(); }

private:
    void read() {
        req_ = {};
        stream_.expires_after(std::chrono::seconds(60));
        http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return;
            self->dispatch();
        });
    }

    void dispatch() {
        if (websocket::is_upgrade(req_)) {
            const auto parts = split_path(target_of(req_));
            if (parts.size() == 3 && parts[0] == "session" && parts[2] == "step") {
                const auto it = impl_.sessions.find(parts[1]);
                if (it != impl_.sessions.end()) {
                    stream_.expires_never();
                    std::make_shared<WsConnection>(stream_.release_socket(), impl_, it->second)->start(std::move(req_));
                    return;
                }
            }
        }
        res_ = impl_.handle(req_);
        http::async_write(stream_, res_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec || !self->res_.keep_alive()) {
                beast::error_code ignored;
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                return;
            }
            self->read();
        });
    }

    beast::tcp_stream stream_;
    Server::Impl& impl_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
    http::response<http::string_body> res_;
};

}  // namespace

void Server::Impl::accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
        if (ec) return;
        std::make_shared<HttpConnection>(std::move(socket), *this)->start();
        accept();
    });
}

Server::Server(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
    impl_->opt.maze.validate();
    impl_->opt.env.validate();
    const auto& model = impl_->opt.model;
    if (model && impl_->opt.dataset && model->policy.arch().use_style &&
        model->codebook.rows != impl_->opt.dataset->size())
        throw Error("checkpoint codebook size does not match the dataset");
    impl_->listen();
    impl_->accept();
}

Server::~Server() {
    stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() { impl_->ioc.run(); }

void Server::start() {
    impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

void Server::stop() { impl_->ioc.stop(); }

}  // namespace stylebc::server
