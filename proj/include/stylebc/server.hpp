#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "stylebc/core.hpp"
#include "stylebc/maze.hpp"
#include "stylebc/neural.hpp"

namespace stylebc::server {

struct ServerOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8080;  // 0 picks a free port
    MazeSpec maze;
    EnvConfig env;                     // default for new sessions
    std::optional<neural::Model> model;  // enables /rollout
    std::optional<Dataset> dataset;      // enables /dataset/summary, /density, property rollouts
    std::filesystem::path record_path;   // where /session/{id}/save appends
    std::filesystem::path static_dir;    // optional UI bundle served under /
    std::uint64_t seed = 0;
};

/// REST + WebSocket front end. All sessions and requests are served from a
/// single I/O thread, so each session has exactly one owner and the loaded
/// policy is shared read-only.
///
/// REST
///   POST /session {maze?, env_config?}      -> {id, state}
///   POST /session/{id}/reset                -> state
///   GET  /session/{id}/state                -> state
///   POST /session/{id}/save                 -> {id, success, length}
///   POST /rollout {style_index | property}  -> {style_index, candidates, trajectory}
///   GET  /dataset/summary                   -> {size, histogram}
///   GET  /density?beta=&ref=&resolution=    -> grid
/// WebSocket /session/{id}/step
///   client {"a":[dx,dy]}
///   server {"s":[x,y],"visited":[...],"done":b,"success":b,"steps":n,"clamped_a":[dx,dy]}
/// Errors are {"error": message, "code": tag}; a bad frame never ends the session.
class Server {
public:
    /// Binds immediately; throws Error if the address or port is unavailable.
    explicit Server(ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const;
    /// Serves until stop() is called.
    void run();
    /// Serves on a background thread.
    void start();
    void stop();

    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace stylebc::server
