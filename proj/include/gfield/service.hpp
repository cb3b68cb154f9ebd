#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gfield/field.hpp"

namespace gfield::service {

// Error carrying the HTTP status it should surface as.
class RequestError : public Error {
public:
    RequestError(int status, Errc code, const std::string& what) : Error(code, what), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

// Single-model session: the trained model, an editable working copy with a bounded undo
// stack, and at most one background training job. Every public member is thread-safe.
class Session {
public:
    explicit Session(std::size_t undo_limit = 64);
    ~Session();

    void load_model(Model model);
    bool has_model() const;

    // POST /api/train
    nlohmann::json start_training(const nlohmann::json& body);
    // GET /api/status
    nlohmann::json status() const;
    // GET /api/gaussians: N x 2 little-endian float32 means plus meta {n, d, baked}.
    std::string gaussian_means(nlohmann::json* meta) const;
    nlohmann::json gaussian_meta() const;
    // POST /api/select: {"select": {...}} -> {"indices": [...]}
    nlohmann::json select(const nlohmann::json& body) const;
    // POST /api/edit
    nlohmann::json edit(const nlohmann::json& body);
    // POST /api/undo
    nlohmann::json undo();
    // POST /api/render
    std::string render_png(const nlohmann::json& body) const;
    // GET /api/checkpoint
    std::string checkpoint() const;

    std::uint64_t version() const;
    std::size_t undo_depth() const;
    void wait_for_training();
    void cancel_training();

    // Receives every WebSocket message in emission order.
    using Listener = std::function<void(const std::string&)>;
    int subscribe(Listener listener);
    void unsubscribe(int id);

private:
    struct Geometry {
        std::vector<Vec2> means;
        std::vector<CovParams> cov;
    };

    std::shared_ptr<const Model> snapshot() const;
    std::shared_ptr<const Model> require_model() const;
    void broadcast(const nlohmann::json& message);
    void run_training(std::uint64_t job, ImageBuffer image, Model model, std::stop_token stop);

    std::size_t undo_limit_;
    mutable std::mutex mutex_;     // guards the fields below
    std::mutex edit_mutex_;        // serializes mutators
    std::shared_ptr<const Model> working_;
    std::deque<Geometry> undo_;
    std::uint64_t version_ = 0;
    std::string state_ = "idle";
    std::uint64_t job_id_ = 0;
    std::optional<TrainingRecord> last_record_;
    std::string last_error_;
    std::jthread trainer_;

    std::mutex listeners_mutex_;
    std::map<int, Listener> listeners_;
    int next_listener_ = 0;
};

struct ServerOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8080;  // 0 picks a free port
    int threads = 4;
};

// HTTP/1.1 + WebSocket front end for a Session.
class Server {
public:
    Server(Session& session, ServerOptions options);  // binds; throws Errc::io when the port is taken
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const;
    void start();  // serve on background threads
    void stop();
    void wait();   // block until stop() or a signal handled by the caller

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace gfield::service
