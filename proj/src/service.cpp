#include "gfield/service.hpp"

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <boost/beast/core/detail/base64.hpp>

#include <cmath>
#include <condition_variable>
#include <cstring>

#include "gfield/edit.hpp"
#include "gfield/io.hpp"

namespace gfield::service {

using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string decode_base64(const std::string& text) {
    namespace b64 = boost::beast::detail::base64;
    std::string out(b64::decoded_size(text.size()), '\0');
    const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
    if (read != text.size() && text.find_first_not_of("= \r\n", read) != std::string::npos)
        throw RequestError(400, Errc::parse, "image_png_base64 is not valid base64");
    out.resize(written);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Session

Session::Session(std::size_t undo_limit) : undo_limit_(undo_limit) {}

Session::~Session() { cancel_training(); }

void Session::load_model(Model model) {
    std::lock_guard edit_lock(edit_mutex_);
    std::lock_guard lock(mutex_);
    if (state_ == "running") throw RequestError(409, Errc::busy, "a training job is running");
    working_ = std::make_shared<const Model>(std::move(model));
    undo_.clear();
    ++version_;
}

bool Session::has_model() const {
    std::lock_guard lock(mutex_);
    return working_ != nullptr;
}

std::shared_ptr<const Model> Session::snapshot() const {
    std::lock_guard lock(mutex_);
    return working_;
}

std::shared_ptr<const Model> Session::require_model() const {
    auto m = snapshot();
    if (!m) throw RequestError(404, Errc::not_found, "no model loaded");
    return m;
}

std::uint64_t Session::version() const {
    std::lock_guard lock(mutex_);
    return version_;
}

std::size_t Session::undo_depth() const {
    std::lock_guard lock(mutex_);
    return undo_.size();
}

int Session::subscribe(Listener listener) {
    std::lock_guard lock(listeners_mutex_);
    listeners_[next_listener_] = std::move(listener);
    return next_listener_++;
}

void Session::unsubscribe(int id) {
    std::lock_guard lock(listeners_mutex_);
    listeners_.erase(id);
}

void Session::broadcast(const json& message) {
    const std::string text = message.dump();
    std::lock_guard lock(listeners_mutex_);
    for (auto& [_, l] : listeners_) l(text);
}

json Session::start_training(const json& body) {
    if (!body.is_object()) throw RequestError(400, Errc::parse, "train request must be a JSON object");
    ImageBuffer image;
    try {
        if (auto it = body.find("image_png_base64"); it != body.end() && it->is_string()) {
            image = io::decode_png(decode_base64(it->get<std::string>()));
        } else if (auto p = body.find("image"); p != body.end() && p->is_string()) {
            image = io::load_image(p->get<std::string>());
        } else {
            throw RequestError(400, Errc::semantic, "train request needs \"image\" (path) or \"image_png_base64\"");
        }
    } catch (const RequestError&) {
        throw;
    } catch (const Error& e) {
        throw RequestError(400, e.code(), e.what());
    }

    ModelConfig cfg;
    try {
        if (auto c = body.find("config"); c != body.end()) cfg = io::config_from_json(*c);
        if (auto it = body.find("iterations"); it != body.end()) cfg.iterations = it->get<int>();
        if (auto it = body.find("seed"); it != body.end()) cfg.rng_seed = it->get<std::uint64_t>();
        cfg = validate_config(cfg);
    } catch (const Error& e) {
        throw RequestError(400, Errc::config, e.what());
    } catch (const json::exception& e) {
        throw RequestError(400, Errc::config, e.what());
    }

    Model model;
    try {
        model = init_model(image, cfg, cfg.rng_seed);
    } catch (const Error& e) {
        throw RequestError(400, e.code(), e.what());
    }

    std::lock_guard edit_lock(edit_mutex_);
    std::uint64_t job = 0;
    {
        std::lock_guard lock(mutex_);
        if (state_ == "running") throw RequestError(409, Errc::busy, "a training job is already running");
        job = ++job_id_;
        state_ = "running";
        last_record_.reset();
        last_error_.clear();
    }
    if (trainer_.joinable()) trainer_.join();
    trainer_ = std::jthread([this, job, image = std::move(image), model = std::move(model)](std::stop_token st) mutable {
        run_training(job, std::move(image), std::move(model), st);
    });
    return json{{"job_id", job}, {"state", "running"}};
}

void Session::run_training(std::uint64_t job, ImageBuffer image, Model model, std::stop_token stop) {
    try {
        TrainOptions opts;
        opts.stop = stop;
        opts.on_progress = [&](const TrainingRecord& rec) {
            {
                std::lock_guard lock(mutex_);
                last_record_ = rec;
            }
            broadcast({{"type", "progress"},
                       {"iter", rec.iteration},
                       {"loss", rec.loss},
                       {"psnr", number_or_null(rec.psnr)}});
        };
        train(model, image, opts);
        bake(model);
        model.quantize_to_float32();
        // Final entry: full-image PSNR of the exported model's 8-bit render, as `eval` reports it.
        TrainingRecord final_rec{model.config.iterations, 0.0,
                                 psnr(io::quantize_8bit(render(model, image.width, image.height)), image)};
        if (!model.history.records.empty()) {
            final_rec.iteration = model.history.records.back().iteration;
            final_rec.loss = model.history.records.back().loss;
        } else {
            final_rec.iteration = 0;
        }
        model.history.records.push_back(final_rec);

        std::uint64_t version = 0;
        {
            std::lock_guard lock(mutex_);
            working_ = std::make_shared<const Model>(std::move(model));
            undo_.clear();
            version = ++version_;
            last_record_ = final_rec;
            state_ = "done";
        }
        broadcast({{"type", "progress"},
                   {"iter", final_rec.iteration},
                   {"loss", final_rec.loss},
                   {"psnr", number_or_null(final_rec.psnr)}});
        broadcast({{"type", "preview"}, {"version", version}});
    } catch (const std::exception& e) {
        std::lock_guard lock(mutex_);
        state_ = "error";
        last_error_ = e.what();
    }
    (void)job;
}

void Session::wait_for_training() {
    if (trainer_.joinable()) trainer_.join();
}

void Session::cancel_training() {
    if (trainer_.joinable()) {
        trainer_.request_stop();
        trainer_.join();
    }
}

json Session::status() const {
    std::lock_guard lock(mutex_);
    json s{{"state", state_}, {"version", version_}, {"job_id", job_id_}, {"undo_depth", undo_.size()}};
    if (last_record_) {
        s["iter"] = last_record_->iteration;
        s["loss"] = last_record_->loss;
        s["psnr"] = number_or_null(last_record_->psnr);
    } else {
        s["iter"] = 0;
        s["loss"] = nullptr;
        s["psnr"] = nullptr;
    }
    if (!last_error_.empty()) s["error"] = last_error_;
    if (working_) {
        s["model"] = {{"n", working_->gaussians.size()},
                      {"d", working_->embedding_dim()},
                      {"baked", working_->baked()},
                      {"width", working_->width},
                      {"height", working_->height},
                      {"channels", working_->output_channels()}};
    }
    return s;
}

json Session::gaussian_meta() const {
    auto m = require_model();
    std::lock_guard lock(mutex_);
    return {{"n", m->gaussians.size()}, {"d", m->embedding_dim()}, {"baked", m->baked()}, {"version", version_}};
}

std::string Session::gaussian_means(json* meta) const {
    auto m = require_model();
    if (meta) *meta = {{"n", m->gaussians.size()}, {"d", m->embedding_dim()}, {"baked", m->baked()}};
    std::string out;
    out.reserve(m->gaussians.size() * 8);
    for (const Vec2& v : m->gaussians.means) {
        for (double c : {v.x, v.y}) {
            const float f = static_cast<float>(c);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
        }
    }
    return out;
}

json Session::select(const json& body) const {
    auto m = require_model();
    if (!body.is_object() || !body.contains("select"))
        throw RequestError(400, Errc::semantic, "select request needs a \"select\" object");
    try {
        const json script{{"ops", json::array({{{"select", body["select"]}, {"transform", {{"kind", "translate"}, {"v", {0, 0}}}}}})}};
        const auto ops = io::parse_edit_ops(script);
        return {{"indices", gfield::select(m->gaussians, ops.front().select)}};
    } catch (const Error& e) {
        throw RequestError(400, e.code(), e.what());
    }
}

json Session::edit(const json& body) {
    std::vector<EditOp> ops;
    try {
        ops = io::parse_edit_ops(body);
    } catch (const Error& e) {
        throw RequestError(400, e.code(), e.what());
    }
    std::lock_guard edit_lock(edit_mutex_);
    std::shared_ptr<const Model> current;
    {
        std::lock_guard lock(mutex_);
        if (state_ == "running") throw RequestError(409, Errc::busy, "edits are rejected while training runs");
        current = working_;
    }
    if (!current) throw RequestError(404, Errc::not_found, "no model loaded");
    if (!current->baked()) throw RequestError(409, Errc::state, "edits require a baked model");
    if (ops.empty()) return {{"render_version", version()}};

    auto next = std::make_shared<Model>(*current);
    try {
        apply_edits(*next, ops);
    } catch (const Error& e) {
        throw RequestError(400, e.code(), e.what());
    }
    // The working copy stays at checkpoint precision so exports reproduce its renders.
    next->quantize_to_float32();

    std::uint64_t v = 0;
    {
        std::lock_guard lock(mutex_);
        undo_.push_back({current->gaussians.means, current->gaussians.cov});
        while (undo_.size() > undo_limit_) undo_.pop_front();
        working_ = std::move(next);
        v = ++version_;
    }
    broadcast({{"type", "preview"}, {"version", v}});
    return {{"render_version", v}};
}

json Session::undo() {
    std::lock_guard edit_lock(edit_mutex_);
    std::shared_ptr<const Model> current;
    Geometry geom;
    {
        std::lock_guard lock(mutex_);
        if (state_ == "running") throw RequestError(409, Errc::busy, "undo is rejected while training runs");
        if (undo_.empty()) throw RequestError(409, Errc::state, "undo stack is empty");
        current = working_;
        geom = std::move(undo_.back());
        undo_.pop_back();
    }
    auto next = std::make_shared<Model>(*current);
    next->gaussians.means = std::move(geom.means);
    next->gaussians.cov = std::move(geom.cov);
    next->rebuild_index();
    std::uint64_t v = 0;
    {
        std::lock_guard lock(mutex_);
        working_ = std::move(next);
        v = ++version_;
    }
    broadcast({{"type", "preview"}, {"version", v}});
    return {{"render_version", v}};
}

std::string Session::render_png(const json& body) const {
    auto m = require_model();
    if (!body.is_object()) throw RequestError(400, Errc::parse, "render request must be a JSON object");
    try {
        const std::string format = body.value("format", std::string("png"));
        if (format != "png") throw RequestError(400, Errc::unsupported_format, "only format \"png\" is supported");
        const int w = body.value("width", m->width);
        const int h = body.value("height", m->height);
        std::optional<PixelRect> region;
        if (auto r = body.find("region"); r != body.end() && !r->is_null()) {
            if (r->is_array() && r->size() == 4) {
                region = PixelRect{(*r)[0].get<int>(), (*r)[1].get<int>(), (*r)[2].get<int>(), (*r)[3].get<int>()};
            } else if (r->is_object()) {
                region = PixelRect{r->at("x0").get<int>(), r->at("y0").get<int>(), r->at("x1").get<int>(),
                                   r->at("y1").get<int>()};
            } else {
                throw RequestError(400, Errc::semantic, "region must be [x0, y0, x1, y1]");
            }
        }
        return io::encode_png(render(*m, w, h, region));
    } catch (const RequestError&) {
        throw;
    } catch (const Error& e) {
        throw RequestError(400, e.code(), e.what());
    } catch (const json::exception& e) {
        throw RequestError(400, Errc::semantic, e.what());
    }
}

std::string Session::checkpoint() const { return io::encode_checkpoint(*require_model()); }

// ---------------------------------------------------------------------------
// Network front end

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

class WsConnection;

class Hub {
public:
    void join(const std::shared_ptr<WsConnection>& c) {
        std::lock_guard lock(mutex_);
        conns_.push_back(c);
    }
    void broadcast(const std::string& text);

private:
    std::mutex mutex_;
    std::vector<std::weak_ptr<WsConnection>> conns_;
};

class WsConnection : public std::enable_shared_from_this<WsConnection> {
public:
    WsConnection(tcp::socket&& socket, Hub& hub) : ws_(std::move(socket)), hub_(hub) {}

    void run(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
            if (ec) return;
            self->hub_.join(self);
            self->do_read();
        });
    }

    void send(std::shared_ptr<const std::string> msg) {
        net::post(ws_.get_executor(), [self = shared_from_this(), msg] {
            self->queue_.push_back(msg);
            if (self->queue_.size() == 1) self->do_write();
        });
    }

private:
    void do_read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return;
            self->buffer_.consume(self->buffer_.size());
            self->do_read();
        });
    }

    void do_write() {
        ws_.text(true);
        ws_.async_write(net::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->queue_.clear();
                return;
            }
            self->queue_.pop_front();
            if (!self->queue_.empty()) self->do_write();
        });
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    Hub& hub_;
};

void Hub::broadcast(const std::string& text) {
    auto msg = std::make_shared<const std::string>(text);
    std::lock_guard lock(mutex_);
    std::erase_if(conns_, [](const auto& w) { return w.expired(); });
    for (auto& w : conns_) {
        if (auto c = w.lock()) c->send(msg);
    }
}

http::response<http::string_body> json_response(http::status status, const json& body, unsigned version,
                                                 bool keep_alive) {
    http::response<http::string_body> res{status, version};
    res.set(http::field::content_type, "application/json");
    res.body() = body.dump();
    res.keep_alive(keep_alive);
    res.prepare_payload();
    return res;
}

http::response<http::string_body> binary_response(std::string body, const char* type, unsigned version,
                                                   bool keep_alive) {
    http::response<http::string_body> res{http::status::ok, version};
    res.set(http::field::content_type, type);
    res.body() = std::move(body);
    res.keep_alive(keep_alive);
    res.prepare_payload();
    return res;
}

http::response<http::string_body> handle(Session& session, const http::request<http::string_body>& req) {
    const unsigned v = req.version();
    const bool ka = req.keep_alive();
    const std::string target(req.target());
    const std::string path = target.substr(0, target.find('?'));
    auto body_json = [&] {
        if (req.body().empty()) return json::object();
        try {
            return json::parse(req.body());
        } catch (const json::parse_error& e) {
            throw RequestError(400, Errc::parse, std::string("request body: ") + e.what());
        }
    };

    http::response<http::string_body> res;
    try {
        if (req.method() == http::verb::options) {
            res = {http::status::no_content, v};
            res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
            res.set(http::field::access_control_allow_headers, "Content-Type");
            res.keep_alive(ka);
        } else if (req.method() == http::verb::get && path == "/api/status") {
            res = json_response(http::status::ok, session.status(), v, ka);
        } else if (req.method() == http::verb::get && path == "/api/gaussians") {
            json meta;
            res = binary_response(session.gaussian_means(&meta), "application/octet-stream", v, ka);
            res.set("X-Gaussian-Meta", meta.dump());
            res.set(http::field::access_control_expose_headers, "X-Gaussian-Meta");
        } else if (req.method() == http::verb::get && path == "/api/gaussians/meta") {
            res = json_response(http::status::ok, session.gaussian_meta(), v, ka);
        } else if (req.method() == http::verb::get && path == "/api/checkpoint") {
            res = binary_response(session.checkpoint(), "application/octet-stream", v, ka);
        } else if (req.method() == http::verb::post && path == "/api/train") {
            res = json_response(http::status::ok, session.start_training(body_json()), v, ka);
        } else if (req.method() == http::verb::post && path == "/api/select") {
            res = json_response(http::status::ok, session.select(body_json()), v, ka);
        } else if (req.method() == http::verb::post && path == "/api/edit") {
            res = json_response(http::status::ok, session.edit(body_json()), v, ka);
        } else if (req.method() == http::verb::post && path == "/api/undo") {
            res = json_response(http::status::ok, session.undo(), v, ka);
        } else if (req.method() == http::verb::post && path == "/api/render") {
            res = binary_response(session.render_png(body_json()), "image/png", v, ka);
        } else {
            throw RequestError(404, Errc::not_found, "no route for " + std::string(req.method_string()) + " " + path);
        }
    } catch (const RequestError& e) {
        res = json_response(static_cast<http::status>(e.status()), {{"error", e.what()}, {"code", errc_name(e.code())}},
                            v, ka);
    } catch (const Error& e) {
        res = json_response(http::status::bad_request, {{"error", e.what()}, {"code", errc_name(e.code())}}, v, ka);
    } catch (const std::exception& e) {
        res = json_response(http::status::internal_server_error, {{"error", e.what()}}, v, ka);
    }
    res.set(http::field::access_control_allow_origin, "*");
    res.set(http::field::server, "gfield");
    return res;
}

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
public:
    HttpConnection(tcp::socket&& socket, Session& session, Hub& hub)
        : stream_(std::move(socket)), session_(session), hub_(hub) {}

    void run() {
        net::dispatch(stream_.get_executor(), [self = shared_from_this()] { self->do_read(); });
    }

private:
    void do_read() {
        parser_.emplace();
        parser_->body_limit(256 * 1024 * 1024);
        stream_.expires_after(std::chrono::seconds(120));
        http::async_read(stream_, buffer_, *parser_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            self->on_read(ec);
        });
    }

    void on_read(beast::error_code ec) {
        if (ec) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        auto req = parser_->release();
        if (websocket::is_upgrade(req)) {
            if (req.target() == "/ws") {
                stream_.expires_never();
                std::make_shared<WsConnection>(stream_.release_socket(), hub_)->run(std::move(req));
            }
            return;
        }
        auto res = std::make_shared<http::response<http::string_body>>(handle(session_, req));
        http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
            if (ec) return;
            if (!res->keep_alive()) {
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
                return;
            }
            self->do_read();
        });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    std::optional<http::request_parser<http::string_body>> parser_;
    Session& session_;
    Hub& hub_;
};

}  // namespace

struct Server::Impl {
    Session& session;
    ServerOptions options;
    net::io_context ioc;
    tcp::acceptor acceptor;
    Hub hub;
    int listener_id = -1;
    std::vector<std::thread> threads;
    std::mutex stop_mutex;
    std::condition_variable stopped_cv;
    bool stopped = false;

    Impl(Session& s, ServerOptions o) : session(s), options(std::move(o)), ioc(std::max(1, options.threads)), acceptor(ioc) {
        beast::error_code ec;
        const auto addr = net::ip::make_address(options.address, ec);
        if (ec) throw Error(Errc::io, "invalid listen address " + options.address);
        const tcp::endpoint ep{addr, options.port};
        acceptor.open(ep.protocol(), ec);
        if (!ec) acceptor.set_option(net::socket_base::reuse_address(true), ec);
        if (!ec) acceptor.bind(ep, ec);
        if (!ec) acceptor.listen(net::socket_base::max_listen_connections, ec);
        if (ec) throw Error(Errc::io, "cannot listen on " + options.address + ":" + std::to_string(options.port) + ": " +
                                          ec.message());
        listener_id = session.subscribe([this](const std::string& text) { hub.broadcast(text); });
    }

    void do_accept() {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) {
                if (ec == net::error::operation_aborted) return;
            } else {
                std::make_shared<HttpConnection>(std::move(socket), session, hub)->run();
            }
            do_accept();
        });
    }
};

Server::Server(Session& session, ServerOptions options) : impl_(std::make_unique<Impl>(session, std::move(options))) {}

Server::~Server() {
    stop();
    impl_->session.unsubscribe(impl_->listener_id);
}

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::start() {
    impl_->do_accept();
    for (int i = 0; i < std::max(1, impl_->options.threads); ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

void Server::stop() {
    net::post(impl_->ioc, [this] {
        beast::error_code ec;
        impl_->acceptor.close(ec);
    });
    impl_->ioc.stop();
    for (auto& t : impl_->threads) {
        if (t.joinable()) t.join();
    }
    impl_->threads.clear();
    {
        std::lock_guard lock(impl_->stop_mutex);
        impl_->stopped = true;
    }
    impl_->stopped_cv.notify_all();
}

void Server::wait() {
    std::unique_lock lock(impl_->stop_mutex);
    impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
}

}  // namespace gfield::service
