#include <doctest.h>

#include <httplib.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <thread>

#include "gfield/io.hpp"
#include "gfield/service.hpp"
#include "oracles.hpp"

using namespace gfield;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path toy_image_path() {
    static const fs::path p = [] {
        const fs::path path = fs::temp_directory_path() / "gfield_service_toy.png";
        io::save_image(fixtures::pattern(24, 20, true), path);
        return path;
    }();
    return p;
}

json toy_train_request(int iterations) {
    json cfg = io::config_to_json(fixtures::small_config(120));
    cfg.erase("iterations");
    return {{"image", toy_image_path().string()}, {"config", cfg}, {"iterations", iterations}, {"seed", 4}};
}

int request_status(const std::function<void()>& f) {
    try {
        f();
    } catch (const service::RequestError& e) {
        return e.status();
    }
    return 200;
}

Model baked_model() {
    Model m = fixtures::trained_toy(10, 8, true);
    bake(m);
    m.quantize_to_float32();
    return m;
}

std::vector<float> means_of(const std::string& bytes) {
    std::vector<float> v(bytes.size() / 4);
    std::memcpy(v.data(), bytes.data(), bytes.size());
    return v;
}

const json kTranslate = json::parse(R"({"ops":[{"select":{"kind":"all"},"transform":{"kind":"translate","v":[0.05,0.0]}}]})");

}  // namespace

TEST_SUITE("service") {

TEST_CASE("idle session and missing model") {
    service::Session s;
    CHECK(s.status()["state"] == "idle");
    CHECK_FALSE(s.has_model());
    CHECK(request_status([&] { s.render_png(json::object()); }) == 404);
    CHECK(request_status([&] { s.edit(kTranslate); }) == 404);
    CHECK(request_status([&] { s.undo(); }) == 409);
}

TEST_CASE("training jobs: immediate completion, busy conflict, bad requests") {
    service::Session s;
    const json r = s.start_training(toy_train_request(0));
    CHECK(r.contains("job_id"));
    s.wait_for_training();
    json st = s.status();
    CHECK(st["state"] == "done");
    CHECK(st["model"]["baked"] == true);

    s.start_training(toy_train_request(100000));
    CHECK(s.status()["state"] == "running");
    CHECK(request_status([&] { s.start_training(toy_train_request(5)); }) == 409);
    CHECK(request_status([&] { s.edit(kTranslate); }) == 409);
    CHECK(request_status([&] { s.undo(); }) == 409);
    int last_iter = -1;
    for (int i = 0; i < 5; ++i) {
        const int iter = s.status()["iter"].get<int>();
        CHECK(iter >= last_iter);
        last_iter = iter;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    s.cancel_training();
    CHECK(s.status()["state"] != "running");

    json bad = toy_train_request(5);
    bad["config"]["knn_k"] = 0;
    try {
        s.start_training(bad);
        FAIL("expected config error");
    } catch (const service::RequestError& e) {
        CHECK(e.status() == 400);
        CHECK(std::string(e.what()).find("knn_k") != std::string::npos);
    }
    CHECK(request_status([&] { s.start_training(json{{"config", json::object()}}); }) == 400);
    CHECK(request_status([&] { s.start_training(json{{"image", "/nonexistent.png"}}); }) == 400);
}

TEST_CASE("progress and preview messages") {
    service::Session s;
    std::mutex mu;
    std::vector<json> messages;
    const int id = s.subscribe([&](const std::string& text) {
        std::lock_guard lock(mu);
        messages.push_back(json::parse(text));
    });
    s.start_training(toy_train_request(250));
    s.wait_for_training();
    int progress = 0, last = -1;
    for (const json& m : messages) {
        if (m["type"] == "progress") {
            ++progress;
            CHECK(m["iter"].get<int>() >= last);
            last = m["iter"].get<int>();
        }
    }
    CHECK(progress >= 2);

    messages.clear();
    const json r = s.edit(kTranslate);
    REQUIRE(messages.size() == 1);
    CHECK(messages[0]["type"] == "preview");
    CHECK(messages[0]["version"] == r["render_version"]);
    s.unsubscribe(id);
    s.edit(kTranslate);
    CHECK(messages.size() == 1);
}

TEST_CASE("edits, undo and the gaussians endpoint") {
    service::Session s;
    s.load_model(baked_model());
    const std::uint64_t v0 = s.version();
    json meta;
    const std::string means0 = s.gaussian_means(&meta);
    CHECK(means0.size() == 8 * meta["n"].get<std::size_t>());
    CHECK(meta["baked"] == true);

    CHECK(s.edit(json::parse(R"({"ops":[]})"))["render_version"] == v0);
    CHECK(s.version() == v0);

    s.edit(kTranslate);
    CHECK(s.version() == v0 + 1);
    const auto moved = means_of(s.gaussian_means(nullptr));
    const auto orig = means_of(means0);
    CHECK(moved[0] == static_cast<float>(static_cast<double>(orig[0]) + 0.05));
    CHECK(moved[1] == orig[1]);

    s.undo();
    CHECK(s.gaussian_means(nullptr) == means0);
    CHECK(request_status([&] { s.undo(); }) == 409);

    // the exported checkpoint carries the same means
    const Model exported = io::decode_checkpoint(s.checkpoint());
    for (std::size_t i = 0; i < exported.gaussians.size(); ++i) {
        CHECK(static_cast<float>(exported.gaussians.means[i].x) == orig[2 * i]);
        CHECK(static_cast<float>(exported.gaussians.means[i].y) == orig[2 * i + 1]);
    }

    // a bend expressed as per-Gaussian displacements
    json bend = json::parse(R"({"ops":[{"select":{"kind":"all"},"transform":{"kind":"displace","offsets":[]}}]})");
    for (std::size_t i = 0; i < exported.gaussians.size(); ++i) {
        const double y = exported.gaussians.means[i].y;
        bend["ops"][0]["transform"]["offsets"].push_back({0.05 * std::sin(6 * y), 0.0});
    }
    s.edit(bend);
    CHECK(!s.render_png(json{{"width", 24}, {"height", 20}}).empty());

    CHECK(request_status([&] { s.edit(json::parse(R"({"ops":[{"select":{"kind":"all"}}]})")); }) == 400);
    CHECK(request_status([&] { s.edit(json::parse(R"({"ops":[{"select":{"kind":"indices","indices":[100000]},"transform":{"kind":"translate","v":[0,0]}}]})")); }) == 400);

    service::Session unbaked;
    unbaked.load_model(fixtures::trained_toy(2, 9));
    CHECK(request_status([&] { unbaked.edit(kTranslate); }) == 409);
}

TEST_CASE("undo stack keeps the newest 64 entries") {
    service::Session s;
    s.load_model(baked_model());
    const std::string means0 = s.gaussian_means(nullptr);
    for (int i = 0; i < 65; ++i) s.edit(kTranslate);
    CHECK(s.undo_depth() == 64);
    for (int i = 0; i < 64; ++i) s.undo();
    CHECK(request_status([&] { s.undo(); }) == 409);
    // the oldest entry was dropped: one translate remains applied
    CHECK(s.gaussian_means(nullptr) != means0);
}

TEST_CASE("renders are deterministic, cropped consistently and RGBA with a mask head") {
    service::Session s;
    s.load_model(baked_model());
    const json req{{"width", 24}, {"height", 20}, {"format", "png"}};
    const std::string a = s.render_png(req), b = s.render_png(req);
    CHECK(a == b);
    const ImageBuffer full = io::decode_png(a);
    CHECK(full.channels == 4);
    const ImageBuffer crop = io::decode_png(s.render_png(json{{"width", 24}, {"height", 20}, {"region", {3, 4, 13, 17}}}));
    REQUIRE(crop.width == 10);
    REQUIRE(crop.height == 13);
    for (int r = 0; r < 13; ++r)
        for (int c = 0; c < 10; ++c)
            for (int ch = 0; ch < 4; ++ch) CHECK(crop.at(r, c, ch) == full.at(r + 4, c + 3, ch));
    CHECK(request_status([&] { s.render_png(json{{"format", "jpeg"}}); }) == 400);
    CHECK(request_status([&] { s.render_png(json{{"region", {0, 0, 0, 5}}}); }) == 400);
}

TEST_CASE("HTTP and WebSocket front end") {
    service::Session session;
    service::Server server(session, {"127.0.0.1", 0, 2});
    server.start();
    const int port = server.port();
    REQUIRE(port > 0);

    httplib::Client http("127.0.0.1", port);
    http.set_read_timeout(30, 0);

    auto st = http.Get("/api/status");
    REQUIRE(st);
    CHECK(st->status == 200);
    CHECK(json::parse(st->body)["state"] == "idle");
    CHECK(st->get_header_value("Access-Control-Allow-Origin") == "*");

    auto missing = http.Get("/api/nope");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    auto bad_json = http.Post("/api/edit", "{not json", "application/json");
    REQUIRE(bad_json);
    CHECK(bad_json->status == 400);
    CHECK(json::parse(bad_json->body).contains("error"));

    auto train = http.Post("/api/train", toy_train_request(150).dump(), "application/json");
    REQUIRE(train);
    CHECK(train->status == 200);
    auto busy = http.Post("/api/train", toy_train_request(1).dump(), "application/json");
    REQUIRE(busy);
    CHECK(busy->status == 409);
    session.wait_for_training();

    auto gs = http.Get("/api/gaussians");
    REQUIRE(gs);
    const json meta = json::parse(gs->get_header_value("X-Gaussian-Meta"));
    CHECK(gs->body.size() == 8 * meta["n"].get<std::size_t>());
    auto gm = http.Get("/api/gaussians/meta");
    REQUIRE(gm);
    CHECK(json::parse(gm->body)["n"] == meta["n"]);

    // WebSocket: an edit produces exactly one preview, in order
    namespace beast = boost::beast;
    namespace ws = beast::websocket;
    boost::asio::io_context ioc;
    boost::asio::ip::tcp::resolver resolver(ioc);
    ws::stream<boost::asio::ip::tcp::socket> sock(ioc);
    boost::asio::connect(sock.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    sock.handshake("127.0.0.1", "/ws");
    std::this_thread::sleep_for(std::chrono::milliseconds(100));

    auto e1 = http.Post("/api/edit", kTranslate.dump(), "application/json");
    REQUIRE(e1);
    REQUIRE(e1->status == 200);
    const auto v1 = json::parse(e1->body)["render_version"].get<std::uint64_t>();
    auto e2 = http.Post("/api/undo", "", "application/json");
    REQUIRE(e2);
    const auto v2 = json::parse(e2->body)["render_version"].get<std::uint64_t>();
    CHECK(v2 == v1 + 1);

    beast::flat_buffer buf;
    sock.read(buf);
    json m1 = json::parse(beast::buffers_to_string(buf.data()));
    buf.consume(buf.size());
    sock.read(buf);
    json m2 = json::parse(beast::buffers_to_string(buf.data()));
    CHECK(m1 == json{{"type", "preview"}, {"version", v1}});
    CHECK(m2 == json{{"type", "preview"}, {"version", v2}});
    sock.close(ws::close_code::normal);

    auto png = http.Post("/api/render", json{{"width", 24}, {"height", 20}}.dump(), "application/json");
    REQUIRE(png);
    CHECK(png->status == 200);
    CHECK(png->get_header_value("Content-Type") == "image/png");
    CHECK(png->body == session.render_png(json{{"width", 24}, {"height", 20}}));

    auto ck = http.Get("/api/checkpoint");
    REQUIRE(ck);
    CHECK(ck->body == session.checkpoint());

    auto pre = http.Options("/api/render");
    REQUIRE(pre);
    CHECK(pre->status / 100 == 2);

    server.stop();
    server.wait();
}

TEST_CASE("a taken port is reported") {
    service::Session session;
    service::Server first(session, {"127.0.0.1", 0, 1});
    try {
        service::Server second(session, {"127.0.0.1", first.port(), 1});
        FAIL("expected bind failure");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::io);
    }
}

}
