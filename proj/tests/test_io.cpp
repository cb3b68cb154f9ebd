#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "gfield/io.hpp"
#include "gfield/random.hpp"
#include "oracles.hpp"

using namespace gfield;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = GFIELD_TEST_DATA;

fs::path scratch_dir(const char* name) {
    const fs::path p = fs::temp_directory_path() / (std::string("gfield_io_") + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

template <class F>
Errc error_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return Errc::state;
}

ImageBuffer random_image(int w, int h, int c, std::uint64_t seed) {
    Rng rng(seed);
    ImageBuffer img(w, h, c);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

void put_u32(std::string& s, std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s[at + i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("PNG round trip stays within half a quantization step") {
    for (int c : {3, 4}) {
        const ImageBuffer img = random_image(23, 17, c, 10 + c);
        const ImageBuffer back = io::decode_png(io::encode_png(img));
        REQUIRE(back.width == 23);
        REQUIRE(back.height == 17);
        REQUIRE(back.channels == c);
        double worst = 0;
        for (std::size_t i = 0; i < img.data.size(); ++i) worst = std::max(worst, std::abs(img.data[i] - back.data[i]));
        CHECK(worst <= 0.5 / 255 + 1e-12);
        // already-quantized data survives exactly
        CHECK(io::decode_png(io::encode_png(back)).data == back.data);
    }
    CHECK(io::quantize_unit(0.5 / 255) == 1);
    CHECK(io::quantize_unit(0.4999 / 255) == 0);
    CHECK(io::quantize_unit(1.0) == 255);

    const fs::path dir = scratch_dir("png");
    const ImageBuffer img = random_image(8, 9, 4, 3);
    io::save_image(img, dir / "a.png");
    CHECK(io::load_image(dir / "a.png").data == io::decode_png(io::encode_png(img)).data);
    fs::remove_all(dir);
}

TEST_CASE("unsupported PNG layouts and non-PNG data are rejected") {
    CHECK(error_of([] { io::load_image(kData / "gray_8x8.png"); }) == Errc::unsupported_format);
    CHECK(error_of([] { io::load_image(kData / "gray16_8x8.png"); }) == Errc::unsupported_format);
    CHECK(error_of([] { io::load_image(kData / "rgb16_8x8.png"); }) == Errc::unsupported_format);
    CHECK(error_of([] { io::decode_png("definitely not a png"); }) == Errc::unsupported_format);
    std::string cut = io::encode_png(random_image(16, 16, 3, 1));
    cut.resize(cut.size() / 2);
    CHECK(error_of([&] { io::decode_png(cut); }) == Errc::unsupported_format);
    CHECK(error_of([] { io::load_image("/nonexistent/x.png"); }) == Errc::io);
}

TEST_CASE("checkpoint round trip reproduces renders byte for byte") {
    for (bool alpha : {false, true}) {
        Model m = fixtures::trained_toy(20, 5, alpha);
        bake(m);
        m.quantize_to_float32();
        const std::string bytes = io::encode_checkpoint(m);
        const Model back = io::decode_checkpoint(bytes);
        CHECK(io::encode_checkpoint(back) == bytes);
        CHECK(back.baked());
        CHECK(back.has_mask() == alpha);
        CHECK(back.width == m.width);
        CHECK(back.gaussians.size() == m.gaussians.size());
        CHECK(io::encode_png(render(back, 40, 40)) == io::encode_png(render(m, 40, 40)));
        CHECK(render(back, 32, 32).data == render(m, 32, 32).data);
        CHECK_NOTHROW(back.check_invariants());
    }
}

TEST_CASE("unbaked checkpoints keep the grid; baking shrinks the file by the table payload") {
    Model m = fixtures::trained_toy(5, 6);
    m.quantize_to_float32();
    const std::string raw = io::encode_checkpoint(m);
    const Model back = io::decode_checkpoint(raw);
    CHECK_FALSE(back.baked());
    REQUIRE(back.grid.has_value());
    CHECK(back.grid->params() == m.grid->params());
    CHECK(io::encode_checkpoint(back) == raw);
    Model b = back;
    bake(b);
    const std::string baked = io::encode_checkpoint(b);
    const std::size_t tables = m.grid->params().size() * 4;
    const std::size_t embeddings = b.gaussians.embeddings.size() * 4;
    const long header_delta = static_cast<long>(raw.size()) - static_cast<long>(tables) -
                              (static_cast<long>(baked.size()) - static_cast<long>(embeddings));
    CHECK(std::abs(header_delta) < 64);
    CHECK(baked.size() < raw.size());
}

TEST_CASE("checkpoint errors are distinct") {
    Model m = fixtures::trained_toy(5, 7);
    bake(m);
    const std::string good = io::encode_checkpoint(m);

    std::string magic = good;
    magic[0] = 'X';
    CHECK(error_of([&] { io::decode_checkpoint(magic); }) == Errc::bad_magic);
    CHECK(error_of([&] { io::decode_checkpoint(""); }) == Errc::truncation);
    CHECK(error_of([&] { io::decode_checkpoint("GN"); }) == Errc::truncation);

    std::string version = good;
    put_u32(version, 4, 2);
    CHECK(error_of([&] { io::decode_checkpoint(version); }) == Errc::version_mismatch);

    for (std::size_t len : {std::size_t{6}, std::size_t{12}, std::size_t{40}, good.size() - 1, good.size() - 333}) {
        CAPTURE(len);
        CHECK(error_of([&] { io::decode_checkpoint(good.substr(0, len)); }) == Errc::truncation);
    }

    CHECK(error_of([&] { io::decode_checkpoint(good + std::string(8, '\0')); }) == Errc::manifest_mismatch);

    // header claims a different Gaussian count
    std::uint32_t header_len = 0;
    std::memcpy(&header_len, good.data() + 8, 4);
    json header = json::parse(good.substr(12, header_len));
    header["n"] = header["n"].get<int>() + 1;
    const std::string new_header = header.dump();
    std::string forged = good.substr(0, 12) + new_header + good.substr(12 + header_len);
    put_u32(forged, 8, static_cast<std::uint32_t>(new_header.size()));
    const Errc forged_err = error_of([&] { io::decode_checkpoint(forged); });
    CHECK((forged_err == Errc::manifest_mismatch || forged_err == Errc::truncation));

    json header2 = json::parse(good.substr(12, header_len));
    header2["arrays"][0]["count"] = header2["arrays"][0]["count"].get<int>() + 2;
    const std::string h2 = header2.dump();
    std::string forged2 = good.substr(0, 12) + h2 + good.substr(12 + header_len);
    put_u32(forged2, 8, static_cast<std::uint32_t>(h2.size()));
    CHECK(error_of([&] { io::decode_checkpoint(forged2); }) == Errc::manifest_mismatch);

    CHECK(error_of([] { io::load_checkpoint("/nonexistent/model.gnrc"); }) == Errc::io);
}

TEST_CASE("config files") {
    ModelConfig cfg;
    cfg.n_gaussians = 1234;
    cfg.knn_radius = 0.07;
    const json j = io::config_to_json(cfg);
    const ModelConfig back = io::config_from_json(j);
    CHECK(back.n_gaussians == 1234);
    CHECK(back.knn_radius == 0.07);
    CHECK(io::config_from_json(json{{"knn_k", 4}}).knn_k == 4);
    CHECK(error_of([] { io::config_from_json(json{{"knn_kk", 4}}); }) == Errc::config);
    CHECK(error_of([] { io::config_from_json(json{{"knn_k", "four"}}); }) == Errc::config);
    CHECK(error_of([] { io::config_from_json(json{{"knn_k", 1.5}}); }) == Errc::config);
}

TEST_CASE("edit scripts") {
    CHECK(io::parse_edit_script(R"({"ops":[]})").empty());

    const auto ops = io::parse_edit_script(R"({"ops":[{"select":{"kind":"all"},"transform":{"kind":"translate","v":[0.1,-0.2]}}]})");
    REQUIRE(ops.size() == 1);
    CHECK(std::holds_alternative<selection::All>(ops[0].select));
    REQUIRE(std::holds_alternative<transform::Translate>(ops[0].transform));
    CHECK(std::get<transform::Translate>(ops[0].transform).offset == Vec2{0.1, -0.2});

    const std::string full = R"({"ops":[
      {"select":{"kind":"indices","indices":[3,1]},"transform":{"kind":"rotate","center":[0.5,0.5],"angle":0.3}},
      {"select":{"kind":"rect","min":[0,0],"max":[0.5,1]},"transform":{"kind":"scale","center":[0,0],"sx":2,"sy":0.5}},
      {"select":{"kind":"polygon","vertices":[[0,0],[1,0],[0,1]]},"transform":{"kind":"displace","offsets":[[0.1,0]]}}
    ]})";
    const auto many = io::parse_edit_script(full);
    REQUIRE(many.size() == 3);
    const auto again = io::parse_edit_ops(io::edit_ops_to_json(many));
    CHECK(io::edit_ops_to_json(again) == io::edit_ops_to_json(many));

    auto semantic_at = [](const std::string& text, int op) {
        try {
            io::parse_edit_script(text);
            FAIL("expected semantic error");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::semantic);
            CHECK(std::string(e.what()).find("op " + std::to_string(op)) != std::string::npos);
        }
    };
    semantic_at(R"({"ops":[{"select":{"kind":"all"},"transform":{"kind":"rotate","angle":1}}]})", 0);
    semantic_at(R"({"ops":[{"select":{"kind":"all"},"transform":{"kind":"translate","v":[0,0]}},
                          {"select":{"kind":"everything"},"transform":{"kind":"translate","v":[0,0]}}]})", 1);
    semantic_at(R"({"ops":[{"select":{"kind":"all"},"transform":{"kind":"shear","k":1}}]})", 0);
    semantic_at(R"({"ops":[{"select":{"kind":"all"},"transform":{"kind":"scale","center":[0,0],"sx":0,"sy":1}}]})", 0);
    semantic_at(R"({"ops":[{"select":{"kind":"polygon","vertices":[[0,0],[1,1]]},"transform":{"kind":"translate","v":[0,0]}}]})", 0);
    semantic_at(R"({"ops":[{"select":{"kind":"rect","min":[1,1],"max":[0,0]},"transform":{"kind":"translate","v":[0,0]}}]})", 0);
    semantic_at(R"({"ops":[{"select":{"kind":"all"}}]})", 0);
    semantic_at(R"({"ops":[{"select":{"kind":"all"},"transform":{"kind":"translate","v":[0]}}]})", 0);

    CHECK(error_of([] { io::parse_edit_script(R"({"nope":[]})"); }) == Errc::semantic);
    try {
        io::parse_edit_script("{\"ops\": [\n  {\"select\": }\n]}");
        FAIL("expected parse error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::parse);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        CHECK(std::string(e.what()).find("column") != std::string::npos);
    }
}

TEST_CASE("animation manifests") {
    const fs::path dir = scratch_dir("manifest");
    io::write_file(dir / "empty.json", R"({"n": 5, "frames": []})");
    const auto empty = io::parse_animation_manifest(dir / "empty.json");
    CHECK(empty.n == 5);
    CHECK(empty.frames.empty());

    std::vector<Vec2> pos{{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}};
    io::write_frame_positions(pos, dir / "a.pos");
    io::write_frame_positions({pos[0], pos[1]}, dir / "short.pos");
    CHECK(fs::file_size(dir / "a.pos") == 24);
    io::write_file(dir / "m.json", R"({"n": 3, "frames": ["a.pos", "short.pos"]})");
    const auto man = io::parse_animation_manifest(dir / "m.json");
    REQUIRE(man.frames.size() == 2);
    const auto f0 = read_frame_positions(man, 0);
    REQUIRE(f0.size() == 3);
    CHECK(f0[2].x == static_cast<double>(0.5f));
    try {
        read_frame_positions(man, 1);
        FAIL("expected frame length error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::frame_length);
        CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
        CHECK(std::string(e.what()).find("short.pos") != std::string::npos);
    }

    io::write_file(dir / "missing.json", R"({"n": 3, "frames": ["a.pos", "gone.pos"]})");
    CHECK(error_of([&] { io::parse_animation_manifest(dir / "missing.json"); }) == Errc::not_found);
    io::write_file(dir / "broken.json", R"({"n": 3, "frames": [)");
    CHECK(error_of([&] { io::parse_animation_manifest(dir / "broken.json"); }) == Errc::parse);
    io::write_file(dir / "neg.json", R"({"n": -3, "frames": []})");
    CHECK(error_of([&] { io::parse_animation_manifest(dir / "neg.json"); }) == Errc::semantic);
    io::write_file(dir / "nof.json", R"({"n": 3})");
    CHECK(error_of([&] { io::parse_animation_manifest(dir / "nof.json"); }) == Errc::semantic);
    fs::remove_all(dir);
}

}
