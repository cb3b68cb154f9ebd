// gfield: train, bake, render, evaluate, edit and animate Gaussian feature-field models.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <boost/asio/io_context.hpp>
#include <boost/asio/signal_set.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include "gfield/edit.hpp"
#include "gfield/field.hpp"
#include "gfield/io.hpp"
#include "gfield/service.hpp"

namespace fs = std::filesystem;
using namespace gfield;

namespace {

std::string format_psnr(double v) {
    if (std::isinf(v)) return "inf";
    std::ostringstream s;
    s.precision(6);
    s << std::fixed << v;
    return s.str();
}

std::optional<PixelRect> parse_region(const std::string& text) {
    if (text.empty()) return std::nullopt;
    PixelRect r;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream in(text);
    if (!(in >> r.x0 >> c1 >> r.y0 >> c2 >> r.x1 >> c3 >> r.y1) || c1 != ',' || c2 != ',' || c3 != ',' ||
        !in.eof())
        throw CLI::ValidationError("--region", "expected x0,y0,x1,y1");
    return r;
}

int run_train(const std::string& image_path, const std::string& config_path, const std::string& out,
              std::optional<int> iters, std::optional<std::uint64_t> seed, bool quiet) {
    const ImageBuffer image = io::load_image(image_path);
    ModelConfig cfg = config_path.empty() ? ModelConfig{} : io::load_config(config_path);
    if (iters) cfg.iterations = *iters;
    if (seed) cfg.rng_seed = *seed;
    cfg = validate_config(cfg);

    Model model = init_model(image, cfg, cfg.rng_seed);
    const auto t0 = std::chrono::steady_clock::now();
    TrainOptions opts;
    if (!quiet) {
        opts.on_progress = [&](const TrainingRecord& r) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::fprintf(stderr, "iter %6d  loss %.6e  psnr %s dB  (%.1fs)\n", r.iteration, r.loss,
                         format_psnr(r.psnr).c_str(), secs);
        };
    }
    train(model, image, opts);
    bake(model);
    model.quantize_to_float32();
    const double final_psnr = psnr(io::quantize_8bit(render(model, image.width, image.height)), image);
    io::save_checkpoint(model, out);
    std::cout << "psnr " << format_psnr(final_psnr) << "\n";
    return 0;
}

int run_render(const std::string& model_path, int width, int height, const std::string& region, const std::string& out) {
    const Model model = io::load_checkpoint(model_path);
    const int w = width > 0 ? width : model.width;
    const int h = height > 0 ? height : model.height;
    io::save_image(render(model, w, h, parse_region(region)), out);
    return 0;
}

int run_eval(const std::string& model_path, const std::string& image_path) {
    const Model model = io::load_checkpoint(model_path);
    const ImageBuffer image = io::load_image(image_path);
    if (image.width != model.width || image.height != model.height)
        throw Error(Errc::dimension_mismatch, "image is " + std::to_string(image.width) + "x" +
                                                  std::to_string(image.height) + " but the model was trained at " +
                                                  std::to_string(model.width) + "x" + std::to_string(model.height));
    std::cout << "psnr " << format_psnr(psnr(io::quantize_8bit(render(model, image.width, image.height)), image)) << "\n";
    return 0;
}

int run_edit(const std::string& model_path, const std::string& script_path, const std::string& out) {
    Model model = io::load_checkpoint(model_path);
    const auto ops = io::parse_edit_script(io::read_file(script_path));
    apply_edits(model, ops);
    io::save_checkpoint(model, out);
    return 0;
}

int run_animate(const std::string& model_path, const std::string& manifest_path, const std::string& outdir) {
    Model model = io::load_checkpoint(model_path);
    AnimationManifest manifest = io::parse_animation_manifest(manifest_path);
    fs::create_directories(outdir);
    AnimationReplay replay(model, std::move(manifest));
    ImageBuffer frame;
    while (replay.next(frame)) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.png", replay.next_frame() - 1);
        io::save_image(frame, fs::path(outdir) / name);
    }
    std::cout << "frames " << replay.frame_count() << "\n";
    return 0;
}

int run_composite(const std::string& fg_path, const std::string& bg_path, const std::string& out) {
    io::save_image(composite_over(io::load_image(fg_path), io::load_image(bg_path)), out);
    return 0;
}

int run_serve(const std::string& model_path, const std::string& address, unsigned short port, int threads) {
    service::Session session;
    if (!model_path.empty()) session.load_model(io::load_checkpoint(model_path));
    service::Server server(session, {address, port, threads});
    server.start();
    std::cerr << "serving on http://" << address << ":" << server.port() << "\n";

    boost::asio::io_context signals_ctx;
    boost::asio::signal_set signals(signals_ctx, SIGINT, SIGTERM);
    signals.async_wait([&](const boost::system::error_code&, int) { server.stop(); });
    signals_ctx.run();
    session.cancel_training();
    std::cerr << "shut down\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian feature-field image models"};
    app.require_subcommand(1);

    std::string image, config, out, model, script, manifest, outdir, region, fg, bg, address = "127.0.0.1";
    std::optional<int> iters;
    std::optional<std::uint64_t> seed;
    int width = 0, height = 0, threads = 4;
    unsigned short port = 8080;
    bool quiet = false;

    auto* train = app.add_subcommand("train", "fit a model to a PNG, bake it and save a checkpoint");
    train->add_option("--image", image, "training image (8-bit RGB/RGBA PNG)")->required();
    train->add_option("--config", config, "JSON config file");
    train->add_option("--out", out, "output checkpoint")->required();
    train->add_option("--iters", iters, "override config iterations");
    train->add_option("--seed", seed, "override config rng_seed");
    train->add_flag("--quiet", quiet, "no progress output");

    auto* rend = app.add_subcommand("render", "render a checkpoint to PNG");
    rend->add_option("--model", model)->required();
    rend->add_option("--width", width, "defaults to the training width");
    rend->add_option("--height", height, "defaults to the training height");
    rend->add_option("--region", region, "x0,y0,x1,y1 pixel rectangle (x1, y1 exclusive)");
    rend->add_option("--out", out)->required();

    auto* eval = app.add_subcommand("eval", "PSNR of a checkpoint's render against an image");
    eval->add_option("--model", model)->required();
    eval->add_option("--image", image)->required();

    auto* edit = app.add_subcommand("edit", "apply an edit script to a baked checkpoint");
    edit->add_option("--model", model)->required();
    edit->add_option("--script", script)->required();
    edit->add_option("--out", out)->required();

    auto* anim = app.add_subcommand("animate", "render one PNG per animation-manifest frame");
    anim->add_option("--model", model)->required();
    anim->add_option("--manifest", manifest)->required();
    anim->add_option("--outdir", outdir)->required();

    auto* comp = app.add_subcommand("composite", "alpha-blend an RGBA foreground over an RGB background");
    comp->add_option("--fg", fg)->required();
    comp->add_option("--bg", bg)->required();
    comp->add_option("--out", out)->required();

    auto* serve = app.add_subcommand("serve", "HTTP + WebSocket editing service");
    serve->add_option("--model", model, "checkpoint to load at startup");
    serve->add_option("--port", port, "listen port (default 8080)");
    serve->add_option("--address", address, "listen address");
    serve->add_option("--threads", threads, "network threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        if (*train) return run_train(image, config, out, iters, seed, quiet);
        if (*rend) return run_render(model, width, height, region, out);
        if (*eval) return run_eval(model, image);
        if (*edit) return run_edit(model, script, out);
        if (*anim) return run_animate(model, manifest, outdir);
        if (*comp) return run_composite(fg, bg, out);
        if (*serve) return run_serve(model, address, port, threads);
    } catch (const CLI::ValidationError& e) {
        std::cerr << stage << ": " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << stage << ": " << errc_name(e.code()) << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << stage << ": " << e.what() << "\n";
        return 2;
    }
    return 1;
}
