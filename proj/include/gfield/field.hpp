#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stop_token>
#include <vector>

#include "gfield/core.hpp"
#include "gfield/encoding.hpp"
#include "gfield/net.hpp"
#include "gfield/random.hpp"
#include "gfield/spatial.hpp"

namespace gfield {

struct TrainingRecord {
    int iteration = 0;
    double loss = 0.0;
    double psnr = 0.0;  // validation subsample, dB
};

struct TrainingHistory {
    std::vector<TrainingRecord> records;
    // One entry per iteration: loss and PSNR of the color batch just trained on.
    std::vector<double> batch_loss;
    std::vector<double> batch_psnr;
};

struct OptimizerState {
    AdamState grid;
    AdamState cov;
    AdamState color;
    AdamState mask;
    std::int64_t iteration = 0;
};

struct Model {
    ModelConfig config;
    int width = 0;  // training image size; the default render size
    int height = 0;
    GaussianSet gaussians;
    std::optional<HashGrid> grid;  // absent once baked
    Mlp color_mlp;
    std::optional<Mlp> mask_mlp;  // present for RGBA sources
    GridIndex index;
    TrainingHistory history;
    std::optional<OptimizerState> optimizer;

    bool baked() const { return gaussians.baked; }
    bool has_mask() const { return mask_mlp.has_value(); }
    int embedding_dim() const { return config.embedding_dim; }
    int output_channels() const { return has_mask() ? 4 : 3; }

    void rebuild_index();
    // Round every stored parameter to float32, the on-disk precision.
    void quantize_to_float32();
    // Throws Errc::state when the baked/grid/index invariants do not hold.
    void check_invariants() const;
};

Model init_model(const ImageBuffer& image, const ModelConfig& cfg, std::uint64_t seed);

// Unnormalized Gaussian kernel exp(-1/2 d^T Sigma^-1 d) and its gradient w.r.t. (log_s1, log_s2, theta).
struct KernelWeight {
    double value = 0.0;
    std::array<double, 3> d_params{};
};
KernelWeight kernel_weight(const CovParams& p, Vec2 d);

struct Aggregation {
    std::vector<double> embedding;
    NeighborList neighbors;
    std::vector<double> weights;  // normalized; sums to 1 when any neighbor exists
    bool coverage_miss = false;
    bool fallback_weights = false;  // kernel weights underflowed; inverse squared distance used
};

Aggregation aggregate(const Model& model, Coord x);

struct Decoded {
    std::array<double, 3> rgb{};
    std::optional<double> alpha;
};

Decoded decode(const Model& model, Coord x);

// rows x output_channels values (RGB or RGBA) for a batch of coordinates.
std::vector<double> decode_batch(const Model& model, std::span<const Coord> coords);

// Decoder head applied to an explicit embedding; the only path from features to color.
Decoded decode_embedding(const Model& model, std::span<const double> embedding);

// Uniform pixel sampling; for RGBA images color samples come only from alpha > 0 pixels.
class PixelSampler {
public:
    explicit PixelSampler(const ImageBuffer& image);

    const ImageBuffer& image() const { return *image_; }
    std::span<const std::uint32_t> color_pixels() const { return color_pixels_; }
    bool has_alpha() const { return image_->has_alpha(); }

private:
    const ImageBuffer* image_;
    std::vector<std::uint32_t> color_pixels_;
};

struct TrainBatch {
    std::vector<Coord> coords;
    std::vector<double> targets;  // M x 3
    std::vector<Coord> mask_coords;
    std::vector<double> alpha_targets;  // M, RGBA only
};

TrainBatch sample_batch(const PixelSampler& sampler, int batch_size, Rng& rng);
TrainBatch sample_batch(const ImageBuffer& image, const ModelConfig& cfg, Rng& rng);

// d(loss)/d(parameter) for every trainable parameter class.
struct Gradients {
    std::vector<double> grid;
    std::vector<double> cov;  // N x 3, (log_s1, log_s2, theta)
    std::vector<double> color;
    std::vector<double> mask;
};

// Loss of the batch without touching parameters.
double batch_loss(const Model& model, const TrainBatch& batch);
double compute_gradients(const Model& model, const TrainBatch& batch, Gradients& grads);

// One Adam step on grid tables, covariance parameters and both decoders. Means stay fixed.
double train_step(Model& model, const TrainBatch& batch);

struct TrainOptions {
    int eval_every = 100;
    int validation_pixels = 4096;
    std::function<void(const TrainingRecord&)> on_progress;
    std::stop_token stop;
};

// Runs model.config.iterations steps (fewer if stop is requested); returns the history.
const TrainingHistory& train(Model& model, const ImageBuffer& image, const TrainOptions& options = {});

// Learning-rate multiplier at `step` of `total`: cosine decay from 1 to 0.1.
double lr_schedule(std::int64_t step, std::int64_t total);

void bake(Model& model);

ImageBuffer render(const Model& model, int width, int height, std::optional<PixelRect> region = std::nullopt);

// 10 log10(1 / MSE) over RGB; +infinity for identical images.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace gfield
