#include "gfield/field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

#include "gfield/kernels.hpp"

namespace gfield {

namespace {

constexpr double kUnderflowFloor = 1e-30;

double to_float32(double v) {
    volatile float f = static_cast<float>(v);
    return f;
}

// Embeddings e_i: stored rows for baked models, H(mu_i) computed once per lookup object otherwise.
class EmbeddingLookup {
public:
    explicit EmbeddingLookup(const Model& model)
        : model_(model), dim_(static_cast<std::size_t>(model.embedding_dim())) {
        if (!model.baked()) {
            cache_.resize(model.gaussians.size() * dim_);
            ready_.assign(model.gaussians.size(), 0);
        }
    }

    const double* get(std::uint32_t i) {
        if (model_.baked()) return model_.gaussians.embeddings.data() + i * dim_;
        double* row = cache_.data() + i * dim_;
        if (!ready_[i]) {
            model_.grid->encode(model_.gaussians.means[i], {row, dim_});
            ready_[i] = 1;
            touched_.push_back(i);
        }
        return row;
    }

    const std::vector<std::uint32_t>& touched() const { return touched_; }

private:
    const Model& model_;
    std::size_t dim_;
    std::vector<double> cache_;
    std::vector<char> ready_;
    std::vector<std::uint32_t> touched_;
};

struct AggregateScratch {
    NeighborList neighbors;
    std::vector<double> raw;      // unnormalized kernel weights
    std::vector<double> weights;  // normalized
    double total = 0.0;
    bool fallback = false;
};

// Shared by every decode path so aggregation is bit-identical between them.
void aggregate_into(const Model& m, Coord x, EmbeddingLookup& emb, AggregateScratch& s, double* out) {
    const auto d = static_cast<std::size_t>(m.embedding_dim());
    m.index.query(x, m.config.knn_radius, m.config.knn_k, s.neighbors);
    std::fill_n(out, d, 0.0);
    const std::size_t n = s.neighbors.size();
    s.raw.resize(n);
    s.weights.resize(n);
    s.fallback = false;
    s.total = 0.0;
    if (n == 0) return;

    for (std::size_t k = 0; k < n; ++k) {
        const std::uint32_t i = s.neighbors.indices[k];
        s.raw[k] = std::exp(-0.5 * mahalanobis_sq(m.gaussians.cov[i], x - m.gaussians.means[i]));
        s.total += s.raw[k];
    }
    if (!(s.total >= kUnderflowFloor)) {
        s.fallback = true;
        s.total = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            s.raw[k] = 1.0 / s.neighbors.sq_dists[k];
            s.total += s.raw[k];
        }
    }
    const auto& kern = kernels::active();
    for (std::size_t k = 0; k < n; ++k) {
        s.weights[k] = s.raw[k] / s.total;
        kern.axpy(s.weights[k], emb.get(s.neighbors.indices[k]), out, d);
    }
}

void decode_rows(const Model& m, std::span<const Coord> coords, EmbeddingLookup& emb, double* out) {
    const auto d = static_cast<std::size_t>(m.embedding_dim());
    const std::size_t rows = coords.size();
    std::vector<double> features(rows * d);
    AggregateScratch scratch;
    for (std::size_t r = 0; r < rows; ++r) aggregate_into(m, coords[r], emb, scratch, features.data() + r * d);
    const std::vector<double> rgb = m.color_mlp.forward(features, rows);
    const int ch = m.output_channels();
    std::vector<double> alpha;
    if (m.has_mask()) alpha = m.mask_mlp->forward(features, rows);
    for (std::size_t r = 0; r < rows; ++r) {
        for (int c = 0; c < 3; ++c) out[r * ch + c] = rgb[r * 3 + c];
        if (ch == 4) out[r * ch + 3] = alpha[r];
    }
}

std::size_t pixel_of(const ImageBuffer& img, Coord c) {
    const double s = std::max(img.width, img.height);
    const int col = std::clamp(static_cast<int>(std::floor(c.x * s)), 0, img.width - 1);
    const int row = std::clamp(static_cast<int>(std::floor(c.y * s)), 0, img.height - 1);
    return static_cast<std::size_t>(row) * img.width + col;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

void Model::rebuild_index() { index = build_index(gaussians.means, config.knn_radius); }

void Model::quantize_to_float32() {
    for (Vec2& m : gaussians.means) m = {to_float32(m.x), to_float32(m.y)};
    for (CovParams& c : gaussians.cov) c = {to_float32(c.log_s1), to_float32(c.log_s2), to_float32(c.theta)};
    for (double& e : gaussians.embeddings) e = to_float32(e);
    if (grid) {
        for (double& p : grid->params()) p = to_float32(p);
    }
    for (double& p : color_mlp.params()) p = to_float32(p);
    if (mask_mlp) {
        for (double& p : mask_mlp->params()) p = to_float32(p);
    }
    rebuild_index();
}

void Model::check_invariants() const {
    const std::size_t n = gaussians.size();
    if (gaussians.cov.size() != n) throw Error(Errc::state, "covariance count differs from mean count");
    if (gaussians.baked) {
        if (grid) throw Error(Errc::state, "baked model still carries a hash grid");
        if (gaussians.embeddings.size() != n * static_cast<std::size_t>(embedding_dim()))
            throw Error(Errc::state, "baked embeddings have the wrong size");
    } else if (!grid) {
        throw Error(Errc::state, "unbaked model has no hash grid");
    }
    if (!index.is_current(gaussians.means)) throw Error(Errc::state, "spatial index is stale");
    if (color_mlp.input_dim() != embedding_dim() || color_mlp.output_dim() != 3)
        throw Error(Errc::state, "color decoder shape does not match the embedding");
    if (mask_mlp && (mask_mlp->input_dim() != embedding_dim() || mask_mlp->output_dim() != 1))
        throw Error(Errc::state, "mask decoder shape does not match the embedding");
}

Model init_model(const ImageBuffer& image, const ModelConfig& cfg_in, std::uint64_t seed) {
    validate_image(image);
    const ModelConfig cfg = validate_config(cfg_in);
    Rng rng(seed);

    Model m;
    m.config = cfg;
    m.config.rng_seed = seed;
    m.width = image.width;
    m.height = image.height;

    // Jittered grid: one point per cell of an nx x ny lattice, random subset when it overshoots.
    const Vec2 ext = domain_extent(image.width, image.height);
    const auto n = static_cast<std::size_t>(cfg.n_gaussians);
    const auto nx = static_cast<std::size_t>(
        std::max(1.0, std::round(std::sqrt(static_cast<double>(n) * ext.x / ext.y))));
    const std::size_t ny = (n + nx - 1) / nx;
    std::vector<std::size_t> cells(nx * ny);
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
    for (std::size_t i = 0; i < n; ++i) std::swap(cells[i], cells[i + rng.below(cells.size() - i)]);
    cells.resize(n);
    std::sort(cells.begin(), cells.end());

    const double hx = ext.x / static_cast<double>(nx);
    const double hy = ext.y / static_cast<double>(ny);
    const double log_scale = std::log(std::max(ext.x, ext.y) / std::sqrt(static_cast<double>(n)));
    for (std::size_t cell : cells) {
        const double cx = static_cast<double>(cell % nx) + 0.5 + rng.uniform(-0.5, 0.5);
        const double cy = static_cast<double>(cell / nx) + 0.5 + rng.uniform(-0.5, 0.5);
        const Vec2 mean{cx * hx, cy * hy};
        if (image.has_alpha() && image.data[pixel_of(image, mean) * 4 + 3] == 0.0) continue;
        m.gaussians.means.push_back(mean);
        m.gaussians.cov.push_back({log_scale, log_scale, 0.0});
    }
    if (m.gaussians.means.empty())
        throw Error(Errc::empty_support, "empty support: no Gaussian lies on a pixel with nonzero alpha");
    m.gaussians.embedding_dim = static_cast<std::size_t>(cfg.embedding_dim);

    m.grid = build_hashgrid(cfg, rng.engine()());
    m.color_mlp = make_mlp(cfg.embedding_dim, cfg.mlp_hidden_layers, cfg.mlp_hidden_width, 3);
    m.color_mlp.init_random(rng);
    if (image.has_alpha()) {
        m.mask_mlp = make_mlp(cfg.embedding_dim, cfg.mlp_hidden_layers, cfg.mlp_hidden_width, 1);
        m.mask_mlp->init_random(rng);
    }
    m.rebuild_index();
    return m;
}

// ---------------------------------------------------------------------------
// Aggregation and decoding

KernelWeight kernel_weight(const CovParams& p, Vec2 d) {
    const double c = std::cos(p.theta);
    const double s = std::sin(p.theta);
    const double u = c * d.x + s * d.y;
    const double v = -s * d.x + c * d.y;
    const double a = std::exp(-2.0 * p.log_s1);
    const double b = std::exp(-2.0 * p.log_s2);
    KernelWeight k;
    k.value = std::exp(-0.5 * (u * u * a + v * v * b));
    k.d_params = {k.value * u * u * a, k.value * v * v * b, -k.value * u * v * (a - b)};
    return k;
}

Aggregation aggregate(const Model& model, Coord x) {
    EmbeddingLookup emb(model);
    AggregateScratch s;
    Aggregation out;
    out.embedding.resize(static_cast<std::size_t>(model.embedding_dim()));
    aggregate_into(model, x, emb, s, out.embedding.data());
    out.neighbors = std::move(s.neighbors);
    out.weights = std::move(s.weights);
    out.coverage_miss = out.neighbors.empty();
    out.fallback_weights = s.fallback;
    return out;
}

Decoded decode_embedding(const Model& model, std::span<const double> embedding) {
    Decoded d;
    const std::vector<double> rgb = model.color_mlp.forward(embedding, 1);
    d.rgb = {rgb[0], rgb[1], rgb[2]};
    if (model.has_mask()) d.alpha = model.mask_mlp->forward(embedding, 1)[0];
    return d;
}

Decoded decode(const Model& model, Coord x) {
    const std::vector<double> v = decode_batch(model, std::span<const Coord>(&x, 1));
    Decoded d;
    d.rgb = {v[0], v[1], v[2]};
    if (model.has_mask()) d.alpha = v[3];
    return d;
}

std::vector<double> decode_batch(const Model& model, std::span<const Coord> coords) {
    std::vector<double> out(coords.size() * static_cast<std::size_t>(model.output_channels()));
    EmbeddingLookup emb(model);
    decode_rows(model, coords, emb, out.data());
    return out;
}

// ---------------------------------------------------------------------------
// Sampling

PixelSampler::PixelSampler(const ImageBuffer& image) : image_(&image) {
    validate_image(image);
    const std::size_t n = image.pixel_count();
    for (std::size_t p = 0; p < n; ++p) {
        if (!image.has_alpha() || image.data[p * 4 + 3] > 0.0) color_pixels_.push_back(static_cast<std::uint32_t>(p));
    }
    if (color_pixels_.empty()) throw Error(Errc::empty_support, "empty support: every pixel is transparent");
}

TrainBatch sample_batch(const PixelSampler& sampler, int batch_size, Rng& rng) {
    const ImageBuffer& img = sampler.image();
    const auto m = static_cast<std::size_t>(batch_size);
    auto coord_of = [&](std::uint32_t p) {
        return normalize_coords(static_cast<int>(p / img.width), static_cast<int>(p % img.width), img.width,
                                img.height);
    };
    TrainBatch b;
    b.coords.reserve(m);
    b.targets.reserve(m * 3);
    const auto pixels = sampler.color_pixels();
    for (std::size_t k = 0; k < m; ++k) {
        const std::uint32_t p = pixels[rng.below(pixels.size())];
        b.coords.push_back(coord_of(p));
        for (int c = 0; c < 3; ++c) b.targets.push_back(img.data[p * img.channels + c]);
    }
    if (sampler.has_alpha()) {
        b.mask_coords.reserve(m);
        b.alpha_targets.reserve(m);
        for (std::size_t k = 0; k < m; ++k) {
            const auto p = static_cast<std::uint32_t>(rng.below(img.pixel_count()));
            b.mask_coords.push_back(coord_of(p));
            b.alpha_targets.push_back(img.data[p * 4 + 3]);
        }
    }
    return b;
}

TrainBatch sample_batch(const ImageBuffer& image, const ModelConfig& cfg, Rng& rng) {
    return sample_batch(PixelSampler(image), cfg.batch_size, rng);
}

// ---------------------------------------------------------------------------
// Loss and gradients

namespace {

struct GradAccumulator {
    std::vector<double> emb;  // N x d, d(loss)/d(e_i)
    std::vector<double>* cov = nullptr;
};

// Forward one decoder head over `coords`; when `acc` is set, backpropagates into decoder grads,
// embedding grads and covariance grads.
double run_head(const Model& m, const Mlp& mlp, std::span<const Coord> coords, std::span<const double> targets,
                EmbeddingLookup& emb, std::span<double> mlp_grad, GradAccumulator* acc, double* sq_err = nullptr) {
    const auto d = static_cast<std::size_t>(m.embedding_dim());
    const std::size_t rows = coords.size();
    if (rows == 0) return 0.0;
    std::vector<double> features(rows * d);
    std::vector<AggregateScratch> scratch(acc ? rows : 1);
    for (std::size_t r = 0; r < rows; ++r)
        aggregate_into(m, coords[r], emb, scratch[acc ? r : 0], features.data() + r * d);

    Mlp::Cache cache;
    const std::vector<double> pred = mlp.forward(features, rows, acc ? &cache : nullptr);
    const double loss = smooth_l1(pred, targets, m.config.smooth_l1_beta);
    if (sq_err) {
        double s = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - targets[i]) * (pred[i] - targets[i]);
        *sq_err = s / static_cast<double>(pred.size());
    }
    if (!acc) return loss;

    const std::vector<double> dpred = smooth_l1_grad(pred, targets, m.config.smooth_l1_beta);
    const std::vector<double> dfeat = mlp.backward(cache, dpred, mlp_grad);
    const auto& kern = kernels::active();
    for (std::size_t r = 0; r < rows; ++r) {
        const AggregateScratch& s = scratch[r];
        const double* g = dfeat.data() + r * d;
        const double* e = features.data() + r * d;
        const double g_dot_e = kern.dot(g, e, d);
        for (std::size_t k = 0; k < s.neighbors.size(); ++k) {
            const std::uint32_t i = s.neighbors.indices[k];
            kern.axpy(s.weights[k], g, acc->emb.data() + i * d, d);
            if (s.fallback) continue;
            const double dl_dw = (kern.dot(g, emb.get(i), d) - g_dot_e) / s.total;
            const KernelWeight kw = kernel_weight(m.gaussians.cov[i], coords[r] - m.gaussians.means[i]);
            double* cg = acc->cov->data() + i * 3;
            for (int p = 0; p < 3; ++p) cg[p] += dl_dw * kw.d_params[p];
        }
    }
    return loss;
}

double evaluate_batch(const Model& m, const TrainBatch& batch, Gradients* grads, double* color_mse) {
    EmbeddingLookup emb(m);
    GradAccumulator acc;
    if (grads) {
        acc.emb.assign(m.gaussians.size() * static_cast<std::size_t>(m.embedding_dim()), 0.0);
        acc.cov = &grads->cov;
    }
    double loss = run_head(m, m.color_mlp, batch.coords, batch.targets, emb,
                           grads ? std::span<double>(grads->color) : std::span<double>{}, grads ? &acc : nullptr,
                           color_mse);
    if (m.has_mask() && !batch.mask_coords.empty()) {
        loss += run_head(m, *m.mask_mlp, batch.mask_coords, batch.alpha_targets, emb,
                         grads ? std::span<double>(grads->mask) : std::span<double>{}, grads ? &acc : nullptr);
    }
    if (grads && m.grid) {
        const auto d = static_cast<std::size_t>(m.embedding_dim());
        for (std::uint32_t i : emb.touched())
            m.grid->encode_backward(m.gaussians.means[i], {acc.emb.data() + i * d, d}, grads->grid);
    }
    return loss;
}

void reset_gradients(const Model& m, Gradients& g) {
    g.grid.assign(m.grid ? m.grid->params().size() : 0, 0.0);
    g.cov.assign(m.gaussians.size() * 3, 0.0);
    g.color.assign(m.color_mlp.param_count(), 0.0);
    g.mask.assign(m.mask_mlp ? m.mask_mlp->param_count() : 0, 0.0);
}

std::span<double> cov_span(Model& m) {
    return {reinterpret_cast<double*>(m.gaussians.cov.data()), m.gaussians.cov.size() * 3};
}

}  // namespace

double batch_loss(const Model& model, const TrainBatch& batch) {
    return evaluate_batch(model, batch, nullptr, nullptr);
}

double compute_gradients(const Model& model, const TrainBatch& batch, Gradients& grads) {
    if (model.baked()) throw Error(Errc::state, "cannot compute training gradients on a baked model");
    reset_gradients(model, grads);
    return evaluate_batch(model, batch, &grads, nullptr);
}

double lr_schedule(std::int64_t step, std::int64_t total) {
    if (total <= 0) return 1.0;
    const double t = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
    return 0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

namespace {

double train_step_impl(Model& model, const TrainBatch& batch, double* color_mse) {
    if (model.baked()) throw Error(Errc::state, "train_step requires an unbaked model");
    static_assert(sizeof(CovParams) == 3 * sizeof(double));
    const ModelConfig& cfg = model.config;
    if (!model.optimizer) {
        OptimizerState st;
        st.grid = AdamState(model.grid->params().size(), cfg.lr_grid);
        st.cov = AdamState(model.gaussians.size() * 3, cfg.lr_grid);
        st.color = AdamState(model.color_mlp.param_count(), cfg.lr_mlp);
        if (model.mask_mlp) st.mask = AdamState(model.mask_mlp->param_count(), cfg.lr_mlp);
        model.optimizer = std::move(st);
    }
    Gradients g;
    reset_gradients(model, g);
    const double loss = evaluate_batch(model, batch, &g, color_mse);

    OptimizerState& st = *model.optimizer;
    const double scale = lr_schedule(st.iteration, cfg.iterations);
    adam_step(model.grid->params(), g.grid, st.grid, cfg.lr_grid * scale);
    adam_step(cov_span(model), g.cov, st.cov, cfg.lr_grid * scale);
    adam_step(model.color_mlp.params(), g.color, st.color, cfg.lr_mlp * scale);
    if (model.mask_mlp) adam_step(model.mask_mlp->params(), g.mask, st.mask, cfg.lr_mlp * scale);
    ++st.iteration;
    return loss;
}

double psnr_from_mse(double mse) {
    return mse > 0.0 ? 10.0 * std::log10(1.0 / mse) : std::numeric_limits<double>::infinity();
}

}  // namespace

double train_step(Model& model, const TrainBatch& batch) { return train_step_impl(model, batch, nullptr); }

const TrainingHistory& train(Model& model, const ImageBuffer& image, const TrainOptions& options) {
    const ModelConfig& cfg = model.config;
    if (cfg.iterations == 0) return model.history;
    if (model.baked()) throw Error(Errc::state, "cannot train a baked model");

    PixelSampler sampler(image);
    Rng rng(cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL);

    // Fixed validation subsample.
    std::vector<Coord> val_coords;
    std::vector<double> val_targets;
    {
        Rng vrng(cfg.rng_seed + 0x5851f42d4c957f2dULL);
        const auto pixels = sampler.color_pixels();
        const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(options.validation_pixels),
                                                        pixels.size());
        std::vector<std::uint32_t> chosen(pixels.begin(), pixels.end());
        for (std::size_t i = 0; i < count; ++i) std::swap(chosen[i], chosen[i + vrng.below(chosen.size() - i)]);
        chosen.resize(count);
        for (std::uint32_t p : chosen) {
            val_coords.push_back(normalize_coords(static_cast<int>(p / image.width),
                                                  static_cast<int>(p % image.width), image.width, image.height));
            for (int c = 0; c < 3; ++c) val_targets.push_back(image.data[p * image.channels + c]);
        }
    }
    auto validation_psnr = [&] {
        const std::vector<double> out = decode_batch(model, val_coords);
        const auto ch = static_cast<std::size_t>(model.output_channels());
        double s = 0.0;
        for (std::size_t r = 0; r < val_coords.size(); ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                const double e = out[r * ch + c] - val_targets[r * 3 + c];
                s += e * e;
            }
        }
        return psnr_from_mse(s / static_cast<double>(val_targets.size()));
    };

    const int eval_every = std::max(1, options.eval_every);
    for (int it = 1; it <= cfg.iterations; ++it) {
        if (options.stop.stop_requested()) break;
        const TrainBatch batch = sample_batch(sampler, cfg.batch_size, rng);
        double mse = 0.0;
        const double loss = train_step_impl(model, batch, &mse);
        model.history.batch_loss.push_back(loss);
        model.history.batch_psnr.push_back(psnr_from_mse(mse));
        if (it % eval_every == 0 || it == cfg.iterations) {
            const TrainingRecord rec{it, loss, validation_psnr()};
            model.history.records.push_back(rec);
            if (options.on_progress) options.on_progress(rec);
        }
    }
    return model.history;
}

void bake(Model& model) {
    if (model.baked()) throw Error(Errc::state, "model is already baked");
    const auto d = static_cast<std::size_t>(model.embedding_dim());
    GaussianSet& g = model.gaussians;
    g.embeddings.assign(g.size() * d, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) model.grid->encode(g.means[i], {g.embeddings.data() + i * d, d});
    g.embedding_dim = d;
    g.baked = true;
    model.grid.reset();
    model.optimizer.reset();
}

// ---------------------------------------------------------------------------
// Rendering and metrics

ImageBuffer render(const Model& model, int width, int height, std::optional<PixelRect> region) {
    if (width <= 0 || height <= 0) throw Error(Errc::domain, "render size must be positive");
    const PixelRect rect = region.value_or(PixelRect{0, 0, width, height});
    if (rect.width() <= 0 || rect.height() <= 0) throw Error(Errc::domain, "render region has zero area");
    if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > width || rect.y1 > height)
        throw Error(Errc::domain, "render region lies outside the image");

    const int ch = model.output_channels();
    ImageBuffer out(rect.width(), rect.height(), ch);
    const int rows = rect.height();
    const unsigned workers = std::clamp<unsigned>(std::thread::hardware_concurrency(), 1u,
                                                  static_cast<unsigned>(rows));

    // Baked models read stored rows; unbaked ones share one precomputed embedding table.
    const Model* source = &model;
    Model baked_copy;
    if (!model.baked()) {
        baked_copy = model;
        bake(baked_copy);
        source = &baked_copy;
    }
    auto work = [&](unsigned worker) {
        std::vector<Coord> coords(static_cast<std::size_t>(rect.width()));
        EmbeddingLookup emb(*source);
        for (int r = static_cast<int>(worker); r < rows; r += static_cast<int>(workers)) {
            for (int c = 0; c < rect.width(); ++c)
                coords[static_cast<std::size_t>(c)] = normalize_coords(rect.y0 + r, rect.x0 + c, width, height);
            decode_rows(*source, coords, emb,
                        out.data.data() + static_cast<std::size_t>(r) * rect.width() * static_cast<std::size_t>(ch));
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    }
    return out;
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    if (a.width != b.width || a.height != b.height)
        throw Error(Errc::dimension_mismatch, "psnr: images differ in size (" + std::to_string(a.width) + "x" +
                                                  std::to_string(a.height) + " vs " + std::to_string(b.width) +
                                                  "x" + std::to_string(b.height) + ")");
    if (a.channels < 3 || b.channels < 3) throw Error(Errc::unsupported_format, "psnr needs RGB channels");
    double s = 0.0;
    const std::size_t n = a.pixel_count();
    for (std::size_t p = 0; p < n; ++p) {
        for (int c = 0; c < 3; ++c) {
            const double e = a.data[p * a.channels + c] - b.data[p * b.channels + c];
            s += e * e;
        }
    }
    return psnr_from_mse(s / static_cast<double>(n * 3));
}

}  // namespace gfield
