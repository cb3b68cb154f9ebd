#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfield {

enum class Errc {
    domain,
    config,
    dimension_mismatch,
    io,
    unsupported_format,
    bad_magic,
    version_mismatch,
    truncation,
    manifest_mismatch,
    parse,
    semantic,
    state,
    empty_support,
    frame_length,
    busy,
    not_found,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Vec2, Vec2) = default;
};

// Query/mean position. The longest image side spans [0,1]; pixel centers sit at (k+0.5)/S.
using Coord = Vec2;

inline double squared_norm(Vec2 v) { return v.x * v.x + v.y * v.y; }

// Size of the coordinate box for a W x H image: (W/S, H/S) with S = max(W, H).
Vec2 domain_extent(int width, int height);

Coord normalize_coords(int row, int col, int width, int height);

// Inverse of normalize_coords: fractional pixel position (col, row) of a coordinate.
Vec2 to_pixel(Coord c, int width, int height);

// Per-Gaussian covariance parameters. Sigma = R(theta) diag(exp(2 log_s1), exp(2 log_s2)) R(theta)^T.
struct CovParams {
    double log_s1 = 0.0;
    double log_s2 = 0.0;
    double theta = 0.0;
};

struct Mat2 {
    double a = 0.0, b = 0.0;  // row 0
    double c = 0.0, d = 0.0;  // row 1

    double det() const { return a * d - b * c; }
};

Mat2 covariance(const CovParams& p);

// Quadratic form d^T Sigma^-1 d evaluated in the Gaussian's principal frame.
double mahalanobis_sq(const CovParams& p, Vec2 d);

struct GaussianSet {
    std::vector<Vec2> means;
    std::vector<CovParams> cov;
    // N x d, row-major; empty unless baked.
    std::vector<double> embeddings;
    std::size_t embedding_dim = 0;
    bool baked = false;

    std::size_t size() const { return means.size(); }
    std::span<const double> embedding(std::size_t i) const {
        return {embeddings.data() + i * embedding_dim, embedding_dim};
    }
};

struct ModelConfig {
    std::int64_t n_gaussians = 5000;
    int knn_k = 16;
    double knn_radius = 0.1;
    int grid_levels = 8;
    int features_per_level = 2;
    int min_res = 16;
    int max_res = 8192;
    int hash_table_log2 = 15;
    int mlp_hidden_layers = 3;
    int mlp_hidden_width = 64;
    double smooth_l1_beta = 1.0;
    double lr_grid = 1e-2;
    double lr_mlp = 1e-3;
    int batch_size = 4096;
    int iterations = 2000;
    std::uint64_t rng_seed = 0;

    // Filled in by validate_config.
    int embedding_dim = 0;
};

ModelConfig validate_config(ModelConfig cfg);

struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<double> data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, int c, double fill = 0.0);

    double& at(int row, int col, int ch) {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
    double at(int row, int col, int ch) const {
        return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool has_alpha() const { return channels == 4; }
};

// Throws unless dimensions, channel count and value range are consistent.
void validate_image(const ImageBuffer& img);

struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;  // exclusive
    int y1 = 0;  // exclusive

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

}  // namespace gfield
