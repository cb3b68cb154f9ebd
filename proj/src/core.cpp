#include "gfield/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gfield {

const char* errc_name(Errc code) {
    switch (code) {
        case Errc::domain: return "domain";
        case Errc::config: return "config";
        case Errc::dimension_mismatch: return "dimension_mismatch";
        case Errc::io: return "io";
        case Errc::unsupported_format: return "unsupported_format";
        case Errc::bad_magic: return "bad_magic";
        case Errc::version_mismatch: return "version_mismatch";
        case Errc::truncation: return "truncation";
        case Errc::manifest_mismatch: return "manifest_mismatch";
        case Errc::parse: return "parse";
        case Errc::semantic: return "semantic";
        case Errc::state: return "state";
        case Errc::empty_support: return "empty_support";
        case Errc::frame_length: return "frame_length";
        case Errc::busy: return "busy";
        case Errc::not_found: return "not_found";
    }
    return "unknown";
}

Vec2 domain_extent(int width, int height) {
    const double s = std::max(width, height);
    return {width / s, height / s};
}

Coord normalize_coords(int row, int col, int width, int height) {
    if (width <= 0 || height <= 0 || row < 0 || row >= height || col < 0 || col >= width) {
        std::ostringstream msg;
        msg << "pixel (" << row << ", " << col << ") outside " << width << "x" << height << " image";
        throw Error(Errc::domain, msg.str());
    }
    const double s = std::max(width, height);
    return {(col + 0.5) / s, (row + 0.5) / s};
}

Vec2 to_pixel(Coord c, int width, int height) {
    const double s = std::max(width, height);
    return {c.x * s - 0.5, c.y * s - 0.5};
}

Mat2 covariance(const CovParams& p) {
    const double c = std::cos(p.theta);
    const double s = std::sin(p.theta);
    const double v1 = std::exp(2.0 * p.log_s1);
    const double v2 = std::exp(2.0 * p.log_s2);
    // R diag(v1, v2) R^T with R = [[c, -s], [s, c]]
    Mat2 m;
    m.a = c * c * v1 + s * s * v2;
    m.b = c * s * (v1 - v2);
    m.c = m.b;
    m.d = s * s * v1 + c * c * v2;
    return m;
}

double mahalanobis_sq(const CovParams& p, Vec2 d) {
    const double c = std::cos(p.theta);
    const double s = std::sin(p.theta);
    // R^T d
    const double u = c * d.x + s * d.y;
    const double v = -s * d.x + c * d.y;
    return u * u * std::exp(-2.0 * p.log_s1) + v * v * std::exp(-2.0 * p.log_s2);
}

namespace {

void require(bool ok, const char* field, const std::string& rule) {
    if (!ok) throw Error(Errc::config, std::string(field) + ": " + rule);
}

}  // namespace

ModelConfig validate_config(ModelConfig cfg) {
    require(cfg.n_gaussians >= 1, "n_gaussians", "must be >= 1");
    require(cfg.knn_k >= 1, "knn_k", "must be >= 1");
    require(std::isfinite(cfg.knn_radius) && cfg.knn_radius > 0.0, "knn_radius", "must be > 0");
    require(cfg.grid_levels >= 1, "grid_levels", "must be >= 1");
    require(cfg.features_per_level >= 1, "features_per_level", "must be >= 1");
    require(cfg.min_res >= 2, "min_res", "must be >= 2");
    require(cfg.max_res >= cfg.min_res, "max_res", "must be >= min_res");
    require(cfg.hash_table_log2 >= 1 && cfg.hash_table_log2 <= 30, "hash_table_log2",
            "must be in [1, 30]");
    require(cfg.mlp_hidden_layers >= 0, "mlp_hidden_layers", "must be >= 0");
    require(cfg.mlp_hidden_width >= 1, "mlp_hidden_width", "must be >= 1");
    require(std::isfinite(cfg.smooth_l1_beta) && cfg.smooth_l1_beta > 0.0, "smooth_l1_beta",
            "must be > 0");
    require(std::isfinite(cfg.lr_grid) && cfg.lr_grid >= 0.0, "lr_grid", "must be >= 0");
    require(std::isfinite(cfg.lr_mlp) && cfg.lr_mlp >= 0.0, "lr_mlp", "must be >= 0");
    require(cfg.batch_size >= 1, "batch_size", "must be >= 1");
    require(cfg.iterations >= 0, "iterations", "must be >= 0");
    cfg.embedding_dim = cfg.grid_levels * cfg.features_per_level;
    return cfg;
}

ImageBuffer::ImageBuffer(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0) * std::max(c, 0), fill) {}

void validate_image(const ImageBuffer& img) {
    if (img.width <= 0 || img.height <= 0)
        throw Error(Errc::dimension_mismatch, "image has zero area");
    if (img.channels != 3 && img.channels != 4)
        throw Error(Errc::unsupported_format, "image must have 3 or 4 channels");
    if (img.data.size() != img.pixel_count() * img.channels)
        throw Error(Errc::dimension_mismatch, "image data length does not match its dimensions");
    for (double v : img.data) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::domain, "image values must lie in [0, 1]");
    }
}

}  // namespace gfield
