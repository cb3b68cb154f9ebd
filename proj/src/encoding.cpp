#include "gfield/encoding.hpp"

#include <algorithm>
#include <cmath>

#include "gfield/random.hpp"

namespace gfield {

std::uint32_t vertex_slot(int res, std::uint32_t vx, std::uint32_t vy, std::uint32_t table_size) {
    const std::uint64_t side = static_cast<std::uint64_t>(res) + 1;
    if (side * side <= table_size) return static_cast<std::uint32_t>(vy * side + vx);
    const std::uint64_t h = static_cast<std::uint64_t>(vx) ^ (static_cast<std::uint64_t>(vy) * kHashPrime);
    return static_cast<std::uint32_t>(h & (static_cast<std::uint64_t>(table_size) - 1));
}

std::vector<int> level_resolutions(int levels, int min_res, int max_res) {
    std::vector<int> res(static_cast<std::size_t>(levels));
    if (levels == 1) {
        res[0] = min_res;
        return res;
    }
    const double b = std::exp((std::log(double(max_res)) - std::log(double(min_res))) / (levels - 1));
    for (int l = 0; l < levels; ++l) res[l] = static_cast<int>(std::floor(min_res * std::pow(b, l)));
    // Pin the endpoints against pow() rounding.
    res.front() = min_res;
    res.back() = max_res;
    return res;
}

HashGrid::HashGrid(int levels, int features, int min_res, int max_res, int table_log2)
    : levels_(levels),
      features_(features),
      table_size_(1u << table_log2),
      growth_(levels > 1 ? std::exp((std::log(double(max_res)) - std::log(double(min_res))) / (levels - 1))
                         : 1.0),
      resolutions_(level_resolutions(levels, min_res, max_res)),
      params_(static_cast<std::size_t>(levels) * table_size_ * features, 0.0) {}

LevelStencil HashGrid::stencil(int level, Coord x) const {
    const int res = resolutions_[static_cast<std::size_t>(level)];
    const double px = std::clamp(x.x, 0.0, 1.0) * res;
    const double py = std::clamp(x.y, 0.0, 1.0) * res;
    const auto cx = static_cast<std::uint32_t>(std::min(static_cast<int>(std::floor(px)), res - 1));
    const auto cy = static_cast<std::uint32_t>(std::min(static_cast<int>(std::floor(py)), res - 1));
    const double fx = px - cx;
    const double fy = py - cy;

    LevelStencil s;
    s.slots = {vertex_slot(res, cx, cy, table_size_), vertex_slot(res, cx + 1, cy, table_size_),
               vertex_slot(res, cx, cy + 1, table_size_), vertex_slot(res, cx + 1, cy + 1, table_size_)};
    s.weights = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
    return s;
}

void HashGrid::encode(Coord x, std::span<double> out) const {
    const auto F = static_cast<std::size_t>(features_);
    for (int l = 0; l < levels_; ++l) {
        const LevelStencil s = stencil(l, x);
        const double* table = params_.data() + static_cast<std::size_t>(l) * table_size_ * F;
        double* dst = out.data() + l * F;
        for (std::size_t f = 0; f < F; ++f) {
            dst[f] = s.weights[0] * table[s.slots[0] * F + f] + s.weights[1] * table[s.slots[1] * F + f] +
                     s.weights[2] * table[s.slots[2] * F + f] + s.weights[3] * table[s.slots[3] * F + f];
        }
    }
}

std::vector<double> HashGrid::encode(Coord x) const {
    std::vector<double> out(static_cast<std::size_t>(output_dim()));
    encode(x, out);
    return out;
}

void HashGrid::encode_backward(Coord x, std::span<const double> upstream, std::span<double> grad) const {
    const auto F = static_cast<std::size_t>(features_);
    for (int l = 0; l < levels_; ++l) {
        const LevelStencil s = stencil(l, x);
        double* table = grad.data() + static_cast<std::size_t>(l) * table_size_ * F;
        const double* up = upstream.data() + l * F;
        for (int c = 0; c < 4; ++c) {
            if (s.weights[c] == 0.0) continue;
            for (std::size_t f = 0; f < F; ++f) table[s.slots[c] * F + f] += s.weights[c] * up[f];
        }
    }
}

HashGrid build_hashgrid(const ModelConfig& cfg, std::uint64_t seed) {
    HashGrid grid(cfg.grid_levels, cfg.features_per_level, cfg.min_res, cfg.max_res, cfg.hash_table_log2);
    Rng rng(seed);
    for (double& p : grid.params()) p = rng.uniform(-1e-4, 1e-4);
    return grid;
}

}  // namespace gfield
