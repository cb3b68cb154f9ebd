#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gfield/core.hpp"

namespace gfield {

inline constexpr std::uint64_t kHashPrime = 2654435761ULL;

// Table slot of integer vertex (vx, vy) on a level with resolution `res`.
// Direct row-major indexing when the (res+1)^2 vertices fit, spatial hash otherwise.
std::uint32_t vertex_slot(int res, std::uint32_t vx, std::uint32_t vy, std::uint32_t table_size);

// Per-level bilinear stencil: 4 table slots and their weights.
struct LevelStencil {
    std::array<std::uint32_t, 4> slots{};
    std::array<double, 4> weights{};
};

// Multi-resolution 2D hash-grid encoder with L levels of T x F trainable features.
class HashGrid {
public:
    HashGrid() = default;
    HashGrid(int levels, int features, int min_res, int max_res, int table_log2);

    int levels() const { return levels_; }
    int features() const { return features_; }
    int output_dim() const { return levels_ * features_; }
    std::uint32_t table_size() const { return table_size_; }
    double growth() const { return growth_; }
    const std::vector<int>& resolutions() const { return resolutions_; }

    // Level-major: params[(l * T + slot) * F + f].
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    LevelStencil stencil(int level, Coord x) const;

    void encode(Coord x, std::span<double> out) const;
    std::vector<double> encode(Coord x) const;

    // Adds d(loss)/d(table) for one query into `grad` (same layout as params()).
    void encode_backward(Coord x, std::span<const double> upstream, std::span<double> grad) const;

private:
    int levels_ = 0;
    int features_ = 0;
    std::uint32_t table_size_ = 0;
    double growth_ = 1.0;
    std::vector<int> resolutions_;
    std::vector<double> params_;
};

// Resolution ladder floor(min_res * b^l) with b chosen so the last level hits max_res.
std::vector<int> level_resolutions(int levels, int min_res, int max_res);

HashGrid build_hashgrid(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace gfield
