#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "gfield/core.hpp"

namespace gfield {

struct NeighborList {
    std::vector<std::uint32_t> indices;
    std::vector<double> sq_dists;

    std::size_t size() const { return indices.size(); }
    bool empty() const { return indices.empty(); }
    friend bool operator==(const NeighborList&, const NeighborList&) = default;
};

// Uniform-cell index over a fixed snapshot of Gaussian means. Cells are keyed by
// floor((mean - origin) / cell_size) and stored sorted by (cy, cx) with CSR offsets,
// so arbitrarily far-flung (edited) means cost nothing extra.
class GridIndex {
public:
    struct Cell {
        std::int64_t cx = 0;
        std::int64_t cy = 0;
        std::uint32_t begin = 0;
        std::uint32_t end = 0;
    };

    GridIndex() = default;
    GridIndex(std::span<const Vec2> means, double cell_size, Vec2 origin = {});

    // K nearest means with squared distance <= r^2, ordered by (sq_dist, index).
    NeighborList query(Coord x, double r, int k) const;
    void query(Coord x, double r, int k, NeighborList& out) const;

    std::array<std::int64_t, 2> cell_of(Vec2 p) const;
    // Gaussian indices stored in cell (cx, cy); empty when the cell is unoccupied.
    std::span<const std::uint32_t> cell_members(std::int64_t cx, std::int64_t cy) const;

    double cell_size() const { return cell_size_; }
    Vec2 origin() const { return origin_; }
    std::size_t size() const { return snapshot_.size(); }
    const std::vector<Cell>& cells() const { return cells_; }
    std::span<const Vec2> mean_snapshot() const { return snapshot_; }

    // True when `means` equals the snapshot the index was built from.
    bool is_current(std::span<const Vec2> means) const;

private:
    double cell_size_ = 1.0;
    Vec2 origin_{};
    std::vector<Vec2> snapshot_;
    std::vector<Cell> cells_;
    std::vector<std::uint32_t> members_;
};

GridIndex build_index(std::span<const Vec2> means, double cell_size);
GridIndex rebuild(const GridIndex& index, std::span<const Vec2> new_means);

}  // namespace gfield
