#include "gfield/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace gfield {

namespace {

std::int64_t cell_coord(double v, double origin, double cell_size) {
    return static_cast<std::int64_t>(std::floor((v - origin) / cell_size));
}

bool cell_less(const GridIndex::Cell& a, std::int64_t cx, std::int64_t cy) {
    return a.cy < cy || (a.cy == cy && a.cx < cx);
}

}  // namespace

GridIndex::GridIndex(std::span<const Vec2> means, double cell_size, Vec2 origin)
    : cell_size_(cell_size), origin_(origin), snapshot_(means.begin(), means.end()) {
    if (!(cell_size > 0.0) || !std::isfinite(cell_size))
        throw Error(Errc::domain, "cell_size must be finite and > 0");
    struct Entry {
        std::int64_t cx, cy;
        std::uint32_t index;
    };
    std::vector<Entry> entries;
    entries.reserve(means.size());
    for (std::size_t i = 0; i < means.size(); ++i) {
        const Vec2 m = means[i];
        if (!std::isfinite(m.x) || !std::isfinite(m.y))
            throw Error(Errc::domain, "mean " + std::to_string(i) + " is not finite");
        entries.push_back({cell_coord(m.x, origin.x, cell_size), cell_coord(m.y, origin.y, cell_size),
                           static_cast<std::uint32_t>(i)});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.cy != b.cy) return a.cy < b.cy;
        if (a.cx != b.cx) return a.cx < b.cx;
        return a.index < b.index;
    });
    members_.reserve(entries.size());
    for (const Entry& e : entries) {
        if (cells_.empty() || cells_.back().cx != e.cx || cells_.back().cy != e.cy) {
            const auto at = static_cast<std::uint32_t>(members_.size());
            cells_.push_back({e.cx, e.cy, at, at});
        }
        members_.push_back(e.index);
        cells_.back().end = static_cast<std::uint32_t>(members_.size());
    }
}

std::array<std::int64_t, 2> GridIndex::cell_of(Vec2 p) const {
    return {cell_coord(p.x, origin_.x, cell_size_), cell_coord(p.y, origin_.y, cell_size_)};
}

std::span<const std::uint32_t> GridIndex::cell_members(std::int64_t cx, std::int64_t cy) const {
    auto it = std::lower_bound(cells_.begin(), cells_.end(), std::pair{cx, cy},
                               [](const Cell& c, std::pair<std::int64_t, std::int64_t> key) {
                                   return cell_less(c, key.first, key.second);
                               });
    if (it == cells_.end() || it->cx != cx || it->cy != cy) return {};
    return {members_.data() + it->begin, it->end - it->begin};
}

bool GridIndex::is_current(std::span<const Vec2> means) const {
    return std::equal(means.begin(), means.end(), snapshot_.begin(), snapshot_.end());
}

NeighborList GridIndex::query(Coord x, double r, int k) const {
    NeighborList out;
    query(x, r, k, out);
    return out;
}

void GridIndex::query(Coord x, double r, int k, NeighborList& out) const {
    out.indices.clear();
    out.sq_dists.clear();
    if (!(r > 0.0) || k < 1) throw Error(Errc::domain, "query requires r > 0 and k >= 1");
    if (cells_.empty()) return;

    const double r2 = r * r;
    // Pad the scanned cell range so rounding in (x +- r) never drops a boundary point.
    auto lo_cell = [&](double v, double o) {
        const double t = (v - r - o) / cell_size_;
        return static_cast<std::int64_t>(std::floor(t - 1e-9 * (1.0 + std::abs(t))));
    };
    auto hi_cell = [&](double v, double o) {
        const double t = (v + r - o) / cell_size_;
        return static_cast<std::int64_t>(std::floor(t + 1e-9 * (1.0 + std::abs(t))));
    };
    const std::int64_t cx0 = lo_cell(x.x, origin_.x), cx1 = hi_cell(x.x, origin_.x);
    const std::int64_t cy0 = lo_cell(x.y, origin_.y), cy1 = hi_cell(x.y, origin_.y);

    auto& idx = out.indices;
    auto& d2s = out.sq_dists;
    const auto cap = static_cast<std::size_t>(k);
    auto consider = [&](std::uint32_t i) {
        const double dx = snapshot_[i].x - x.x;
        const double dy = snapshot_[i].y - x.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 > r2) return;
        if (idx.size() == cap) {
            if (d2 > d2s.back() || (d2 == d2s.back() && i > idx.back())) return;
            idx.pop_back();
            d2s.pop_back();
        }
        std::size_t pos = idx.size();
        while (pos > 0 && (d2s[pos - 1] > d2 || (d2s[pos - 1] == d2 && idx[pos - 1] > i))) --pos;
        idx.insert(idx.begin() + static_cast<std::ptrdiff_t>(pos), i);
        d2s.insert(d2s.begin() + static_cast<std::ptrdiff_t>(pos), d2);
    };

    for (std::int64_t cy = cy0; cy <= cy1; ++cy) {
        auto it = std::lower_bound(cells_.begin(), cells_.end(), std::pair{cx0, cy},
                                   [](const Cell& c, std::pair<std::int64_t, std::int64_t> key) {
                                       return cell_less(c, key.first, key.second);
                                   });
        for (; it != cells_.end() && it->cy == cy && it->cx <= cx1; ++it) {
            for (std::uint32_t m = it->begin; m < it->end; ++m) consider(members_[m]);
        }
    }
}

GridIndex build_index(std::span<const Vec2> means, double cell_size) {
    return GridIndex(means, cell_size);
}

GridIndex rebuild(const GridIndex& index, std::span<const Vec2> new_means) {
    return GridIndex(new_means, index.cell_size(), index.origin());
}

}  // namespace gfield
