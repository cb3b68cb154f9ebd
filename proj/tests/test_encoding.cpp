#include <doctest.h>

#include <cmath>
#include <set>

#include "gfield/encoding.hpp"
#include "gfield/random.hpp"
#include "oracles.hpp"

using namespace gfield;

namespace {

void randomize(HashGrid& g, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    for (double& p : g.params()) p = rng.uniform(-scale, scale);
}

// Straight-line bilinear interpolation written against the slot rule directly.
std::vector<double> naive_encode(const HashGrid& g, Coord x) {
    const std::uint32_t T = g.table_size();
    const int F = g.features();
    std::vector<double> out;
    const double cx = std::clamp(x.x, 0.0, 1.0), cy = std::clamp(x.y, 0.0, 1.0);
    for (int l = 0; l < g.levels(); ++l) {
        const int n = g.resolutions()[l];
        const double px = cx * n, py = cy * n;
        int ix = std::min(static_cast<int>(std::floor(px)), n - 1);
        int iy = std::min(static_cast<int>(std::floor(py)), n - 1);
        const double fx = px - ix, fy = py - iy;
        auto slot = [&](int vx, int vy) -> std::uint32_t {
            const std::uint64_t side = static_cast<std::uint64_t>(n) + 1;
            if (side * side <= T) return static_cast<std::uint32_t>(vy * side + vx);
            return static_cast<std::uint32_t>((static_cast<std::uint64_t>(vx) ^
                                               (static_cast<std::uint64_t>(vy) * 2654435761ULL)) &
                                              (T - 1));
        };
        for (int f = 0; f < F; ++f) {
            auto at = [&](int vx, int vy) { return g.params()[(static_cast<std::size_t>(l) * T + slot(vx, vy)) * F + f]; };
            out.push_back((1 - fx) * (1 - fy) * at(ix, iy) + fx * (1 - fy) * at(ix + 1, iy) +
                          (1 - fx) * fy * at(ix, iy + 1) + fx * fy * at(ix + 1, iy + 1));
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("encoding") {

TEST_CASE("vertex slots: direct indexing and hashing") {
    CHECK(vertex_slot(16, 3, 5, 1u << 15) == 88);
    CHECK(vertex_slot(16, 0, 0, 1u << 15) == 0);
    CHECK(vertex_slot(8192, 0, 0, 1u << 15) == 0);
    CHECK(vertex_slot(8192, 3, 7, 1u << 15) == 21460);
}

TEST_CASE("direct levels are collision-free") {
    const int n = 40;
    const std::uint32_t T = 1u << 11;  // 41^2 = 1681 <= 2048
    std::set<std::uint32_t> slots;
    for (std::uint32_t y = 0; y <= static_cast<std::uint32_t>(n); ++y)
        for (std::uint32_t x = 0; x <= static_cast<std::uint32_t>(n); ++x) slots.insert(vertex_slot(n, x, y, T));
    CHECK(slots.size() == static_cast<std::size_t>((n + 1) * (n + 1)));
}

TEST_CASE("resolution ladder") {
    CHECK(level_resolutions(8, 16, 8192) == std::vector<int>{16, 39, 95, 231, 565, 1378, 3360, 8192});
    CHECK(level_resolutions(1, 16, 8192) == std::vector<int>{16});
    ModelConfig cfg;
    cfg.grid_levels = 1;
    const HashGrid g = build_hashgrid(validate_config(cfg), 0);
    CHECK(g.resolutions() == std::vector<int>{16});
    CHECK(g.output_dim() == 2);
}

TEST_CASE("tables start small and level-major") {
    const HashGrid g = build_hashgrid(validate_config(ModelConfig{}), 42);
    CHECK(g.params().size() == std::size_t{8} * (1u << 15) * 2);
    double lo = 1, hi = -1;
    for (double p : g.params()) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    CHECK(lo >= -1e-4);
    CHECK(hi <= 1e-4);
    CHECK(hi - lo > 1e-4);
}

TEST_CASE("encode on a vertex returns that vertex's features; at a cell center the corner mean") {
    HashGrid g(2, 1, 4, 8, 8);
    randomize(g, 1);
    const std::uint32_t T = g.table_size();
    // vertex (1, 2) of level 0 (res 4)
    const auto e = g.encode({0.25, 0.5});
    CHECK(e[0] == g.params()[vertex_slot(4, 1, 2, T)]);
    const auto c = g.encode({0.375, 0.625});  // center of cell (1,2) at res 4
    const double mean = 0.25 * (g.params()[vertex_slot(4, 1, 2, T)] + g.params()[vertex_slot(4, 2, 2, T)] +
                                g.params()[vertex_slot(4, 1, 3, T)] + g.params()[vertex_slot(4, 2, 3, T)]);
    CHECK(c[0] == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("encode matches the straight-line oracle, including clamped queries") {
    HashGrid g(6, 2, 8, 2048, 12);
    randomize(g, 2);
    Rng rng(3);
    for (int q = 0; q < 500; ++q) {
        const Coord x{rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2)};
        const auto a = g.encode(x);
        const auto b = naive_encode(g, x);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-14);
    }
}

TEST_CASE("encode is continuous across cell boundaries") {
    HashGrid g(4, 2, 8, 128, 10);
    randomize(g, 4);
    for (int k = 1; k < 8; ++k) {
        const double edge = k / 8.0;
        const auto a = g.encode({edge - 1e-9, 0.3});
        const auto b = g.encode({edge + 1e-9, 0.3});
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-5);
    }
}

TEST_CASE("encode_backward: zero upstream, vertex stencil and finite differences") {
    HashGrid g(5, 2, 4, 300, 9);
    randomize(g, 5);
    const std::size_t d = g.output_dim();
    std::vector<double> grad(g.params().size(), 0.0);

    std::vector<double> zero(d, 0.0);
    g.encode_backward({0.3, 0.7}, zero, grad);
    for (double v : grad) CHECK(v == 0.0);

    std::vector<double> up(d, 0.0);
    up[0] = 1.0;
    up[1] = 2.0;
    g.encode_backward({0.25, 0.5}, up, grad);  // a vertex at level 0 (res 4)
    const std::uint32_t s = vertex_slot(4, 1, 2, g.table_size());
    CHECK(grad[s * 2 + 0] == 1.0);
    CHECK(grad[s * 2 + 1] == 2.0);
    std::size_t nonzero = 0;
    for (double v : grad) nonzero += v != 0.0;
    CHECK(nonzero == 2);

    Rng rng(6);
    int checked = 0;
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
        randomize(g, 100 + t, 1e-3);
        const Coord x{rng.uniform(), rng.uniform()};
        std::vector<double> u(d);
        for (double& v : u) v = rng.uniform(-1, 1);
        std::fill(grad.begin(), grad.end(), 0.0);
        g.encode_backward(x, u, grad);
        auto loss = [&] {
            const auto e = g.encode(x);
            double s2 = 0;
            for (std::size_t i = 0; i < d; ++i) s2 += u[i] * e[i];
            return s2;
        };
        for (int l = 0; l < g.levels(); ++l) {
            const auto st = g.stencil(l, x);
            for (int c = 0; c < 4; ++c)
                for (int f = 0; f < 2; ++f) {
                    const std::size_t p = (static_cast<std::size_t>(l) * g.table_size() + st.slots[c]) * 2 + f;
                    const double fd = oracle::central_difference(loss, g.params()[p]);
                    worst = std::max(worst, oracle::rel_error(grad[p], fd));
                    ++checked;
                }
        }
    }
    CHECK(checked > 0);
    CHECK(worst < 1e-5);
}

TEST_CASE("backward accumulates additively") {
    HashGrid g(3, 2, 4, 64, 8);
    randomize(g, 7);
    std::vector<double> up(g.output_dim(), 0.5);
    std::vector<double> once(g.params().size()), twice(g.params().size());
    g.encode_backward({0.41, 0.13}, up, once);
    g.encode_backward({0.41, 0.13}, up, twice);
    g.encode_backward({0.41, 0.13}, up, twice);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == 2 * once[i]);
}

}
