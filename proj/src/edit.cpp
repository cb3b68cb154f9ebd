#include "gfield/edit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace gfield {

bool point_in_polygon(Coord p, const std::vector<Coord>& v) {
    bool inside = false;
    const std::size_t n = v.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        if ((v[i].y > p.y) != (v[j].y > p.y)) {
            const double x_cross = (v[j].x - v[i].x) * (p.y - v[i].y) / (v[j].y - v[i].y) + v[i].x;
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

void validate(const selection::Polygon& poly) {
    if (poly.vertices.size() < 3) throw Error(Errc::semantic, "polygon selection needs at least 3 vertices");
    double area2 = 0.0;
    for (std::size_t i = 0, j = poly.vertices.size() - 1; i < poly.vertices.size(); j = i++)
        area2 += poly.vertices[j].x * poly.vertices[i].y - poly.vertices[i].x * poly.vertices[j].y;
    if (area2 == 0.0 || !std::isfinite(area2)) throw Error(Errc::semantic, "polygon selection is degenerate");
}

}  // namespace

std::vector<std::uint32_t> select(const GaussianSet& gaussians, const Selection& sel) {
    const std::size_t n = gaussians.size();
    std::vector<std::uint32_t> out;
    std::visit(overloaded{
                   [&](const selection::All&) {
                       out.resize(n);
                       std::iota(out.begin(), out.end(), 0u);
                   },
                   [&](const selection::Indices& s) {
                       out = s.indices;
                       std::sort(out.begin(), out.end());
                       out.erase(std::unique(out.begin(), out.end()), out.end());
                       if (!out.empty() && out.back() >= n)
                           throw Error(Errc::semantic, "selection index " + std::to_string(out.back()) +
                                                           " out of range (N = " + std::to_string(n) + ")");
                   },
                   [&](const selection::Rect& r) {
                       if (!(r.min.x <= r.max.x && r.min.y <= r.max.y))
                           throw Error(Errc::semantic, "rect selection needs min <= max");
                       for (std::uint32_t i = 0; i < n; ++i) {
                           const Vec2 m = gaussians.means[i];
                           if (m.x >= r.min.x && m.x <= r.max.x && m.y >= r.min.y && m.y <= r.max.y)
                               out.push_back(i);
                       }
                   },
                   [&](const selection::Polygon& p) {
                       validate(p);
                       for (std::uint32_t i = 0; i < n; ++i)
                           if (point_in_polygon(gaussians.means[i], p.vertices)) out.push_back(i);
                   },
               },
               sel);
    return out;
}

void apply_transform(Model& model, const std::vector<std::uint32_t>& indices, const Transform& t) {
    if (!model.baked()) throw Error(Errc::state, "edits require a baked model");
    GaussianSet& g = model.gaussians;
    for (std::uint32_t i : indices) {
        if (i >= g.size()) throw Error(Errc::domain, "edit index " + std::to_string(i) + " out of range");
    }
    std::visit(overloaded{
                   [&](const transform::Translate& tr) {
                       for (std::uint32_t i : indices) g.means[i] = g.means[i] + tr.offset;
                   },
                   [&](const transform::Rotate& rot) {
                       const double c = std::cos(rot.angle);
                       const double s = std::sin(rot.angle);
                       for (std::uint32_t i : indices) {
                           const Vec2 d = g.means[i] - rot.center;
                           g.means[i] = rot.center + Vec2{c * d.x - s * d.y, s * d.x + c * d.y};
                           g.cov[i].theta += rot.angle;
                       }
                   },
                   [&](const transform::Scale& sc) {
                       if (sc.sx == 0.0 || sc.sy == 0.0) throw Error(Errc::domain, "scale factors must be nonzero");
                       const double lx = std::log(std::abs(sc.sx));
                       const double ly = std::log(std::abs(sc.sy));
                       for (std::uint32_t i : indices) {
                           const Vec2 d = g.means[i] - sc.center;
                           g.means[i] = sc.center + Vec2{sc.sx * d.x, sc.sy * d.y};
                           g.cov[i].log_s1 += lx;
                           g.cov[i].log_s2 += ly;
                       }
                   },
                   [&](const transform::Displace& dp) {
                       if (dp.offsets.size() != indices.size())
                           throw Error(Errc::semantic, "displace has " + std::to_string(dp.offsets.size()) +
                                                           " offsets for " + std::to_string(indices.size()) +
                                                           " selected Gaussians");
                       for (std::size_t k = 0; k < indices.size(); ++k)
                           g.means[indices[k]] = g.means[indices[k]] + dp.offsets[k];
                   },
               },
               t);
    for (std::uint32_t i : indices) {
        if (!std::isfinite(g.means[i].x) || !std::isfinite(g.means[i].y))
            throw Error(Errc::domain, "edit produced a non-finite mean");
    }
    model.rebuild_index();
}

void apply_edits(Model& model, const std::vector<EditOp>& ops) {
    for (const EditOp& op : ops) apply_transform(model, select(model.gaussians, op.select), op.transform);
}

ImageBuffer composite_over(const ImageBuffer& fg, const ImageBuffer& bg) {
    if (fg.width != bg.width || fg.height != bg.height)
        throw Error(Errc::dimension_mismatch, "composite: foreground and background sizes differ");
    if (fg.channels != 4) throw Error(Errc::unsupported_format, "composite: foreground must be RGBA");
    if (bg.channels < 3) throw Error(Errc::unsupported_format, "composite: background must be RGB");
    ImageBuffer out(fg.width, fg.height, 3);
    for (std::size_t p = 0; p < fg.pixel_count(); ++p) {
        const double a = fg.data[p * 4 + 3];
        for (int c = 0; c < 3; ++c)
            out.data[p * 3 + c] = a * fg.data[p * 4 + c] + (1.0 - a) * bg.data[p * bg.channels + c];
    }
    return out;
}

std::vector<Vec2> read_frame_positions(const AnimationManifest& manifest, std::size_t frame) {
    const std::filesystem::path& path = manifest.frames.at(frame);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "frame " + std::to_string(frame) + ": cannot open " + path.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t expected = manifest.n * 2 * sizeof(float);
    if (bytes.size() != expected)
        throw Error(Errc::frame_length, "frame " + std::to_string(frame) + " (" + path.filename().string() +
                                            "): expected " + std::to_string(manifest.n * 2) + " floats, found " +
                                            std::to_string(bytes.size() / sizeof(float)) +
                                            (bytes.size() % sizeof(float) ? " plus a partial value" : ""));
    std::vector<Vec2> out(manifest.n);
    for (std::size_t i = 0; i < manifest.n; ++i) {
        float xy[2];
        for (int c = 0; c < 2; ++c) {
            const auto* b = reinterpret_cast<const unsigned char*>(bytes.data()) + (i * 2 + c) * 4;
            const std::uint32_t bits = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
                                       std::uint32_t(b[3]) << 24;
            std::memcpy(&xy[c], &bits, 4);
        }
        out[i] = {xy[0], xy[1]};
    }
    return out;
}

AnimationReplay::AnimationReplay(Model& model, AnimationManifest manifest, int width, int height)
    : model_(model),
      manifest_(std::move(manifest)),
      width_(width > 0 ? width : model.width),
      height_(height > 0 ? height : model.height),
      rest_means_(model.gaussians.means),
      rest_index_(model.index) {
    if (manifest_.n != model.gaussians.size())
        throw Error(Errc::frame_length, "manifest declares n = " + std::to_string(manifest_.n) + " but the model has " +
                                            std::to_string(model.gaussians.size()) + " Gaussians");
}

AnimationReplay::~AnimationReplay() {
    model_.gaussians.means = std::move(rest_means_);
    model_.index = std::move(rest_index_);
}

bool AnimationReplay::next(ImageBuffer& out) {
    if (next_ >= manifest_.frames.size()) return false;
    model_.gaussians.means = read_frame_positions(manifest_, next_);
    model_.rebuild_index();
    out = render(model_, width_, height_);
    ++next_;
    return true;
}

}  // namespace gfield
