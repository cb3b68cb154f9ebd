#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

#include "gfield/core.hpp"
#include "gfield/field.hpp"

namespace gfield {

namespace selection {
struct All {};
struct Indices {
    std::vector<std::uint32_t> indices;
};
struct Rect {
    Coord min;
    Coord max;
};
struct Polygon {
    std::vector<Coord> vertices;
};
}  // namespace selection

using Selection = std::variant<selection::All, selection::Indices, selection::Rect, selection::Polygon>;

namespace transform {
struct Translate {
    Vec2 offset;
};
struct Rotate {
    Coord center;
    double angle = 0.0;  // radians, counter-clockwise in (x, y)
};
struct Scale {
    Coord center;
    double sx = 1.0;
    double sy = 1.0;
};
// One offset per selected index, in selection order.
struct Displace {
    std::vector<Vec2> offsets;
};
}  // namespace transform

using Transform = std::variant<transform::Translate, transform::Rotate, transform::Scale, transform::Displace>;

struct EditOp {
    Selection select;
    Transform transform;
};

// Sorted indices of the means inside the region. Rects are inclusive; polygons use the even-odd rule.
std::vector<std::uint32_t> select(const GaussianSet& gaussians, const Selection& sel);

bool point_in_polygon(Coord p, const std::vector<Coord>& vertices);

// Moves the selected means (rotate/scale also update covariance orientation and scale),
// leaves embeddings and decoders untouched, and rebuilds the spatial index.
void apply_transform(Model& model, const std::vector<std::uint32_t>& indices, const Transform& t);

void apply_edits(Model& model, const std::vector<EditOp>& ops);

// Straight-alpha "over": out = a * fg + (1 - a) * bg.
ImageBuffer composite_over(const ImageBuffer& fg, const ImageBuffer& bg);

struct AnimationManifest {
    std::size_t n = 0;
    std::vector<std::filesystem::path> frames;  // resolved against the manifest directory
};

// Reads one frame's N x 2 float32 positions, validating the length against n.
std::vector<Vec2> read_frame_positions(const AnimationManifest& manifest, std::size_t frame);

// Renders each manifest frame in turn with the model's means replaced by that frame's positions.
// The model's original means and index are restored when the replay is destroyed.
class AnimationReplay {
public:
    AnimationReplay(Model& model, AnimationManifest manifest, int width = 0, int height = 0);
    ~AnimationReplay();
    AnimationReplay(const AnimationReplay&) = delete;
    AnimationReplay& operator=(const AnimationReplay&) = delete;

    std::size_t frame_count() const { return manifest_.frames.size(); }
    std::size_t next_frame() const { return next_; }
    // Renders the next frame into `out`; false when all frames are done.
    bool next(ImageBuffer& out);

private:
    Model& model_;
    AnimationManifest manifest_;
    int width_;
    int height_;
    std::size_t next_ = 0;
    std::vector<Vec2> rest_means_;
    GridIndex rest_index_;
};

}  // namespace gfield
