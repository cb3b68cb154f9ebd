#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gfield/core.hpp"
#include "gfield/edit.hpp"
#include "gfield/field.hpp"

namespace gfield::io {

// ---- images: 8-bit RGB/RGBA PNG ------------------------------------------------

ImageBuffer decode_png(std::string_view bytes);
std::string encode_png(const ImageBuffer& image);
ImageBuffer load_image(const std::filesystem::path& path);
void save_image(const ImageBuffer& image, const std::filesystem::path& path);

// Round-half-up 8-bit quantization used by encode_png.
std::uint8_t quantize_unit(double v);
// The image exactly as save_image followed by load_image would return it.
ImageBuffer quantize_8bit(ImageBuffer image);

// ---- checkpoints ----------------------------------------------------------------
//
//   "GNRC" | u32 version (=1) | u32 header_len | header (JSON, sorted keys) | payload
//
// All integers little-endian. The payload is little-endian float32 arrays in the
// order listed by header["arrays"].

inline constexpr char kCheckpointMagic[4] = {'G', 'N', 'R', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(std::string_view bytes);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

// ---- config files ---------------------------------------------------------------

nlohmann::json config_to_json(const ModelConfig& cfg);
// Starts from `base` and overrides the fields present in `j`; unknown keys are rejected.
ModelConfig config_from_json(const nlohmann::json& j, ModelConfig base = {});
ModelConfig load_config(const std::filesystem::path& path);

// ---- edit scripts ---------------------------------------------------------------
//
//   {"ops": [{"select": {...}, "transform": {...}}, ...]}
//
// select:    {"kind": "all"} | {"kind": "indices", "indices": [i, ...]}
//          | {"kind": "rect", "min": [x, y], "max": [x, y]}
//          | {"kind": "polygon", "vertices": [[x, y], ...]}
// transform: {"kind": "translate", "v": [dx, dy]}
//          | {"kind": "rotate", "center": [x, y], "angle": radians}
//          | {"kind": "scale", "center": [x, y], "sx": a, "sy": b}
//          | {"kind": "displace", "offsets": [[dx, dy], ...]}

// Errc::parse with line/column on malformed text; Errc::semantic naming the op index otherwise.
std::vector<EditOp> parse_edit_script(std::string_view text);
std::vector<EditOp> parse_edit_ops(const nlohmann::json& doc);
nlohmann::json edit_ops_to_json(const std::vector<EditOp>& ops);

// ---- animation manifests ---------------------------------------------------------
//
//   {"n": N, "frames": ["f0.pos", ...]}   paths relative to the manifest's directory;
//   each .pos file holds 2N little-endian float32 values (x0, y0, x1, y1, ...).

AnimationManifest parse_animation_manifest(const std::filesystem::path& path);
void write_frame_positions(const std::vector<Vec2>& positions, const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace gfield::io
