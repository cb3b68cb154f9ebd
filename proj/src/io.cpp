#include "gfield/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gfield::io {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// PNG

std::uint8_t quantize_unit(double v) {
    const double q = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    return static_cast<std::uint8_t>(q);
}

ImageBuffer quantize_8bit(ImageBuffer image) {
    for (double& v : image.data) v = quantize_unit(v) / 255.0;
    return image;
}

namespace {

struct PngReadState {
    std::string_view bytes;
    std::size_t pos = 0;
};

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
    // Unwind through libpng via longjmp; the message is stashed for the C++ side.
    auto* sink = static_cast<std::string*>(png_get_error_ptr(png));
    if (sink) *sink = msg;
    png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

ImageBuffer decode_png(std::string_view bytes) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
        throw Error(Errc::unsupported_format, "not a PNG file");
    std::string error;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
    png_infop info = png_create_info_struct(png);
    PngReadState state{bytes, 0};
    ImageBuffer img;
    std::vector<png_byte> raw;
    std::vector<png_bytep> rows;
    volatile int failure = 0;  // 0 ok, 1 libpng error, 2 unsupported layout
    if (setjmp(png_jmpbuf(png))) {
        failure = 1;
    } else {
        png_set_read_fn(png, &state, [](png_structp p, png_bytep out, png_size_t n) {
            auto* s = static_cast<PngReadState*>(png_get_io_ptr(p));
            if (s->pos + n > s->bytes.size()) png_error(p, "unexpected end of PNG data");
            std::memcpy(out, s->bytes.data() + s->pos, n);
            s->pos += n;
        });
        png_read_info(png, info);
        const int depth = png_get_bit_depth(png, info);
        const int color = png_get_color_type(png, info);
        if (depth != 8 || (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_RGBA)) {
            failure = 2;
            std::ostringstream msg;
            msg << "unsupported PNG layout (bit depth " << depth << ", color type " << color
                << "); expected 8-bit RGB or RGBA";
            error = msg.str();
        } else {
            img.width = static_cast<int>(png_get_image_width(png, info));
            img.height = static_cast<int>(png_get_image_height(png, info));
            img.channels = color == PNG_COLOR_TYPE_RGBA ? 4 : 3;
            const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
            raw.resize(stride * img.height);
            rows.resize(static_cast<std::size_t>(img.height));
            for (int r = 0; r < img.height; ++r) rows[r] = raw.data() + r * stride;
            png_read_image(png, rows.data());
            png_read_end(png, nullptr);
        }
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (failure == 1) throw Error(Errc::unsupported_format, "PNG decode failed: " + error);
    if (failure == 2) throw Error(Errc::unsupported_format, error);
    img.data.resize(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

std::string encode_png(const ImageBuffer& image) {
    validate_image(image);
    std::string out;
    std::string error;
    const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
    std::vector<png_byte> raw(stride * image.height);
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = quantize_unit(image.data[i]);
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
    for (int r = 0; r < image.height; ++r) rows[r] = raw.data() + r * stride;

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
    png_infop info = png_create_info_struct(png);
    volatile bool failed = false;
    if (setjmp(png_jmpbuf(png))) {
        failed = true;
    } else {
        png_set_write_fn(
            png, &out,
            [](png_structp p, png_bytep data, png_size_t n) {
                static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), n);
            },
            [](png_structp) {});
        png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                     image.channels == 4 ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                     PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_set_compression_level(png, 6);
        png_write_info(png, info);
        png_write_image(png, rows.data());
        png_write_end(png, nullptr);
    }
    png_destroy_write_struct(&png, &info);
    if (failed) throw Error(Errc::io, "PNG encode failed: " + error);
    return out;
}

ImageBuffer load_image(const std::filesystem::path& path) { return decode_png(read_file(path)); }

void save_image(const ImageBuffer& image, const std::filesystem::path& path) {
    write_file(path, encode_png(image));
}

// ---------------------------------------------------------------------------
// Config

json config_to_json(const ModelConfig& c) {
    return json{
        {"n_gaussians", c.n_gaussians},
        {"knn_k", c.knn_k},
        {"knn_radius", c.knn_radius},
        {"grid_levels", c.grid_levels},
        {"features_per_level", c.features_per_level},
        {"min_res", c.min_res},
        {"max_res", c.max_res},
        {"hash_table_log2", c.hash_table_log2},
        {"mlp_hidden_layers", c.mlp_hidden_layers},
        {"mlp_hidden_width", c.mlp_hidden_width},
        {"smooth_l1_beta", c.smooth_l1_beta},
        {"lr_grid", c.lr_grid},
        {"lr_mlp", c.lr_mlp},
        {"batch_size", c.batch_size},
        {"iterations", c.iterations},
        {"rng_seed", c.rng_seed},
    };
}

namespace {

template <class T>
void read_field(const json& j, const char* key, T& dst) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) throw Error(Errc::config, std::string(key) + ": expected an integer");
        } else {
            if (!it->is_number()) throw Error(Errc::config, std::string(key) + ": expected a number");
        }
        dst = it->get<T>();
    } catch (const json::exception& e) {
        throw Error(Errc::config, std::string(key) + ": " + e.what());
    }
}

}  // namespace

ModelConfig config_from_json(const json& j, ModelConfig c) {
    if (!j.is_object()) throw Error(Errc::config, "config must be a JSON object");
    static const char* known[] = {"n_gaussians", "knn_k", "knn_radius", "grid_levels", "features_per_level",
                                  "min_res", "max_res", "hash_table_log2", "mlp_hidden_layers", "mlp_hidden_width",
                                  "smooth_l1_beta", "lr_grid", "lr_mlp", "batch_size", "iterations", "rng_seed"};
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(std::begin(known), std::end(known), [&](const char* k) { return key == k; }))
            throw Error(Errc::config, key + ": unknown config field");
    }
    read_field(j, "n_gaussians", c.n_gaussians);
    read_field(j, "knn_k", c.knn_k);
    read_field(j, "knn_radius", c.knn_radius);
    read_field(j, "grid_levels", c.grid_levels);
    read_field(j, "features_per_level", c.features_per_level);
    read_field(j, "min_res", c.min_res);
    read_field(j, "max_res", c.max_res);
    read_field(j, "hash_table_log2", c.hash_table_log2);
    read_field(j, "mlp_hidden_layers", c.mlp_hidden_layers);
    read_field(j, "mlp_hidden_width", c.mlp_hidden_width);
    read_field(j, "smooth_l1_beta", c.smooth_l1_beta);
    read_field(j, "lr_grid", c.lr_grid);
    read_field(j, "lr_mlp", c.lr_mlp);
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "iterations", c.iterations);
    read_field(j, "rng_seed", c.rng_seed);
    return validate_config(c);
}

ModelConfig load_config(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::parse, path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view in, std::size_t pos) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

void put_f32(std::string& out, double v) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

double get_f32(std::string_view in, std::size_t pos) {
    const std::uint32_t bits = get_u32(in, pos);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

struct ArraySpec {
    std::string name;
    std::size_t count;
};

std::vector<ArraySpec> expected_arrays(const Model& m) {
    const std::size_t n = m.gaussians.size();
    std::vector<ArraySpec> a{{"means", 2 * n}, {"cov_params", 3 * n}};
    if (m.baked()) a.push_back({"embeddings", n * static_cast<std::size_t>(m.embedding_dim())});
    if (m.grid) a.push_back({"grid_tables", m.grid->params().size()});
    a.push_back({"color_mlp", m.color_mlp.param_count()});
    if (m.mask_mlp) a.push_back({"mask_mlp", m.mask_mlp->param_count()});
    return a;
}

}  // namespace

std::string encode_checkpoint(const Model& m) {
    json arrays = json::array();
    for (const ArraySpec& a : expected_arrays(m)) arrays.push_back({{"name", a.name}, {"count", a.count}});
    json header{
        {"config", config_to_json(m.config)},
        {"n", m.gaussians.size()},
        {"d", m.embedding_dim()},
        {"baked", m.baked()},
        {"channels", m.output_channels()},
        {"width", m.width},
        {"height", m.height},
        {"color_mlp", m.color_mlp.widths()},
        {"arrays", arrays},
    };
    if (m.mask_mlp) header["mask_mlp"] = m.mask_mlp->widths();
    const std::string text = header.dump();

    std::string out(kCheckpointMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    for (const Vec2& v : m.gaussians.means) {
        put_f32(out, v.x);
        put_f32(out, v.y);
    }
    for (const CovParams& c : m.gaussians.cov) {
        put_f32(out, c.log_s1);
        put_f32(out, c.log_s2);
        put_f32(out, c.theta);
    }
    if (m.baked()) {
        for (double e : m.gaussians.embeddings) put_f32(out, e);
    }
    if (m.grid) {
        for (double p : m.grid->params()) put_f32(out, p);
    }
    for (double p : m.color_mlp.params()) put_f32(out, p);
    if (m.mask_mlp) {
        for (double p : m.mask_mlp->params()) put_f32(out, p);
    }
    return out;
}

Model decode_checkpoint(std::string_view bytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw Error(Errc::bad_magic, "bad magic: not a checkpoint file");
    if (bytes.size() < 12) throw Error(Errc::truncation, "truncation: file ends inside the checkpoint preamble");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kCheckpointVersion)
        throw Error(Errc::version_mismatch, "version mismatch: file has version " + std::to_string(version) +
                                                ", expected " + std::to_string(kCheckpointVersion));
    const std::uint32_t header_len = get_u32(bytes, 8);
    if (bytes.size() - 12 < header_len) throw Error(Errc::truncation, "truncation: file ends inside the header");

    json header;
    try {
        header = json::parse(bytes.substr(12, header_len));
    } catch (const json::parse_error& e) {
        throw Error(Errc::parse, std::string("checkpoint header: ") + e.what());
    }

    Model m;
    std::vector<ArraySpec> listed;
    try {
        m.config = config_from_json(header.at("config"));
        m.width = header.at("width").get<int>();
        m.height = header.at("height").get<int>();
        const auto n = header.at("n").get<std::size_t>();
        const auto d = header.at("d").get<int>();
        const bool baked = header.at("baked").get<bool>();
        const int channels = header.at("channels").get<int>();
        if (d != m.config.embedding_dim)
            throw Error(Errc::manifest_mismatch, "manifest mismatch: d disagrees with the config");
        if (channels != 3 && channels != 4)
            throw Error(Errc::manifest_mismatch, "manifest mismatch: channels must be 3 or 4");
        m.gaussians.means.resize(n);
        m.gaussians.cov.resize(n);
        m.gaussians.embedding_dim = static_cast<std::size_t>(d);
        m.gaussians.baked = baked;
        if (baked) {
            m.gaussians.embeddings.resize(n * static_cast<std::size_t>(d));
        } else {
            m.grid = HashGrid(m.config.grid_levels, m.config.features_per_level, m.config.min_res,
                              m.config.max_res, m.config.hash_table_log2);
        }
        m.color_mlp = Mlp(header.at("color_mlp").get<std::vector<int>>());
        if (channels == 4) m.mask_mlp = Mlp(header.at("mask_mlp").get<std::vector<int>>());
        for (const json& a : header.at("arrays"))
            listed.push_back({a.at("name").get<std::string>(), a.at("count").get<std::size_t>()});
    } catch (const json::exception& e) {
        throw Error(Errc::manifest_mismatch, std::string("manifest mismatch: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::manifest_mismatch) throw;
        throw Error(Errc::manifest_mismatch, std::string("manifest mismatch: ") + e.what());
    }

    const std::vector<ArraySpec> expected = expected_arrays(m);
    if (listed.size() != expected.size())
        throw Error(Errc::manifest_mismatch, "manifest mismatch: expected " + std::to_string(expected.size()) +
                                                 " arrays, header lists " + std::to_string(listed.size()));
    std::size_t total = 0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (listed[i].name != expected[i].name || listed[i].count != expected[i].count)
            throw Error(Errc::manifest_mismatch, "manifest mismatch: array " + std::to_string(i) + " is '" +
                                                     listed[i].name + "' x" + std::to_string(listed[i].count) +
                                                     ", expected '" + expected[i].name + "' x" +
                                                     std::to_string(expected[i].count));
        total += expected[i].count;
    }
    const std::size_t payload_at = 12 + header_len;
    const std::size_t payload = bytes.size() - payload_at;
    if (payload < total * 4)
        throw Error(Errc::truncation, "truncation: payload holds " + std::to_string(payload) + " bytes, manifest needs " +
                                          std::to_string(total * 4));
    if (payload > total * 4)
        throw Error(Errc::manifest_mismatch, "manifest mismatch: " + std::to_string(payload - total * 4) +
                                                 " trailing bytes after the last array");

    std::size_t pos = payload_at;
    auto next = [&] {
        const double v = get_f32(bytes, pos);
        pos += 4;
        return v;
    };
    for (Vec2& v : m.gaussians.means) {
        v.x = next();
        v.y = next();
    }
    for (CovParams& c : m.gaussians.cov) {
        c.log_s1 = next();
        c.log_s2 = next();
        c.theta = next();
    }
    for (double& e : m.gaussians.embeddings) e = next();
    if (m.grid) {
        for (double& p : m.grid->params()) p = next();
    }
    for (double& p : m.color_mlp.params()) p = next();
    if (m.mask_mlp) {
        for (double& p : m.mask_mlp->params()) p = next();
    }
    for (const Vec2& v : m.gaussians.means) {
        if (!std::isfinite(v.x) || !std::isfinite(v.y))
            throw Error(Errc::manifest_mismatch, "manifest mismatch: non-finite mean in payload");
    }
    m.rebuild_index();
    return m;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    write_file(path, encode_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

// ---------------------------------------------------------------------------
// Edit scripts

namespace {

[[noreturn]] void semantic(std::size_t op, const std::string& what) {
    throw Error(Errc::semantic, "op " + std::to_string(op) + ": " + what);
}

const json& member(const json& obj, const char* key, std::size_t op, const char* ctx) {
    auto it = obj.find(key);
    if (it == obj.end()) semantic(op, std::string(ctx) + " is missing \"" + key + "\"");
    return *it;
}

double number(const json& v, std::size_t op, const std::string& what) {
    if (!v.is_number()) semantic(op, what + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) semantic(op, what + " must be finite");
    return d;
}

Vec2 vec2(const json& v, std::size_t op, const std::string& what) {
    if (!v.is_array() || v.size() != 2) semantic(op, what + " must be a [x, y] pair");
    return {number(v[0], op, what + "[0]"), number(v[1], op, what + "[1]")};
}

std::vector<Vec2> vec2_list(const json& v, std::size_t op, const std::string& what) {
    if (!v.is_array()) semantic(op, what + " must be an array of [x, y] pairs");
    std::vector<Vec2> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(vec2(v[i], op, what + "[" + std::to_string(i) + "]"));
    return out;
}

std::string kind_of(const json& obj, std::size_t op, const char* ctx) {
    if (!obj.is_object()) semantic(op, std::string(ctx) + " must be an object");
    const json& k = member(obj, "kind", op, ctx);
    if (!k.is_string()) semantic(op, std::string(ctx) + " kind must be a string");
    return k.get<std::string>();
}

Selection parse_selection(const json& s, std::size_t op) {
    const std::string kind = kind_of(s, op, "select");
    if (kind == "all") return selection::All{};
    if (kind == "indices") {
        const json& arr = member(s, "indices", op, "select");
        if (!arr.is_array()) semantic(op, "select.indices must be an array");
        selection::Indices out;
        for (const json& v : arr) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
                semantic(op, "select.indices must hold non-negative integers");
            const auto idx = v.get<std::uint64_t>();
            if (idx > UINT32_MAX) semantic(op, "select index too large");
            out.indices.push_back(static_cast<std::uint32_t>(idx));
        }
        return out;
    }
    if (kind == "rect") {
        selection::Rect r{vec2(member(s, "min", op, "select"), op, "select.min"),
                          vec2(member(s, "max", op, "select"), op, "select.max")};
        if (!(r.min.x <= r.max.x && r.min.y <= r.max.y)) semantic(op, "rect min must be <= max component-wise");
        return r;
    }
    if (kind == "polygon") {
        selection::Polygon p{vec2_list(member(s, "vertices", op, "select"), op, "select.vertices")};
        if (p.vertices.size() < 3) semantic(op, "polygon needs at least 3 vertices");
        return p;
    }
    semantic(op, "unknown select kind \"" + kind + "\"");
}

Transform parse_transform(const json& t, std::size_t op) {
    const std::string kind = kind_of(t, op, "transform");
    if (kind == "translate") return transform::Translate{vec2(member(t, "v", op, "translate"), op, "translate.v")};
    if (kind == "rotate") {
        return transform::Rotate{vec2(member(t, "center", op, "rotate"), op, "rotate.center"),
                                 number(member(t, "angle", op, "rotate"), op, "rotate.angle")};
    }
    if (kind == "scale") {
        transform::Scale s{vec2(member(t, "center", op, "scale"), op, "scale.center"),
                           number(member(t, "sx", op, "scale"), op, "scale.sx"),
                           number(member(t, "sy", op, "scale"), op, "scale.sy")};
        if (s.sx == 0.0 || s.sy == 0.0) semantic(op, "scale factors must be nonzero");
        return s;
    }
    if (kind == "displace")
        return transform::Displace{vec2_list(member(t, "offsets", op, "displace"), op, "displace.offsets")};
    semantic(op, "unknown transform kind \"" + kind + "\"");
}

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }

}  // namespace

std::vector<EditOp> parse_edit_ops(const json& doc) {
    if (!doc.is_object()) throw Error(Errc::semantic, "edit script must be an object with an \"ops\" array");
    auto it = doc.find("ops");
    if (it == doc.end() || !it->is_array()) throw Error(Errc::semantic, "edit script needs an \"ops\" array");
    std::vector<EditOp> ops;
    for (std::size_t i = 0; i < it->size(); ++i) {
        const json& op = (*it)[i];
        if (!op.is_object()) semantic(i, "op must be an object");
        ops.push_back({parse_selection(member(op, "select", i, "op"), i),
                       parse_transform(member(op, "transform", i, "op"), i)});
    }
    return ops;
}

std::vector<EditOp> parse_edit_script(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i < upto; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw Error(Errc::parse, "parse error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                                     ": " + e.what());
    }
    return parse_edit_ops(doc);
}

json edit_ops_to_json(const std::vector<EditOp>& ops) {
    json arr = json::array();
    for (const EditOp& op : ops) {
        json sel, tr;
        if (std::holds_alternative<selection::All>(op.select)) {
            sel = {{"kind", "all"}};
        } else if (const auto* s = std::get_if<selection::Indices>(&op.select)) {
            sel = {{"kind", "indices"}, {"indices", s->indices}};
        } else if (const auto* r = std::get_if<selection::Rect>(&op.select)) {
            sel = {{"kind", "rect"}, {"min", vec_json(r->min)}, {"max", vec_json(r->max)}};
        } else if (const auto* p = std::get_if<selection::Polygon>(&op.select)) {
            json verts = json::array();
            for (Vec2 v : p->vertices) verts.push_back(vec_json(v));
            sel = {{"kind", "polygon"}, {"vertices", verts}};
        }
        if (const auto* t = std::get_if<transform::Translate>(&op.transform)) {
            tr = {{"kind", "translate"}, {"v", vec_json(t->offset)}};
        } else if (const auto* r = std::get_if<transform::Rotate>(&op.transform)) {
            tr = {{"kind", "rotate"}, {"center", vec_json(r->center)}, {"angle", r->angle}};
        } else if (const auto* s = std::get_if<transform::Scale>(&op.transform)) {
            tr = {{"kind", "scale"}, {"center", vec_json(s->center)}, {"sx", s->sx}, {"sy", s->sy}};
        } else if (const auto* d = std::get_if<transform::Displace>(&op.transform)) {
            json offs = json::array();
            for (Vec2 v : d->offsets) offs.push_back(vec_json(v));
            tr = {{"kind", "displace"}, {"offsets", offs}};
        }
        arr.push_back({{"select", sel}, {"transform", tr}});
    }
    return json{{"ops", arr}};
}

// ---------------------------------------------------------------------------
// Animation manifests

AnimationManifest parse_animation_manifest(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::parse, path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw Error(Errc::semantic, "manifest must be an object");
    auto n = doc.find("n");
    auto frames = doc.find("frames");
    if (n == doc.end() || !n->is_number_unsigned()) throw Error(Errc::semantic, "manifest needs a non-negative \"n\"");
    if (frames == doc.end() || !frames->is_array()) throw Error(Errc::semantic, "manifest needs a \"frames\" array");

    AnimationManifest m;
    m.n = n->get<std::size_t>();
    const std::filesystem::path base = path.parent_path();
    for (std::size_t i = 0; i < frames->size(); ++i) {
        const json& f = (*frames)[i];
        if (!f.is_string()) throw Error(Errc::semantic, "frame " + std::to_string(i) + " must be a path string");
        std::filesystem::path p = f.get<std::string>();
        if (p.is_relative()) p = base / p;
        if (!std::filesystem::is_regular_file(p))
            throw Error(Errc::not_found, "frame " + std::to_string(i) + ": missing file " + p.string());
        m.frames.push_back(std::move(p));
    }
    return m;
}

void write_frame_positions(const std::vector<Vec2>& positions, const std::filesystem::path& path) {
    std::string out;
    out.reserve(positions.size() * 8);
    for (const Vec2& v : positions) {
        put_f32(out, v.x);
        put_f32(out, v.y);
    }
    write_file(path, out);
}

}  // namespace gfield::io
