#include "deg/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace deg {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void save_scene_text(const std::string& path, const Scene& scene) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_scene_text: cannot open " + path);
    out << "# center x y z | log_scale x y z | quaternion w x y z | opacity_logit | rgb\n";
    out << "#background " << format_double(scene.background.x) << " " << format_double(scene.background.y)
        << " " << format_double(scene.background.z) << "\n";
    for (const GaussianPrimitive& g : scene.primitives) {
        out << format_double(g.center.x) << " " << format_double(g.center.y) << " "
            << format_double(g.center.z) << " " << format_double(g.log_scale.x) << " "
            << format_double(g.log_scale.y) << " " << format_double(g.log_scale.z) << " "
            << format_double(g.rotation.w) << " " << format_double(g.rotation.x) << " "
            << format_double(g.rotation.y) << " " << format_double(g.rotation.z) << " "
            << format_double(g.opacity_logit) << " " << format_double(g.color.x) << " "
            << format_double(g.color.y) << " " << format_double(g.color.z) << "\n";
    }
}

Scene load_scene_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_scene_text: cannot open " + path);
    Scene scene;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.rfind("#background", 0) == 0) {
            std::istringstream ls(line.substr(11));
            if (!(ls >> scene.background.x >> scene.background.y >> scene.background.z))
                throw std::runtime_error("load_scene_text: malformed #background line");
            continue;
        }
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        GaussianPrimitive g;
        if (!(ls >> g.center.x)) continue;  // blank or comment-only line
        if (!(ls >> g.center.y >> g.center.z >> g.log_scale.x >> g.log_scale.y >> g.log_scale.z >>
              g.rotation.w >> g.rotation.x >> g.rotation.y >> g.rotation.z >> g.opacity_logit >>
              g.color.x >> g.color.y >> g.color.z))
            throw std::runtime_error("load_scene_text: line " + std::to_string(line_no) +
                                     ": expected 14 numeric fields");
        g.normalize_rotation();
        scene.primitives.push_back(g);
    }
    return scene;
}

void write_anchor_ply(const std::string& path, const AnchorSet& anchors) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_anchor_ply: cannot open " + path);
    out << "ply\nformat ascii 1.0\nelement vertex " << anchors.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nproperty double log_prob\nend_header\n";
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        out << format_double(anchors.positions[i].x) << " " << format_double(anchors.positions[i].y)
            << " " << format_double(anchors.positions[i].z) << " " << format_double(anchors.log_prob[i])
            << "\n";
    }
}

PlyPoints read_ply_points(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_ply_points: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "ply") throw std::runtime_error("read_ply_points: not a PLY file");

    std::size_t vertex_count = 0;
    std::vector<std::string> properties;
    bool ascii = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            ascii = fmt == "ascii";
        } else if (word == "element") {
            std::string what;
            ls >> what >> vertex_count;
            if (what != "vertex") throw std::runtime_error("read_ply_points: only vertex elements are supported");
        } else if (word == "property") {
            std::string type, name;
            ls >> type >> name;
            properties.push_back(name);
        } else if (word == "end_header") {
            break;
        }
    }
    if (!ascii) throw std::runtime_error("read_ply_points: only ascii 1.0 is supported");

    int ix = -1, iy = -1, iz = -1, ilp = -1;
    for (std::size_t i = 0; i < properties.size(); ++i) {
        if (properties[i] == "x") ix = static_cast<int>(i);
        if (properties[i] == "y") iy = static_cast<int>(i);
        if (properties[i] == "z") iz = static_cast<int>(i);
        if (properties[i] == "log_prob") ilp = static_cast<int>(i);
    }
    if (ix < 0 || iy < 0 || iz < 0) throw std::runtime_error("read_ply_points: missing x/y/z properties");

    PlyPoints result;
    std::vector<double> row(properties.size());
    for (std::size_t v = 0; v < vertex_count; ++v) {
        if (!std::getline(in, line)) throw std::runtime_error("read_ply_points: truncated vertex data");
        std::istringstream ls(line);
        for (double& r : row)
            if (!(ls >> r)) throw std::runtime_error("read_ply_points: malformed vertex row");
        result.points.push_back({row[static_cast<size_t>(ix)], row[static_cast<size_t>(iy)], row[static_cast<size_t>(iz)]});
        if (ilp >= 0) result.log_prob.push_back(row[static_cast<size_t>(ilp)]);
    }
    return result;
}

namespace {

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void write_u8(std::ofstream& out, std::uint8_t v) { write_bytes(out, &v, 1); }
void write_u32(std::ofstream& out, std::uint32_t v) { write_bytes(out, &v, 4); }
void write_u64(std::ofstream& out, std::uint64_t v) { write_bytes(out, &v, 8); }
void write_f64(std::ofstream& out, double v) { write_bytes(out, &v, 8); }

void read_bytes(std::ifstream& in, void* data, std::size_t n) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("load_model: truncated file");
}

std::uint8_t read_u8(std::ifstream& in) { std::uint8_t v; read_bytes(in, &v, 1); return v; }
std::uint32_t read_u32(std::ifstream& in) { std::uint32_t v; read_bytes(in, &v, 4); return v; }
std::uint64_t read_u64(std::ifstream& in) { std::uint64_t v; read_bytes(in, &v, 8); return v; }
double read_f64(std::ifstream& in) { double v; read_bytes(in, &v, 8); return v; }

void write_aabb(std::ofstream& out, const Aabb& box) {
    write_f64(out, box.min.x); write_f64(out, box.min.y); write_f64(out, box.min.z);
    write_f64(out, box.max.x); write_f64(out, box.max.y); write_f64(out, box.max.z);
}

Aabb read_aabb(std::ifstream& in) {
    Aabb box;
    box.min.x = read_f64(in); box.min.y = read_f64(in); box.min.z = read_f64(in);
    box.max.x = read_f64(in); box.max.y = read_f64(in); box.max.z = read_f64(in);
    return box;
}

void write_f64_vector(std::ofstream& out, const std::vector<double>& v) {
    write_u64(out, v.size());
    if (!v.empty()) write_bytes(out, v.data(), v.size() * sizeof(double));
}

std::vector<double> read_f64_vector(std::ifstream& in) {
    std::vector<double> v(read_u64(in));
    if (!v.empty()) read_bytes(in, v.data(), v.size() * sizeof(double));
    return v;
}

}  // namespace

void save_model(const std::string& path, const FittedModel& model) {
    static_assert(sizeof(double) == 8);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);

    // Density section.
    write_bytes(out, "DEGD", 4);
    write_u8(out, 1);
    write_u8(out, static_cast<std::uint8_t>(model.density.levels));
    write_aabb(out, model.density.domain);
    std::uint64_t cells = model.density.logits.cell_count();
    write_u64(out, cells);
    for (std::size_t l = 0; l < model.density.logits.levels.size(); ++l) {
        for (const auto& [cell_path, logits] : model.density.logits.levels[l]) {
            write_u8(out, static_cast<std::uint8_t>(l));
            write_u64(out, cell_path);
            for (double v : logits) write_f64(out, v);
        }
    }

    // Decoder section.
    write_bytes(out, "DEGA", 4);
    write_u8(out, 1);
    write_u32(out, static_cast<std::uint32_t>(model.decoder.fourier_bands));
    write_u32(out, static_cast<std::uint32_t>(model.decoder.hidden));
    write_u32(out, static_cast<std::uint32_t>(model.decoder.expansion));
    write_f64(out, model.decoder.offset_scale);
    write_f64(out, model.decoder.log_scale_bias);
    write_aabb(out, model.decoder.domain);
    write_f64_vector(out, model.decoder.w1);
    write_f64_vector(out, model.decoder.b1);
    write_f64_vector(out, model.decoder.w2);
    write_f64_vector(out, model.decoder.b2);
}

FittedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);

    char magic[4];
    read_bytes(in, magic, 4);
    if (std::memcmp(magic, "DEGD", 4) != 0) throw std::runtime_error("load_model: missing DEGD magic");
    if (read_u8(in) != 1) throw std::runtime_error("load_model: unsupported DEGD version");
    const int levels = read_u8(in);
    const Aabb domain = read_aabb(in);

    FittedModel model;
    model.density = OctreeDensity(levels, domain);
    const std::uint64_t cells = read_u64(in);
    for (std::uint64_t c = 0; c < cells; ++c) {
        const int level = read_u8(in);
        const std::uint64_t cell_path = read_u64(in);
        if (level < 0 || level >= levels) throw std::runtime_error("load_model: cell level out of range");
        auto& cell = model.density.logits.cell(level, cell_path);
        for (double& v : cell) v = read_f64(in);
    }

    read_bytes(in, magic, 4);
    if (std::memcmp(magic, "DEGA", 4) != 0) throw std::runtime_error("load_model: missing DEGA magic");
    if (read_u8(in) != 1) throw std::runtime_error("load_model: unsupported DEGA version");
    model.decoder.fourier_bands = static_cast<int>(read_u32(in));
    model.decoder.hidden = static_cast<int>(read_u32(in));
    model.decoder.expansion = static_cast<int>(read_u32(in));
    model.decoder.offset_scale = read_f64(in);
    model.decoder.log_scale_bias = read_f64(in);
    model.decoder.domain = read_aabb(in);
    model.decoder.w1 = read_f64_vector(in);
    model.decoder.b1 = read_f64_vector(in);
    model.decoder.w2 = read_f64_vector(in);
    model.decoder.b2 = read_f64_vector(in);
    return model;
}

void write_fit_log_csv(const std::string& path, const std::vector<IterationLog>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_fit_log_csv: cannot open " + path);
    out << fit_log_header() << "\n";
    for (const IterationLog& row : rows) out << fit_log_row(row) << "\n";
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("fnv1a_file: cannot open " + path);
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    return hash;
}

}  // namespace deg
