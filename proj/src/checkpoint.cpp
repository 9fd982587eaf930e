#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "refsplat/error.hpp"
#include "refsplat/scene_io.hpp"

namespace refsplat {

namespace {

struct PlyProperty {
    std::string name;
    std::string type;
    int size = 0;
};

struct PlyTable {
    std::vector<std::string> comments;
    std::vector<PlyProperty> properties;
    std::size_t count = 0;
    std::vector<double> values;  // count x properties, row-major

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < properties.size(); ++i)
            if (properties[i].name == name) return static_cast<int>(i);
        return -1;
    }
    double at(std::size_t row, int col) const { return values[row * properties.size() + col]; }
};

int type_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    return 0;
}

double decode(const char* p, const std::string& t) {
    if (t == "double" || t == "float64") {
        std::uint64_t raw;
        std::memcpy(&raw, p, 8);
        if constexpr (std::endian::native != std::endian::little) raw = __builtin_bswap64(raw);
        return std::bit_cast<double>(raw);
    }
    if (t == "float" || t == "float32") {
        std::uint32_t raw;
        std::memcpy(&raw, p, 4);
        if constexpr (std::endian::native != std::endian::little) raw = __builtin_bswap32(raw);
        return std::bit_cast<float>(raw);
    }
    if (t == "uchar" || t == "uint8") return static_cast<unsigned char>(*p);
    if (t == "char" || t == "int8") return static_cast<signed char>(*p);
    std::uint32_t raw = 0;
    const int n = type_size(t);
    for (int i = 0; i < n; ++i) raw |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    if (t == "short" || t == "int16") return static_cast<std::int16_t>(raw);
    if (t == "ushort" || t == "uint16") return static_cast<std::uint16_t>(raw);
    if (t == "int" || t == "int32") return static_cast<std::int32_t>(raw);
    return raw;
}

PlyTable read_ply(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open '" + path.string() + "'");
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    PlyTable table;
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const std::size_t start = pos;
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        if (pos >= bytes.size()) throw FormatError("PLY: header is not terminated", start);
        std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.begin() + static_cast<std::ptrdiff_t>(pos));
        ++pos;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    if (next_line() != "ply") throw FormatError("PLY: bad magic", 0);
    bool ascii = false, in_vertex = false, seen_vertex = false;
    for (;;) {
        const std::size_t line_at = pos;
        const std::string line = next_line();
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "end_header") break;
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") ascii = true;
            else if (fmt != "binary_little_endian") throw FormatError("PLY: unsupported format '" + fmt + "'", line_at);
        } else if (kw == "comment") {
            std::string rest;
            std::getline(ls, rest);
            table.comments.push_back(rest.empty() ? rest : rest.substr(1));
        } else if (kw == "element") {
            std::string name;
            std::size_t count = 0;
            ls >> name >> count;
            if (seen_vertex) throw FormatError("PLY: only a single vertex element is supported", line_at);
            in_vertex = name == "vertex";
            if (!in_vertex) throw FormatError("PLY: unsupported element '" + name + "'", line_at);
            seen_vertex = true;
            table.count = count;
        } else if (kw == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type == "list") throw FormatError("PLY: list properties are not supported", line_at);
            const int size = type_size(type);
            if (size == 0) throw FormatError("PLY: unknown property type '" + type + "'", line_at);
            if (in_vertex) table.properties.push_back({name, type, size});
        } else if (kw != "obj_info" && !kw.empty()) {
            throw FormatError("PLY: unexpected header keyword '" + kw + "'", line_at);
        }
    }

    const std::size_t cols = table.properties.size();
    table.values.resize(table.count * cols);
    if (ascii) {
        std::istringstream body(std::string(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end()));
        for (double& v : table.values)
            if (!(body >> v)) throw FormatError("PLY: short ASCII payload", bytes.size());
        return table;
    }
    std::size_t row_size = 0;
    for (const auto& p : table.properties) row_size += p.size;
    if (bytes.size() - pos < row_size * table.count)
        throw FormatError("PLY: payload too short", bytes.size());
    for (std::size_t r = 0; r < table.count; ++r) {
        std::size_t off = pos + r * row_size;
        for (std::size_t c = 0; c < cols; ++c) {
            table.values[r * cols + c] = decode(bytes.data() + off, table.properties[c].type);
            off += table.properties[c].size;
        }
    }
    return table;
}

std::optional<long long> comment_value(const PlyTable& t, const std::string& key) {
    for (const auto& c : t.comments) {
        std::istringstream s(c);
        std::string k;
        long long v;
        if (s >> k && k == key && s >> v) return v;
    }
    return std::nullopt;
}

void append_double(std::string& out, double v) {
    std::uint64_t raw = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native != std::endian::little) raw = __builtin_bswap64(raw);
    char buf[8];
    std::memcpy(buf, &raw, 8);
    out.append(buf, 8);
}

}  // namespace

std::vector<std::string> checkpoint_property_names(int degree_max) {
    std::vector<std::string> names = {"x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3",
                                      "log_scale_0", "log_scale_1", "log_scale_2",
                                      "raw_alpha_trans", "raw_alpha_ref", "raw_beta_ref"};
    const int n = 3 * sh_coeff_count(degree_max);
    for (int i = 0; i < n; ++i) names.push_back("sh_trans_" + std::to_string(i));
    for (int i = 0; i < n; ++i) names.push_back("sh_ref_" + std::to_string(i));
    return names;
}

void save_checkpoint(const fs::path& path, const GaussianSet& scene, long long iteration) {
    const auto names = checkpoint_property_names(scene.sh_degree);
    std::string out;
    out += "ply\nformat binary_little_endian 1.0\n";
    out += "comment refsplat_format_version " + std::to_string(kCheckpointVersion) + "\n";
    out += "comment degree_max " + std::to_string(scene.sh_degree) + "\n";
    out += "comment iteration " + std::to_string(iteration) + "\n";
    out += "element vertex " + std::to_string(scene.size()) + "\n";
    for (const auto& n : names) out += "property double " + n + "\n";
    out += "end_header\n";
    out.reserve(out.size() + scene.size() * names.size() * 8);
    for (std::size_t i = 0; i < scene.size(); ++i)
        for (ParamGroup g : kAllParamGroups) {
            const int w = scene.group_width(g);
            const auto& arr = scene.group(g);
            for (int k = 0; k < w; ++k) append_double(out, arr[i * w + k]);
        }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot write checkpoint '" + path.string() + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw LoadError("failed writing checkpoint '" + path.string() + "'");
}

GaussianSet load_checkpoint(const fs::path& path, CheckpointMeta* meta, std::optional<int> engine_degree) {
    const PlyTable t = read_ply(path);
    const auto version = comment_value(t, "refsplat_format_version");
    if (!version) throw SchemaError("checkpoint '" + path.string() + "' has no format version", {"refsplat_format_version"});
    if (*version != kCheckpointVersion)
        throw SchemaError("checkpoint version " + std::to_string(*version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    const auto degree = comment_value(t, "degree_max");
    if (!degree) throw SchemaError("checkpoint '" + path.string() + "' has no degree_max", {"degree_max"});
    if (*degree < 0 || *degree > kMaxShDegree) throw SchemaError("checkpoint degree_max outside [0, 5]");

    const auto names = checkpoint_property_names(static_cast<int>(*degree));
    std::vector<std::string> missing;
    std::vector<int> cols;
    for (const auto& n : names) {
        const int c = t.column(n);
        if (c < 0) missing.push_back(n);
        cols.push_back(c);
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
        throw SchemaError("checkpoint '" + path.string() + "' is missing properties: " + list, missing);
    }

    GaussianSet scene;
    scene.sh_degree = static_cast<int>(*degree);
    scene.resize(t.count);
    for (std::size_t i = 0; i < t.count; ++i) {
        std::size_t c = 0;
        for (ParamGroup g : kAllParamGroups) {
            const int w = scene.group_width(g);
            auto& arr = scene.group(g);
            for (int k = 0; k < w; ++k) arr[i * w + k] = t.at(i, cols[c++]);
        }
    }
    if (meta) {
        meta->format_version = static_cast<int>(*version);
        meta->degree_max = scene.sh_degree;
        meta->iteration = comment_value(t, "iteration").value_or(0);
    }
    if (engine_degree && *engine_degree != scene.sh_degree) return scene.with_sh_degree(*engine_degree);
    return scene;
}

void write_point_cloud(const fs::path& path, const std::vector<Eigen::Vector3d>& points, const std::vector<Rgb>& colors) {
    if (points.size() != colors.size()) throw ConfigError("write_point_cloud: points and colors differ in length");
    std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(points.size()) +
                      "\nproperty double x\nproperty double y\nproperty double z\n"
                      "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (int a = 0; a < 3; ++a) append_double(out, points[i][a]);
        for (int c = 0; c < 3; ++c) out.push_back(static_cast<char>(quantize8(colors[i][c])));
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot write point cloud '" + path.string() + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

void read_point_cloud(const fs::path& path, std::vector<Eigen::Vector3d>& points, std::vector<Rgb>& colors) {
    const PlyTable t = read_ply(path);
    const int cx = t.column("x"), cy = t.column("y"), cz = t.column("z");
    if (cx < 0 || cy < 0 || cz < 0) throw SchemaError("point cloud lacks x/y/z", {"x", "y", "z"});
    const int cr = t.column("red"), cg = t.column("green"), cb = t.column("blue");
    points.resize(t.count);
    colors.resize(t.count);
    for (std::size_t i = 0; i < t.count; ++i) {
        points[i] = {t.at(i, cx), t.at(i, cy), t.at(i, cz)};
        if (cr >= 0 && cg >= 0 && cb >= 0)
            colors[i] = {t.at(i, cr) / 255.0, t.at(i, cg) / 255.0, t.at(i, cb) / 255.0};
        else
            colors[i] = {0.5, 0.5, 0.5};
    }
}

}  // namespace refsplat
