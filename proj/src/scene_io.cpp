// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/scene_io.hpp"

#include "wheatgs/error.hpp"

#include <Eigen/SVD>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

namespace wheatgs {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "binary PLY I/O assumes a little-endian host");

namespace {

// ---------------------------------------------------------------------------
// Minimal PLY reader: keeps the vertex element as named double columns.

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType parse_ply_type(const std::string &name) {
    static const std::unordered_map<std::string, PlyType> table = {
        {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
        {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
        {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
        {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
        {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
        {"float64", PlyType::Float64}};
    const auto it = table.find(name);
    if (it == table.end()) {
        throw FormatError("unknown PLY property type '" + name + "'");
    }
    return it->second;
}

std::size_t ply_type_size(PlyType t) {
    switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8:
        return 1;
    case PlyType::Int16:
    case PlyType::UInt16:
        return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32:
        return 4;
    case PlyType::Float64:
        return 8;
    }
    return 0;
}

template <typename T> double load_as_double(const char *p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
}

double decode_binary(PlyType t, const char *p) {
    switch (t) {
    case PlyType::Int8:
        return load_as_double<std::int8_t>(p);
    case PlyType::UInt8:
        return load_as_double<std::uint8_t>(p);
    case PlyType::Int16:
        return load_as_double<std::int16_t>(p);
    case PlyType::UInt16:
        return load_as_double<std::uint16_t>(p);
    case PlyType::Int32:
        return load_as_double<std::int32_t>(p);
    case PlyType::UInt32:
        return load_as_double<std::uint32_t>(p);
    case PlyType::Float32:
        return load_as_double<float>(p);
    case PlyType::Float64:
        return load_as_double<double>(p);
    }
    return 0.0;
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::Float32;
    bool is_list = false;
    PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
};

struct PlyVertexTable {
    std::size_t rows = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    std::vector<std::string> comments;

    [[nodiscard]] const std::vector<double> *column(const std::string &name) const {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name) {
                return &columns[i];
            }
        }
        return nullptr;
    }
    [[nodiscard]] const std::vector<double> &require(const std::string &name, const fs::path &path) const {
        const auto *col = column(name);
        if (col == nullptr) {
            throw FormatError("PLY '" + path.string() + "' is missing required property '" + name + "'");
        }
        return *col;
    }
};

PlyVertexTable read_ply_vertices(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    std::string line;
    std::getline(in, line);
    if (line.rfind("ply", 0) != 0) {
        throw FormatError("'" + path.string() + "' is not a PLY file");
    }
    enum class Encoding { Ascii, BinaryLE } encoding = Encoding::Ascii;
    std::vector<PlyElement> elements;
    PlyVertexTable table;
    bool header_done = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") {
                encoding = Encoding::Ascii;
            } else if (fmt == "binary_little_endian") {
                encoding = Encoding::BinaryLE;
            } else {
                throw FormatError("unsupported PLY format '" + fmt + "' in '" + path.string() + "'");
            }
        } else if (keyword == "comment" || keyword == "obj_info") {
            std::string rest;
            std::getline(ls >> std::ws, rest);
            table.comments.push_back(rest);
        } else if (keyword == "element") {
            PlyElement el;
            ls >> el.name >> el.count;
            elements.push_back(el);
        } else if (keyword == "property") {
            if (elements.empty()) {
                throw FormatError("PLY property before any element in '" + path.string() + "'");
            }
            PlyProperty prop;
            std::string type;
            ls >> type;
            if (type == "list") {
                std::string count_type;
                std::string item_type;
                ls >> count_type >> item_type >> prop.name;
                prop.is_list = true;
                prop.count_type = parse_ply_type(count_type);
                prop.type = parse_ply_type(item_type);
            } else {
                prop.type = parse_ply_type(type);
                ls >> prop.name;
            }
            elements.back().properties.push_back(prop);
        } else if (keyword == "end_header") {
            header_done = true;
            break;
        }
    }
    if (!header_done) {
        throw FormatError("PLY header of '" + path.string() + "' has no end_header");
    }

    for (const auto &el : elements) {
        const bool keep = el.name == "vertex";
        if (keep) {
            table.rows = el.count;
            for (const auto &p : el.properties) {
                if (!p.is_list) {
                    table.names.push_back(p.name);
                    table.columns.emplace_back();
                    table.columns.back().reserve(el.count);
                }
            }
        }
        for (std::size_t row = 0; row < el.count; ++row) {
            std::size_t col = 0;
            for (const auto &p : el.properties) {
                if (encoding == Encoding::BinaryLE) {
                    char buf[8];
                    if (p.is_list) {
                        in.read(buf, static_cast<std::streamsize>(ply_type_size(p.count_type)));
                        const auto n = static_cast<std::size_t>(decode_binary(p.count_type, buf));
                        in.ignore(static_cast<std::streamsize>(n * ply_type_size(p.type)));
                    } else {
                        in.read(buf, static_cast<std::streamsize>(ply_type_size(p.type)));
                        if (keep) {
                            table.columns[col++].push_back(decode_binary(p.type, buf));
                        }
                    }
                } else {
                    if (p.is_list) {
                        std::size_t n = 0;
                        in >> n;
                        double skip = 0;
                        for (std::size_t i = 0; i < n; ++i) {
                            in >> skip;
                        }
                    } else {
                        double v = 0;
                        in >> v;
                        if (keep) {
                            table.columns[col++].push_back(v);
                        }
                    }
                }
                if (!in) {
                    throw FormatError("PLY '" + path.string() + "' ended before all " + el.name +
                                      " elements were read");
                }
            }
        }
        if (keep) {
            break;
        }
    }
    if (elements.empty() || std::none_of(elements.begin(), elements.end(),
                                         [](const PlyElement &e) { return e.name == "vertex"; })) {
        throw FormatError("PLY '" + path.string() + "' has no vertex element");
    }
    return table;
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

// Rotation block -> nearest rotation, or CalibrationError.
Mat3 repair_rotation(const Mat3 &r, const std::string &camera_id) {
    Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sv = svd.singularValues();
    const double deviation = (sv.array() - 1.0).abs().maxCoeff();
    if (deviation > 1e-3) {
        throw CalibrationError("camera '" + camera_id + "': rotation block is not orthonormal (singular values " +
                               format_double(sv(0)) + ", " + format_double(sv(1)) + ", " + format_double(sv(2)) +
                               ")");
    }
    Mat3 repaired = svd.matrixU() * svd.matrixV().transpose();
    if (repaired.determinant() < 0.0) {
        throw CalibrationError("camera '" + camera_id + "': rotation block is a reflection");
    }
    return repaired;
}

json read_json(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw FormatError("invalid JSON in '" + path.string() + "': " + e.what());
    }
}

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << text;
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

} // namespace

// ---------------------------------------------------------------------------

GaussianScene load_scene_ply(const fs::path &path) {
    const PlyVertexTable table = read_ply_vertices(path);
    if (table.rows == 0) {
        throw FormatError("PLY '" + path.string() + "' contains no vertices (empty scene)");
    }
    const auto &x = table.require("x", path);
    const auto &y = table.require("y", path);
    const auto &z = table.require("z", path);
    const std::array dc = {&table.require("f_dc_0", path), &table.require("f_dc_1", path),
                           &table.require("f_dc_2", path)};
    const auto &opacity = table.require("opacity", path);
    const std::array scale = {&table.require("scale_0", path), &table.require("scale_1", path),
                              &table.require("scale_2", path)};
    const std::array rot = {&table.require("rot_0", path), &table.require("rot_1", path),
                            &table.require("rot_2", path), &table.require("rot_3", path)};

    std::size_t rest_count = 0;
    while (table.column("f_rest_" + std::to_string(rest_count)) != nullptr) {
        ++rest_count;
    }
    if (rest_count % 3 != 0 || !sh_degree_for_count(rest_count / 3 + 1)) {
        throw FormatError("PLY '" + path.string() + "' has " + std::to_string(rest_count) +
                          " f_rest properties; expected 0, 9, 24 or 45");
    }
    const std::size_t extra = rest_count / 3;
    std::vector<const std::vector<double> *> rest(rest_count);
    for (std::size_t i = 0; i < rest_count; ++i) {
        rest[i] = table.column("f_rest_" + std::to_string(i));
    }
    const auto *instance = table.column("instance_id");

    GaussianScene scene;
    for (const auto &c : table.comments) {
        std::istringstream cs(c);
        std::string key;
        double value = 0.0;
        if ((cs >> key >> value) && key == "unit_scale" && value > 0.0) {
            scene.unit_scale = value;
        }
    }

    scene.gaussians.resize(table.rows);
    for (std::size_t i = 0; i < table.rows; ++i) {
        Gaussian &g = scene.gaussians[i];
        g.position = {x[i], y[i], z[i]};
        g.scale_log = {(*scale[0])[i], (*scale[1])[i], (*scale[2])[i]};
        g.opacity_logit = opacity[i];
        Quat q((*rot[0])[i], (*rot[1])[i], (*rot[2])[i], (*rot[3])[i]);
        if (q.norm() <= 0.0 || !std::isfinite(q.norm())) {
            throw FormatError("PLY '" + path.string() + "': vertex " + std::to_string(i) +
                              " has a zero or non-finite rotation quaternion");
        }
        g.rotation = q.normalized();
        g.sh.assign(extra + 1, Vec3::Zero());
        g.sh[0] = {(*dc[0])[i], (*dc[1])[i], (*dc[2])[i]};
        // f_rest is channel-major: all red coefficients, then green, then blue.
        for (std::size_t b = 0; b < extra; ++b) {
            for (std::size_t c = 0; c < 3; ++c) {
                g.sh[b + 1](static_cast<Eigen::Index>(c)) = (*rest[c * extra + b])[i];
            }
        }
        if (instance != nullptr) {
            const double id = (*instance)[i];
            if (id < 0.0) {
                throw FormatError("PLY '" + path.string() + "': negative instance_id");
            }
            g.instance_id = static_cast<std::uint32_t>(id);
        }
    }
    return scene;
}

void save_scene_ply(const GaussianScene &scene, const fs::path &path) {
    if (scene.empty()) {
        throw InputError("save_scene_ply: refusing to write an empty scene");
    }
    const int degree = scene.sh_degree();
    const std::size_t extra = static_cast<std::size_t>((degree + 1) * (degree + 1) - 1);

    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\n";
    header << "comment unit_scale " << format_double(scene.unit_scale) << "\n";
    header << "element vertex " << scene.size() << "\n";
    for (const char *name : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) {
        header << "property float " << name << "\n";
    }
    for (std::size_t i = 0; i < 3 * extra; ++i) {
        header << "property float f_rest_" << i << "\n";
    }
    for (const char *name : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        header << "property float " << name << "\n";
    }
    header << "property uint instance_id\nend_header\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << header.str();
    std::vector<float> row;
    for (const auto &g : scene.gaussians) {
        row.clear();
        const Quat q = g.rotation.normalized();
        row.insert(row.end(), {static_cast<float>(g.position.x()), static_cast<float>(g.position.y()),
                               static_cast<float>(g.position.z()), 0.0F, 0.0F, 0.0F});
        for (int c = 0; c < 3; ++c) {
            row.push_back(static_cast<float>(g.sh[0](c)));
        }
        for (int c = 0; c < 3; ++c) {
            for (std::size_t b = 0; b < extra; ++b) {
                row.push_back(static_cast<float>(g.sh[b + 1](c)));
            }
        }
        row.push_back(static_cast<float>(g.opacity_logit));
        for (int a = 0; a < 3; ++a) {
            row.push_back(static_cast<float>(g.scale_log(a)));
        }
        row.insert(row.end(), {static_cast<float>(q.w()), static_cast<float>(q.x()), static_cast<float>(q.y()),
                               static_cast<float>(q.z())});
        out.write(reinterpret_cast<const char *>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
        const std::uint32_t id = g.instance_id;
        out.write(reinterpret_cast<const char *>(&id), sizeof(id));
    }
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

// ---------------------------------------------------------------------------

std::vector<View> load_cameras(const fs::path &path) {
    const json doc = read_json(path);
    const json &list = doc.is_object() && doc.contains("cameras") ? doc.at("cameras") : doc;
    if (!list.is_array() || list.empty()) {
        throw FormatError("'" + path.string() + "' must contain a non-empty array of cameras");
    }
    std::vector<View> views;
    std::set<std::string> seen;
    for (const auto &cam : list) {
        View v;
        try {
            v.id = cam.at("id").is_string() ? cam.at("id").get<std::string>() : cam.at("id").dump();
            v.width = cam.at("width").get<int>();
            v.height = cam.at("height").get<int>();
            v.fx = cam.at("fx").get<double>();
            v.fy = cam.at("fy").get<double>();
            v.cx = cam.at("cx").get<double>();
            v.cy = cam.at("cy").get<double>();
            const auto m = cam.at("world_to_camera").get<std::vector<double>>();
            if (m.size() != 16) {
                throw FormatError("camera '" + v.id + "': world_to_camera needs 16 numbers");
            }
            Mat3 r;
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) {
                    r(i, j) = m[static_cast<std::size_t>(4 * i + j)];
                }
                v.translation(i) = m[static_cast<std::size_t>(4 * i + 3)];
            }
            v.rotation = repair_rotation(r, v.id);
        } catch (const json::exception &e) {
            throw FormatError("malformed camera entry in '" + path.string() + "': " + e.what());
        }
        if (v.width <= 0 || v.height <= 0 || !(v.fx > 0.0) || !(v.fy > 0.0)) {
            throw CalibrationError("camera '" + v.id + "': image size and focal lengths must be positive");
        }
        if (!seen.insert(v.id).second) {
            throw FormatError("duplicate camera id '" + v.id + "' in '" + path.string() + "'");
        }
        views.push_back(std::move(v));
    }
    return views;
}

void save_cameras(std::span<const View> views, const fs::path &path) {
    json list = json::array();
    for (const auto &v : views) {
        std::vector<double> m(16, 0.0);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                m[static_cast<std::size_t>(4 * i + j)] = v.rotation(i, j);
            }
            m[static_cast<std::size_t>(4 * i + 3)] = v.translation(i);
        }
        m[15] = 1.0;
        list.push_back({{"id", v.id},
                        {"width", v.width},
                        {"height", v.height},
                        {"fx", v.fx},
                        {"fy", v.fy},
                        {"cx", v.cx},
                        {"cy", v.cy},
                        {"world_to_camera", m}});
    }
    write_text(path, list.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

MaskPool load_masks(const fs::path &root, std::span<const View> views) {
    if (!fs::is_directory(root)) {
        throw IoError("mask root '" + root.string() + "' is not a directory");
    }
    std::set<std::string> known;
    for (const auto &v : views) {
        known.insert(v.id);
    }
    for (const auto &entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && known.count(entry.path().filename().string()) == 0) {
            throw FormatError("mask directory '" + entry.path().string() + "' does not match any camera id");
        }
    }

    MaskPool pool;
    for (const auto &view : views) {
        const fs::path dir = root / view.id;
        if (!fs::is_directory(dir)) {
            continue;
        }
        std::vector<std::pair<int, fs::path>> files;
        for (const auto &entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".png") {
                continue;
            }
            const std::string stem = entry.path().stem().string();
            int id = 0;
            const auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), id);
            if (ec != std::errc{} || ptr != stem.data() + stem.size()) {
                throw FormatError("mask file '" + entry.path().string() + "' is not named <integer>.png");
            }
            files.emplace_back(id, entry.path());
        }
        std::sort(files.begin(), files.end());
        for (auto &[id, file] : files) {
            BinaryMask mask = read_mask_png(file);
            if (mask.width != view.width || mask.height != view.height) {
                throw FormatError("mask '" + file.string() + "' is " + std::to_string(mask.width) + "x" +
                                  std::to_string(mask.height) + " but camera '" + view.id + "' is " +
                                  std::to_string(view.width) + "x" + std::to_string(view.height));
            }
            if (!pool.add(view.id, id, std::move(mask))) {
                spdlog::warn("skipping mask '{}': no foreground pixels", file.string());
            }
        }
    }
    return pool;
}

void save_masks(const MaskPool &pool, const fs::path &root) {
    fs::create_directories(root);
    json index = json::object();
    for (const auto &rec : pool.records()) {
        const fs::path dir = root / rec.view_id;
        fs::create_directories(dir);
        write_mask_png(dir / (std::to_string(rec.mask_id) + ".png"), rec.bitmap);
        index[rec.view_id].push_back(rec.mask_id);
    }
    write_text(root / "index.json", index.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

PointCloud load_point_cloud(const fs::path &path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    std::string magic(3, '\0');
    probe.read(magic.data(), 3);
    probe.close();
    PointCloud points;
    if (magic == "ply") {
        const PlyVertexTable table = read_ply_vertices(path);
        const auto &x = table.require("x", path);
        const auto &y = table.require("y", path);
        const auto &z = table.require("z", path);
        points.reserve(table.rows);
        for (std::size_t i = 0; i < table.rows; ++i) {
            points.emplace_back(x[i], y[i], z[i]);
        }
    } else {
        std::ifstream in(path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) {
                line.resize(hash);
            }
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream ls(line);
            double px = 0;
            double py = 0;
            double pz = 0;
            if (!(ls >> px)) {
                continue;
            }
            if (!(ls >> py >> pz)) {
                throw FormatError("'" + path.string() + "' line " + std::to_string(line_no) +
                                  ": expected at least three coordinates");
            }
            points.emplace_back(px, py, pz);
        }
    }
    if (points.empty()) {
        throw FormatError("point cloud '" + path.string() + "' is empty");
    }
    return points;
}

void save_point_cloud_ply(std::span<const Vec3> points, const fs::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << points.size()
        << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    for (const auto &p : points) {
        const float xyz[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z())};
        out.write(reinterpret_cast<const char *>(xyz), sizeof(xyz));
    }
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

// ---------------------------------------------------------------------------

void save_instance_map(const InstanceMap &map, const fs::path &path) {
    json doc = json::object();
    for (const auto &[id, entry] : map) {
        json sources = json::array();
        for (const auto &s : entry.sources) {
            sources.push_back(json::array({s.view_id, s.mask_id}));
        }
        doc[std::to_string(id)] = {{"gaussians", entry.gaussians}, {"sources", sources}};
    }
    write_text(path, doc.dump(1) + "\n");
}

InstanceMap load_instance_map(const fs::path &path) {
    const json doc = read_json(path);
    if (!doc.is_object()) {
        throw FormatError("instance map '" + path.string() + "' must be a JSON object");
    }
    InstanceMap map;
    std::set<std::size_t> claimed;
    try {
        for (const auto &[key, value] : doc.items()) {
            std::uint32_t id = 0;
            const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
            if (ec != std::errc{} || ptr != key.data() + key.size() || id == 0) {
                throw FormatError("instance map '" + path.string() + "': bad instance id '" + key + "'");
            }
            InstanceEntry entry;
            entry.gaussians = value.at("gaussians").get<std::vector<std::size_t>>();
            for (const auto k : entry.gaussians) {
                if (!claimed.insert(k).second) {
                    throw FormatError("instance map '" + path.string() + "': Gaussian " + std::to_string(k) +
                                      " belongs to more than one instance");
                }
            }
            if (value.contains("sources")) {
                for (const auto &s : value.at("sources")) {
                    entry.sources.push_back({s.at(0).get<std::string>(), s.at(1).get<int>()});
                }
            }
            map.emplace(id, std::move(entry));
        }
    } catch (const json::exception &e) {
        throw FormatError("malformed instance map '" + path.string() + "': " + e.what());
    }
    return map;
}

} // namespace wheatgs
