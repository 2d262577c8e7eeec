#include "votesplat/scene.hpp"

#include "votesplat/json_util.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace votesplat {

bool GaussianPrimitive::operator==(const GaussianPrimitive &o) const {
    return position == o.position && scale == o.scale && rotation.coeffs() == o.rotation.coeffs() &&
           opacity == o.opacity && color == o.color && offsets == o.offsets &&
           instance_label == o.instance_label && cluster_id == o.cluster_id;
}

void Scene::recompute_bounds() {
    if (gaussians.empty()) {
        bounds = Bounds{};
        return;
    }
    bounds.min = bounds.max = gaussians.front().position;
    for (const auto &g : gaussians) {
        bounds.min = bounds.min.cwiseMin(g.position);
        bounds.max = bounds.max.cwiseMax(g.position);
    }
}

int Scene::segment_label(std::size_t i, int level) const {
    const auto &g = gaussians.at(i);
    if (g.instance_label < 0 || level <= 0) {
        return g.instance_label;
    }
    const auto it = std::find_if(instances.begin(), instances.end(),
                                 [&](const InstanceInfo &info) { return info.label == g.instance_label; });
    if (it == instances.end()) {
        return g.instance_label;
    }
    const int splits = std::min(level, 3);
    static constexpr int kAxis[3] = {2, 0, 1};
    int part = 0;
    for (int s = 0; s < splits; ++s) {
        if (g.position[kAxis[s]] >= it->center[kAxis[s]]) {
            part |= 1 << s;
        }
    }
    return (g.instance_label << splits) + part;
}

Scene Scene::without_cluster(int cluster) const {
    Scene out = *this;
    std::erase_if(out.gaussians, [&](const GaussianPrimitive &g) { return g.cluster_id == cluster; });
    out.recompute_bounds();
    return out;
}

bool Scene::operator==(const Scene &o) const {
    return gaussians == o.gaussians && levels == o.levels && bounds == o.bounds && instances == o.instances;
}

std::string to_string(ShellShape shape) {
    switch (shape) {
    case ShellShape::Sphere:
        return "sphere-shell";
    case ShellShape::Box:
        return "box-shell";
    case ShellShape::Ellipsoid:
        return "ellipsoid-shell";
    }
    return "sphere-shell";
}

ShellShape shell_shape_from_string(const std::string &name) {
    if (name == "sphere-shell" || name == "sphere") {
        return ShellShape::Sphere;
    }
    if (name == "box-shell" || name == "box") {
        return ShellShape::Box;
    }
    if (name == "ellipsoid-shell" || name == "ellipsoid") {
        return ShellShape::Ellipsoid;
    }
    throw ValidationError("unknown shell shape '" + name + "'");
}

std::string to_string(BackgroundPlacement placement) {
    switch (placement) {
    case BackgroundPlacement::Floor:
        return "floor";
    case BackgroundPlacement::Box:
        return "box";
    case BackgroundPlacement::Dome:
        return "dome";
    }
    return "floor";
}

BackgroundPlacement background_placement_from_string(const std::string &name) {
    if (name == "floor") {
        return BackgroundPlacement::Floor;
    }
    if (name == "box") {
        return BackgroundPlacement::Box;
    }
    if (name == "dome") {
        return BackgroundPlacement::Dome;
    }
    throw ValidationError("unknown background placement '" + name + "'");
}

// ---------------------------------------------------------------------------
// Generator

namespace {

// std distributions are implementation-defined; these keep scenes identical
// across standard libraries.
class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    Vec3 unit_sphere() {
        const double z = uniform(-1.0, 1.0);
        const double phi = uniform(0.0, 2.0 * std::numbers::pi);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {r * std::cos(phi), r * std::sin(phi), z};
    }

private:
    std::mt19937_64 engine_;
};

Vec3 sample_ellipsoid(Sampler &rng, const Vec3 &radii) {
    // Rejection on the surface-area element of the sphere-to-ellipsoid map.
    const double a = radii.x(), b = radii.y(), c = radii.z();
    const double bound = std::max({b * c, a * c, a * b});
    for (;;) {
        const Vec3 n = rng.unit_sphere();
        const double g = std::sqrt((b * c * n.x()) * (b * c * n.x()) + (a * c * n.y()) * (a * c * n.y()) +
                                   (a * b * n.z()) * (a * b * n.z()));
        if (rng.uniform() * bound <= g) {
            return radii.cwiseProduct(n);
        }
    }
}

Vec3 sample_box_shell(Sampler &rng, const Vec3 &half) {
    const double ayz = half.y() * half.z(), axz = half.x() * half.z(), axy = half.x() * half.y();
    const double pick = rng.uniform() * (ayz + axz + axy);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
    if (pick < ayz) {
        return {sign * half.x(), u * half.y(), v * half.z()};
    }
    if (pick < ayz + axz) {
        return {u * half.x(), sign * half.y(), v * half.z()};
    }
    return {u * half.x(), v * half.y(), sign * half.z()};
}

Vec3 instance_palette(int k) {
    static const Vec3 kColors[] = {{0.85, 0.25, 0.2}, {0.2, 0.65, 0.3}, {0.2, 0.35, 0.85}, {0.9, 0.75, 0.2},
                                   {0.6, 0.3, 0.75}, {0.2, 0.75, 0.8},  {0.9, 0.5, 0.1},  {0.5, 0.5, 0.5}};
    return kColors[static_cast<std::size_t>(k) % std::size(kColors)];
}

} // namespace

Scene generate_synthetic_scene(const SyntheticSceneSpec &spec) {
    if (spec.levels < 1) {
        throw ValidationError("levels must be >= 1");
    }
    if (spec.opacity <= 0.0 || spec.opacity > 1.0) {
        throw ValidationError("opacity must be in (0, 1]");
    }
    if (spec.scale_factor <= 0.0) {
        throw ValidationError("scale_factor must be positive");
    }
    if (spec.surface_jitter < 0.0) {
        throw ValidationError("surface_jitter must be non-negative");
    }
    for (std::size_t k = 0; k < spec.instances.size(); ++k) {
        const auto &inst = spec.instances[k];
        if (inst.count <= 0) {
            throw ValidationError("instance " + std::to_string(k) + ": count must be positive");
        }
        if (!(inst.radius > 0.0) || (inst.radii && !(inst.radii->array() > 0.0).all())) {
            throw ValidationError("instance " + std::to_string(k) + ": radius must be positive");
        }
    }
    if (spec.background.count < 0) {
        throw ValidationError("background count must be non-negative");
    }
    if (spec.background.count > 0 && !(spec.background.extent > 0.0)) {
        throw ValidationError("background extent must be positive");
    }

    Sampler rng(spec.seed);
    Scene scene;
    scene.levels = spec.levels;
    const std::vector<Vec3> zero_offsets(static_cast<std::size_t>(spec.levels), Vec3::Zero());

    for (std::size_t k = 0; k < spec.instances.size(); ++k) {
        const auto &inst = spec.instances[k];
        const Vec3 radii = inst.radii.value_or(Vec3::Constant(inst.radius));
        InstanceInfo info;
        info.label = static_cast<int>(k);
        info.shape = inst.shape;
        info.center = inst.center;
        info.radii = radii;
        info.count = inst.count;
        scene.instances.push_back(info);

        const double shell_radius = radii.mean();
        const double s = spec.scale_factor * shell_radius / std::sqrt(static_cast<double>(inst.count));
        const Vec3 color = inst.color.value_or(instance_palette(static_cast<int>(k)));
        for (int n = 0; n < inst.count; ++n) {
            Vec3 local;
            switch (inst.shape) {
            case ShellShape::Sphere:
                local = radii.x() * rng.unit_sphere();
                break;
            case ShellShape::Ellipsoid:
                local = sample_ellipsoid(rng, radii);
                break;
            case ShellShape::Box:
                local = sample_box_shell(rng, radii);
                break;
            }
            if (spec.surface_jitter > 0.0) {
                const double j = rng.uniform(-spec.surface_jitter, spec.surface_jitter);
                local *= 1.0 + j;
            }
            GaussianPrimitive g;
            g.position = inst.center + local;
            g.scale = Vec3::Constant(s);
            g.opacity = spec.opacity;
            g.color = color;
            g.offsets = zero_offsets;
            g.instance_label = static_cast<int>(k);
            scene.gaussians.push_back(std::move(g));
        }
    }

    const auto &bg = spec.background;
    if (bg.count > 0) {
        const double s = spec.scale_factor * bg.extent / std::sqrt(static_cast<double>(bg.count));
        for (int n = 0; n < bg.count; ++n) {
            Vec3 p;
            switch (bg.placement) {
            case BackgroundPlacement::Floor:
                p = bg.center + Vec3(rng.uniform(-bg.extent, bg.extent), rng.uniform(-bg.extent, bg.extent), 0.0);
                break;
            case BackgroundPlacement::Box:
                p = bg.center + Vec3(rng.uniform(-bg.extent, bg.extent), rng.uniform(-bg.extent, bg.extent),
                                     rng.uniform(-bg.extent, bg.extent));
                break;
            case BackgroundPlacement::Dome:
                p = bg.center + bg.extent * rng.unit_sphere();
                break;
            }
            GaussianPrimitive g;
            g.position = p;
            g.scale = Vec3::Constant(s);
            g.opacity = bg.opacity;
            const double shade = rng.uniform(0.35, 0.6);
            g.color = Vec3::Constant(shade);
            g.offsets = zero_offsets;
            scene.gaussians.push_back(std::move(g));
        }
    }

    scene.recompute_bounds();
    return scene;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::size_t ply_size(PlyType t) {
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

std::optional<PlyType> ply_type(const std::string &name) {
    static const std::map<std::string, PlyType> kTypes = {
        {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
        {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
        {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
        {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
        {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
        {"float64", PlyType::Float64}};
    const auto it = kTypes.find(name);
    if (it == kTypes.end()) {
        return std::nullopt;
    }
    return it->second;
}

double decode(PlyType t, const unsigned char *p) {
    std::uint64_t raw = 0;
    const std::size_t n = ply_size(t);
    for (std::size_t i = 0; i < n; ++i) {
        raw |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    switch (t) {
    case PlyType::Int8:
        return static_cast<std::int8_t>(raw);
    case PlyType::UInt8:
        return static_cast<std::uint8_t>(raw);
    case PlyType::Int16:
        return static_cast<std::int16_t>(raw);
    case PlyType::UInt16:
        return static_cast<std::uint16_t>(raw);
    case PlyType::Int32:
        return static_cast<std::int32_t>(raw);
    case PlyType::UInt32:
        return static_cast<std::uint32_t>(raw);
    case PlyType::Float32:
        return std::bit_cast<float>(static_cast<std::uint32_t>(raw));
    case PlyType::Float64:
        return std::bit_cast<double>(raw);
    }
    return 0.0;
}

void put_le(std::string &out, std::uint64_t raw, std::size_t bytes) {
    for (std::size_t i = 0; i < bytes; ++i) {
        out.push_back(static_cast<char>((raw >> (8 * i)) & 0xffu));
    }
}

void put_double(std::string &out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v), 8); }
void put_int(std::string &out, int v) { put_le(out, static_cast<std::uint32_t>(v), 4); }

std::vector<std::string> property_names(int levels) {
    std::vector<std::string> names = {"x",     "y",     "z",     "scale_0", "scale_1", "scale_2",
                                      "rot_0", "rot_1", "rot_2", "rot_3",   "opacity", "red",
                                      "green", "blue"};
    for (int l = 0; l < levels; ++l) {
        for (const char *axis : {"x", "y", "z"}) {
            names.push_back("offset_l" + std::to_string(l) + "_" + axis);
        }
    }
    return names;
}

json::Json vec_json(const Vec3 &v) { return json::Json::array({v.x(), v.y(), v.z()}); }

} // namespace

void write_scene_ply(const Scene &scene, const std::filesystem::path &path) {
    const auto names = property_names(scene.levels);
    std::string out = "ply\nformat binary_little_endian 1.0\ncomment votesplat scene\nelement vertex " +
                      std::to_string(scene.size()) + "\n";
    for (const auto &n : names) {
        out += "property double " + n + "\n";
    }
    out += "property int instance_id\nproperty int cluster_id\nend_header\n";
    for (const auto &g : scene.gaussians) {
        for (int i = 0; i < 3; ++i) {
            put_double(out, g.position[i]);
        }
        for (int i = 0; i < 3; ++i) {
            put_double(out, g.scale[i]);
        }
        put_double(out, g.rotation.w());
        put_double(out, g.rotation.x());
        put_double(out, g.rotation.y());
        put_double(out, g.rotation.z());
        put_double(out, g.opacity);
        for (int i = 0; i < 3; ++i) {
            put_double(out, g.color[i]);
        }
        for (int l = 0; l < scene.levels; ++l) {
            for (int i = 0; i < 3; ++i) {
                put_double(out, g.offsets[static_cast<std::size_t>(l)][i]);
            }
        }
        put_int(out, g.instance_label);
        put_int(out, g.cluster_id);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw IoError("cannot write " + path.string());
    }
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) {
        throw IoError("short write to " + path.string());
    }
}

Scene read_scene_ply(const std::filesystem::path &path, int levels) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open " + path.string());
    }
    const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};

    std::size_t pos = 0;
    auto next_line = [&]() {
        const std::size_t eol = bytes.find('\n', pos);
        if (eol == std::string::npos) {
            throw ParseError("PLY header not terminated", bytes.size());
        }
        std::string line = bytes.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const std::size_t start = pos;
        pos = eol + 1;
        return std::pair{line, start};
    };

    auto [magic, magic_at] = next_line();
    if (magic != "ply") {
        throw ParseError("missing PLY magic", magic_at);
    }
    struct Property {
        std::string name;
        PlyType type;
        std::size_t offset;
    };
    std::vector<Property> props;
    std::size_t vertex_count = 0;
    std::size_t stride = 0;
    bool in_vertex = false;
    bool have_format = false;
    for (;;) {
        auto [line, at] = next_line();
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "end_header") {
            break;
        }
        if (word == "comment" || word == "obj_info" || word.empty()) {
            continue;
        }
        if (word == "format") {
            std::string fmt, ver;
            ls >> fmt >> ver;
            if (fmt != "binary_little_endian") {
                throw ParseError("unsupported PLY format '" + fmt + "'", at);
            }
            if (ver != "1.0") {
                throw ParseError("unsupported PLY version '" + ver + "'", at);
            }
            have_format = true;
        } else if (word == "element") {
            std::string name;
            long long count = -1;
            ls >> name >> count;
            if (name == "vertex") {
                if (count < 0) {
                    throw ParseError("bad vertex count", at);
                }
                vertex_count = static_cast<std::size_t>(count);
                in_vertex = true;
            } else {
                if (count != 0) {
                    throw ParseError("unsupported PLY element '" + name + "'", at);
                }
                in_vertex = false;
            }
        } else if (word == "property") {
            std::string type_name, name;
            ls >> type_name;
            if (type_name == "list") {
                throw ParseError("list properties are not supported", at);
            }
            ls >> name;
            const auto t = ply_type(type_name);
            if (!t || name.empty()) {
                throw ParseError("bad property line '" + line + "'", at);
            }
            if (in_vertex) {
                props.push_back({name, *t, stride});
                stride += ply_size(*t);
            }
        } else {
            throw ParseError("unexpected PLY header keyword '" + word + "'", at);
        }
    }
    if (!have_format) {
        throw ParseError("PLY format line missing", pos);
    }

    std::map<std::string, const Property *> by_name;
    for (const auto &p : props) {
        by_name[p.name] = &p;
    }
    for (const char *required : {"x", "y", "z"}) {
        if (!by_name.count(required)) {
            throw ParseError(std::string("PLY lacks property ") + required, pos);
        }
    }
    const std::size_t need = vertex_count * stride;
    if (bytes.size() - pos < need) {
        throw ParseError("PLY payload truncated: expected " + std::to_string(need) + " bytes", bytes.size());
    }

    const auto *base = reinterpret_cast<const unsigned char *>(bytes.data()) + pos;
    auto field = [&](std::size_t row, const std::string &name, double fallback) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) {
            return fallback;
        }
        return decode(it->second->type, base + row * stride + it->second->offset);
    };

    Scene scene;
    scene.levels = levels;
    scene.gaussians.resize(vertex_count);
    for (std::size_t r = 0; r < vertex_count; ++r) {
        auto &g = scene.gaussians[r];
        g.position = {field(r, "x", 0), field(r, "y", 0), field(r, "z", 0)};
        g.scale = {field(r, "scale_0", 0.01), field(r, "scale_1", 0.01), field(r, "scale_2", 0.01)};
        g.rotation = Eigen::Quaterniond(field(r, "rot_0", 1), field(r, "rot_1", 0), field(r, "rot_2", 0),
                                        field(r, "rot_3", 0));
        g.opacity = field(r, "opacity", 1.0);
        g.color = {field(r, "red", 0.5), field(r, "green", 0.5), field(r, "blue", 0.5)};
        g.offsets.assign(static_cast<std::size_t>(levels), Vec3::Zero());
        for (int l = 0; l < levels; ++l) {
            const std::string p = "offset_l" + std::to_string(l) + "_";
            g.offsets[static_cast<std::size_t>(l)] = {field(r, p + "x", 0), field(r, p + "y", 0),
                                                      field(r, p + "z", 0)};
        }
        g.instance_label = static_cast<int>(field(r, "instance_id", -1));
        g.cluster_id = static_cast<int>(field(r, "cluster_id", -1));
    }
    scene.recompute_bounds();
    return scene;
}

void save_scene(const Scene &scene, const std::filesystem::path &manifest_path) {
    auto payload = manifest_path;
    payload.replace_extension(".ply");

    json::Json m;
    m["format"] = "votesplat-scene";
    m["version"] = kSceneFormatVersion;
    m["levels"] = scene.levels;
    m["gaussian_count"] = scene.size();
    m["payload"] = payload.filename().string();
    m["bounds"] = {{"min", vec_json(scene.bounds.min)}, {"max", vec_json(scene.bounds.max)}};
    json::Json instances = json::Json::array();
    for (const auto &info : scene.instances) {
        instances.push_back({{"label", info.label},
                             {"shape", to_string(info.shape)},
                             {"center", vec_json(info.center)},
                             {"radii", vec_json(info.radii)},
                             {"count", info.count}});
    }
    m["instances"] = instances;

    write_scene_ply(scene, payload);
    json::write_file(manifest_path, m);
}

Scene load_scene(const std::filesystem::path &manifest_path) {
    const json::Json m = json::read_file(manifest_path);
    const std::string where = manifest_path.string();
    json::Reader r(m, where);
    r.expect_string("format", "votesplat-scene");
    const int version = r.get<int>("version");
    if (version != kSceneFormatVersion) {
        throw ParseError(where + ": scene format version " + std::to_string(version) + " is not supported (expected " +
                             std::to_string(kSceneFormatVersion) + ")",
                         0);
    }
    const int levels = r.get<int>("levels");
    if (levels < 1) {
        throw ParseError(where + ": field 'levels' must be >= 1", 0);
    }
    const auto count = r.get<std::size_t>("gaussian_count");
    const auto payload_name = r.get<std::string>("payload");
    const auto &bounds = r.object("bounds");
    std::vector<InstanceInfo> instances;
    for (const auto &item : r.array("instances")) {
        json::Reader ir(item, where + ": instances[]");
        InstanceInfo info;
        info.label = ir.get<int>("label");
        info.shape = shell_shape_from_string(ir.get<std::string>("shape"));
        info.center = ir.vec3("center");
        info.radii = ir.vec3("radii");
        info.count = ir.get<int>("count");
        ir.finish();
        instances.push_back(info);
    }
    r.finish();

    Scene scene = read_scene_ply(manifest_path.parent_path() / payload_name, levels);
    if (scene.size() != count) {
        throw ParseError(where + ": manifest declares " + std::to_string(count) + " Gaussians but payload holds " +
                             std::to_string(scene.size()),
                         0);
    }
    json::Reader br(bounds, where + ": bounds");
    scene.bounds.min = br.vec3("min");
    scene.bounds.max = br.vec3("max");
    br.finish();
    scene.instances = std::move(instances);
    return scene;
}

} // namespace votesplat
