#include "votesplat/clustering.hpp"

#include "votesplat/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace votesplat {

void ClusterParams::validate() const {
    if (!(eps > 0.0) || !std::isfinite(eps)) {
        throw ValidationError("eps must be positive");
    }
    if (min_pts < 1) {
        throw ValidationError("min_pts must be at least 1");
    }
    if (!(background_eps >= 0.0)) {
        throw ValidationError("background_eps must be non-negative");
    }
}

ClusterParams ClusterParams::defaults_for(double scene_diagonal) {
    ClusterParams p;
    p.eps = 0.05 * scene_diagonal;
    p.min_pts = 8;
    p.background_eps = 1e-6 * scene_diagonal;
    return p;
}

BackgroundSplit filter_background(const Scene &scene, int level, double background_eps) {
    if (level < 0 || level >= scene.levels) {
        throw ValidationError("level out of range");
    }
    BackgroundSplit split;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const double norm = scene.gaussians[i].offsets[static_cast<std::size_t>(level)].norm();
        (norm <= background_eps ? split.background : split.foreground).push_back(i);
    }
    return split;
}

namespace {

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey &) const = default;
};

struct CellHash {
    std::size_t operator()(const CellKey &k) const {
        std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
        h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
        h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
        return static_cast<std::size_t>(h);
    }
};

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
    std::size_t find(std::size_t a) {
        while (parent_[a] != a) {
            parent_[a] = parent_[parent_[a]];
            a = parent_[a];
        }
        return a;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) {
            parent_[std::max(a, b)] = std::min(a, b);
        }
    }

private:
    std::vector<std::size_t> parent_;
};

} // namespace

std::vector<int> cluster_votes(std::span<const Vec3> votes, const ClusterParams &params) {
    params.validate();
    const std::size_t n = votes.size();
    for (const auto &v : votes) {
        if (!v.allFinite()) {
            throw ValidationError("cluster input contains a non-finite vote");
        }
    }
    const double eps2 = params.eps * params.eps;
    auto cell_of = [&](const Vec3 &v) {
        return CellKey{static_cast<std::int64_t>(std::floor(v.x() / params.eps)),
                       static_cast<std::int64_t>(std::floor(v.y() / params.eps)),
                       static_cast<std::int64_t>(std::floor(v.z() / params.eps))};
    };
    std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> grid;
    for (std::size_t i = 0; i < n; ++i) {
        grid[cell_of(votes[i])].push_back(i);
    }

    // Neighbor lists (self included), ascending.
    std::vector<std::vector<std::size_t>> neighbors(n);
    constexpr std::size_t kChunk = 256;
    parallel_for((n + kChunk - 1) / kChunk, [&](std::size_t chunk) {
        const std::size_t end = std::min(n, (chunk + 1) * kChunk);
        for (std::size_t i = chunk * kChunk; i < end; ++i) {
            const CellKey c = cell_of(votes[i]);
            auto &list = neighbors[i];
            for (std::int64_t dz = -1; dz <= 1; ++dz) {
                for (std::int64_t dy = -1; dy <= 1; ++dy) {
                    for (std::int64_t dx = -1; dx <= 1; ++dx) {
                        const auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
                        if (it == grid.end()) {
                            continue;
                        }
                        for (std::size_t j : it->second) {
                            if ((votes[i] - votes[j]).squaredNorm() <= eps2) {
                                list.push_back(j);
                            }
                        }
                    }
                }
            }
            std::sort(list.begin(), list.end());
        }
    });

    std::vector<char> core(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        core[i] = neighbors[i].size() >= static_cast<std::size_t>(params.min_pts);
    }
    DisjointSets sets(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i]) {
            continue;
        }
        for (std::size_t j : neighbors[i]) {
            if (core[j]) {
                sets.unite(i, j);
            }
        }
    }
    // Root of each point's cluster; border points follow their lowest-index core neighbor.
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::size_t> root(n, kNone);
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) {
            root[i] = sets.find(i);
            continue;
        }
        for (std::size_t j : neighbors[i]) {
            if (core[j]) {
                root[i] = sets.find(j);
                break;
            }
        }
    }
    std::vector<int> labels(n, -1);
    std::unordered_map<std::size_t, int> ids;
    for (std::size_t i = 0; i < n; ++i) {
        if (root[i] == kNone) {
            continue;
        }
        const auto [it, inserted] = ids.emplace(root[i], static_cast<int>(ids.size()));
        labels[i] = it->second;
    }
    return labels;
}

std::vector<int> InstanceTable::gaussian_labels(std::size_t scene_size) const {
    std::vector<int> labels(scene_size, -1);
    for (const auto &[id, entry] : instances) {
        for (std::size_t g : entry.gaussian_ids) {
            if (g >= scene_size) {
                throw ValidationError("instance table refers to Gaussian " + std::to_string(g) +
                                      " beyond the scene size");
            }
            labels[g] = id;
        }
    }
    return labels;
}

InstanceTable build_instance_table(const Scene &scene, const BackgroundSplit &split, std::span<const int> labels,
                                   int level) {
    if (labels.size() != split.foreground.size()) {
        throw ValidationError("label count does not match the foreground count");
    }
    InstanceTable table;
    table.level = level;
    table.background = split.background;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        const std::size_t g = split.foreground[k];
        if (labels[k] < 0) {
            table.noise.push_back(g);
        } else {
            table.instances[labels[k]].gaussian_ids.push_back(g);
        }
    }
    for (auto &[id, entry] : table.instances) {
        std::sort(entry.gaussian_ids.begin(), entry.gaussian_ids.end());
        Vec3 sum = Vec3::Zero();
        for (std::size_t g : entry.gaussian_ids) {
            sum += scene.gaussians[g].vote(level);
        }
        entry.vote_centroid = sum / static_cast<double>(entry.gaussian_ids.size());
    }
    std::sort(table.noise.begin(), table.noise.end());
    return table;
}

InstanceTable cluster_scene(const Scene &scene, const ClusterParams &params, int level) {
    const BackgroundSplit split = filter_background(scene, level, params.background_eps);
    std::vector<Vec3> votes;
    votes.reserve(split.foreground.size());
    for (std::size_t g : split.foreground) {
        votes.push_back(scene.gaussians[g].vote(level));
    }
    const auto labels = cluster_votes(votes, params);
    return build_instance_table(scene, split, labels, level);
}

void apply_instance_table(Scene &scene, const InstanceTable &table) {
    const auto labels = table.gaussian_labels(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        scene.gaussians[i].cluster_id = labels[i];
    }
}

void save_instance_table(const InstanceTable &table, const std::filesystem::path &path) {
    json::Json j;
    j["format"] = "votesplat-instances";
    j["version"] = 1;
    j["level"] = table.level;
    json::Json list = json::Json::array();
    for (const auto &[id, entry] : table.instances) {
        json::Json e;
        e["id"] = id;
        e["vote_centroid"] = {entry.vote_centroid.x(), entry.vote_centroid.y(), entry.vote_centroid.z()};
        e["gaussian_ids"] = entry.gaussian_ids;
        list.push_back(std::move(e));
    }
    j["instances"] = std::move(list);
    j["noise"] = table.noise;
    j["background"] = table.background;
    json::write_file(path, j);
}

InstanceTable load_instance_table(const std::filesystem::path &path) {
    const json::Json j = json::read_file(path);
    const std::string where = path.string();
    json::Reader r(j, where);
    r.expect_string("format", "votesplat-instances");
    if (r.get<int>("version") != 1) {
        throw ParseError(where + ": unsupported instance table version", 0);
    }
    InstanceTable table;
    table.level = r.get<int>("level");
    for (const auto &item : r.array("instances")) {
        json::Reader er(item, where + ": instances[]");
        const int id = er.get<int>("id");
        InstanceEntry entry;
        entry.vote_centroid = er.vec3("vote_centroid");
        entry.gaussian_ids = er.get<std::vector<std::size_t>>("gaussian_ids");
        er.finish();
        if (!table.instances.emplace(id, std::move(entry)).second) {
            throw ValidationError(where + ": duplicate instance id " + std::to_string(id));
        }
    }
    table.noise = r.get<std::vector<std::size_t>>("noise");
    table.background = r.get<std::vector<std::size_t>>("background");
    r.finish();
    return table;
}

} // namespace votesplat
