#pragma once

#include "votesplat/scene.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <vector>

namespace votesplat {

struct ClusterParams {
    double eps = 0.5;
    int min_pts = 8;
    double background_eps = 1e-6;

    void validate() const;
    /// eps = 5% and background_eps = 1e-6 of the scene diagonal.
    static ClusterParams defaults_for(double scene_diagonal);
};

struct BackgroundSplit {
    std::vector<std::size_t> foreground;
    std::vector<std::size_t> background;
};

/// Background is every Gaussian whose offset norm at `level` is <= background_eps.
BackgroundSplit filter_background(const Scene &scene, int level, double background_eps);

/// Density clustering with noise. A point is core when at least min_pts points
/// (itself included) lie within eps. Core points within eps of each other share
/// a cluster; a border point joins the cluster of its lowest-index core
/// neighbor. Clusters are numbered 0, 1, ... by their lowest member index;
/// noise is -1.
std::vector<int> cluster_votes(std::span<const Vec3> votes, const ClusterParams &params);

struct InstanceEntry {
    std::vector<std::size_t> gaussian_ids;  // ascending
    Vec3 vote_centroid = Vec3::Zero();
    bool operator==(const InstanceEntry &o) const {
        return gaussian_ids == o.gaussian_ids && vote_centroid == o.vote_centroid;
    }
};

struct InstanceTable {
    int level = 0;
    std::map<int, InstanceEntry> instances;
    std::vector<std::size_t> noise;
    std::vector<std::size_t> background;

    /// Per-Gaussian instance id; -1 for noise and background.
    std::vector<int> gaussian_labels(std::size_t scene_size) const;
    bool operator==(const InstanceTable &o) const = default;
};

/// labels[k] is the cluster of split.foreground[k].
InstanceTable build_instance_table(const Scene &scene, const BackgroundSplit &split, std::span<const int> labels,
                                   int level);

/// Filter, cluster and tabulate in one call.
InstanceTable cluster_scene(const Scene &scene, const ClusterParams &params, int level);

/// Writes each Gaussian's instance id into cluster_id (-1 outside every instance).
void apply_instance_table(Scene &scene, const InstanceTable &table);

void save_instance_table(const InstanceTable &table, const std::filesystem::path &path);
InstanceTable load_instance_table(const std::filesystem::path &path);

} // namespace votesplat
