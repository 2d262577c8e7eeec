#pragma once

#include "votesplat/common.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace votesplat {

/// One splat. Offsets hold one vote displacement per hierarchy level.
struct GaussianPrimitive {
    Vec3 position = Vec3::Zero();
    Vec3 scale = Vec3::Constant(0.01);
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    double opacity = 1.0;
    Vec3 color = Vec3::Constant(0.5);
    std::vector<Vec3> offsets;
    // Ground truth only. Training never reads it.
    int instance_label = -1;
    // Written by clustering; -1 for background, noise or not yet clustered.
    int cluster_id = -1;

    Vec3 vote(int level) const { return position + offsets[static_cast<std::size_t>(level)]; }
    bool operator==(const GaussianPrimitive &o) const;
};

struct Bounds {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    double diagonal() const { return (max - min).norm(); }
    bool contains(const Vec3 &p) const {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
    bool operator==(const Bounds &o) const { return min == o.min && max == o.max; }
};

enum class ShellShape { Sphere, Box, Ellipsoid };

/// Ground-truth record for one generated instance.
struct InstanceInfo {
    int label = 0;
    ShellShape shape = ShellShape::Sphere;
    Vec3 center = Vec3::Zero();
    // Semi-axes (ellipsoid), half extents (box) or the radius repeated (sphere).
    Vec3 radii = Vec3::Ones();
    int count = 0;

    double radius() const { return radii.maxCoeff(); }
    bool operator==(const InstanceInfo &o) const {
        return label == o.label && shape == o.shape && center == o.center && radii == o.radii && count == o.count;
    }
};

/// Gaussians plus the evaluation-only ground truth that the generator knows.
/// Vector order is the identity of each Gaussian.
struct Scene {
    std::vector<GaussianPrimitive> gaussians;
    int levels = 1;
    Bounds bounds;
    std::vector<InstanceInfo> instances;

    std::size_t size() const { return gaussians.size(); }
    double diagonal() const { return bounds.diagonal(); }
    void recompute_bounds();
    /// Segment label of Gaussian i at a hierarchy level; -1 for background.
    /// Level 0 is the instance; each further level splits every segment of the
    /// previous level in two along z, then x, then y through the instance center.
    int segment_label(std::size_t i, int level) const;
    /// Returns a copy without the Gaussians whose cluster_id equals cluster.
    Scene without_cluster(int cluster) const;
    bool operator==(const Scene &o) const;
};

struct InstanceSpec {
    ShellShape shape = ShellShape::Sphere;
    Vec3 center = Vec3::Zero();
    double radius = 1.0;
    // Optional per-axis semi-axes or half extents; when unset all equal radius.
    std::optional<Vec3> radii;
    int count = 100;
    std::optional<Vec3> color;
};

enum class BackgroundPlacement { Floor, Box, Dome };

struct BackgroundSpec {
    int count = 0;
    BackgroundPlacement placement = BackgroundPlacement::Floor;
    // Floor: plane z = center.z, square of half size extent. Dome: shell of
    // radius extent. Box: uniform in the cube of half size extent.
    Vec3 center = Vec3::Zero();
    double extent = 5.0;
    double opacity = 0.8;
};

struct SyntheticSceneSpec {
    std::vector<InstanceSpec> instances;
    BackgroundSpec background;
    int levels = 1;
    double opacity = 0.9;
    // Isotropic splat scale is scale_factor * shell radius / sqrt(count).
    double scale_factor = 1.0;
    // Radial jitter off the shell, as a fraction of the shell radius.
    double surface_jitter = 0.0;
    std::uint64_t seed = 0;
};

/// Samples Gaussians area-uniformly on each instance shell. Offsets start at zero.
Scene generate_synthetic_scene(const SyntheticSceneSpec &spec);

/// Writes `<stem>.json` (manifest) and `<stem>.ply` (binary little-endian payload)
/// where manifest_path names the .json file.
void save_scene(const Scene &scene, const std::filesystem::path &manifest_path);
Scene load_scene(const std::filesystem::path &manifest_path);

/// Payload-only entry points, used by the manifest functions and by tools that
/// exchange point clouds with external viewers.
void write_scene_ply(const Scene &scene, const std::filesystem::path &path);
Scene read_scene_ply(const std::filesystem::path &path, int levels);

std::string to_string(ShellShape shape);
ShellShape shell_shape_from_string(const std::string &name);
std::string to_string(BackgroundPlacement placement);
BackgroundPlacement background_placement_from_string(const std::string &name);

inline constexpr int kSceneFormatVersion = 1;

} // namespace votesplat
