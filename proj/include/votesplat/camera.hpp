#pragma once

#include "votesplat/common.hpp"
#include "votesplat/scene.hpp"

#include <filesystem>
#include <vector>

namespace votesplat {

inline constexpr double kNearPlane = 0.01;
// Added to the screen covariance diagonal, in px^2.
inline constexpr double kCovarianceFloor = 0.3;

/// Pinhole camera with OpenCV axes (x right, y down, z forward). Pixel (i, j)
/// covers [i, i+1) x [j, j+1), so its center is (i + 0.5, j + 0.5).
struct CameraView {
    int width = 0;
    int height = 0;
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Mat4 world_to_camera = Mat4::Identity();

    Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
    Vec3 to_camera(const Vec3 &world) const { return rotation() * world + translation(); }
    Vec3 center() const { return -rotation().transpose() * translation(); }
    /// Intrinsics-augmented extrinsics H. world_to_screen applies H followed by
    /// a perspective divide by the third homogeneous component.
    Mat4 screen_transform() const;
    /// Throws ValidationError when intrinsics or the pose are not well formed.
    void validate() const;
    bool operator==(const CameraView &o) const = default;
};

using CameraRig = std::vector<CameraView>;

struct ScreenPoint {
    double u = 0.0;
    double v = 0.0;
    // Camera-frame depth.
    double z = 0.0;
};

class BehindCameraError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Throws BehindCameraError when the camera-frame depth is at or inside the near plane.
ScreenPoint world_to_screen(const CameraView &view, const Vec3 &world);
Vec3 screen_to_world(const CameraView &view, double u, double v, double z);

/// d(u, v)/d(world point), evaluated at `world`.
Mat23 screen_jacobian(const CameraView &view, const Vec3 &world);

Mat3 covariance_3d(const Vec3 &scale, const Eigen::Quaterniond &rotation);
/// EWA splat of a Gaussian onto the image plane, with the diagonal floor applied.
Mat2 splat_covariance(const CameraView &view, const GaussianPrimitive &gaussian);

CameraView look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, int width, int height, double fx);

enum class RigLayout { Ring, Arc };

struct RigSpec {
    RigLayout layout = RigLayout::Ring;
    int count = 20;
    double distance = 10.0;
    // Cycled over the cameras, so {15, 40} alternates two elevations.
    std::vector<double> elevations_deg = {20.0};
    // Arc layout only: total azimuth coverage and its center.
    double arc_deg = 120.0;
    double arc_center_deg = -90.0;
    double azimuth_phase_deg = 0.0;
    Vec3 target = Vec3::Zero();
    Vec3 up = Vec3::UnitZ();
    int width = 128;
    int height = 128;
    double fov_deg = 50.0;
};

CameraRig make_rig(const RigSpec &spec);

void save_cameras(const CameraRig &rig, const std::filesystem::path &path);
CameraRig load_cameras(const std::filesystem::path &path);

} // namespace votesplat
