#include "votesplat/camera.hpp"

#include "votesplat/json_util.hpp"

#include <Eigen/LU>

#include <cmath>
#include <numbers>

namespace votesplat {

Mat4 CameraView::screen_transform() const {
    Mat4 k = Mat4::Identity();
    k(0, 0) = fx;
    k(0, 2) = cx;
    k(1, 1) = fy;
    k(1, 2) = cy;
    return k * world_to_camera;
}

void CameraView::validate() const {
    if (width <= 0 || height <= 0) {
        throw ValidationError("camera resolution must be positive");
    }
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw ValidationError("camera focal lengths must be positive");
    }
    const Mat3 r = rotation();
    if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 || std::abs(r.determinant() - 1.0) > 1e-6) {
        throw ValidationError("world_to_camera rotation block is not a proper rotation");
    }
    if (world_to_camera.row(3) != Vec4(0, 0, 0, 1).transpose()) {
        throw ValidationError("world_to_camera last row must be (0, 0, 0, 1)");
    }
}

ScreenPoint world_to_screen(const CameraView &view, const Vec3 &world) {
    const Vec4 h = view.screen_transform() * world.homogeneous();
    if (!(h.z() > kNearPlane)) {
        throw BehindCameraError("point is behind the near plane");
    }
    return {h.x() / h.z(), h.y() / h.z(), h.z()};
}

Vec3 screen_to_world(const CameraView &view, double u, double v, double z) {
    const Vec3 cam((u - view.cx) * z / view.fx, (v - view.cy) * z / view.fy, z);
    return view.rotation().transpose() * (cam - view.translation());
}

Mat23 screen_jacobian(const CameraView &view, const Vec3 &world) {
    const Vec3 c = view.to_camera(world);
    const double iz = 1.0 / c.z();
    Mat23 j;
    j << view.fx * iz, 0.0, -view.fx * c.x() * iz * iz, 0.0, view.fy * iz, -view.fy * c.y() * iz * iz;
    return j * view.rotation();
}

Mat3 covariance_3d(const Vec3 &scale, const Eigen::Quaterniond &rotation) {
    const Mat3 r = rotation.normalized().toRotationMatrix();
    return r * scale.cwiseAbs2().asDiagonal() * r.transpose();
}

Mat2 splat_covariance(const CameraView &view, const GaussianPrimitive &gaussian) {
    const Vec3 c = view.to_camera(gaussian.position);
    if (!(c.z() > kNearPlane)) {
        throw BehindCameraError("Gaussian is behind the near plane");
    }
    const double iz = 1.0 / c.z();
    Mat23 j;
    j << view.fx * iz, 0.0, -view.fx * c.x() * iz * iz, 0.0, view.fy * iz, -view.fy * c.y() * iz * iz;
    const Mat23 t = j * view.rotation();
    Mat2 cov = t * covariance_3d(gaussian.scale, gaussian.rotation) * t.transpose();
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    cov(0, 0) += kCovarianceFloor;
    cov(1, 1) += kCovarianceFloor;
    return cov;
}

CameraView look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, int width, int height, double fx) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-9) {
        // Looking along the up axis; any perpendicular works.
        right = forward.cross(std::abs(forward.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY());
    }
    right.normalize();
    const Vec3 down = forward.cross(right);

    CameraView view;
    view.width = width;
    view.height = height;
    view.fx = view.fy = fx;
    view.cx = 0.5 * width;
    view.cy = 0.5 * height;
    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    view.world_to_camera.setIdentity();
    view.world_to_camera.topLeftCorner<3, 3>() = r;
    view.world_to_camera.topRightCorner<3, 1>() = -r * eye;
    return view;
}

CameraRig make_rig(const RigSpec &spec) {
    if (spec.count < 1) {
        throw ValidationError("rig needs at least one camera");
    }
    if (spec.elevations_deg.empty()) {
        throw ValidationError("rig needs at least one elevation");
    }
    if (!(spec.distance > 0.0) || !(spec.fov_deg > 0.0 && spec.fov_deg < 180.0)) {
        throw ValidationError("rig distance and field of view must be positive");
    }
    const double deg = std::numbers::pi / 180.0;
    const double fx = 0.5 * spec.width / std::tan(0.5 * spec.fov_deg * deg);
    CameraRig rig;
    for (int k = 0; k < spec.count; ++k) {
        double azimuth = 0.0;
        if (spec.layout == RigLayout::Ring) {
            azimuth = spec.azimuth_phase_deg + 360.0 * k / spec.count;
        } else {
            const double t = spec.count == 1 ? 0.5 : static_cast<double>(k) / (spec.count - 1);
            azimuth = spec.arc_center_deg - 0.5 * spec.arc_deg + spec.arc_deg * t;
        }
        const double elevation = spec.elevations_deg[static_cast<std::size_t>(k) % spec.elevations_deg.size()];
        const double a = azimuth * deg, e = elevation * deg;
        const Vec3 eye = spec.target + spec.distance * Vec3(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e));
        rig.push_back(look_at(eye, spec.target, spec.up, spec.width, spec.height, fx));
    }
    return rig;
}

void save_cameras(const CameraRig &rig, const std::filesystem::path &path) {
    json::Json out = json::Json::array();
    for (const auto &v : rig) {
        json::Json m = json::Json::array();
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                m.push_back(v.world_to_camera(r, c));
            }
        }
        out.push_back({{"width", v.width},
                       {"height", v.height},
                       {"fx", v.fx},
                       {"fy", v.fy},
                       {"cx", v.cx},
                       {"cy", v.cy},
                       {"world_to_camera", m}});
    }
    json::write_file(path, out);
}

CameraRig load_cameras(const std::filesystem::path &path) {
    const auto doc = json::read_file(path);
    if (!doc.is_array() || doc.empty()) {
        throw ValidationError(path.string() + ": camera file must be a non-empty JSON array");
    }
    CameraRig rig;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        json::Reader r(doc[i], path.string() + ": cameras[" + std::to_string(i) + "]");
        CameraView v;
        v.width = r.get<int>("width");
        v.height = r.get<int>("height");
        v.fx = r.get<double>("fx");
        v.fy = r.get<double>("fy");
        v.cx = r.get<double>("cx");
        v.cy = r.get<double>("cy");
        const auto &m = r.array("world_to_camera");
        if (m.size() != 16) {
            throw ValidationError(r.where() + ": field 'world_to_camera' must hold 16 numbers");
        }
        for (int k = 0; k < 16; ++k) {
            v.world_to_camera(k / 4, k % 4) = m[static_cast<std::size_t>(k)].get<double>();
        }
        r.finish();
        try {
            v.validate();
        } catch (const ValidationError &e) {
            throw ValidationError(r.where() + ": " + e.what());
        }
        rig.push_back(v);
    }
    return rig;
}

} // namespace votesplat
