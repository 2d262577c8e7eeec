#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace votesplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Raised when user-supplied parameters violate a documented precondition.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by every file reader on malformed input. Carries the byte offset
/// at which decoding failed (0 when the failure is not positional).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string &what, std::size_t byte_offset)
        : std::runtime_error(what + " (at byte " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caps the worker count used by parallel_for. 0 restores the hardware default.
void set_thread_limit(unsigned threads);
unsigned thread_limit();

/// Runs fn(chunk) for chunk in [0, chunks). Work is split by chunk index, never
/// by thread, so any reduction that combines per-chunk results in chunk order
/// is independent of the thread count and of scheduling.
void parallel_for(std::size_t chunks, const std::function<void(std::size_t)> &fn);

} // namespace votesplat
