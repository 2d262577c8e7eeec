#pragma once

#include "votesplat/camera.hpp"
#include "votesplat/image.hpp"
#include "votesplat/scene.hpp"

#include <span>
#include <string>
#include <vector>

namespace votesplat {

// A splat contributes to a pixel only when its alpha exceeds kAlphaCut.
inline constexpr double kAlphaCut = 1.0 / 255.0;
// A contributing splat joins the voting set only while the incoming
// transmittance is above this; the set closes at the first splat that fails.
inline constexpr double kFrontTransmittance = 0.5;
// Color traversal ends once accumulated transmittance drops below this.
inline constexpr double kTerminationTransmittance = 1e-4;
// Splat support is truncated at this Mahalanobis radius.
inline constexpr double kSupportSigmas = 3.0;
inline constexpr int kTileSize = 16;
// Splats whose center projects beyond this multiple of the half image size,
// measured from the principal point, are culled.
inline constexpr double kFrustumGuard = 1.3;

enum class RenderMode { Color, Votes, InstanceIds, All };

enum class BlendMode {
    // Mean of member votes, then projection.
    UniformVote,
    // Alpha-blended sum of votes over every contributing splat, then projection.
    AlphaVote,
    // Diagnostic: project each vote, then alpha-blend the projections like color.
    ProjectFirst,
};

enum class Membership {
    // Front splats only, up to the transmittance threshold.
    VotingTransmittance,
    // Every contributing splat of the color traversal votes.
    FullTransmittance,
};

struct RenderOptions {
    RenderMode mode = RenderMode::All;
    BlendMode blend = BlendMode::UniformVote;
    Membership membership = Membership::VotingTransmittance;
    int level = 0;
    // Keep per-pixel member and traversal lists (needed by the backward passes).
    bool keep_records = true;
};

/// Per-pixel view into a RenderOutput.
struct PixelBlend {
    Vec3 color = Vec3::Zero();
    // Member set in depth order, with blend weights alpha_i * T_i and each
    // member's own vote depth in the camera frame.
    std::span<const int> members;
    std::span<const double> weights;
    std::span<const double> depths;
    // NaN when the member set is empty.
    Vec3 vote3d = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
    Vec2 vote2d = Vec2::Constant(std::numeric_limits<double>::quiet_NaN());
    double alpha_accum = 0.0;
    // Transmittance left after the last member.
    double vote_transmittance = 1.0;
};

struct RenderOutput {
    int width = 0;
    int height = 0;
    RenderOptions options;

    ImageD color;     // 3 channels
    ImageD alpha;     // accumulated opacity, 1 channel
    ImageD vote3d;    // 3 channels, NaN where no members
    ImageD vote2d;    // 2 channels, NaN where no members
    Image<int> instance_ids;  // -1 = none
    ImageD vote_transmittance;

    // Member records, CSR over row-major pixel index.
    std::vector<std::size_t> member_offsets;
    std::vector<int> members;
    std::vector<double> member_weights;
    std::vector<double> member_depths;

    // Full color traversal (every contributing splat) for the color backward.
    std::vector<std::size_t> trace_offsets;
    std::vector<int> trace_ids;
    std::vector<double> trace_alpha;
    std::vector<double> trace_transmittance;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    bool has_records() const { return !member_offsets.empty(); }
    std::span<const int> members_at(std::size_t p) const;
    std::span<const double> weights_at(std::size_t p) const;
    std::span<const double> depths_at(std::size_t p) const;
    PixelBlend pixel(int x, int y) const;
};

/// Screen-space footprint of one Gaussian for a view.
struct SplatFootprint {
    bool visible = false;
    Vec2 mean = Vec2::Zero();
    double depth = 0.0;
    // Inverse screen covariance [[a, b], [b, c]].
    double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
    // Inclusive pixel ranges whose centers may fall inside the support.
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

SplatFootprint project_splat(const CameraView &view, const GaussianPrimitive &g);

/// Opacity-weighted falloff at a pixel center; 0 beyond the support radius.
double splat_alpha(const SplatFootprint &f, double opacity, double px, double py);

/// Tile-based forward pass. Output is independent of thread count and tile order.
RenderOutput render(const Scene &scene, const CameraView &view, const RenderOptions &options = {});

std::string to_string(BlendMode mode);
BlendMode blend_mode_from_string(const std::string &name);
std::string to_string(RenderMode mode);
RenderMode render_mode_from_string(const std::string &name);

} // namespace votesplat
