#include "votesplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace votesplat {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct TileBuffer {
    std::vector<std::uint32_t> member_count;
    std::vector<int> members;
    std::vector<double> weights;
    std::vector<double> depths;
    std::vector<std::uint32_t> trace_count;
    std::vector<int> trace_ids;
    std::vector<double> trace_alpha;
    std::vector<double> trace_t;
};

// Per-Gaussian vote data for the current level and view.
struct VoteInfo {
    Vec3 vote = Vec3::Zero();
    double depth = 0.0;
    Vec2 screen = Vec2::Constant(kNaN);
};

} // namespace

std::span<const int> RenderOutput::members_at(std::size_t p) const {
    return {members.data() + member_offsets[p], member_offsets[p + 1] - member_offsets[p]};
}

std::span<const double> RenderOutput::weights_at(std::size_t p) const {
    return {member_weights.data() + member_offsets[p], member_offsets[p + 1] - member_offsets[p]};
}

std::span<const double> RenderOutput::depths_at(std::size_t p) const {
    return {member_depths.data() + member_offsets[p], member_offsets[p + 1] - member_offsets[p]};
}

PixelBlend RenderOutput::pixel(int x, int y) const {
    PixelBlend b;
    const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
    if (!color.data.empty()) {
        b.color = Vec3(color.at(x, y, 0), color.at(x, y, 1), color.at(x, y, 2));
    }
    if (has_records()) {
        b.members = members_at(p);
        b.weights = weights_at(p);
        b.depths = depths_at(p);
    }
    if (!vote3d.data.empty()) {
        b.vote3d = Vec3(vote3d.at(x, y, 0), vote3d.at(x, y, 1), vote3d.at(x, y, 2));
        b.vote2d = Vec2(vote2d.at(x, y, 0), vote2d.at(x, y, 1));
    }
    if (!alpha.data.empty()) {
        b.alpha_accum = alpha.at(x, y);
    }
    if (!vote_transmittance.data.empty()) {
        b.vote_transmittance = vote_transmittance.at(x, y);
    }
    return b;
}

SplatFootprint project_splat(const CameraView &view, const GaussianPrimitive &g) {
    SplatFootprint f;
    const Vec3 c = view.to_camera(g.position);
    if (!(c.z() > kNearPlane)) {
        return f;
    }
    const double u = view.fx * c.x() / c.z() + view.cx;
    const double v = view.fy * c.y() / c.z() + view.cy;
    if (std::abs(u - view.cx) > kFrustumGuard * 0.5 * view.width ||
        std::abs(v - view.cy) > kFrustumGuard * 0.5 * view.height) {
        return f;
    }
    const Mat2 cov = splat_covariance(view, g);
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
    if (!(det > 0.0)) {
        return f;
    }
    f.mean = Vec2(u, v);
    f.depth = c.z();
    f.conic_a = cov(1, 1) / det;
    f.conic_b = -cov(0, 1) / det;
    f.conic_c = cov(0, 0) / det;
    // Exact axis-aligned extent of the support ellipse.
    const double rx = kSupportSigmas * std::sqrt(cov(0, 0));
    const double ry = kSupportSigmas * std::sqrt(cov(1, 1));
    const double fx0 = std::ceil(f.mean.x() - rx - 0.5), fx1 = std::floor(f.mean.x() + rx - 0.5);
    const double fy0 = std::ceil(f.mean.y() - ry - 0.5), fy1 = std::floor(f.mean.y() + ry - 0.5);
    if (fx1 < 0.0 || fy1 < 0.0 || fx0 > view.width - 1 || fy0 > view.height - 1) {
        return f;
    }
    f.x0 = static_cast<int>(std::max(fx0, 0.0));
    f.x1 = static_cast<int>(std::min(fx1, static_cast<double>(view.width - 1)));
    f.y0 = static_cast<int>(std::max(fy0, 0.0));
    f.y1 = static_cast<int>(std::min(fy1, static_cast<double>(view.height - 1)));
    f.visible = f.x0 <= f.x1 && f.y0 <= f.y1;
    return f;
}

double splat_alpha(const SplatFootprint &f, double opacity, double px, double py) {
    const double dx = px - f.mean.x();
    const double dy = py - f.mean.y();
    const double m = f.conic_a * dx * dx + 2.0 * f.conic_b * dx * dy + f.conic_c * dy * dy;
    if (m > kSupportSigmas * kSupportSigmas) {
        return 0.0;
    }
    return opacity * std::exp(-0.5 * m);
}

RenderOutput render(const Scene &scene, const CameraView &view, const RenderOptions &options) {
    if (scene.gaussians.empty()) {
        throw ValidationError("cannot render an empty scene");
    }
    if (options.level < 0 || options.level >= scene.levels) {
        throw ValidationError("render level " + std::to_string(options.level) + " out of range [0, " +
                              std::to_string(scene.levels) + ")");
    }
    view.validate();

    const int width = view.width, height = view.height;
    const std::size_t n = scene.size();
    const auto level = static_cast<std::size_t>(options.level);
    const bool full_membership =
        options.blend != BlendMode::UniformVote || options.membership == Membership::FullTransmittance;
    const bool alpha_weighted = options.blend != BlendMode::UniformVote;

    std::vector<SplatFootprint> footprints(n);
    std::vector<VoteInfo> votes(n);
    constexpr std::size_t kChunk = 256;
    parallel_for((n + kChunk - 1) / kChunk, [&](std::size_t chunk) {
        const std::size_t end = std::min(n, (chunk + 1) * kChunk);
        for (std::size_t i = chunk * kChunk; i < end; ++i) {
            const auto &g = scene.gaussians[i];
            footprints[i] = project_splat(view, g);
            if (!footprints[i].visible) {
                continue;
            }
            auto &v = votes[i];
            v.vote = g.position + g.offsets[level];
            const Vec3 c = view.to_camera(v.vote);
            v.depth = c.z();
            if (c.z() > kNearPlane) {
                v.screen = Vec2(view.fx * c.x() / c.z() + view.cx, view.fy * c.y() / c.z() + view.cy);
            }
        }
    });

    std::vector<int> order;
    order.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (footprints[i].visible) {
            order.push_back(static_cast<int>(i));
        }
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double da = footprints[static_cast<std::size_t>(a)].depth;
        const double db = footprints[static_cast<std::size_t>(b)].depth;
        return da < db || (da == db && a < b);
    });

    const int tiles_x = (width + kTileSize - 1) / kTileSize;
    const int tiles_y = (height + kTileSize - 1) / kTileSize;
    const std::size_t tile_count = static_cast<std::size_t>(tiles_x) * static_cast<std::size_t>(tiles_y);
    std::vector<std::vector<int>> tile_lists(tile_count);
    for (int id : order) {
        const auto &f = footprints[static_cast<std::size_t>(id)];
        for (int ty = f.y0 / kTileSize; ty <= f.y1 / kTileSize; ++ty) {
            for (int tx = f.x0 / kTileSize; tx <= f.x1 / kTileSize; ++tx) {
                tile_lists[static_cast<std::size_t>(ty * tiles_x + tx)].push_back(id);
            }
        }
    }

    RenderOutput out;
    out.width = width;
    out.height = height;
    out.options = options;
    out.color = ImageD(width, height, 3, 0.0);
    out.alpha = ImageD(width, height, 1, 0.0);
    out.vote3d = ImageD(width, height, 3, kNaN);
    out.vote2d = ImageD(width, height, 2, kNaN);
    out.instance_ids = Image<int>(width, height, 1, -1);
    out.vote_transmittance = ImageD(width, height, 1, 1.0);

    std::vector<TileBuffer> buffers(tile_count);

    parallel_for(tile_count, [&](std::size_t tile) {
        const int tx = static_cast<int>(tile) % tiles_x;
        const int ty = static_cast<int>(tile) / tiles_x;
        const int px0 = tx * kTileSize, py0 = ty * kTileSize;
        const int px1 = std::min(px0 + kTileSize, width), py1 = std::min(py0 + kTileSize, height);
        const auto &list = tile_lists[tile];
        auto &buf = buffers[tile];
        buf.member_count.assign(static_cast<std::size_t>((px1 - px0) * (py1 - py0)), 0);
        buf.trace_count.assign(buf.member_count.size(), 0);

        std::size_t local = 0;
        for (int y = py0; y < py1; ++y) {
            for (int x = px0; x < px1; ++x, ++local) {
                const double cxp = x + 0.5, cyp = y + 0.5;
                double t = 1.0;
                Vec3 color = Vec3::Zero();
                bool voting_open = true;
                double closed_t = 1.0;
                std::uint32_t member_count = 0, trace_count = 0;
                Vec3 vote_sum = Vec3::Zero();
                Vec2 screen_sum = Vec2::Zero();
                bool screen_valid = true;
                int front_member = -1;

                for (int id : list) {
                    const auto &f = footprints[static_cast<std::size_t>(id)];
                    if (x < f.x0 || x > f.x1 || y < f.y0 || y > f.y1) {
                        continue;
                    }
                    const auto &g = scene.gaussians[static_cast<std::size_t>(id)];
                    const double a = splat_alpha(f, g.opacity, cxp, cyp);
                    if (!(a > kAlphaCut)) {
                        continue;
                    }
                    const double w = a * t;
                    color += w * g.color;
                    ++trace_count;
                    if (options.keep_records) {
                        buf.trace_ids.push_back(id);
                        buf.trace_alpha.push_back(a);
                        buf.trace_t.push_back(t);
                    }

                    bool member = false;
                    if (full_membership) {
                        member = true;
                    } else if (voting_open) {
                        if (t > kFrontTransmittance) {
                            member = true;
                        } else {
                            voting_open = false;
                        }
                    }
                    if (member) {
                        const auto &v = votes[static_cast<std::size_t>(id)];
                        if (member_count == 0) {
                            front_member = id;
                        }
                        ++member_count;
                        if (alpha_weighted) {
                            vote_sum += w * v.vote;
                        } else {
                            vote_sum += v.vote;
                        }
                        if (std::isnan(v.screen.x())) {
                            screen_valid = false;
                        } else {
                            screen_sum += w * v.screen;
                        }
                        if (options.keep_records) {
                            buf.members.push_back(id);
                            buf.weights.push_back(w);
                            buf.depths.push_back(v.depth);
                        }
                    }
                    t *= 1.0 - a;
                    if (member) {
                        closed_t = t;
                    }
                    if (t < kTerminationTransmittance) {
                        break;
                    }
                }

                buf.member_count[local] = member_count;
                buf.trace_count[local] = trace_count;
                out.color.at(x, y, 0) = color.x();
                out.color.at(x, y, 1) = color.y();
                out.color.at(x, y, 2) = color.z();
                out.alpha.at(x, y) = 1.0 - t;
                out.vote_transmittance.at(x, y) = closed_t;
                if (member_count == 0) {
                    continue;
                }
                const auto &front = scene.gaussians[static_cast<std::size_t>(front_member)];
                out.instance_ids.at(x, y) = front.cluster_id;

                Vec3 vote3d = alpha_weighted ? vote_sum : Vec3(vote_sum / member_count);
                out.vote3d.at(x, y, 0) = vote3d.x();
                out.vote3d.at(x, y, 1) = vote3d.y();
                out.vote3d.at(x, y, 2) = vote3d.z();
                if (options.blend == BlendMode::ProjectFirst) {
                    if (screen_valid) {
                        out.vote2d.at(x, y, 0) = screen_sum.x();
                        out.vote2d.at(x, y, 1) = screen_sum.y();
                    }
                } else {
                    const Vec3 c = view.to_camera(vote3d);
                    if (c.z() > kNearPlane) {
                        out.vote2d.at(x, y, 0) = view.fx * c.x() / c.z() + view.cx;
                        out.vote2d.at(x, y, 1) = view.fy * c.y() / c.z() + view.cy;
                    }
                }
            }
        }
    });

    if (options.keep_records) {
        const std::size_t pixels = out.pixel_count();
        out.member_offsets.assign(pixels + 1, 0);
        out.trace_offsets.assign(pixels + 1, 0);
        auto for_each_tile_pixel = [&](std::size_t tile, auto &&fn) {
            const int tx = static_cast<int>(tile) % tiles_x;
            const int ty = static_cast<int>(tile) / tiles_x;
            const int px0 = tx * kTileSize, py0 = ty * kTileSize;
            const int px1 = std::min(px0 + kTileSize, width), py1 = std::min(py0 + kTileSize, height);
            std::size_t local = 0;
            for (int y = py0; y < py1; ++y) {
                for (int x = px0; x < px1; ++x, ++local) {
                    fn(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x),
                       local);
                }
            }
        };
        for (std::size_t tile = 0; tile < tile_count; ++tile) {
            for_each_tile_pixel(tile, [&](std::size_t p, std::size_t local) {
                out.member_offsets[p + 1] = buffers[tile].member_count[local];
                out.trace_offsets[p + 1] = buffers[tile].trace_count[local];
            });
        }
        std::partial_sum(out.member_offsets.begin(), out.member_offsets.end(), out.member_offsets.begin());
        std::partial_sum(out.trace_offsets.begin(), out.trace_offsets.end(), out.trace_offsets.begin());
        out.members.resize(out.member_offsets.back());
        out.member_weights.resize(out.members.size());
        out.member_depths.resize(out.members.size());
        out.trace_ids.resize(out.trace_offsets.back());
        out.trace_alpha.resize(out.trace_ids.size());
        out.trace_transmittance.resize(out.trace_ids.size());

        parallel_for(tile_count, [&](std::size_t tile) {
            const auto &buf = buffers[tile];
            std::size_t m = 0, tr = 0;
            for_each_tile_pixel(tile, [&](std::size_t p, std::size_t local) {
                const std::size_t mc = buf.member_count[local];
                std::copy_n(buf.members.begin() + static_cast<std::ptrdiff_t>(m), mc,
                            out.members.begin() + static_cast<std::ptrdiff_t>(out.member_offsets[p]));
                std::copy_n(buf.weights.begin() + static_cast<std::ptrdiff_t>(m), mc,
                            out.member_weights.begin() + static_cast<std::ptrdiff_t>(out.member_offsets[p]));
                std::copy_n(buf.depths.begin() + static_cast<std::ptrdiff_t>(m), mc,
                            out.member_depths.begin() + static_cast<std::ptrdiff_t>(out.member_offsets[p]));
                m += mc;
                const std::size_t tc = buf.trace_count[local];
                std::copy_n(buf.trace_ids.begin() + static_cast<std::ptrdiff_t>(tr), tc,
                            out.trace_ids.begin() + static_cast<std::ptrdiff_t>(out.trace_offsets[p]));
                std::copy_n(buf.trace_alpha.begin() + static_cast<std::ptrdiff_t>(tr), tc,
                            out.trace_alpha.begin() + static_cast<std::ptrdiff_t>(out.trace_offsets[p]));
                std::copy_n(buf.trace_t.begin() + static_cast<std::ptrdiff_t>(tr), tc,
                            out.trace_transmittance.begin() + static_cast<std::ptrdiff_t>(out.trace_offsets[p]));
                tr += tc;
            });
        });
    }

    switch (options.mode) {
    case RenderMode::Color:
        out.vote3d = {};
        out.vote2d = {};
        out.instance_ids = {};
        break;
    case RenderMode::Votes:
        out.instance_ids = {};
        break;
    case RenderMode::InstanceIds:
        out.vote3d = {};
        out.vote2d = {};
        break;
    case RenderMode::All:
        break;
    }
    return out;
}

std::string to_string(BlendMode mode) {
    switch (mode) {
    case BlendMode::UniformVote:
        return "uniform";
    case BlendMode::AlphaVote:
        return "alpha";
    case BlendMode::ProjectFirst:
        return "project-first";
    }
    return "uniform";
}

BlendMode blend_mode_from_string(const std::string &name) {
    if (name == "uniform" || name == "uniform_vote") {
        return BlendMode::UniformVote;
    }
    if (name == "alpha" || name == "alpha_vote") {
        return BlendMode::AlphaVote;
    }
    if (name == "project-first" || name == "project_first") {
        return BlendMode::ProjectFirst;
    }
    throw ValidationError("unknown blend mode '" + name + "'");
}

std::string to_string(RenderMode mode) {
    switch (mode) {
    case RenderMode::Color:
        return "color";
    case RenderMode::Votes:
        return "votes";
    case RenderMode::InstanceIds:
        return "instance_ids";
    case RenderMode::All:
        return "all";
    }
    return "all";
}

RenderMode render_mode_from_string(const std::string &name) {
    if (name == "color") {
        return RenderMode::Color;
    }
    if (name == "votes") {
        return RenderMode::Votes;
    }
    if (name == "instance_ids" || name == "ids") {
        return RenderMode::InstanceIds;
    }
    if (name == "all") {
        return RenderMode::All;
    }
    throw ValidationError("unknown render mode '" + name + "'");
}

} // namespace votesplat
