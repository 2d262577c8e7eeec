#include "votesplat/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace votesplat {

namespace {

// Pixel lists are split into this many contiguous chunks; per-chunk buffers are
// merged in chunk order, so results do not depend on the thread count.
constexpr std::size_t kGradientChunks = 8;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

template <class PixelFn>
GradientBuffer accumulate(std::size_t n, bool appearance, std::size_t items, PixelFn &&fn) {
    const std::size_t chunks = std::min(kGradientChunks, std::max<std::size_t>(items, 1));
    std::vector<GradientBuffer> partial(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        partial[c] = GradientBuffer::zeros(n, appearance);
        const std::size_t begin = items * c / chunks, end = items * (c + 1) / chunks;
        for (std::size_t k = begin; k < end; ++k) {
            fn(k, partial[c]);
        }
    });
    GradientBuffer total = std::move(partial[0]);
    for (std::size_t c = 1; c < chunks; ++c) {
        total.add(partial[c]);
    }
    return total;
}

void require_records(const RenderOutput &render) {
    if (!render.has_records()) {
        throw ValidationError("backward pass needs a render with member records");
    }
}

} // namespace

GradientBuffer GradientBuffer::zeros(std::size_t n, bool appearance) {
    GradientBuffer g;
    g.offset.assign(n, Vec3::Zero());
    if (appearance) {
        g.color.assign(n, Vec3::Zero());
        g.opacity.assign(n, 0.0);
    }
    return g;
}

void GradientBuffer::add(const GradientBuffer &other, double scale) {
    if (other.offset.size() != offset.size()) {
        throw ValidationError("gradient buffer sizes differ");
    }
    for (std::size_t i = 0; i < offset.size(); ++i) {
        offset[i] += scale * other.offset[i];
    }
    if (!other.color.empty()) {
        if (color.empty()) {
            color.assign(offset.size(), Vec3::Zero());
            opacity.assign(offset.size(), 0.0);
        }
        for (std::size_t i = 0; i < color.size(); ++i) {
            color[i] += scale * other.color[i];
            opacity[i] += scale * other.opacity[i];
        }
    }
}

bool GradientBuffer::finite() const {
    for (const auto &v : offset) {
        if (!v.allFinite()) {
            return false;
        }
    }
    for (const auto &v : color) {
        if (!v.allFinite()) {
            return false;
        }
    }
    return std::all_of(opacity.begin(), opacity.end(), [](double v) { return std::isfinite(v); });
}

GradientBuffer backward_vote(const RenderOutput &render, const VoteMap2D &gt, const Scene &scene,
                             const CameraView &view) {
    require_records(render);
    const auto pixels = vote_pixels(render, gt);
    if (pixels.empty()) {
        return GradientBuffer::zeros(scene.size(), false);
    }
    const double scale = 1.0 / static_cast<double>(pixels.size());
    const BlendMode blend = render.options.blend;
    const int level = render.options.level;

    return accumulate(scene.size(), false, pixels.size(), [&](std::size_t k, GradientBuffer &g) {
        const std::size_t p = pixels[k];
        const Vec2 s(sign(render.vote2d.data[2 * p] - gt.votes.data[2 * p]),
                     sign(render.vote2d.data[2 * p + 1] - gt.votes.data[2 * p + 1]));
        if (s.isZero()) {
            return;
        }
        const auto members = render.members_at(p);
        const auto weights = render.weights_at(p);
        const double inv_m = 1.0 / static_cast<double>(members.size());
        if (blend == BlendMode::ProjectFirst) {
            for (std::size_t m = 0; m < members.size(); ++m) {
                const auto i = static_cast<std::size_t>(members[m]);
                const Mat23 j = screen_jacobian(view, scene.gaussians[i].vote(level));
                g.offset[i] += (scale * weights[m]) * (j.transpose() * s);
            }
            return;
        }
        const Vec3 blended(render.vote3d.data[3 * p], render.vote3d.data[3 * p + 1], render.vote3d.data[3 * p + 2]);
        const Vec3 back = screen_jacobian(view, blended).transpose() * s;
        for (std::size_t m = 0; m < members.size(); ++m) {
            const double w = blend == BlendMode::AlphaVote ? weights[m] : inv_m;
            g.offset[static_cast<std::size_t>(members[m])] += (scale * w) * back;
        }
    });
}

GradientBuffer backward_depth(const RenderOutput &render, const VoteMap2D &gt, const Scene &scene,
                              const CameraView &view, const DepthLossOptions &options) {
    require_records(render);
    const auto pixels = vote_pixels(render, gt);
    if (pixels.empty()) {
        return GradientBuffer::zeros(scene.size(), false);
    }
    const double scale = 1.0 / static_cast<double>(pixels.size());
    const Vec3 depth_row = view.rotation().row(2).transpose();

    return accumulate(scene.size(), false, pixels.size(), [&](std::size_t k, GradientBuffer &g) {
        const std::size_t p = pixels[k];
        const auto members = render.members_at(p);
        const auto depths = render.depths_at(p);
        const auto weights = render.weights_at(p);
        const std::size_t n = members.size();
        if (n < 2) {
            return;
        }
        const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
        const double norm = options.normalize_pairs ? scale / pairs : scale;

        std::vector<double> dz(n, 0.0);
        if (options.variant == DepthVariant::Unweighted) {
            // d/dz_i sum_{k<j} |z_k - z_j| = #{j: z_j < z_i} - #{j: z_j > z_i}.
            std::vector<std::size_t> idx(n);
            for (std::size_t i = 0; i < n; ++i) {
                idx[i] = i;
            }
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return depths[a] < depths[b]; });
            std::size_t start = 0;
            while (start < n) {
                std::size_t end = start + 1;
                while (end < n && depths[idx[end]] == depths[idx[start]]) {
                    ++end;
                }
                const double d = static_cast<double>(start) - static_cast<double>(n - end);
                for (std::size_t r = start; r < end; ++r) {
                    dz[idx[r]] = d;
                }
                start = end;
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    s += weights[j] * sign(depths[i] - depths[j]);
                }
                dz[i] = weights[i] * s;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (dz[i] != 0.0) {
                g.offset[static_cast<std::size_t>(members[i])] += (norm * dz[i]) * depth_row;
            }
        }
    });
}

GradientBuffer backward_color(const RenderOutput &render, const ImageD &dloss_dcolor, const Scene &scene) {
    if (render.trace_offsets.empty()) {
        throw ValidationError("color backward needs a render with traversal records");
    }
    if (dloss_dcolor.width != render.width || dloss_dcolor.height != render.height || dloss_dcolor.channels != 3) {
        throw ValidationError("color gradient image does not match the render");
    }
    return accumulate(scene.size(), true, render.pixel_count(), [&](std::size_t p, GradientBuffer &g) {
        const Vec3 dc(dloss_dcolor.data[3 * p], dloss_dcolor.data[3 * p + 1], dloss_dcolor.data[3 * p + 2]);
        if (dc.isZero()) {
            return;
        }
        // Color behind the current splat, normalized by the transmittance it receives.
        Vec3 behind = Vec3::Zero();
        for (std::size_t k = render.trace_offsets[p + 1]; k-- > render.trace_offsets[p];) {
            const auto i = static_cast<std::size_t>(render.trace_ids[k]);
            const auto &gauss = scene.gaussians[i];
            const double a = render.trace_alpha[k];
            const double t = render.trace_transmittance[k];
            g.color[i] += (a * t) * dc;
            if (gauss.opacity > 0.0) {
                g.opacity[i] += t * dc.dot(gauss.color - behind) * (a / gauss.opacity);
            }
            behind = a * gauss.color + (1.0 - a) * behind;
        }
    });
}

void TrainConfig::validate() const {
    if (steps < 1) {
        throw ValidationError("steps must be at least 1");
    }
    if (views_per_step < 1) {
        throw ValidationError("views_per_step must be at least 1");
    }
    if (level < 0) {
        throw ValidationError("level must be non-negative");
    }
    if (lr_offset && !(*lr_offset > 0.0)) {
        throw ValidationError("lr_offset must be positive");
    }
    if (!(lr_color > 0.0)) {
        throw ValidationError("lr_color must be positive");
    }
    if (!(lr_opacity > 0.0)) {
        throw ValidationError("lr_opacity must be positive");
    }
    if (!(lr_final_ratio > 0.0 && lr_final_ratio <= 1.0)) {
        throw ValidationError("lr_final_ratio must lie in (0, 1]");
    }
    if ((lambda_vote && !(*lambda_vote >= 0.0)) || (lambda_depth && !(*lambda_depth >= 0.0))) {
        throw ValidationError("loss weights must be non-negative");
    }
    if (!(lambda_dssim >= 0.0 && lambda_dssim <= 1.0)) {
        throw ValidationError("lambda_dssim must lie in [0, 1]");
    }
    if (checkpoint_every < 0) {
        throw ValidationError("checkpoint_every must be non-negative");
    }
    if (checkpoint_every > 0 && checkpoint_dir.empty()) {
        throw ValidationError("checkpoint_every needs checkpoint_dir");
    }
}

LossWeights TrainConfig::resolve_weights(const Scene &scene, const CameraRig &rig) const {
    const double image_diag =
        rig.empty() ? 0.0 : std::hypot(static_cast<double>(rig.front().width), static_cast<double>(rig.front().height));
    LossWeights w = LossWeights::defaults_for(image_diag, scene.diagonal());
    if (lambda_vote) {
        w.lambda_vote = *lambda_vote;
    }
    if (lambda_depth) {
        w.lambda_depth = *lambda_depth;
    }
    w.lambda_dssim = lambda_dssim;
    w.validate();
    return w;
}

namespace {

struct ViewStep {
    LossReport report;
    GradientBuffer grad;
};

ViewStep view_step(const Scene &scene, const CameraView &view, const VoteMap2D &gt, const ImageD *image,
                   const TrainConfig &config, const LossWeights &weights, bool want_grad) {
    RenderOptions opts;
    opts.mode = RenderMode::Votes;
    opts.blend = config.blend;
    opts.membership = config.membership;
    opts.level = config.level;
    opts.keep_records = true;
    const RenderOutput out = render(scene, view, opts);

    const VoteLoss vl = vote_loss(out, gt);
    const double ld = depth_distortion(out, gt, config.depth);
    const double lc = image ? color_loss(out.color, *image, weights.lambda_dssim) : 0.0;

    ViewStep step;
    step.report = rvd_total(lc, vl.value, ld, weights);
    step.report.supervised_pixel_count = vl.pixels;
    step.report.vote_loss_empty = vl.empty;
    if (!want_grad) {
        return step;
    }
    const bool appearance = config.trainable.color || config.trainable.opacity;
    step.grad = GradientBuffer::zeros(scene.size(), appearance);
    if (config.trainable.offset) {
        if (weights.lambda_vote > 0.0) {
            step.grad.add(backward_vote(out, gt, scene, view), weights.lambda_vote);
        }
        if (weights.lambda_depth > 0.0) {
            step.grad.add(backward_depth(out, gt, scene, view, config.depth), weights.lambda_depth);
        }
    }
    if (appearance && image) {
        step.grad.add(backward_color(out, color_loss_gradient(out.color, *image, weights.lambda_dssim), scene));
    }
    return step;
}

struct AdamState {
    std::vector<double> m, v;
    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEpsilon = 1e-8;

// One parameter coordinate update. A zero gradient on fresh state yields an exact zero step.
double step_size(OptimizerKind kind, AdamState &state, std::size_t idx, double grad, double lr, int t) {
    if (kind == OptimizerKind::Sgd) {
        return lr * grad;
    }
    state.m[idx] = kBeta1 * state.m[idx] + (1.0 - kBeta1) * grad;
    state.v[idx] = kBeta2 * state.v[idx] + (1.0 - kBeta2) * grad * grad;
    const double m_hat = state.m[idx] / (1.0 - std::pow(kBeta1, t));
    const double v_hat = state.v[idx] / (1.0 - std::pow(kBeta2, t));
    return lr * m_hat / (std::sqrt(v_hat) + kEpsilon);
}

} // namespace

LossReport evaluate_view(const Scene &scene, const CameraView &view, const VoteMap2D &gt, const ImageD *image,
                         const TrainConfig &config, const LossWeights &weights) {
    return view_step(scene, view, gt, image, config, weights, false).report;
}

TrainResult train(const Scene &initial, const TrainingData &data, const TrainConfig &config,
                  const StepCallback &on_step) {
    config.validate();
    if (config.level >= initial.levels) {
        throw ValidationError("training level exceeds the scene's hierarchy levels");
    }
    if (data.rig.empty()) {
        throw ValidationError("training needs at least one view");
    }
    if (data.vote_maps.size() != data.rig.size()) {
        throw ValidationError("vote map count does not match the camera count");
    }
    const bool appearance = config.trainable.color || config.trainable.opacity;
    if (appearance && data.images.size() != data.rig.size()) {
        throw ValidationError("color or opacity training needs one image per view");
    }
    if (!data.images.empty() && data.images.size() != data.rig.size()) {
        throw ValidationError("image count does not match the camera count");
    }
    for (std::size_t v = 0; v < data.rig.size(); ++v) {
        const auto &view = data.rig[v];
        if (data.vote_maps[v].width() != view.width || data.vote_maps[v].height() != view.height) {
            throw ValidationError("vote map " + std::to_string(v) + " does not match its camera size");
        }
        if (!data.images.empty() &&
            (data.images[v].width != view.width || data.images[v].height != view.height ||
             data.images[v].channels != 3)) {
            throw ValidationError("image " + std::to_string(v) + " does not match its camera size");
        }
    }
    if (static_cast<std::size_t>(config.views_per_step) > data.rig.size()) {
        throw ValidationError("views_per_step exceeds the number of views");
    }

    TrainResult result;
    result.scene = initial;
    Scene &scene = result.scene;
    const std::size_t n = scene.size();
    const LossWeights weights = config.resolve_weights(scene, data.rig);
    const double lr_offset = config.lr_offset.value_or(1e-3 * scene.diagonal());

    AdamState offset_state(3 * n), color_state(3 * n), opacity_state(n);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(data.rig.size());
    for (std::size_t v = 0; v < order.size(); ++v) {
        order[v] = v;
    }
    const auto k = static_cast<std::size_t>(config.views_per_step);
    const double inv_k = 1.0 / static_cast<double>(k);

    for (int step = 0; step < config.steps; ++step) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
        }
        GradientBuffer grad = GradientBuffer::zeros(n, appearance);
        StepLog log;
        log.step = step;
        for (std::size_t s = 0; s < k; ++s) {
            const std::size_t v = order[s];
            const ImageD *image = data.images.empty() ? nullptr : &data.images[v];
            const ViewStep vs = view_step(scene, data.rig[v], data.vote_maps[v], image, config, weights, true);
            grad.add(vs.grad, inv_k);
            log.l_color += inv_k * vs.report.l_color;
            log.l_vote += inv_k * vs.report.l_vote;
            log.l_depth += inv_k * vs.report.l_depth;
            log.total += inv_k * vs.report.total;
            log.supervised_pixels += vs.report.supervised_pixel_count;
        }
        if (!std::isfinite(log.total)) {
            throw TrainingError("non-finite loss", step);
        }
        if (!grad.finite()) {
            throw TrainingError("non-finite gradient", step);
        }

        const double progress = config.steps > 1 ? static_cast<double>(step) / (config.steps - 1) : 0.0;
        const double decay = std::pow(config.lr_final_ratio, progress);
        const int t = step + 1;
        const auto level = static_cast<std::size_t>(config.level);
        for (std::size_t i = 0; i < n; ++i) {
            auto &g = scene.gaussians[i];
            for (int c = 0; c < 3; ++c) {
                if (config.trainable.offset) {
                    g.offsets[level][c] -= step_size(config.optimizer, offset_state, 3 * i + static_cast<std::size_t>(c),
                                                     grad.offset[i][c], decay * lr_offset, t);
                }
                if (config.trainable.color) {
                    g.color[c] -= step_size(config.optimizer, color_state, 3 * i + static_cast<std::size_t>(c),
                                            grad.color[i][c], decay * config.lr_color, t);
                    g.color[c] = std::clamp(g.color[c], 0.0, 1.0);
                }
            }
            if (config.trainable.opacity) {
                g.opacity -= step_size(config.optimizer, opacity_state, i, grad.opacity[i], decay * config.lr_opacity, t);
                g.opacity = std::clamp(g.opacity, 0.0, 1.0);
            }
        }
        result.log.push_back(log);

        if (on_step) {
            on_step(step, scene);
        }
        if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_%06d.json", step + 1);
            std::filesystem::create_directories(config.checkpoint_dir);
            save_scene(scene, config.checkpoint_dir / name);
        }
    }
    return result;
}

void write_loss_csv(const std::vector<StepLog> &log, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "step,l_color,l_vote,l_depth,total,supervised_pixels\n";
    char line[256];
    for (const auto &s : log) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%zu\n", s.step, s.l_color, s.l_vote, s.l_depth,
                      s.total, s.supervised_pixels);
        out << line;
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_kind_from_string(const std::string &name) {
    if (name == "adam") {
        return OptimizerKind::Adam;
    }
    if (name == "sgd") {
        return OptimizerKind::Sgd;
    }
    throw ValidationError("unknown optimizer '" + name + "'");
}

} // namespace votesplat
