#include "votesplat/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace votesplat {

void LossWeights::validate() const {
    if (!(lambda_vote >= 0.0) || !(lambda_depth >= 0.0)) {
        throw ValidationError("loss weights must be non-negative");
    }
    if (!(lambda_dssim >= 0.0 && lambda_dssim <= 1.0)) {
        throw ValidationError("lambda_dssim must lie in [0, 1]");
    }
}

LossWeights LossWeights::defaults_for(double image_diagonal_px, double scene_diagonal) {
    LossWeights w;
    w.lambda_vote = image_diagonal_px > 0.0 ? 0.1 / image_diagonal_px : 0.1;
    w.lambda_depth = scene_diagonal > 0.0 ? 0.01 / scene_diagonal : 0.01;
    w.lambda_dssim = 0.2;
    return w;
}

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) {
            s += v;
        }
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

std::vector<std::size_t> vote_pixels(const RenderOutput &render, const VoteMap2D &gt) {
    if (render.width != gt.width() || render.height != gt.height()) {
        throw ValidationError("render and vote map dimensions differ");
    }
    if (render.vote2d.data.empty()) {
        throw ValidationError("render carries no votes");
    }
    std::vector<std::size_t> pixels;
    pixels.reserve(gt.supervised.size());
    for (std::size_t p : gt.supervised) {
        if (!std::isnan(render.vote2d.data[2 * p]) && !std::isnan(render.vote2d.data[2 * p + 1])) {
            pixels.push_back(p);
        }
    }
    return pixels;
}

VoteLoss vote_loss(const RenderOutput &render, const VoteMap2D &gt) {
    const auto pixels = vote_pixels(render, gt);
    VoteLoss loss;
    loss.pixels = pixels.size();
    loss.empty = pixels.empty();
    if (pixels.empty()) {
        return loss;
    }
    std::vector<double> terms(pixels.size());
    for (std::size_t k = 0; k < pixels.size(); ++k) {
        const std::size_t p = pixels[k];
        terms[k] = std::abs(render.vote2d.data[2 * p] - gt.votes.data[2 * p]) +
                   std::abs(render.vote2d.data[2 * p + 1] - gt.votes.data[2 * p + 1]);
    }
    loss.value = pairwise_sum(terms) / static_cast<double>(pixels.size());
    return loss;
}

double pair_abs_sum(std::span<const double> depths) {
    std::vector<double> z(depths.begin(), depths.end());
    std::sort(z.begin(), z.end());
    const double n = static_cast<double>(z.size());
    double s = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        s += (2.0 * static_cast<double>(k) - n + 1.0) * z[k];
    }
    return s;
}

double pair_abs_sum_weighted(std::span<const double> depths, std::span<const double> weights) {
    // Sorted sweep: for the k-th smallest depth, sum_j<k w_j (z_k - z_j) = z_k W_k - S_k.
    std::vector<std::size_t> idx(depths.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return depths[a] < depths[b]; });
    double w_prefix = 0.0, wz_prefix = 0.0, s = 0.0;
    for (std::size_t i : idx) {
        s += weights[i] * (depths[i] * w_prefix - wz_prefix);
        w_prefix += weights[i];
        wz_prefix += weights[i] * depths[i];
    }
    return s;
}

double pixel_depth_distortion(std::span<const double> depths, std::span<const double> weights,
                              const DepthLossOptions &options) {
    const std::size_t n = depths.size();
    if (n < 2) {
        return 0.0;
    }
    const double raw =
        options.variant == DepthVariant::Unweighted ? pair_abs_sum(depths) : pair_abs_sum_weighted(depths, weights);
    if (!options.normalize_pairs) {
        return raw;
    }
    return raw / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

double depth_distortion(std::span<const std::vector<double>> depths, std::span<const std::vector<double>> weights,
                        const DepthLossOptions &options) {
    if (depths.empty()) {
        return 0.0;
    }
    std::vector<double> terms(depths.size());
    for (std::size_t k = 0; k < depths.size(); ++k) {
        const std::span<const double> w = weights.empty() ? std::span<const double>{} : std::span(weights[k]);
        terms[k] = pixel_depth_distortion(depths[k], w, options);
    }
    return pairwise_sum(terms) / static_cast<double>(depths.size());
}

double depth_distortion(const RenderOutput &render, const VoteMap2D &gt, const DepthLossOptions &options) {
    if (!render.has_records()) {
        throw ValidationError("depth distortion needs member records");
    }
    const auto pixels = vote_pixels(render, gt);
    if (pixels.empty()) {
        return 0.0;
    }
    std::vector<double> terms(pixels.size());
    for (std::size_t k = 0; k < pixels.size(); ++k) {
        terms[k] = pixel_depth_distortion(render.depths_at(pixels[k]), render.weights_at(pixels[k]), options);
    }
    return pairwise_sum(terms) / static_cast<double>(pixels.size());
}

// ---------------------------------------------------------------------------
// SSIM

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWindow> &gaussian_window() {
    static const std::array<double, kWindow> w = [] {
        std::array<double, kWindow> g{};
        double s = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - kWindow / 2;
            g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            s += g[static_cast<std::size_t>(i)];
        }
        for (auto &v : g) {
            v /= s;
        }
        return g;
    }();
    return w;
}

using Plane = std::vector<double>;

// Separable Gaussian filter with zero padding ("same" output size).
Plane blur(const Plane &in, int w, int h) {
    const auto &g = gaussian_window();
    constexpr int r = kWindow / 2;
    Plane tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int xx = x + k;
                if (xx >= 0 && xx < w) {
                    s += g[static_cast<std::size_t>(k + r)] * in[static_cast<std::size_t>(y * w + xx)];
                }
            }
            tmp[static_cast<std::size_t>(y * w + x)] = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int yy = y + k;
                if (yy >= 0 && yy < h) {
                    s += g[static_cast<std::size_t>(k + r)] * tmp[static_cast<std::size_t>(yy * w + x)];
                }
            }
            out[static_cast<std::size_t>(y * w + x)] = s;
        }
    }
    return out;
}

Plane channel(const ImageD &img, int c) {
    Plane p(img.pixel_count());
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = img.data[i * static_cast<std::size_t>(img.channels) + static_cast<std::size_t>(c)];
    }
    return p;
}

struct SsimStats {
    Plane mu_a, mu_b, var_a, var_b, cov;
};

SsimStats ssim_stats(const Plane &a, const Plane &b, int w, int h) {
    SsimStats s;
    s.mu_a = blur(a, w, h);
    s.mu_b = blur(b, w, h);
    Plane aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    s.var_a = blur(aa, w, h);
    s.var_b = blur(bb, w, h);
    s.cov = blur(ab, w, h);
    for (std::size_t i = 0; i < a.size(); ++i) {
        s.var_a[i] -= s.mu_a[i] * s.mu_a[i];
        s.var_b[i] -= s.mu_b[i] * s.mu_b[i];
        s.cov[i] -= s.mu_a[i] * s.mu_b[i];
    }
    return s;
}

void check_same(const ImageD &a, const ImageD &b) {
    if (!a.same_shape(b)) {
        throw ValidationError("image dimensions differ");
    }
    if (a.data.empty()) {
        throw ValidationError("image is empty");
    }
}

} // namespace

double ssim(const ImageD &a, const ImageD &b) {
    check_same(a, b);
    std::vector<double> terms;
    terms.reserve(a.data.size());
    for (int c = 0; c < a.channels; ++c) {
        const auto s = ssim_stats(channel(a, c), channel(b, c), a.width, a.height);
        for (std::size_t i = 0; i < s.mu_a.size(); ++i) {
            const double n = (2.0 * s.mu_a[i] * s.mu_b[i] + kC1) * (2.0 * s.cov[i] + kC2);
            const double d =
                (s.mu_a[i] * s.mu_a[i] + s.mu_b[i] * s.mu_b[i] + kC1) * (s.var_a[i] + s.var_b[i] + kC2);
            terms.push_back(n / d);
        }
    }
    return pairwise_sum(terms) / static_cast<double>(terms.size());
}

ImageD ssim_gradient(const ImageD &a, const ImageD &b) {
    check_same(a, b);
    const int w = a.width, h = a.height;
    const double scale = 1.0 / static_cast<double>(a.data.size());
    ImageD grad(w, h, a.channels, 0.0);
    for (int c = 0; c < a.channels; ++c) {
        const Plane pa = channel(a, c), pb = channel(b, c);
        const auto s = ssim_stats(pa, pb, w, h);
        const std::size_t n = pa.size();
        // Per-window partials of the SSIM map.
        Plane d_mu(n), d_var(n), d_cov(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double n1 = 2.0 * s.mu_a[i] * s.mu_b[i] + kC1;
            const double n2 = 2.0 * s.cov[i] + kC2;
            const double d1 = s.mu_a[i] * s.mu_a[i] + s.mu_b[i] * s.mu_b[i] + kC1;
            const double d2 = s.var_a[i] + s.var_b[i] + kC2;
            const double v = n1 * n2 / (d1 * d2);
            d_mu[i] = 2.0 * s.mu_b[i] * n2 / (d1 * d2) - 2.0 * s.mu_a[i] * v / d1;
            d_var[i] = -v / d2;
            d_cov[i] = 2.0 * n1 / (d1 * d2);
        }
        // grad(q) = blur(d_mu - 2 d_var mu_a - d_cov mu_b)(q) + 2 a_q blur(d_var)(q) + b_q blur(d_cov)(q)
        Plane k0(n);
        for (std::size_t i = 0; i < n; ++i) {
            k0[i] = d_mu[i] - 2.0 * d_var[i] * s.mu_a[i] - d_cov[i] * s.mu_b[i];
        }
        const Plane g0 = blur(k0, w, h), g1 = blur(d_var, w, h), g2 = blur(d_cov, w, h);
        for (std::size_t i = 0; i < n; ++i) {
            grad.data[i * static_cast<std::size_t>(a.channels) + static_cast<std::size_t>(c)] =
                scale * (g0[i] + 2.0 * pa[i] * g1[i] + pb[i] * g2[i]);
        }
    }
    return grad;
}

double color_loss(const ImageD &rendered, const ImageD &gt, double lambda_dssim) {
    check_same(rendered, gt);
    std::vector<double> diff(rendered.data.size());
    for (std::size_t i = 0; i < diff.size(); ++i) {
        diff[i] = std::abs(rendered.data[i] - gt.data[i]);
    }
    const double l1 = pairwise_sum(diff) / static_cast<double>(diff.size());
    if (lambda_dssim == 0.0) {
        return l1;
    }
    return (1.0 - lambda_dssim) * l1 + lambda_dssim * 0.5 * (1.0 - ssim(rendered, gt));
}

ImageD color_loss_gradient(const ImageD &rendered, const ImageD &gt, double lambda_dssim) {
    check_same(rendered, gt);
    ImageD grad(rendered.width, rendered.height, rendered.channels, 0.0);
    const double l1_scale = (1.0 - lambda_dssim) / static_cast<double>(grad.data.size());
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
        const double d = rendered.data[i] - gt.data[i];
        grad.data[i] = d > 0.0 ? l1_scale : (d < 0.0 ? -l1_scale : 0.0);
    }
    if (lambda_dssim != 0.0) {
        const ImageD gs = ssim_gradient(rendered, gt);
        for (std::size_t i = 0; i < grad.data.size(); ++i) {
            grad.data[i] -= 0.5 * lambda_dssim * gs.data[i];
        }
    }
    return grad;
}

LossReport rvd_total(double l_color, double l_vote, double l_depth, const LossWeights &weights) {
    LossReport r;
    r.l_color = l_color;
    r.l_vote = l_vote;
    r.l_depth = l_depth;
    r.total = l_color + weights.lambda_vote * l_vote + weights.lambda_depth * l_depth;
    return r;
}

} // namespace votesplat
