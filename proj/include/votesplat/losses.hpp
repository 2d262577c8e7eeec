#pragma once

#include "votesplat/image.hpp"
#include "votesplat/rasterizer.hpp"
#include "votesplat/vote_maps.hpp"

#include <span>
#include <vector>

namespace votesplat {

struct LossWeights {
    double lambda_vote = 0.0;
    double lambda_depth = 0.0;
    double lambda_dssim = 0.2;

    void validate() const;
    /// Vote loss scaled by the image diagonal (px), depth loss by the scene diagonal.
    static LossWeights defaults_for(double image_diagonal_px, double scene_diagonal);
};

struct LossReport {
    double l_color = 0.0;
    double l_vote = 0.0;
    double l_depth = 0.0;
    double total = 0.0;
    std::size_t supervised_pixel_count = 0;
    // Set when no supervised pixel had a voting set; l_vote is then 0.
    bool vote_loss_empty = false;
};

enum class DepthVariant { Weighted, Unweighted };

struct DepthLossOptions {
    DepthVariant variant = DepthVariant::Unweighted;
    // Divide each pixel's pair sum by its pair count C(n, 2).
    bool normalize_pairs = true;
};

/// Order-independent summation (pairwise tree); used by every loss reduction.
double pairwise_sum(std::span<const double> values);

/// P': supervised pixels whose rendered voting set is non-empty and whose
/// projected vote is defined.
std::vector<std::size_t> vote_pixels(const RenderOutput &render, const VoteMap2D &gt);

struct VoteLoss {
    double value = 0.0;
    std::size_t pixels = 0;
    bool empty = true;
};

/// Mean over P' of |du| + |dv| between rendered and ground-truth 2D votes.
VoteLoss vote_loss(const RenderOutput &render, const VoteMap2D &gt);

/// Sum over unordered pairs of |z_i - z_j| via the sorted closed form.
double pair_abs_sum(std::span<const double> depths);
double pair_abs_sum_weighted(std::span<const double> depths, std::span<const double> weights);

/// Per-pixel depth distortion term, normalized by the pair count if requested.
double pixel_depth_distortion(std::span<const double> depths, std::span<const double> weights,
                              const DepthLossOptions &options);

/// Mean of the per-pixel terms over the given pixels' member lists.
double depth_distortion(std::span<const std::vector<double>> depths, std::span<const std::vector<double>> weights,
                        const DepthLossOptions &options);

/// Same, reading member depths and weights from a render over P'.
double depth_distortion(const RenderOutput &render, const VoteMap2D &gt, const DepthLossOptions &options);

/// Mean SSIM over pixels and channels: 11x11 Gaussian window (sigma 1.5), zero
/// padding, C1 = 0.01^2, C2 = 0.03^2 for [0, 1] images.
double ssim(const ImageD &a, const ImageD &b);
/// d ssim(a, b) / d a.
ImageD ssim_gradient(const ImageD &a, const ImageD &b);

/// (1 - lambda_dssim) * mean|a - b| + lambda_dssim * (1 - SSIM) / 2.
double color_loss(const ImageD &rendered, const ImageD &gt, double lambda_dssim);
ImageD color_loss_gradient(const ImageD &rendered, const ImageD &gt, double lambda_dssim);

LossReport rvd_total(double l_color, double l_vote, double l_depth, const LossWeights &weights);

} // namespace votesplat
