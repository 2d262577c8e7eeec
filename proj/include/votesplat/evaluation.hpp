#pragma once

#include "votesplat/camera.hpp"
#include "votesplat/image.hpp"
#include "votesplat/rasterizer.hpp"
#include "votesplat/scene.hpp"
#include "votesplat/vote_maps.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <vector>

namespace votesplat {

/// |a & b| / |a | b| over non-zero pixels; 1 when both are empty.
double iou(const Image<std::uint8_t> &pred, const Image<std::uint8_t> &gt);

/// Fraction of IoUs strictly above the threshold.
double m_acc(std::span<const double> ious, double threshold = 0.25);

/// Adjusted Rand Index between two labelings of the same items.
double ari(std::span<const int> labels_a, std::span<const int> labels_b);

/// Distance from each Gaussian's vote to its generator instance center; NaN
/// for background Gaussians.
std::vector<double> vote_distances(const Scene &scene, int level);

struct InstanceVoteError {
    double mean = 0.0;
    double max = 0.0;
    // Fraction of the instance's Gaussians within tolerance * instance radius.
    double within_tolerance = 0.0;
    std::size_t count = 0;
};

struct VoteErrorReport {
    std::map<int, InstanceVoteError> instances;
    double mean = 0.0;
    double within_tolerance = 0.0;  // over all instance Gaussians
    double tolerance = 0.1;
};

VoteErrorReport vote_error(const Scene &scene, int level, double tolerance = 0.1);

/// Population standard deviation of camera-frame vote depths of each instance's
/// Gaussians that vote in supervised pixels of a view, averaged over the
/// (view, instance) pairs present.
double vote_depth_spread(const Scene &scene, const CameraRig &rig, std::span<const VoteMap2D> vote_maps, int level,
                         const RenderOptions &options = {});

/// Population standard deviation of a list of values.
double population_stddev(std::span<const double> values);

/// Opacity mask of the generator's instance `label` rendered alone.
Image<std::uint8_t> ground_truth_instance_mask(const Scene &scene, int label, const CameraView &view);

} // namespace votesplat
