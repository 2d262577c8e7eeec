#pragma once

#include "votesplat/pipeline.hpp"

#include <functional>
#include <random>
#include <span>
#include <vector>

namespace votesplat::oracle {

/// Per-pixel reference renderer: every Gaussian is tested at every pixel,
/// with its own footprint and covariance math and no tiling.
struct BruteForceOutput {
    ImageD color;
    ImageD alpha;
    ImageD vote3d;
    ImageD vote2d;
    std::vector<std::vector<int>> members;
    std::vector<std::vector<double>> weights;
};

BruteForceOutput render(const Scene &scene, const CameraView &view, BlendMode blend = BlendMode::UniformVote,
                        Membership membership = Membership::VotingTransmittance, int level = 0);

/// Exhaustive O(n^2) density clustering with the library's labeling rules.
std::vector<int> dbscan(std::span<const Vec3> points, double eps, int min_pts);

/// Sum of |z_i - z_j| over unordered pairs, optionally weighted by w_i * w_j.
double pair_loop(std::span<const double> depths);
double pair_loop_weighted(std::span<const double> depths, std::span<const double> weights);

/// Central difference of f along each coordinate of each offset at `level`.
std::vector<Vec3> finite_difference(Scene scene, int level, double h, const std::function<double(const Scene &)> &f);

/// Small random scene for gradient and renderer checks: up to max_count
/// anisotropic Gaussians near the origin with random offsets and colors.
Scene random_scene(std::mt19937_64 &rng, int max_count, double offset_scale = 0.3);

/// Two cameras looking at the origin from random directions.
CameraRig random_rig(std::mt19937_64 &rng, int count, int size);

/// Supervision for every pixel whose render has members: a random target vote.
VoteMap2D random_vote_map(std::mt19937_64 &rng, const RenderOutput &render);

double relative_error(double a, double b);

} // namespace votesplat::oracle
