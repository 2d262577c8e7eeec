#include "votesplat/evaluation.hpp"

#include "votesplat/losses.hpp"
#include "votesplat/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace votesplat {

double iou(const Image<std::uint8_t> &pred, const Image<std::uint8_t> &gt) {
    if (!pred.same_shape(gt)) {
        throw ValidationError("mask dimensions differ");
    }
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool a = pred.data[i] != 0, b = gt.data[i] != 0;
        inter += a && b;
        uni += a || b;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double m_acc(std::span<const double> ious, double threshold) {
    if (ious.empty()) {
        throw ValidationError("m_acc needs at least one IoU");
    }
    const auto hits = std::count_if(ious.begin(), ious.end(), [&](double v) { return v > threshold; });
    return static_cast<double>(hits) / static_cast<double>(ious.size());
}

double ari(std::span<const int> labels_a, std::span<const int> labels_b) {
    if (labels_a.size() != labels_b.size()) {
        throw ValidationError("label lists differ in length");
    }
    const std::size_t n = labels_a.size();
    if (n < 2) {
        return 1.0;
    }
    std::map<std::pair<int, int>, double> cells;
    std::map<int, double> rows, cols;
    for (std::size_t i = 0; i < n; ++i) {
        cells[{labels_a[i], labels_b[i]}] += 1.0;
        rows[labels_a[i]] += 1.0;
        cols[labels_b[i]] += 1.0;
    }
    auto pairs = [](double c) { return 0.5 * c * (c - 1.0); };
    double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto &[k, c] : cells) {
        index += pairs(c);
    }
    for (const auto &[k, c] : rows) {
        sum_rows += pairs(c);
    }
    for (const auto &[k, c] : cols) {
        sum_cols += pairs(c);
    }
    const double expected = sum_rows * sum_cols / pairs(static_cast<double>(n));
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) {
        // Both partitions trivial (all one cluster or all singletons) and identical.
        return 1.0;
    }
    return (index - expected) / (max_index - expected);
}

std::vector<double> vote_distances(const Scene &scene, int level) {
    std::map<int, Vec3> centers;
    for (const auto &inst : scene.instances) {
        centers[inst.label] = inst.center;
    }
    std::vector<double> d(scene.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const int label = scene.gaussians[i].instance_label;
        const auto it = centers.find(label);
        if (label < 0 || it == centers.end()) {
            continue;
        }
        d[i] = (scene.gaussians[i].vote(level) - it->second).norm();
    }
    return d;
}

VoteErrorReport vote_error(const Scene &scene, int level, double tolerance) {
    std::map<int, double> radius;
    for (const auto &inst : scene.instances) {
        radius[inst.label] = inst.radius();
    }
    const auto d = vote_distances(scene, level);
    VoteErrorReport report;
    report.tolerance = tolerance;
    std::map<int, std::vector<double>> per;
    std::vector<double> all;
    std::size_t within = 0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (std::isnan(d[i])) {
            continue;
        }
        const int label = scene.gaussians[i].instance_label;
        per[label].push_back(d[i]);
        all.push_back(d[i]);
        within += d[i] <= tolerance * radius.at(label);
    }
    for (const auto &[label, list] : per) {
        InstanceVoteError e;
        e.count = list.size();
        e.mean = pairwise_sum(list) / static_cast<double>(list.size());
        e.max = *std::max_element(list.begin(), list.end());
        const double tol = tolerance * radius.at(label);
        e.within_tolerance = static_cast<double>(std::count_if(list.begin(), list.end(),
                                                               [&](double v) { return v <= tol; })) /
                             static_cast<double>(list.size());
        report.instances[label] = e;
    }
    if (!all.empty()) {
        report.mean = pairwise_sum(all) / static_cast<double>(all.size());
        report.within_tolerance = static_cast<double>(within) / static_cast<double>(all.size());
    }
    return report;
}

double population_stddev(std::span<const double> values) {
    if (values.empty()) {
        return 0.0;
    }
    const double n = static_cast<double>(values.size());
    const double mean = pairwise_sum(values) / n;
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        sq[i] = (values[i] - mean) * (values[i] - mean);
    }
    return std::sqrt(pairwise_sum(sq) / n);
}

double vote_depth_spread(const Scene &scene, const CameraRig &rig, std::span<const VoteMap2D> vote_maps, int level,
                         const RenderOptions &options) {
    if (vote_maps.size() != rig.size()) {
        throw ValidationError("vote map count does not match the camera count");
    }
    RenderOptions opts = options;
    opts.mode = RenderMode::Votes;
    opts.level = level;
    opts.keep_records = true;
    std::vector<double> spreads;
    for (std::size_t v = 0; v < rig.size(); ++v) {
        const RenderOutput out = render(scene, rig[v], opts);
        std::map<int, std::set<int>> voters;
        for (std::size_t p : vote_pixels(out, vote_maps[v])) {
            for (int id : out.members_at(p)) {
                const int label = scene.gaussians[static_cast<std::size_t>(id)].instance_label;
                if (label >= 0) {
                    voters[label].insert(id);
                }
            }
        }
        for (const auto &[label, ids] : voters) {
            std::vector<double> depths;
            for (int id : ids) {
                depths.push_back(rig[v].to_camera(scene.gaussians[static_cast<std::size_t>(id)].vote(level)).z());
            }
            spreads.push_back(population_stddev(depths));
        }
    }
    if (spreads.empty()) {
        return 0.0;
    }
    return pairwise_sum(spreads) / static_cast<double>(spreads.size());
}

Image<std::uint8_t> ground_truth_instance_mask(const Scene &scene, int label, const CameraView &view) {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (scene.gaussians[i].instance_label == label) {
            ids.push_back(i);
        }
    }
    return render_selection_mask(scene, ids, view);
}

} // namespace votesplat
