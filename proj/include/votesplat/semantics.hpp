#pragma once

#include "votesplat/camera.hpp"
#include "votesplat/clustering.hpp"
#include "votesplat/image.hpp"
#include "votesplat/scene.hpp"
#include "votesplat/vote_maps.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace votesplat {

using FeatureVector = Eigen::VectorXd;

/// Per-view, per-pixel feature planes. A pixel whose feature is all zero or
/// non-finite carries no feature.
class FeatureSource {
public:
    virtual ~FeatureSource() = default;
    virtual int dim() const = 0;
    virtual std::size_t view_count() const = 0;
    /// dim() channels, view resolution.
    virtual ImageD view_features(std::size_t view) const = 0;
};

/// Maps each mask label k > 0 to a fixed random unit vector drawn from `seed`.
class SyntheticFeatureSource : public FeatureSource {
public:
    SyntheticFeatureSource(std::vector<LabelMask> masks, int dim, std::uint64_t seed);
    int dim() const override { return dim_; }
    std::size_t view_count() const override { return masks_.size(); }
    ImageD view_features(std::size_t view) const override;
    FeatureVector label_feature(int label) const;

private:
    std::vector<LabelMask> masks_;
    int dim_;
    std::map<int, FeatureVector> table_;
};

/// Reads one float plane per view.
class PlaneFeatureSource : public FeatureSource {
public:
    explicit PlaneFeatureSource(std::vector<std::filesystem::path> planes);
    int dim() const override { return dim_; }
    std::size_t view_count() const override { return planes_.size(); }
    ImageD view_features(std::size_t view) const override;

private:
    std::vector<std::filesystem::path> planes_;
    int dim_ = 0;
};

struct FeatureBank {
    int dim = 0;
    // Unit-norm instance features.
    std::map<int, FeatureVector> features;
    // Instances that covered no pixel in any view.
    std::vector<int> missing;
};

/// Renders each view's instance-id map (the scene's cluster ids must be set),
/// averages features over each instance's pixels per view, combines views by
/// pixel count and normalizes.
FeatureBank associate_features(const Scene &scene, const InstanceTable &table, const CameraRig &rig,
                               const FeatureSource &source);

struct QueryOptions {
    // Unset: select the top-ranked instance only.
    std::optional<double> threshold;
    bool render_masks = true;
};

struct QueryResult {
    std::vector<std::pair<int, double>> ranked;  // descending score, ties by id
    std::vector<int> selected_instances;
    std::vector<std::size_t> selected_gaussians;  // ascending
    std::vector<Image<std::uint8_t>> masks;  // one per view, 1 = selected
};

QueryResult query(const FeatureBank &bank, const FeatureVector &query_vector, const Scene &scene,
                  const InstanceTable &table, const CameraRig &rig, const QueryOptions &options = {});

/// Binary mask where the given Gaussians alone accumulate opacity >= 0.5.
Image<std::uint8_t> render_selection_mask(const Scene &scene, std::span<const std::size_t> ids,
                                          const CameraView &view);

/// Instance id of the frontmost voting member at pixel (x, y); -1 if none.
int pick(const Scene &scene, const CameraRig &rig, std::size_t view_index, int x, int y);

void save_feature_bank(const FeatureBank &bank, const std::filesystem::path &path);
FeatureBank load_feature_bank(const std::filesystem::path &path);

} // namespace votesplat
