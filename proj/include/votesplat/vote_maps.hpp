#pragma once

#include "votesplat/camera.hpp"
#include "votesplat/image.hpp"
#include "votesplat/scene.hpp"

#include <filesystem>
#include <map>
#include <vector>

namespace votesplat {

/// Segment labels for one (view, level): 0 = background, k > 0 = segment k.
struct LabelMask {
    int level = 0;
    Image<std::uint16_t> labels;

    int width() const { return labels.width; }
    int height() const { return labels.height; }
};

struct PixelCentroid {
    int x = 0;
    int y = 0;
    bool operator==(const PixelCentroid &) const = default;
};

/// Ground-truth 2D votes. Votes are in continuous screen coordinates: the
/// center (c + 0.5) of the segment's centroid pixel c. NaN outside the
/// supervised set.
struct VoteMap2D {
    ImageD votes;
    std::vector<std::size_t> supervised;  // row-major pixel indices, ascending
    std::map<int, PixelCentroid> centroids;  // kept segments only

    int width() const { return votes.width; }
    int height() const { return votes.height; }
    bool is_supervised(std::size_t p) const { return !std::isnan(votes.data[2 * p]); }
    Vec2 vote(std::size_t p) const { return {votes.data[2 * p], votes.data[2 * p + 1]}; }
};

/// Rounded mean pixel index of a segment; rounding is half away from zero.
PixelCentroid segment_centroid(const LabelMask &mask, int segment_id);

/// Drops segments with any pixel within border_margin of the image edge and
/// assigns every remaining pixel its segment centroid.
VoteMap2D build_vote_map(const LabelMask &mask, int border_margin = 1);

/// An empty (fully unsupervised) vote map of the given size.
VoteMap2D empty_vote_map(int width, int height);

/// Ground-truth mask: a pixel takes segment k when its voting set is non-empty,
/// closed by opacity, and made only of Gaussians whose segment at `level` is k.
LabelMask render_label_mask(const Scene &scene, const CameraView &view, int level);

void save_label_mask(const LabelMask &mask, const std::filesystem::path &path);
LabelMask load_label_mask(const std::filesystem::path &path, int level);

void save_vote_map(const VoteMap2D &map, const std::filesystem::path &path);
VoteMap2D load_vote_map(const std::filesystem::path &path);

std::filesystem::path mask_path(const std::filesystem::path &dir, std::size_t view, int level);

} // namespace votesplat
