#pragma once

#include "votesplat/camera.hpp"
#include "votesplat/losses.hpp"
#include "votesplat/rasterizer.hpp"
#include "votesplat/scene.hpp"
#include "votesplat/vote_maps.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace votesplat {

/// Raised when a training step produces a non-finite loss or gradient.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string &what, int step)
        : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

struct GradientBuffer {
    std::vector<Vec3> offset;
    std::vector<Vec3> color;    // empty unless requested
    std::vector<double> opacity;  // empty unless requested

    static GradientBuffer zeros(std::size_t n, bool appearance);
    void add(const GradientBuffer &other, double scale = 1.0);
    bool finite() const;
};

/// Vote loss gradient with respect to every Gaussian's offset at the render's level.
/// Uses the member sets and blend mode recorded in the render.
GradientBuffer backward_vote(const RenderOutput &render, const VoteMap2D &gt, const Scene &scene,
                             const CameraView &view);

/// Depth distortion gradient with respect to offsets, over the same pixels as the vote loss.
GradientBuffer backward_depth(const RenderOutput &render, const VoteMap2D &gt, const Scene &scene,
                              const CameraView &view, const DepthLossOptions &options);

/// Chains dL/dC (3 channels per pixel) through the recorded color traversal
/// into per-Gaussian color and opacity gradients. Offsets receive nothing.
GradientBuffer backward_color(const RenderOutput &render, const ImageD &dloss_dcolor, const Scene &scene);

enum class OptimizerKind { Adam, Sgd };

struct Trainable {
    bool offset = true;
    bool color = true;
    bool opacity = true;
    bool operator==(const Trainable &) const = default;
};

struct TrainConfig {
    int steps = 1000;
    OptimizerKind optimizer = OptimizerKind::Adam;
    // Unset: 1e-3 * scene diagonal.
    std::optional<double> lr_offset;
    double lr_color = 2.5e-3;
    double lr_opacity = 0.05;
    // Learning rates decay exponentially to this fraction at the last step.
    double lr_final_ratio = 0.1;
    int views_per_step = 1;
    int level = 0;
    // Unset weights take the defaults derived from image and scene size.
    std::optional<double> lambda_vote;
    std::optional<double> lambda_depth;
    double lambda_dssim = 0.2;
    DepthLossOptions depth;
    BlendMode blend = BlendMode::UniformVote;
    Membership membership = Membership::VotingTransmittance;
    Trainable trainable;
    std::uint64_t seed = 0;
    // 0 disables checkpoints.
    int checkpoint_every = 0;
    std::filesystem::path checkpoint_dir;

    void validate() const;
    LossWeights resolve_weights(const Scene &scene, const CameraRig &rig) const;
};

struct TrainingData {
    CameraRig rig;
    std::vector<VoteMap2D> vote_maps;
    // Ground-truth color images; required only when color or opacity is trainable.
    std::vector<ImageD> images;
};

struct StepLog {
    int step = 0;
    double l_color = 0.0;
    double l_vote = 0.0;
    double l_depth = 0.0;
    double total = 0.0;
    std::size_t supervised_pixels = 0;
};

struct TrainResult {
    Scene scene;
    std::vector<StepLog> log;
};

/// Called after every parameter update with the step index and current scene.
using StepCallback = std::function<void(int, const Scene &)>;

TrainResult train(const Scene &initial, const TrainingData &data, const TrainConfig &config,
                  const StepCallback &on_step = {});

/// Losses of one view at the current parameters, as the training loop sees them.
LossReport evaluate_view(const Scene &scene, const CameraView &view, const VoteMap2D &gt, const ImageD *image,
                         const TrainConfig &config, const LossWeights &weights);

void write_loss_csv(const std::vector<StepLog> &log, const std::filesystem::path &path);

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string &name);

} // namespace votesplat
