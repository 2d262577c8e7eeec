#pragma once

#include "votesplat/camera.hpp"
#include "votesplat/clustering.hpp"
#include "votesplat/json_util.hpp"
#include "votesplat/optimizer.hpp"
#include "votesplat/scene.hpp"

#include <filesystem>

namespace votesplat {

inline constexpr int kConfigVersion = 1;

/// Everything `gen` needs: the synthetic scene, the camera rig, and the
/// ground-truth preprocessing settings.
struct DatasetSpec {
    SyntheticSceneSpec scene;
    RigSpec rig;
    int border_margin = 1;
    int feature_dim = 16;
    std::uint64_t feature_seed = 0;
};

SyntheticSceneSpec parse_scene_spec(const json::Json &j, const std::string &where);
RigSpec parse_rig_spec(const json::Json &j, const std::string &where);
DatasetSpec parse_dataset_spec(const json::Json &j, const std::string &where);
DatasetSpec load_dataset_spec(const std::filesystem::path &path);

/// Fields absent from the JSON keep the values already in `base`.
TrainConfig parse_train_config(const json::Json &j, const std::string &where, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path &path, TrainConfig base = {});
json::Json to_json(const TrainConfig &config);

ClusterParams parse_cluster_params(const json::Json &j, const std::string &where, ClusterParams base);

std::string to_string(Membership membership);
Membership membership_from_string(const std::string &name);
std::string to_string(DepthVariant variant);
DepthVariant depth_variant_from_string(const std::string &name);

} // namespace votesplat
