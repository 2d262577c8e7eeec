#pragma once

#include "votesplat/clustering.hpp"
#include "votesplat/config.hpp"
#include "votesplat/evaluation.hpp"
#include "votesplat/json_util.hpp"
#include "votesplat/optimizer.hpp"
#include "votesplat/semantics.hpp"
#include "votesplat/vote_maps.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace votesplat {

/// Ground truth for one synthetic scene: untrained Gaussians, cameras, one label
/// mask per (level, view) and one color image per view.
struct Dataset {
    Scene scene;
    CameraRig rig;
    int border_margin = 1;
    int feature_dim = 16;
    std::uint64_t feature_seed = 0;
    std::vector<std::vector<LabelMask>> masks;  // [level][view]
    std::vector<ImageD> images;  // 8-bit quantized, as stored on disk

    const std::vector<LabelMask> &level_masks(int level) const;
};

Dataset generate_dataset(const DatasetSpec &spec);

/// Layout: dataset.json, scene.json/.ply, cameras.json, masks/view_NNN_lL.pgm,
/// images/view_NNN.png.
void save_dataset(const Dataset &dataset, const std::filesystem::path &dir);
Dataset load_dataset(const std::filesystem::path &dir);

std::vector<VoteMap2D> build_vote_maps(const std::vector<LabelMask> &masks, int border_margin);
std::filesystem::path vote_map_path(const std::filesystem::path &dir, std::size_t view, int level);

/// Training inputs at config.level; images are attached only when appearance is trainable.
TrainingData make_training_data(const Dataset &dataset, const TrainConfig &config);

/// Generator-labeled instance Gaussians keep their instance label; every other
/// Gaussian the prediction leaves unassigned counts as its own singleton.
double instance_ari(const Scene &scene, const InstanceTable &table);

/// Fraction of generator-background Gaussians that the table marks as background.
double background_filtered_fraction(const Scene &scene, const InstanceTable &table);

struct RetrievalReport {
    // Per generator instance: the selected instance and its score.
    std::vector<int> selected;
    std::vector<double> scores;
    // Per (query, view).
    std::vector<double> ious;
    double mean_iou = 0.0;
    double macc = 0.0;
    // Querying each bank entry with its own vector.
    bool own_rank_first = true;
    double own_score_max_deviation = 0.0;
};

/// Queries with each generator instance's synthetic feature and scores the
/// selection masks against the generator's instance masks.
RetrievalReport evaluate_retrieval(const Scene &clustered, const InstanceTable &table, const FeatureBank &bank,
                                   const Dataset &dataset);

json::Json metrics_json(const Scene &clustered, const InstanceTable &table, const Dataset &dataset, int level,
                        const FeatureBank *bank);

struct PipelineResult {
    TrainResult training;
    Scene clustered;
    InstanceTable table;
    FeatureBank bank;
    json::Json metrics;
};

/// Train, cluster, associate features and evaluate.
PipelineResult run_pipeline(const Dataset &dataset, const TrainConfig &config,
                            const std::optional<ClusterParams> &cluster = std::nullopt);

struct AblationArm {
    std::string name;
    TrainConfig config;
};

/// Full model plus the three ablation arms and the projection-first diagnostic.
std::vector<AblationArm> standard_ablation_arms(const TrainConfig &base);

struct AblationRow {
    std::string name;
    double vote_error_mean = 0.0;
    double within_tolerance = 0.0;
    double depth_spread = 0.0;
    double ari = 0.0;
    double final_loss = 0.0;
};

/// Each arm trains from a fresh copy of the dataset scene.
std::vector<AblationRow> run_ablation(const Dataset &dataset, const std::vector<AblationArm> &arms);
void write_ablation_csv(const std::vector<AblationRow> &rows, const std::filesystem::path &path);
std::string format_ablation_table(const std::vector<AblationRow> &rows);

} // namespace votesplat
