#include "votesplat/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace votesplat {

namespace {

std::filesystem::path image_path(const std::filesystem::path &dir, std::size_t view) {
    char name[64];
    std::snprintf(name, sizeof(name), "view_%03zu.png", view);
    return dir / "images" / name;
}

ImageD quantize(const ImageD &image) {
    ImageD out = image;
    for (auto &v : out.data) {
        v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
    }
    return out;
}

} // namespace

const std::vector<LabelMask> &Dataset::level_masks(int level) const {
    if (level < 0 || static_cast<std::size_t>(level) >= masks.size()) {
        throw ValidationError("dataset has no masks for level " + std::to_string(level));
    }
    return masks[static_cast<std::size_t>(level)];
}

Dataset generate_dataset(const DatasetSpec &spec) {
    Dataset d;
    d.scene = generate_synthetic_scene(spec.scene);
    d.rig = make_rig(spec.rig);
    d.border_margin = spec.border_margin;
    d.feature_dim = spec.feature_dim;
    d.feature_seed = spec.feature_seed;
    d.masks.resize(static_cast<std::size_t>(d.scene.levels));
    for (int level = 0; level < d.scene.levels; ++level) {
        auto &list = d.masks[static_cast<std::size_t>(level)];
        list.resize(d.rig.size());
        for (std::size_t v = 0; v < d.rig.size(); ++v) {
            list[v] = render_label_mask(d.scene, d.rig[v], level);
        }
    }
    d.images.resize(d.rig.size());
    RenderOptions opts;
    opts.mode = RenderMode::Color;
    opts.keep_records = false;
    for (std::size_t v = 0; v < d.rig.size(); ++v) {
        d.images[v] = quantize(render(d.scene, d.rig[v], opts).color);
    }
    return d;
}

void save_dataset(const Dataset &dataset, const std::filesystem::path &dir) {
    std::filesystem::create_directories(dir / "masks");
    std::filesystem::create_directories(dir / "images");
    json::Json m;
    m["format"] = "votesplat-dataset";
    m["version"] = kConfigVersion;
    m["views"] = dataset.rig.size();
    m["levels"] = dataset.scene.levels;
    m["border_margin"] = dataset.border_margin;
    m["features"] = {{"dim", dataset.feature_dim}, {"seed", dataset.feature_seed}};
    json::write_file(dir / "dataset.json", m);
    save_scene(dataset.scene, dir / "scene.json");
    save_cameras(dataset.rig, dir / "cameras.json");
    for (std::size_t level = 0; level < dataset.masks.size(); ++level) {
        for (std::size_t v = 0; v < dataset.masks[level].size(); ++v) {
            save_label_mask(dataset.masks[level][v], mask_path(dir / "masks", v, static_cast<int>(level)));
        }
    }
    for (std::size_t v = 0; v < dataset.images.size(); ++v) {
        write_png(image_path(dir, v), dataset.images[v]);
    }
}

Dataset load_dataset(const std::filesystem::path &dir) {
    const auto manifest = dir / "dataset.json";
    json::Reader r(json::read_file(manifest), manifest.string());
    r.expect_string("format", "votesplat-dataset");
    if (r.get<int>("version") != kConfigVersion) {
        throw ParseError(manifest.string() + ": unsupported dataset version", 0);
    }
    Dataset d;
    const auto views = r.get<std::size_t>("views");
    const int levels = r.get<int>("levels");
    d.border_margin = r.get<int>("border_margin");
    json::Reader fr(r.object("features"), manifest.string() + ": features");
    d.feature_dim = fr.get<int>("dim");
    d.feature_seed = fr.get<std::uint64_t>("seed");
    fr.finish();
    r.finish();

    d.scene = load_scene(dir / "scene.json");
    d.rig = load_cameras(dir / "cameras.json");
    if (d.rig.size() != views) {
        throw ValidationError(manifest.string() + ": field 'views' does not match cameras.json");
    }
    if (levels != d.scene.levels) {
        throw ValidationError(manifest.string() + ": field 'levels' does not match scene.json");
    }
    d.masks.resize(static_cast<std::size_t>(levels));
    for (int level = 0; level < levels; ++level) {
        for (std::size_t v = 0; v < views; ++v) {
            const auto path = mask_path(dir / "masks", v, level);
            LabelMask mask = load_label_mask(path, level);
            if (mask.width() != d.rig[v].width || mask.height() != d.rig[v].height) {
                throw ValidationError(path.string() + ": mask size does not match camera " + std::to_string(v));
            }
            d.masks[static_cast<std::size_t>(level)].push_back(std::move(mask));
        }
    }
    for (std::size_t v = 0; v < views; ++v) {
        const auto path = image_path(dir, v);
        if (!std::filesystem::exists(path)) {
            d.images.clear();
            break;
        }
        d.images.push_back(read_png(path));
    }
    return d;
}

std::vector<VoteMap2D> build_vote_maps(const std::vector<LabelMask> &masks, int border_margin) {
    std::vector<VoteMap2D> maps;
    maps.reserve(masks.size());
    for (const auto &m : masks) {
        maps.push_back(build_vote_map(m, border_margin));
    }
    return maps;
}

std::filesystem::path vote_map_path(const std::filesystem::path &dir, std::size_t view, int level) {
    char name[64];
    std::snprintf(name, sizeof(name), "view_%03zu_l%d.vspl", view, level);
    return dir / name;
}

TrainingData make_training_data(const Dataset &dataset, const TrainConfig &config) {
    TrainingData data;
    data.rig = dataset.rig;
    data.vote_maps = build_vote_maps(dataset.level_masks(config.level), dataset.border_margin);
    if (config.trainable.color || config.trainable.opacity) {
        data.images = dataset.images;
    }
    return data;
}

double instance_ari(const Scene &scene, const InstanceTable &table) {
    const auto predicted = table.gaussian_labels(scene.size());
    std::vector<int> truth, pred;
    int singleton = -1;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (scene.gaussians[i].instance_label < 0) {
            continue;
        }
        truth.push_back(scene.gaussians[i].instance_label);
        pred.push_back(predicted[i] >= 0 ? predicted[i] : singleton--);
    }
    return ari(truth, pred);
}

double background_filtered_fraction(const Scene &scene, const InstanceTable &table) {
    std::vector<char> is_background(scene.size(), 0);
    for (std::size_t g : table.background) {
        is_background.at(g) = 1;
    }
    std::size_t total = 0, filtered = 0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (scene.gaussians[i].instance_label < 0) {
            ++total;
            filtered += is_background[i];
        }
    }
    return total == 0 ? 1.0 : static_cast<double>(filtered) / static_cast<double>(total);
}

RetrievalReport evaluate_retrieval(const Scene &clustered, const InstanceTable &table, const FeatureBank &bank,
                                   const Dataset &dataset) {
    RetrievalReport report;
    const SyntheticFeatureSource source(dataset.level_masks(0), dataset.feature_dim, dataset.feature_seed);
    for (const auto &[id, f] : bank.features) {
        const QueryResult own = query(bank, f, clustered, table, dataset.rig, {std::nullopt, false});
        report.own_rank_first = report.own_rank_first && own.ranked.front().first == id;
        report.own_score_max_deviation =
            std::max(report.own_score_max_deviation, std::abs(own.ranked.front().second - 1.0));
    }
    for (const auto &inst : dataset.scene.instances) {
        const QueryResult r = query(bank, source.label_feature(inst.label + 1), clustered, table, dataset.rig);
        report.selected.push_back(r.selected_instances.front());
        report.scores.push_back(r.ranked.front().second);
        for (std::size_t v = 0; v < dataset.rig.size(); ++v) {
            const auto gt = ground_truth_instance_mask(dataset.scene, inst.label, dataset.rig[v]);
            report.ious.push_back(iou(r.masks[v], gt));
        }
    }
    if (!report.ious.empty()) {
        report.mean_iou = pairwise_sum(report.ious) / static_cast<double>(report.ious.size());
        report.macc = m_acc(report.ious, 0.25);
    }
    return report;
}

json::Json metrics_json(const Scene &clustered, const InstanceTable &table, const Dataset &dataset, int level,
                        const FeatureBank *bank) {
    json::Json m;
    m["format"] = "votesplat-metrics";
    m["version"] = kConfigVersion;
    m["level"] = level;
    m["instances_found"] = table.instances.size();
    m["noise_count"] = table.noise.size();
    m["background_count"] = table.background.size();
    m["ari"] = instance_ari(clustered, table);
    m["background_filtered_fraction"] = background_filtered_fraction(clustered, table);
    const VoteErrorReport ve = vote_error(clustered, level);
    json::Json per = json::Json::array();
    for (const auto &[label, e] : ve.instances) {
        per.push_back({{"label", label}, {"mean", e.mean}, {"max", e.max}, {"within_tolerance", e.within_tolerance},
                       {"count", e.count}});
    }
    m["vote_error"] = {{"mean", ve.mean},
                       {"within_tolerance", ve.within_tolerance},
                       {"tolerance", ve.tolerance},
                       {"instances", per}};
    const auto maps = build_vote_maps(dataset.level_masks(level), dataset.border_margin);
    m["depth_spread"] = vote_depth_spread(clustered, dataset.rig, maps, level);
    if (bank) {
        const RetrievalReport r = evaluate_retrieval(clustered, table, *bank, dataset);
        m["retrieval"] = {{"selected", r.selected},
                          {"scores", r.scores},
                          {"mean_iou", r.mean_iou},
                          {"macc_025", r.macc},
                          {"own_rank_first", r.own_rank_first},
                          {"own_score_max_deviation", r.own_score_max_deviation}};
    }
    return m;
}

PipelineResult run_pipeline(const Dataset &dataset, const TrainConfig &config,
                            const std::optional<ClusterParams> &cluster) {
    PipelineResult result;
    result.training = train(dataset.scene, make_training_data(dataset, config), config);
    const ClusterParams params = cluster.value_or(ClusterParams::defaults_for(dataset.scene.diagonal()));
    result.table = cluster_scene(result.training.scene, params, config.level);
    result.clustered = result.training.scene;
    apply_instance_table(result.clustered, result.table);
    const SyntheticFeatureSource source(dataset.level_masks(0), dataset.feature_dim, dataset.feature_seed);
    result.bank = associate_features(result.clustered, result.table, dataset.rig, source);
    result.metrics = metrics_json(result.clustered, result.table, dataset, config.level,
                                  result.bank.features.empty() ? nullptr : &result.bank);
    return result;
}

std::vector<AblationArm> standard_ablation_arms(const TrainConfig &base) {
    std::vector<AblationArm> arms;
    arms.push_back({"full", base});
    TrainConfig no_depth = base;
    no_depth.lambda_depth = 0.0;
    arms.push_back({"no_depth_loss", no_depth});
    TrainConfig alpha = base;
    alpha.blend = BlendMode::AlphaVote;
    arms.push_back({"alpha_vote", alpha});
    TrainConfig full_t = base;
    full_t.membership = Membership::FullTransmittance;
    arms.push_back({"transmittance_weights", full_t});
    TrainConfig project_first = base;
    project_first.blend = BlendMode::ProjectFirst;
    arms.push_back({"project_first", project_first});
    return arms;
}

std::vector<AblationRow> run_ablation(const Dataset &dataset, const std::vector<AblationArm> &arms) {
    std::vector<AblationRow> rows;
    const ClusterParams params = ClusterParams::defaults_for(dataset.scene.diagonal());
    for (const auto &arm : arms) {
        const TrainResult tr = train(dataset.scene, make_training_data(dataset, arm.config), arm.config);
        AblationRow row;
        row.name = arm.name;
        const VoteErrorReport ve = vote_error(tr.scene, arm.config.level);
        row.vote_error_mean = ve.mean;
        row.within_tolerance = ve.within_tolerance;
        const auto maps = build_vote_maps(dataset.level_masks(arm.config.level), dataset.border_margin);
        row.depth_spread = vote_depth_spread(tr.scene, dataset.rig, maps, arm.config.level);
        row.ari = instance_ari(tr.scene, cluster_scene(tr.scene, params, arm.config.level));
        const std::size_t tail = std::min<std::size_t>(50, tr.log.size());
        double s = 0.0;
        for (std::size_t k = tr.log.size() - tail; k < tr.log.size(); ++k) {
            s += tr.log[k].total;
        }
        row.final_loss = s / static_cast<double>(tail);
        rows.push_back(row);
    }
    return rows;
}

void write_ablation_csv(const std::vector<AblationRow> &rows, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "arm,vote_error_mean,within_tolerance,depth_spread,ari,final_loss\n";
    char line[256];
    for (const auto &r : rows) {
        std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.name.c_str(), r.vote_error_mean,
                      r.within_tolerance, r.depth_spread, r.ari, r.final_loss);
        out << line;
    }
}

std::string format_ablation_table(const std::vector<AblationRow> &rows) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-24s %12s %10s %12s %8s %12s\n", "arm", "vote_err", "within", "depth_spread",
                  "ari", "final_loss");
    out << line;
    for (const auto &r : rows) {
        std::snprintf(line, sizeof(line), "%-24s %12.6f %10.4f %12.6f %8.4f %12.6f\n", r.name.c_str(),
                      r.vote_error_mean, r.within_tolerance, r.depth_spread, r.ari, r.final_loss);
        out << line;
    }
    return out.str();
}

} // namespace votesplat
