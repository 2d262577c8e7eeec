// Command-line driver: dataset generation, rendering, training, clustering,
// feature association, queries, evaluation and ablation sweeps.

#include "votesplat/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

using namespace votesplat;
namespace fs = std::filesystem;

namespace {

void report_error(const std::string &kind, const std::string &message) {
    json::Json e;
    e["error"] = kind;
    e["message"] = message;
    std::cerr << e.dump() << "\n";
}

std::string view_name(std::size_t view, const char *suffix) {
    char name[64];
    std::snprintf(name, sizeof(name), "view_%03zu_%s", view, suffix);
    return name;
}

ImageF to_plane(const ImageD &image) {
    ImageF plane(image.width, image.height, image.channels);
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        plane.data[i] = static_cast<float>(image.data[i]);
    }
    return plane;
}

FeatureVector parse_vector(const std::string &text) {
    std::vector<double> values;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception &) {
            throw ValidationError("--vector: '" + item + "' is not a number");
        }
    }
    if (values.empty()) {
        throw ValidationError("--vector is empty");
    }
    return Eigen::Map<const FeatureVector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

struct TrainFlags {
    std::optional<int> steps;
    std::optional<std::string> optimizer;
    std::optional<double> lr_offset, lr_color, lr_opacity, lr_final_ratio;
    std::optional<int> views_per_step, level;
    std::optional<double> lambda_vote, lambda_depth, lambda_dssim;
    std::optional<std::string> depth_variant, blend, membership;
    std::optional<std::vector<std::string>> trainable;
    std::optional<int> checkpoint_every;
    std::optional<std::string> checkpoint_dir;
    bool raw_depth_sum = false;
    bool no_depth_loss = false;
    bool alpha_vote = false;
    bool project_first = false;
    bool transmittance_weights = false;

    void add_to(CLI::App *cmd) {
        cmd->add_option("--steps", steps, "Training steps");
        cmd->add_option("--optimizer", optimizer, "adam or sgd");
        cmd->add_option("--lr-offset", lr_offset, "Offset learning rate (default 1e-3 * scene diagonal)");
        cmd->add_option("--lr-color", lr_color, "Color learning rate");
        cmd->add_option("--lr-opacity", lr_opacity, "Opacity learning rate");
        cmd->add_option("--lr-final-ratio", lr_final_ratio, "Final learning-rate fraction");
        cmd->add_option("--views-per-step", views_per_step, "Views per step");
        cmd->add_option("--level", level, "Hierarchy level to train");
        cmd->add_option("--lambda-vote", lambda_vote, "Vote loss weight");
        cmd->add_option("--lambda-depth", lambda_depth, "Depth distortion weight");
        cmd->add_option("--lambda-dssim", lambda_dssim, "D-SSIM share of the color loss");
        cmd->add_option("--depth-variant", depth_variant, "unweighted or weighted");
        cmd->add_option("--blend", blend, "uniform, alpha or project-first");
        cmd->add_option("--membership", membership, "voting or full");
        cmd->add_option("--trainable", trainable, "Subset of offset, color, opacity")->delimiter(',');
        cmd->add_option("--checkpoint-every", checkpoint_every, "Checkpoint period in steps (0 = off)");
        cmd->add_option("--checkpoint-dir", checkpoint_dir, "Checkpoint directory");
        cmd->add_flag("--raw-depth-sum", raw_depth_sum, "Do not normalize depth distortion by the pair count");
        cmd->add_flag("--no-depth-loss", no_depth_loss, "Ablation: drop the depth distortion term");
        cmd->add_flag("--alpha-vote", alpha_vote, "Ablation: alpha-blended votes");
        cmd->add_flag("--project-first", project_first, "Diagnostic: project votes before blending");
        cmd->add_flag("--use-transmittance-weights", transmittance_weights,
                      "Ablation: every contributing splat votes");
    }

    TrainConfig apply(TrainConfig c) const {
        json::Json j;
        j["version"] = kConfigVersion;
        if (steps) j["steps"] = *steps;
        if (optimizer) j["optimizer"] = *optimizer;
        if (lr_offset) j["lr_offset"] = *lr_offset;
        if (lr_color) j["lr_color"] = *lr_color;
        if (lr_opacity) j["lr_opacity"] = *lr_opacity;
        if (lr_final_ratio) j["lr_final_ratio"] = *lr_final_ratio;
        if (views_per_step) j["views_per_step"] = *views_per_step;
        if (level) j["level"] = *level;
        if (lambda_vote) j["lambda_vote"] = *lambda_vote;
        if (lambda_depth) j["lambda_depth"] = *lambda_depth;
        if (lambda_dssim) j["lambda_dssim"] = *lambda_dssim;
        if (depth_variant) j["depth_variant"] = *depth_variant;
        if (blend) j["blend"] = *blend;
        if (membership) j["membership"] = *membership;
        if (trainable) j["trainable"] = *trainable;
        if (checkpoint_every) j["checkpoint_every"] = *checkpoint_every;
        if (checkpoint_dir) j["checkpoint_dir"] = *checkpoint_dir;
        if (raw_depth_sum) j["raw_depth_sum"] = true;
        c = parse_train_config(j, "command line", std::move(c));
        if (no_depth_loss) c.lambda_depth = 0.0;
        if (alpha_vote) c.blend = BlendMode::AlphaVote;
        if (project_first) c.blend = BlendMode::ProjectFirst;
        if (transmittance_weights) c.membership = Membership::FullTransmittance;
        if (alpha_vote && project_first) {
            throw ValidationError("--alpha-vote and --project-first are exclusive");
        }
        return c;
    }
};

CameraRig rig_from(const std::optional<std::string> &cameras, const std::optional<std::string> &dataset) {
    if (cameras) {
        return load_cameras(*cameras);
    }
    if (dataset) {
        return load_cameras(fs::path(*dataset) / "cameras.json");
    }
    throw ValidationError("either --cameras or --dataset is required");
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"votesplat: instance voting on Gaussian splats"};
    app.require_subcommand(1);
    unsigned threads = 0;
    std::optional<std::uint64_t> seed;
    app.add_option("--threads", threads, "Worker thread cap (0 = hardware default)");
    app.add_option("--seed", seed, "Seed for every randomized step of the subcommand");

    // gen
    auto *gen = app.add_subcommand("gen", "Generate a synthetic dataset from a spec JSON");
    std::string gen_spec, gen_out;
    gen->add_option("--spec", gen_spec, "Dataset spec JSON")->required();
    gen->add_option("--out", gen_out, "Output directory")->required();

    // render
    auto *ren = app.add_subcommand("render", "Render color, vote, id and depth planes");
    std::string ren_scene, ren_out, ren_mode = "all", ren_blend = "uniform";
    std::optional<std::string> ren_cameras, ren_dataset;
    std::optional<std::size_t> ren_view;
    int ren_level = 0;
    ren->add_option("--scene", ren_scene, "Scene manifest")->required();
    ren->add_option("--cameras", ren_cameras, "Cameras JSON");
    ren->add_option("--dataset", ren_dataset, "Dataset directory (for its cameras)");
    ren->add_option("--out", ren_out, "Output directory")->required();
    ren->add_option("--mode", ren_mode, "color, votes, instance_ids or all");
    ren->add_option("--blend", ren_blend, "uniform, alpha or project-first");
    ren->add_option("--level", ren_level, "Hierarchy level");
    ren->add_option("--view", ren_view, "Render only this view");

    // votes2d
    auto *v2d = app.add_subcommand("votes2d", "Build cached 2D vote maps from label masks");
    std::string v2d_dataset, v2d_out;
    int v2d_level = 0;
    std::optional<int> v2d_margin;
    v2d->add_option("--dataset", v2d_dataset, "Dataset directory")->required();
    v2d->add_option("--out", v2d_out, "Output directory")->required();
    v2d->add_option("--level", v2d_level, "Hierarchy level");
    v2d->add_option("--border-margin", v2d_margin, "Drop segments within this many pixels of the border");

    // train
    auto *trn = app.add_subcommand("train", "Train offsets (and appearance) on a dataset");
    std::string trn_dataset, trn_out;
    std::optional<std::string> trn_config, trn_csv, trn_votes;
    std::optional<int> trn_margin;
    TrainFlags trn_flags;
    trn->add_option("--dataset", trn_dataset, "Dataset directory")->required();
    trn->add_option("--config", trn_config, "Training config JSON");
    trn->add_option("--out", trn_out, "Trained scene manifest")->required();
    trn->add_option("--loss-csv", trn_csv, "Loss log CSV");
    trn->add_option("--votes", trn_votes, "Cached vote maps from votes2d");
    trn->add_option("--border-margin", trn_margin, "Override the dataset's border margin");
    trn_flags.add_to(trn);

    // cluster
    auto *clu = app.add_subcommand("cluster", "Cluster trained votes into instances");
    std::string clu_scene, clu_table, clu_out;
    std::optional<std::string> clu_config;
    std::optional<double> clu_eps, clu_bg;
    std::optional<int> clu_min, clu_level;
    clu->add_option("--scene", clu_scene, "Trained scene manifest")->required();
    clu->add_option("--table", clu_table, "Instance table JSON to write")->required();
    clu->add_option("--out", clu_out, "Labeled scene manifest to write")->required();
    clu->add_option("--config", clu_config, "Cluster config JSON");
    clu->add_option("--eps", clu_eps, "Neighborhood radius (default 5% of scene diagonal)");
    clu->add_option("--min-pts", clu_min, "Core point threshold");
    clu->add_option("--background-eps", clu_bg, "Offset norm at or below which a Gaussian is background");
    clu->add_option("--level", clu_level, "Hierarchy level");

    // associate
    auto *asc = app.add_subcommand("associate", "Build the instance feature bank");
    std::string asc_scene, asc_table, asc_dataset, asc_out;
    std::optional<std::string> asc_planes;
    asc->add_option("--scene", asc_scene, "Labeled scene manifest")->required();
    asc->add_option("--table", asc_table, "Instance table JSON")->required();
    asc->add_option("--dataset", asc_dataset, "Dataset directory")->required();
    asc->add_option("--feature-planes", asc_planes, "Directory of per-view feature planes view_NNN_features.vspl");
    asc->add_option("--out", asc_out, "Feature bank JSON")->required();

    // query
    auto *qry = app.add_subcommand("query", "Rank instances by feature similarity and render selections");
    std::string qry_bank, qry_scene, qry_table;
    std::optional<std::string> qry_vector, qry_dataset, qry_cameras, qry_out;
    std::optional<int> qry_label;
    std::optional<double> qry_threshold;
    qry->add_option("--bank", qry_bank, "Feature bank JSON")->required();
    qry->add_option("--scene", qry_scene, "Labeled scene manifest")->required();
    qry->add_option("--table", qry_table, "Instance table JSON")->required();
    qry->add_option("--dataset", qry_dataset, "Dataset directory");
    qry->add_option("--cameras", qry_cameras, "Cameras JSON");
    qry->add_option("--vector", qry_vector, "Comma-separated query vector");
    qry->add_option("--label", qry_label, "Use the dataset's synthetic feature of this mask label");
    qry->add_option("--threshold", qry_threshold, "Select all instances scoring at least this");
    qry->add_option("--out", qry_out, "Directory for selection mask PNGs");

    // pick
    auto *pck = app.add_subcommand("pick", "Report the instance under a pixel, optionally removing it");
    std::string pck_scene;
    std::optional<std::string> pck_dataset, pck_cameras, pck_remove;
    std::size_t pck_view = 0;
    int pck_x = 0, pck_y = 0;
    pck->add_option("--scene", pck_scene, "Labeled scene manifest")->required();
    pck->add_option("--dataset", pck_dataset, "Dataset directory");
    pck->add_option("--cameras", pck_cameras, "Cameras JSON");
    pck->add_option("--view", pck_view, "View index")->required();
    pck->add_option("--x", pck_x, "Pixel column")->required();
    pck->add_option("--y", pck_y, "Pixel row")->required();
    pck->add_option("--remove", pck_remove, "Write the scene without the picked instance here");

    // eval
    auto *evl = app.add_subcommand("eval", "Compute metrics against the dataset's ground truth");
    std::string evl_scene, evl_table, evl_dataset, evl_out;
    std::optional<std::string> evl_bank;
    evl->add_option("--scene", evl_scene, "Labeled scene manifest")->required();
    evl->add_option("--table", evl_table, "Instance table JSON")->required();
    evl->add_option("--dataset", evl_dataset, "Dataset directory")->required();
    evl->add_option("--bank", evl_bank, "Feature bank JSON (adds retrieval metrics)");
    evl->add_option("--out", evl_out, "Metrics JSON")->required();

    // ablate
    auto *abl = app.add_subcommand("ablate", "Run the paired ablation arms and compare");
    std::string abl_dataset, abl_out;
    std::optional<std::string> abl_config;
    TrainFlags abl_flags;
    abl->add_option("--dataset", abl_dataset, "Dataset directory")->required();
    abl->add_option("--config", abl_config, "Base training config JSON");
    abl->add_option("--out", abl_out, "Output directory")->required();
    abl_flags.add_to(abl);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        report_error("usage", e.what());
        return 2;
    }

    try {
        set_thread_limit(threads);

        if (*gen) {
            DatasetSpec spec = load_dataset_spec(gen_spec);
            if (seed) {
                spec.scene.seed = *seed;
            }
            const Dataset d = generate_dataset(spec);
            save_dataset(d, gen_out);
            std::cout << "wrote " << d.scene.size() << " Gaussians, " << d.rig.size() << " views to " << gen_out
                      << "\n";
        } else if (*ren) {
            const Scene scene = load_scene(ren_scene);
            const CameraRig rig = rig_from(ren_cameras, ren_dataset);
            RenderOptions opts;
            opts.mode = render_mode_from_string(ren_mode);
            opts.blend = blend_mode_from_string(ren_blend);
            opts.level = ren_level;
            opts.keep_records = true;
            fs::create_directories(ren_out);
            for (std::size_t v = 0; v < rig.size(); ++v) {
                if (ren_view && *ren_view != v) {
                    continue;
                }
                const RenderOutput out = render(scene, rig[v], opts);
                const fs::path dir(ren_out);
                write_png(dir / view_name(v, "color.png"), out.color);
                write_float_plane(dir / view_name(v, "alpha.vspl"), to_plane(out.alpha));
                if (!out.vote3d.data.empty()) {
                    write_float_plane(dir / view_name(v, "vote3d.vspl"), to_plane(out.vote3d));
                    write_float_plane(dir / view_name(v, "vote2d.vspl"), to_plane(out.vote2d));
                    ImageD depth(out.width, out.height, 1, std::numeric_limits<double>::quiet_NaN());
                    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
                        const auto z = out.depths_at(p);
                        if (!z.empty()) {
                            depth.data[p] = pairwise_sum(z) / static_cast<double>(z.size());
                        }
                    }
                    write_float_plane(dir / view_name(v, "depth.vspl"), to_plane(depth));
                }
                if (!out.instance_ids.data.empty()) {
                    ImageF ids(out.width, out.height, 1);
                    for (std::size_t p = 0; p < ids.data.size(); ++p) {
                        ids.data[p] = static_cast<float>(out.instance_ids.data[p]);
                    }
                    write_float_plane(dir / view_name(v, "ids.vspl"), ids);
                }
            }
        } else if (*v2d) {
            const Dataset d = load_dataset(v2d_dataset);
            const int margin = v2d_margin.value_or(d.border_margin);
            if (margin < 0) {
                throw ValidationError("--border-margin must be non-negative");
            }
            fs::create_directories(v2d_out);
            const auto maps = build_vote_maps(d.level_masks(v2d_level), margin);
            std::size_t supervised = 0;
            for (std::size_t v = 0; v < maps.size(); ++v) {
                save_vote_map(maps[v], vote_map_path(v2d_out, v, v2d_level));
                supervised += maps[v].supervised.size();
            }
            std::cout << "wrote " << maps.size() << " vote maps, " << supervised << " supervised pixels\n";
        } else if (*trn) {
            Dataset d = load_dataset(trn_dataset);
            TrainConfig config = trn_config ? load_train_config(*trn_config) : TrainConfig{};
            config = trn_flags.apply(config);
            if (seed) {
                config.seed = *seed;
            }
            if (trn_margin) {
                d.border_margin = *trn_margin;
            }
            TrainingData data = make_training_data(d, config);
            if (trn_votes) {
                for (std::size_t v = 0; v < data.vote_maps.size(); ++v) {
                    data.vote_maps[v] = load_vote_map(vote_map_path(*trn_votes, v, config.level));
                }
            }
            const TrainResult result = train(d.scene, data, config);
            save_scene(result.scene, trn_out);
            if (trn_csv) {
                write_loss_csv(result.log, *trn_csv);
            }
            const auto &last = result.log.back();
            std::cout << "trained " << config.steps << " steps, final total loss " << last.total << "\n";
        } else if (*clu) {
            Scene scene = load_scene(clu_scene);
            ClusterParams params = ClusterParams::defaults_for(scene.diagonal());
            if (clu_config) {
                params = parse_cluster_params(json::read_file(*clu_config), *clu_config, params);
            }
            if (clu_eps) params.eps = *clu_eps;
            if (clu_min) params.min_pts = *clu_min;
            if (clu_bg) params.background_eps = *clu_bg;
            const InstanceTable table = cluster_scene(scene, params, clu_level.value_or(0));
            apply_instance_table(scene, table);
            save_instance_table(table, clu_table);
            save_scene(scene, clu_out);
            std::cout << table.instances.size() << " instances, " << table.noise.size() << " noise, "
                      << table.background.size() << " background\n";
        } else if (*asc) {
            const Scene scene = load_scene(asc_scene);
            const InstanceTable table = load_instance_table(asc_table);
            const Dataset d = load_dataset(asc_dataset);
            FeatureBank bank;
            if (asc_planes) {
                std::vector<fs::path> planes;
                for (std::size_t v = 0; v < d.rig.size(); ++v) {
                    planes.push_back(fs::path(*asc_planes) / view_name(v, "features.vspl"));
                }
                bank = associate_features(scene, table, d.rig, PlaneFeatureSource(planes));
            } else {
                const std::uint64_t fseed = seed.value_or(d.feature_seed);
                bank = associate_features(scene, table, d.rig,
                                          SyntheticFeatureSource(d.level_masks(0), d.feature_dim, fseed));
            }
            save_feature_bank(bank, asc_out);
            std::cout << bank.features.size() << " instance features, " << bank.missing.size() << " missing\n";
        } else if (*qry) {
            const FeatureBank bank = load_feature_bank(qry_bank);
            const Scene scene = load_scene(qry_scene);
            const InstanceTable table = load_instance_table(qry_table);
            const CameraRig rig = rig_from(qry_cameras, qry_dataset);
            FeatureVector q;
            if (qry_vector && qry_label) {
                throw ValidationError("--vector and --label are exclusive");
            }
            if (qry_vector) {
                q = parse_vector(*qry_vector);
            } else if (qry_label) {
                if (!qry_dataset) {
                    throw ValidationError("--label needs --dataset");
                }
                const Dataset d = load_dataset(*qry_dataset);
                q = SyntheticFeatureSource(d.level_masks(0), d.feature_dim, seed.value_or(d.feature_seed))
                        .label_feature(*qry_label);
            } else {
                throw ValidationError("one of --vector or --label is required");
            }
            QueryOptions opts;
            opts.threshold = qry_threshold;
            opts.render_masks = qry_out.has_value();
            const QueryResult r = query(bank, q, scene, table, rig, opts);
            std::printf("%-6s %-10s %s\n", "rank", "instance", "score");
            for (std::size_t k = 0; k < r.ranked.size(); ++k) {
                std::printf("%-6zu %-10d %.6f\n", k + 1, r.ranked[k].first, r.ranked[k].second);
            }
            if (qry_out) {
                fs::create_directories(*qry_out);
                for (std::size_t v = 0; v < r.masks.size(); ++v) {
                    ImageD img(r.masks[v].width, r.masks[v].height, 1);
                    for (std::size_t p = 0; p < img.data.size(); ++p) {
                        img.data[p] = r.masks[v].data[p];
                    }
                    write_png(fs::path(*qry_out) / view_name(v, "selection.png"), img);
                }
            }
        } else if (*pck) {
            const Scene scene = load_scene(pck_scene);
            const CameraRig rig = rig_from(pck_cameras, pck_dataset);
            const int id = pick(scene, rig, pck_view, pck_x, pck_y);
            std::cout << id << "\n";
            if (pck_remove) {
                if (id < 0) {
                    throw ValidationError("no instance under the picked pixel");
                }
                save_scene(scene.without_cluster(id), *pck_remove);
            }
        } else if (*evl) {
            const Scene scene = load_scene(evl_scene);
            const InstanceTable table = load_instance_table(evl_table);
            const Dataset d = load_dataset(evl_dataset);
            std::optional<FeatureBank> bank;
            if (evl_bank) {
                bank = load_feature_bank(*evl_bank);
            }
            const json::Json m = metrics_json(scene, table, d, table.level, bank ? &*bank : nullptr);
            json::write_file(evl_out, m);
            std::cout << "ari " << m["ari"].get<double>() << ", vote error " << m["vote_error"]["mean"].get<double>()
                      << "\n";
        } else if (*abl) {
            const Dataset d = load_dataset(abl_dataset);
            TrainConfig base = abl_config ? load_train_config(*abl_config) : TrainConfig{};
            base = abl_flags.apply(base);
            if (seed) {
                base.seed = *seed;
            }
            const auto rows = run_ablation(d, standard_ablation_arms(base));
            fs::create_directories(abl_out);
            write_ablation_csv(rows, fs::path(abl_out) / "ablation.csv");
            std::cout << format_ablation_table(rows);
        }
    } catch (const ParseError &e) {
        report_error("parse", e.what());
        return 3;
    } catch (const IoError &e) {
        report_error("io", e.what());
        return 4;
    } catch (const ValidationError &e) {
        report_error("validation", e.what());
        return 2;
    } catch (const TrainingError &e) {
        report_error("training", e.what());
        return 5;
    } catch (const std::exception &e) {
        report_error("internal", e.what());
        return 1;
    }
    return 0;
}
