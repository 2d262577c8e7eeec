// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any fails.

#include "support/oracles.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

using namespace votesplat;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = VOTESPLAT_CONFIG_DIR;

// Pinned tolerances.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradFloor = 1e-8;
constexpr double kConvergedFraction = 0.95;
constexpr double kVoteTolerance = 0.10;
constexpr double kAriFloor = 0.99;
constexpr double kSpreadRatio = 0.5;
constexpr double kOcclusionRelDiff = 0.01;
constexpr double kOwnScoreTol = 1e-6;
constexpr double kMiouFloor = 0.9;
constexpr double kRenderTol = 1e-5;
constexpr double kDepthTol = 1e-9;

struct Verdict {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char *format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), format, args...);
    return buf;
}

// Gradient gate -------------------------------------------------------------

Verdict gradient_gate() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240611);
    int scenes = 0, rejected = 0, checked = 0;
    double worst = 0.0;
    while (scenes < 20) {
        Scene scene = oracle::random_scene(rng, 10);
        const CameraRig rig = oracle::random_rig(rng, 2, 32);
        std::vector<VoteMap2D> maps;
        bool usable = true;
        std::uniform_real_distribution<double> shift(0.5, 3.0);
        std::bernoulli_distribution flip(0.5);
        for (const auto &view : rig) {
            const RenderOutput r = render(scene, view);
            // Targets sit at least half a pixel off the rendered vote on each axis,
            // so the L1 kinks stay far from the finite-difference stencil.
            VoteMap2D gt = empty_vote_map(r.width, r.height);
            for (std::size_t p = 0; p < r.pixel_count(); ++p) {
                const double u = r.vote2d.data[2 * p], v = r.vote2d.data[2 * p + 1];
                if (std::isnan(u)) {
                    continue;
                }
                gt.votes.data[2 * p] = u + (flip(rng) ? 1 : -1) * shift(rng);
                gt.votes.data[2 * p + 1] = v + (flip(rng) ? 1 : -1) * shift(rng);
                gt.supervised.push_back(p);
            }
            // Depth kinks: reject scenes where two members of a pixel vote at nearly equal depth.
            for (std::size_t p : gt.supervised) {
                const auto z = r.depths_at(p);
                for (std::size_t i = 0; i < z.size() && usable; ++i) {
                    for (std::size_t j = i + 1; j < z.size(); ++j) {
                        if (std::abs(z[i] - z[j]) < 1e-2) {
                            usable = false;
                            break;
                        }
                    }
                }
            }
            if (gt.supervised.empty()) {
                usable = false;
            }
            maps.push_back(std::move(gt));
        }
        if (!usable) {
            ++rejected;
            continue;
        }
        ++scenes;
        const double h = 1e-4 * scene.diagonal();
        const DepthLossOptions depth_opts;
        for (std::size_t v = 0; v < rig.size(); ++v) {
            const RenderOutput r = render(scene, rig[v]);
            const GradientBuffer gv = backward_vote(r, maps[v], scene, rig[v]);
            const GradientBuffer gd = backward_depth(r, maps[v], scene, rig[v], depth_opts);
            const auto fv = oracle::finite_difference(scene, 0, h, [&](const Scene &s) {
                return vote_loss(render(s, rig[v]), maps[v]).value;
            });
            const auto fd = oracle::finite_difference(scene, 0, h, [&](const Scene &s) {
                return depth_distortion(render(s, rig[v]), maps[v], depth_opts);
            });
            for (std::size_t i = 0; i < scene.size(); ++i) {
                for (int c = 0; c < 3; ++c) {
                    for (auto [a, f] : {std::pair{gv.offset[i][c], fv[i][c]}, std::pair{gd.offset[i][c], fd[i][c]}}) {
                        if (std::max(std::abs(a), std::abs(f)) <= kGradFloor) {
                            continue;
                        }
                        ++checked;
                        worst = std::max(worst, oracle::relative_error(a, f));
                    }
                }
            }
        }
    }
    const double secs = seconds_since(t0);
    return {worst < kGradRelTol && secs < 30.0 && checked > 0,
            fmt("20 scenes (%d rejected), %d coordinates, max rel err %.2e, %.1f s", rejected, checked, worst, secs)};
}

// Pipeline helpers ----------------------------------------------------------

Dataset dataset(const char *spec) { return generate_dataset(load_dataset_spec(kConfigs / spec)); }

TrainConfig train_config(const char *name) { return load_train_config(kConfigs / name); }

// Mean distance from the rendered vote3d to the instance center over supervised pixels.
std::vector<double> per_view_centroid_error(const Scene &scene, const Dataset &d, BlendMode blend) {
    const auto maps = build_vote_maps(d.level_masks(0), d.border_margin);
    const Vec3 center = d.scene.instances.at(0).center;
    RenderOptions opts;
    opts.mode = RenderMode::Votes;
    opts.blend = blend;
    std::vector<double> errors;
    for (std::size_t v = 0; v < d.rig.size(); ++v) {
        const RenderOutput out = render(scene, d.rig[v], opts);
        std::vector<double> dist;
        for (std::size_t p : maps[v].supervised) {
            const Vec3 x(out.vote3d.data[3 * p], out.vote3d.data[3 * p + 1], out.vote3d.data[3 * p + 2]);
            if (x.allFinite()) {
                dist.push_back((x - center).norm());
            }
        }
        errors.push_back(dist.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : pairwise_sum(dist) / static_cast<double>(dist.size()));
    }
    return errors;
}

// Criteria 2, 3 and 7 share one run of the full pipeline.
struct ThreeInstanceRun {
    PipelineResult result;
    double seconds = 0.0;
};

ThreeInstanceRun three_instance_run() {
    const auto t0 = Clock::now();
    const Dataset d = dataset("three_spheres.json");
    ThreeInstanceRun run{run_pipeline(d, train_config("train.json")), 0.0};
    run.seconds = seconds_since(t0);
    return run;
}

Verdict vote_convergence(const ThreeInstanceRun &run) {
    const auto ve = vote_error(run.result.training.scene, 0, kVoteTolerance);
    const int steps = static_cast<int>(run.result.training.log.size());
    return {ve.within_tolerance >= kConvergedFraction && steps <= 2000 && run.seconds < 300.0,
            fmt("%.1f%% of foreground votes within %.2f r (mean %.4f) after %d steps, %.1f s",
                100.0 * ve.within_tolerance, kVoteTolerance, ve.mean, steps, run.seconds)};
}

Verdict clustering_recovery(const ThreeInstanceRun &run) {
    const double a = instance_ari(run.result.clustered, run.result.table);
    const double bg = background_filtered_fraction(run.result.clustered, run.result.table);
    return {a >= kAriFloor && bg == 1.0,
            fmt("ARI %.4f, %zu clusters, background filtered %.1f%%", a, run.result.table.instances.size(),
                100.0 * bg)};
}

Verdict semantic_retrieval(const ThreeInstanceRun &run) {
    const Dataset d = dataset("three_spheres.json");
    const RetrievalReport r = evaluate_retrieval(run.result.clustered, run.result.table, run.result.bank, d);
    const bool pass = r.own_rank_first && r.own_score_max_deviation <= kOwnScoreTol && r.mean_iou >= kMiouFloor &&
                      r.macc == 1.0 && !r.ious.empty();
    return {pass, fmt("own rank 1: %s, max |score - 1| %.1e, mIoU %.4f, mAcc@0.25 %.3f over %zu masks",
                      r.own_rank_first ? "yes" : "no", r.own_score_max_deviation, r.mean_iou, r.macc, r.ious.size())};
}

// Depth regularization ------------------------------------------------------

Verdict depth_ablation() {
    const Dataset d = dataset("arc.json");
    const TrainConfig with = train_config("train_arc.json");
    TrainConfig without = with;
    without.lambda_depth = 0.0;
    const auto maps = build_vote_maps(d.level_masks(0), d.border_margin);
    const Scene a = train(d.scene, make_training_data(d, with), with).scene;
    const Scene b = train(d.scene, make_training_data(d, without), without).scene;
    const double sa = vote_depth_spread(a, d.rig, maps, 0);
    const double sb = vote_depth_spread(b, d.rig, maps, 0);
    return {sa <= kSpreadRatio * sb && sb > 0.0,
            fmt("spread with depth loss %.4f, without %.4f, ratio %.3f", sa, sb, sa / sb)};
}

// Blending ------------------------------------------------------------------

Verdict blending_ablation() {
    const Dataset d = dataset("ellipsoid.json");
    std::map<BlendMode, std::vector<double>> errors;
    for (BlendMode b : {BlendMode::UniformVote, BlendMode::AlphaVote, BlendMode::ProjectFirst}) {
        TrainConfig c = train_config("train_ellipsoid.json");
        c.blend = b;
        const Scene s = train(d.scene, make_training_data(d, c), c).scene;
        errors[b] = per_view_centroid_error(s, d, b);
    }
    const auto &u = errors[BlendMode::UniformVote];
    bool pass = true;
    double worst_alpha = 0.0, worst_pf = 0.0;
    for (std::size_t v = 0; v < u.size(); ++v) {
        const double ra = u[v] / errors[BlendMode::AlphaVote][v];
        const double rp = u[v] / errors[BlendMode::ProjectFirst][v];
        pass = pass && ra < 1.0 && rp < 1.0;
        worst_alpha = std::max(worst_alpha, ra);
        worst_pf = std::max(worst_pf, rp);
    }
    auto mean = [](const std::vector<double> &x) { return pairwise_sum(x) / static_cast<double>(x.size()); };
    return {pass, fmt("mean centroid error uniform %.3f, alpha %.3f, project-first %.3f; "
                      "worst per-view ratio uniform/alpha %.3f, uniform/project-first %.3f",
                      mean(u), mean(errors[BlendMode::AlphaVote]), mean(errors[BlendMode::ProjectFirst]), worst_alpha,
                      worst_pf)};
}

// Occlusion -----------------------------------------------------------------

Verdict occlusion_exclusion() {
    const Dataset d = dataset("occlusion.json");
    const int occluded = 1;
    const std::size_t view = 0;
    const TrainConfig c = train_config("train_occlusion.json");
    TrainingData with = make_training_data(d, c);
    TrainingData without = with;
    without.vote_maps[view] = empty_vote_map(d.rig[view].width, d.rig[view].height);

    auto b_in_members = [&](const Scene &s) {
        const RenderOutput r = render(s, d.rig[view]);
        std::size_t hits = 0;
        for (int id : r.members) {
            hits += s.gaussians[static_cast<std::size_t>(id)].instance_label == occluded;
        }
        return hits;
    };
    // B must be in the view's frustum and behind A, not simply off screen.
    std::size_t b_traced = 0;
    {
        const RenderOutput r = render(d.scene, d.rig[view]);
        for (int id : r.trace_ids) {
            b_traced += d.scene.gaussians[static_cast<std::size_t>(id)].instance_label == occluded;
        }
    }
    const Scene a = train(d.scene, with, c).scene;
    const Scene b = train(d.scene, without, c).scene;
    const std::size_t hits = b_in_members(d.scene) + b_in_members(a) + b_in_members(b);
    const auto ea = vote_error(a, 0).instances.at(occluded);
    const auto eb = vote_error(b, 0).instances.at(occluded);
    const double diff = std::abs(ea.within_tolerance - eb.within_tolerance) / std::max(eb.within_tolerance, 1e-12);
    const double mean_diff = std::abs(ea.mean - eb.mean) / eb.mean;
    return {hits == 0 && b_traced > 0 && diff < kOcclusionRelDiff && mean_diff < kOcclusionRelDiff,
            fmt("occluded-instance member hits %zu (%zu traced behind the occluder); within-tolerance %.4f vs "
                "%.4f, mean error %.5f vs %.5f",
                hits, b_traced, ea.within_tolerance, eb.within_tolerance, ea.mean, eb.mean)};
}

// Oracle equivalences -------------------------------------------------------

double max_abs_diff(const ImageD &a, const ImageD &b, bool &nan_mismatch) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const bool na = std::isnan(a.data[i]), nb = std::isnan(b.data[i]);
        if (na || nb) {
            nan_mismatch = nan_mismatch || na != nb;
            continue;
        }
        worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
    }
    return worst;
}

Verdict oracle_equivalences() {
    std::mt19937_64 rng(77);
    double render_worst = 0.0;
    bool nan_mismatch = false, members_match = true;
    const BlendMode modes[] = {BlendMode::UniformVote, BlendMode::AlphaVote, BlendMode::ProjectFirst};
    for (int k = 0; k < 10; ++k) {
        Scene scene = oracle::random_scene(rng, 150, 0.5);
        const CameraRig rig = oracle::random_rig(rng, 1, 70);
        RenderOptions opts;
        opts.blend = modes[k % 3];
        const RenderOutput fast = render(scene, rig[0], opts);
        const auto slow = oracle::render(scene, rig[0], opts.blend);
        for (const auto &[x, y] : {std::pair{&fast.color, &slow.color}, std::pair{&fast.alpha, &slow.alpha},
                                   std::pair{&fast.vote3d, &slow.vote3d}, std::pair{&fast.vote2d, &slow.vote2d}}) {
            render_worst = std::max(render_worst, max_abs_diff(*x, *y, nan_mismatch));
        }
        for (std::size_t p = 0; p < fast.pixel_count(); ++p) {
            const auto m = fast.members_at(p);
            members_match = members_match && std::equal(m.begin(), m.end(), slow.members[p].begin(), slow.members[p].end());
        }
    }

    double depth_worst = 0.0;
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::uniform_int_distribution<int> size(2, 64);
    for (int k = 0; k < 50; ++k) {
        std::vector<double> z(static_cast<std::size_t>(size(rng))), w(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] = u(rng);
            w[i] = u(rng) / 5.0;
        }
        if (k % 5 == 0) {
            z[1] = z[0];  // ties
        }
        depth_worst = std::max(depth_worst, std::abs(pair_abs_sum(z) - oracle::pair_loop(z)));
        depth_worst = std::max(depth_worst, std::abs(pair_abs_sum_weighted(z, w) - oracle::pair_loop_weighted(z, w)));
    }

    int dbscan_mismatch = 0;
    std::uniform_int_distribution<int> blobs(1, 5);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        std::vector<Vec3> pts;
        const int b = blobs(rng);
        for (int j = 0; j < b; ++j) {
            const Vec3 c(4.0 * n01(rng), 4.0 * n01(rng), 4.0 * n01(rng));
            const int count = 20 + static_cast<int>(rng() % 60);
            for (int i = 0; i < count; ++i) {
                pts.push_back(c + 0.4 * Vec3(n01(rng), n01(rng), n01(rng)));
            }
        }
        for (int i = 0; i < 30; ++i) {
            pts.push_back(Vec3(6.0 * n01(rng), 6.0 * n01(rng), 6.0 * n01(rng)));
        }
        std::shuffle(pts.begin(), pts.end(), rng);
        ClusterParams params;
        params.eps = 0.2 + 0.3 * std::abs(n01(rng));
        params.min_pts = 3 + static_cast<int>(rng() % 8);
        dbscan_mismatch += cluster_votes(pts, params) != oracle::dbscan(pts, params.eps, params.min_pts);
    }
    return {render_worst <= kRenderTol && !nan_mismatch && members_match && depth_worst <= kDepthTol &&
                dbscan_mismatch == 0,
            fmt("render max diff %.2e (NaN layout %s, members %s), depth max diff %.2e, DBSCAN mismatches %d/50",
                render_worst, nan_mismatch ? "differs" : "equal", members_match ? "equal" : "differ", depth_worst,
                dbscan_mismatch)};
}

// Determinism ---------------------------------------------------------------

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict determinism() {
    const fs::path root = fs::temp_directory_path() / "votesplat_acceptance_determinism";
    fs::remove_all(root);
    const Dataset d = dataset("occlusion.json");
    std::vector<std::map<std::string, std::string>> runs;
    for (unsigned threads : {1u, 4u}) {
        set_thread_limit(threads);
        const fs::path dir = root / ("run" + std::to_string(threads));
        TrainConfig c = train_config("train_occlusion.json");
        c.steps = 200;
        c.checkpoint_every = 100;
        c.checkpoint_dir = dir / "checkpoints";
        const PipelineResult r = run_pipeline(d, c);
        save_instance_table(r.table, dir / "instances.json");
        json::write_file(dir / "metrics.json", r.metrics);
        std::map<std::string, std::string> files;
        for (const auto &e : fs::recursive_directory_iterator(dir)) {
            if (e.is_regular_file()) {
                files[fs::relative(e.path(), dir).string()] = slurp(e.path());
            }
        }
        runs.push_back(std::move(files));
    }
    set_thread_limit(0);
    const bool same = runs[0] == runs[1];
    fs::remove_all(root);
    return {same && runs[0].size() >= 6,
            fmt("%zu files compared (checkpoints, instance table, metrics), one vs four threads: %s",
                runs[0].size(), same ? "byte-identical" : "differ")};
}

} // namespace

// Optional arguments restrict the run to the listed criterion numbers.
int main(int argc, char **argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        only.insert(std::atoi(argv[i]));
    }
    auto wanted = [&](int id) { return only.empty() || only.count(id) > 0; };
    int failures = 0, ran = 0;
    auto report = [&](int id, const char *name, const Verdict &v) {
        std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
        std::fflush(stdout);
        failures += !v.pass;
    };
    auto guarded = [&](int id, const char *name, auto &&fn) {
        if (!wanted(id)) {
            return;
        }
        ++ran;
        try {
            report(id, name, fn());
        } catch (const std::exception &e) {
            report(id, name, Verdict{false, std::string("exception: ") + e.what()});
        }
    };

    guarded(1, "gradient gate", gradient_gate);
    std::optional<ThreeInstanceRun> run;
    try {
        if (wanted(2) || wanted(3) || wanted(7)) {
            run = three_instance_run();
        }
    } catch (const std::exception &e) {
        std::printf("three-instance pipeline failed: %s\n", e.what());
    }
    guarded(2, "vote convergence", [&] { return run ? vote_convergence(*run) : Verdict{false, "no run"}; });
    guarded(3, "clustering recovery", [&] { return run ? clustering_recovery(*run) : Verdict{false, "no run"}; });
    guarded(4, "depth regularization", depth_ablation);
    guarded(5, "blending", blending_ablation);
    guarded(6, "occlusion exclusion", occlusion_exclusion);
    guarded(7, "semantic retrieval", [&] { return run ? semantic_retrieval(*run) : Verdict{false, "no run"}; });
    guarded(8, "oracle equivalences", oracle_equivalences);
    guarded(9, "determinism", determinism);
    std::printf("%d of %d criteria passed\n", ran - failures, ran);
    return failures == 0 ? 0 : 1;
}
