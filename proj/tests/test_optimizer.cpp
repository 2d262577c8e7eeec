#include "support/oracles.hpp"
#include "support/test_util.hpp"

#include <random>

using namespace votesplat;
using votesplat::testing::identity_camera;
using votesplat::testing::scene_of;
using votesplat::testing::splat;
using votesplat::testing::TempDir;

namespace {

// Supervises every pixel with a voting set, targets well away from the rendered votes.
VoteMap2D offset_targets(std::mt19937_64 &rng, const RenderOutput &r) {
    std::uniform_real_distribution<double> shift(0.5, 3.0);
    std::bernoulli_distribution flip(0.5);
    VoteMap2D gt = empty_vote_map(r.width, r.height);
    for (std::size_t p = 0; p < r.pixel_count(); ++p) {
        if (std::isnan(r.vote2d.data[2 * p])) {
            continue;
        }
        for (int c = 0; c < 2; ++c) {
            gt.votes.data[2 * p + c] = r.vote2d.data[2 * p + c] + (flip(rng) ? 1 : -1) * shift(rng);
        }
        gt.supervised.push_back(p);
    }
    return gt;
}

bool depth_ties(const RenderOutput &r, const VoteMap2D &gt) {
    for (std::size_t p : gt.supervised) {
        const auto z = r.depths_at(p);
        for (std::size_t i = 0; i < z.size(); ++i) {
            for (std::size_t j = i + 1; j < z.size(); ++j) {
                if (std::abs(z[i] - z[j]) < 1e-2) {
                    return true;
                }
            }
        }
    }
    return false;
}

void expect_gradients_match(const std::vector<Vec3> &analytic, const std::vector<Vec3> &fd) {
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const double a = analytic[i][c], f = fd[i][c];
            if (std::max(std::abs(a), std::abs(f)) <= 1e-8) {
                continue;
            }
            EXPECT_LT(oracle::relative_error(a, f), 1e-4) << "gaussian " << i << " axis " << c << ": " << a << " vs " << f;
        }
    }
}

struct GradCase {
    BlendMode blend;
    Membership membership;
    DepthVariant depth;
    bool normalize;
};

class GradientCheck : public ::testing::TestWithParam<GradCase> {};

} // namespace

TEST_P(GradientCheck, VoteAndDepthMatchFiniteDifferences) {
    const GradCase gc = GetParam();
    std::mt19937_64 rng(1234);
    int done = 0;
    while (done < 6) {
        const Scene scene = oracle::random_scene(rng, 5);
        const CameraView view = oracle::random_rig(rng, 1, 32)[0];
        RenderOptions opts;
        opts.blend = gc.blend;
        opts.membership = gc.membership;
        const RenderOutput r = render(scene, view, opts);
        const VoteMap2D gt = offset_targets(rng, r);
        if (gt.supervised.empty() || depth_ties(r, gt)) {
            continue;
        }
        ++done;
        DepthLossOptions depth;
        depth.variant = gc.depth;
        depth.normalize_pairs = gc.normalize;
        const double h = 1e-4 * scene.diagonal();
        const auto fv = oracle::finite_difference(scene, 0, h, [&](const Scene &s) {
            return vote_loss(render(s, view, opts), gt).value;
        });
        expect_gradients_match(backward_vote(r, gt, scene, view).offset, fv);
        const auto fd = oracle::finite_difference(scene, 0, h, [&](const Scene &s) {
            return depth_distortion(render(s, view, opts), gt, depth);
        });
        expect_gradients_match(backward_depth(r, gt, scene, view, depth).offset, fd);
    }
}

INSTANTIATE_TEST_SUITE_P(
    Modes, GradientCheck,
    ::testing::Values(GradCase{BlendMode::UniformVote, Membership::VotingTransmittance, DepthVariant::Unweighted, true},
                      GradCase{BlendMode::UniformVote, Membership::VotingTransmittance, DepthVariant::Weighted, true},
                      GradCase{BlendMode::UniformVote, Membership::VotingTransmittance, DepthVariant::Unweighted, false},
                      GradCase{BlendMode::UniformVote, Membership::FullTransmittance, DepthVariant::Unweighted, true},
                      GradCase{BlendMode::AlphaVote, Membership::VotingTransmittance, DepthVariant::Unweighted, true},
                      GradCase{BlendMode::ProjectFirst, Membership::VotingTransmittance, DepthVariant::Unweighted,
                               true}),
    [](const ::testing::TestParamInfo<GradCase> &info) {
        std::string name = to_string(info.param.blend) + "_" + to_string(info.param.membership) + "_" +
                           to_string(info.param.depth) + (info.param.normalize ? "_normalized" : "_raw");
        for (char &c : name) {
            if (!std::isalnum(static_cast<unsigned char>(c))) {
                c = '_';
            }
        }
        return name;
    });

TEST(BackwardVote, ZeroResidualGivesZeroGradient) {
    std::mt19937_64 rng(2);
    const Scene scene = oracle::random_scene(rng, 8);
    const CameraView view = oracle::random_rig(rng, 1, 32)[0];
    const RenderOutput r = render(scene, view);
    VoteMap2D gt = empty_vote_map(r.width, r.height);
    gt.votes = r.vote2d;
    for (std::size_t p = 0; p < r.pixel_count(); ++p) {
        if (!std::isnan(r.vote2d.data[2 * p])) {
            gt.supervised.push_back(p);
        }
    }
    ASSERT_FALSE(gt.supervised.empty());
    for (const auto &g : backward_vote(r, gt, scene, view).offset) {
        EXPECT_EQ(g, Vec3::Zero());
    }
}

TEST(BackwardVote, SingleSplatSinglePixel) {
    const CameraView view = identity_camera(9, 9, 20.0, 4.5, 4.5);
    GaussianPrimitive g = splat(Vec3(0, 0, 2), 1e-4, 1.0);
    g.offsets[0] = Vec3(0.05, 0.02, 0.3);
    const Scene scene = scene_of({g});
    const RenderOutput r = render(scene, view);
    VoteMap2D gt = empty_vote_map(9, 9);
    const std::size_t p = 4 * 9 + 4;
    gt.supervised = {p};
    gt.votes.data[2 * p] = r.vote2d.data[2 * p] - 2.0;   // residual +
    gt.votes.data[2 * p + 1] = r.vote2d.data[2 * p + 1] + 1.0;  // residual -
    const Vec3 expect = screen_jacobian(view, g.vote(0)).transpose() * Vec2(1.0, -1.0);
    EXPECT_NEAR((backward_vote(r, gt, scene, view).offset[0] - expect).norm(), 0.0, 1e-12);
}

TEST(BackwardDepth, EqualDepthsGiveZeroGradient) {
    const CameraView view = identity_camera(9, 9, 20.0, 4.5, 4.5);
    GaussianPrimitive a = splat(Vec3(0, 0, 2), 1e-4, 0.3), b = splat(Vec3(0, 0, 3), 1e-4, 0.3);
    a.offsets[0] = Vec3(0, 0, 2);
    b.offsets[0] = Vec3(0, 0, 1);
    const Scene scene = scene_of({a, b});
    const RenderOutput r = render(scene, view);
    VoteMap2D gt = empty_vote_map(9, 9);
    gt.supervised = {4 * 9 + 4};
    gt.votes.data[2 * gt.supervised[0]] = 1.0;
    gt.votes.data[2 * gt.supervised[0] + 1] = 1.0;
    for (const auto &g : backward_depth(r, gt, scene, view, {}).offset) {
        EXPECT_EQ(g, Vec3::Zero());
    }
}

TEST(BackwardDepth, TwoPointsArePulledTogether) {
    const CameraView view = identity_camera(9, 9, 20.0, 4.5, 4.5);
    GaussianPrimitive a = splat(Vec3(0, 0, 2), 1e-4, 0.3), b = splat(Vec3(0, 0, 3), 1e-4, 0.3);
    b.offsets[0] = Vec3(0, 0, 1);  // vote depths {2, 4}
    const Scene scene = scene_of({a, b});
    const RenderOutput r = render(scene, view);
    VoteMap2D gt = empty_vote_map(9, 9);
    gt.supervised = {4 * 9 + 4};
    gt.votes.data[2 * gt.supervised[0]] = 1.0;
    gt.votes.data[2 * gt.supervised[0] + 1] = 1.0;
    const auto g = backward_depth(r, gt, scene, view, {}).offset;
    EXPECT_NEAR((g[0] - Vec3(0, 0, -1)).norm(), 0.0, 1e-12);
    EXPECT_NEAR((g[1] - Vec3(0, 0, 1)).norm(), 0.0, 1e-12);
}

TEST(BackwardColor, MatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    Scene scene = oracle::random_scene(rng, 6);
    const CameraView view = oracle::random_rig(rng, 1, 24)[0];
    const RenderOutput r = render(scene, view);
    ImageD dl(r.width, r.height, 3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto &v : dl.data) {
        v = u(rng);
    }
    auto loss = [&](const Scene &s) {
        const RenderOutput o = render(s, view);
        double sum = 0.0;
        for (std::size_t i = 0; i < dl.data.size(); ++i) {
            sum += dl.data[i] * o.color.data[i];
        }
        return sum;
    };
    const GradientBuffer g = backward_color(r, dl, scene);
    const double h = 1e-6;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const double saved = scene.gaussians[i].color[c];
            scene.gaussians[i].color[c] = saved + h;
            const double up = loss(scene);
            scene.gaussians[i].color[c] = saved - h;
            const double down = loss(scene);
            scene.gaussians[i].color[c] = saved;
            EXPECT_NEAR(g.color[i][c], (up - down) / (2 * h), 1e-6 * std::max(1.0, std::abs(g.color[i][c])));
        }
        const double saved = scene.gaussians[i].opacity;
        scene.gaussians[i].opacity = saved + h;
        const double up = loss(scene);
        scene.gaussians[i].opacity = saved - h;
        const double down = loss(scene);
        scene.gaussians[i].opacity = saved;
        EXPECT_NEAR(g.opacity[i], (up - down) / (2 * h), 1e-5 * std::max(1.0, std::abs(g.opacity[i])));
        EXPECT_EQ(g.offset[i], Vec3::Zero());
    }
}

namespace {

DatasetSpec small_spec(int instances, std::uint64_t seed) {
    DatasetSpec spec;
    for (int k = 0; k < instances; ++k) {
        InstanceSpec s;
        s.center = Vec3(2.5 * k - 1.25 * (instances - 1), 0, 0);
        s.radius = 0.8;
        s.count = 120;
        spec.scene.instances.push_back(s);
    }
    spec.scene.scale_factor = 2.0;
    spec.scene.background.count = 150;
    spec.scene.background.placement = BackgroundPlacement::Dome;
    spec.scene.background.extent = 10.0;
    spec.scene.seed = seed;
    spec.rig.count = 8;
    spec.rig.distance = 7.0;
    spec.rig.elevations_deg = {25.0, -25.0};
    spec.rig.width = spec.rig.height = 64;
    return spec;
}

TrainConfig offsets_only(int steps) {
    TrainConfig c;
    c.steps = steps;
    c.trainable = {true, false, false};
    c.views_per_step = 2;
    c.seed = 9;
    return c;
}

} // namespace

TEST(Train, PhotometricFitOfOneSplatDecreases) {
    const CameraView view = votesplat::testing::camera_at(Vec3(0, -4, 0), 32, 30.0);
    GaussianPrimitive target = splat(Vec3::Zero(), 0.3, 0.8, Vec3(0.9, 0.2, 0.1));
    TrainingData data;
    data.rig = {view};
    data.images = {render(scene_of({target}), view).color};
    data.vote_maps = {empty_vote_map(32, 32)};
    GaussianPrimitive start = target;
    start.color = Vec3(0.3, 0.6, 0.5);
    TrainConfig c;
    c.steps = 11;
    c.lambda_vote = 0.0;
    c.lambda_depth = 0.0;
    c.trainable = {false, true, false};
    c.lr_color = 0.02;
    const TrainResult r = train(scene_of({start}), data, c);
    for (std::size_t k = 1; k < r.log.size(); ++k) {
        EXPECT_LT(r.log[k].l_color, r.log[k - 1].l_color) << "step " << k;
    }
    EXPECT_EQ(r.scene.gaussians[0].offsets[0], Vec3::Zero());
}

TEST(Train, OffsetsConvergeTowardTheCenter) {
    DatasetSpec spec = small_spec(1, 4);
    const Dataset d = generate_dataset(spec);
    const Vec3 center = d.scene.instances[0].center;
    std::vector<double> dist;
    const TrainConfig c = offsets_only(300);
    train(d.scene, make_training_data(d, c), c, [&](int, const Scene &s) {
        double sum = 0;
        int n = 0;
        for (const auto &g : s.gaussians) {
            if (g.instance_label == 0) {
                sum += (g.vote(0) - center).norm();
                ++n;
            }
        }
        dist.push_back(sum / n);
    });
    std::vector<double> windows;
    for (std::size_t k = 0; k + 50 <= dist.size(); k += 50) {
        windows.push_back(pairwise_sum(std::span(dist).subspan(k, 50)) / 50.0);
    }
    for (std::size_t k = 1; k < windows.size(); ++k) {
        EXPECT_LT(windows[k], windows[k - 1]);
    }
    EXPECT_LT(windows.back(), 0.3 * windows.front());
}

TEST(Train, BackgroundOffsetsStayBitZero) {
    const Dataset d = generate_dataset(small_spec(2, 6));
    const TrainConfig c = offsets_only(40);
    const TrainResult r = train(d.scene, make_training_data(d, c), c);
    int moved = 0;
    for (const auto &g : r.scene.gaussians) {
        if (g.instance_label < 0) {
            EXPECT_EQ(g.offsets[0], Vec3::Zero());
        } else {
            moved += g.offsets[0] != Vec3::Zero();
        }
    }
    EXPECT_GT(moved, 100);
    const auto split = filter_background(r.scene, 0, 0.0);
    EXPECT_EQ(split.background.size(), 150u);
}

TEST(Train, DeterministicAcrossRunsAndThreadCounts) {
    const Dataset d = generate_dataset(small_spec(2, 7));
    TrainConfig c = offsets_only(15);
    c.trainable.color = true;
    c.trainable.opacity = true;
    const TrainingData data = make_training_data(d, c);
    set_thread_limit(1);
    const TrainResult a = train(d.scene, data, c);
    set_thread_limit(3);
    const TrainResult b = train(d.scene, data, c);
    set_thread_limit(0);
    EXPECT_TRUE(a.scene == b.scene);
    ASSERT_EQ(a.log.size(), b.log.size());
    EXPECT_EQ(a.log.back().total, b.log.back().total);
}

TEST(Train, SgdAlsoReducesTheLoss) {
    const Dataset d = generate_dataset(small_spec(1, 8));
    TrainConfig c = offsets_only(60);
    c.optimizer = OptimizerKind::Sgd;
    c.lr_offset = 0.5;
    const TrainResult r = train(d.scene, make_training_data(d, c), c);
    EXPECT_LT(r.log.back().l_vote, r.log.front().l_vote);
}

TEST(Train, NonFiniteLossAbortsWithTheStep) {
    const Dataset d = generate_dataset(small_spec(1, 8));
    const TrainConfig c = offsets_only(5);
    TrainingData data = make_training_data(d, c);
    for (auto &m : data.vote_maps) {
        for (std::size_t p : m.supervised) {
            m.votes.data[2 * p] = std::nan("");
        }
    }
    try {
        train(d.scene, data, c);
        FAIL() << "expected a training error";
    } catch (const TrainingError &e) {
        EXPECT_EQ(e.step(), 0);
    }
}

TEST(Train, RejectsMismatchedInputsAndConfigs) {
    const Dataset d = generate_dataset(small_spec(1, 8));
    TrainConfig c = offsets_only(5);
    TrainingData data = make_training_data(d, c);
    data.vote_maps.pop_back();
    EXPECT_THROW(train(d.scene, data, c), ValidationError);
    data = make_training_data(d, c);
    data.vote_maps[0] = empty_vote_map(10, 10);
    EXPECT_THROW(train(d.scene, data, c), ValidationError);
    c.steps = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = offsets_only(5);
    c.lr_color = -1.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = offsets_only(5);
    c.trainable.color = true;
    data = make_training_data(d, offsets_only(5));
    EXPECT_THROW(train(d.scene, data, c), ValidationError);
}

TEST(Train, WritesCheckpointsAndLossCsv) {
    TempDir dir;
    const Dataset d = generate_dataset(small_spec(1, 8));
    TrainConfig c = offsets_only(6);
    c.checkpoint_every = 3;
    c.checkpoint_dir = dir / "ckpt";
    const TrainResult r = train(d.scene, make_training_data(d, c), c);
    EXPECT_TRUE(std::filesystem::exists(dir / "ckpt" / "checkpoint_000003.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "ckpt" / "checkpoint_000006.ply"));
    EXPECT_TRUE(load_scene(dir / "ckpt" / "checkpoint_000006.json") == r.scene);
    write_loss_csv(r.log, dir / "loss.csv");
    const std::string csv = votesplat::testing::slurp(dir / "loss.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,l_color,l_vote,l_depth,total,supervised_pixels");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(Train, LogTotalsFollowTheWeights) {
    const Dataset d = generate_dataset(small_spec(1, 8));
    TrainConfig c = offsets_only(3);
    c.lambda_vote = 0.5;
    c.lambda_depth = 0.25;
    const TrainResult r = train(d.scene, make_training_data(d, c), c);
    for (const auto &s : r.log) {
        EXPECT_NEAR(s.total, s.l_color + 0.5 * s.l_vote + 0.25 * s.l_depth, 1e-12);
    }
}

TEST(OptimizerKind, Names) {
    EXPECT_EQ(optimizer_kind_from_string("adam"), OptimizerKind::Adam);
    EXPECT_EQ(optimizer_kind_from_string(to_string(OptimizerKind::Sgd)), OptimizerKind::Sgd);
    EXPECT_THROW(optimizer_kind_from_string("lbfgs"), ValidationError);
}
