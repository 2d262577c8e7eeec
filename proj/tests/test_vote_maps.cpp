#include "support/test_util.hpp"

#include <random>

using namespace votesplat;
using votesplat::testing::TempDir;

namespace {

LabelMask blank(int w, int h) {
    LabelMask m;
    m.labels = Image<std::uint16_t>(w, h, 1, 0);
    return m;
}

void fill(LabelMask &m, int x0, int x1, int y0, int y1, std::uint16_t label) {
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            m.labels.at(x, y) = label;
        }
    }
}

} // namespace

TEST(SegmentCentroid, SinglePixel) {
    LabelMask m = blank(8, 8);
    m.labels.at(3, 5) = 1;
    EXPECT_EQ(segment_centroid(m, 1), (PixelCentroid{3, 5}));
}

TEST(SegmentCentroid, RectangleRoundsHalfAway) {
    LabelMask m = blank(8, 8);
    fill(m, 2, 5, 1, 3, 4);
    EXPECT_EQ(segment_centroid(m, 4), (PixelCentroid{4, 2}));
}

TEST(SegmentCentroid, LShapeMatchesPixelSum) {
    LabelMask m = blank(12, 12);
    fill(m, 2, 3, 2, 9, 1);
    fill(m, 2, 9, 8, 9, 1);
    double sx = 0, sy = 0, n = 0;
    for (int y = 0; y < 12; ++y) {
        for (int x = 0; x < 12; ++x) {
            if (m.labels.at(x, y) == 1) {
                sx += x;
                sy += y;
                n += 1;
            }
        }
    }
    const PixelCentroid c = segment_centroid(m, 1);
    EXPECT_EQ(c.x, static_cast<int>(std::floor(sx / n + 0.5)));
    EXPECT_EQ(c.y, static_cast<int>(std::floor(sy / n + 0.5)));
}

TEST(SegmentCentroid, EmptySegmentThrows) {
    EXPECT_THROW(segment_centroid(blank(4, 4), 2), ValidationError);
}

TEST(SegmentCentroid, InsideBoundingBoxOnRandomBlobs) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> u(0, 31);
    for (int k = 0; k < 50; ++k) {
        LabelMask m = blank(32, 32);
        int x0 = 99, x1 = -1, y0 = 99, y1 = -1;
        for (int j = 0; j < 10; ++j) {
            const int x = u(rng), y = u(rng);
            m.labels.at(x, y) = 1;
            x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
        }
        const PixelCentroid c = segment_centroid(m, 1);
        EXPECT_GE(c.x, x0);
        EXPECT_LE(c.x, x1);
        EXPECT_GE(c.y, y0);
        EXPECT_LE(c.y, y1);
    }
}

TEST(SegmentCentroid, SymmetricSegmentHitsItsCenter) {
    LabelMask m = blank(16, 16);
    fill(m, 4, 10, 6, 8, 1);  // symmetric about (7, 7)
    m.labels.at(7, 5) = 1;
    m.labels.at(7, 9) = 1;
    EXPECT_EQ(segment_centroid(m, 1), (PixelCentroid{7, 7}));
}

TEST(VoteMap, InteriorSegmentIsFullySupervised) {
    LabelMask m = blank(10, 10);
    fill(m, 3, 6, 3, 5, 1);
    const VoteMap2D map = build_vote_map(m, 1);
    EXPECT_EQ(map.supervised.size(), 12u);
    for (std::size_t p : map.supervised) {
        EXPECT_EQ(map.vote(p), Vec2(5.5, 4.5));  // centroid (5, 4) at its pixel center
    }
    EXPECT_EQ(map.centroids.at(1), (PixelCentroid{5, 4}));
}

TEST(VoteMap, BorderSegmentsAreDropped) {
    LabelMask m = blank(10, 10);
    fill(m, 3, 5, 0, 2, 1);  // touches row 0
    fill(m, 3, 5, 5, 7, 2);
    const VoteMap2D map = build_vote_map(m, 1);
    EXPECT_EQ(map.centroids.count(1), 0u);
    EXPECT_EQ(map.centroids.count(2), 1u);
    EXPECT_FALSE(map.is_supervised(4));
}

TEST(VoteMap, MarginWidensTheBorder) {
    LabelMask m = blank(10, 10);
    fill(m, 2, 4, 2, 4, 1);
    EXPECT_EQ(build_vote_map(m, 2).supervised.size(), 9u);
    EXPECT_TRUE(build_vote_map(m, 3).supervised.empty());
    fill(m, 0, 0, 0, 0, 2);
    EXPECT_EQ(build_vote_map(m, 0).centroids.size(), 2u);
}

TEST(VoteMap, ClippedSegmentLeavesTwoDistinctVotes) {
    LabelMask m = blank(20, 20);
    fill(m, 2, 5, 2, 5, 1);
    fill(m, 10, 14, 10, 13, 2);
    fill(m, 15, 19, 0, 4, 3);
    const VoteMap2D map = build_vote_map(m, 1);
    std::set<std::pair<double, double>> votes;
    for (std::size_t p : map.supervised) {
        votes.insert({map.vote(p).x(), map.vote(p).y()});
    }
    EXPECT_EQ(votes.size(), 2u);
}

TEST(VoteMap, TranslationEquivariance) {
    LabelMask a = blank(24, 24), b = blank(24, 24);
    fill(a, 3, 7, 4, 6, 1);
    a.labels.at(8, 6) = 1;
    fill(b, 3 + 5, 7 + 5, 4 + 3, 6 + 3, 1);
    b.labels.at(8 + 5, 6 + 3) = 1;
    const VoteMap2D ma = build_vote_map(a, 1), mb = build_vote_map(b, 1);
    ASSERT_EQ(ma.supervised.size(), mb.supervised.size());
    for (std::size_t k = 0; k < ma.supervised.size(); ++k) {
        EXPECT_EQ(mb.vote(mb.supervised[k]) - ma.vote(ma.supervised[k]), Vec2(5, 3));
    }
}

TEST(VoteMap, SupervisedPixelsCarryTheirSegmentCentroid) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> lab(0, 4);
    LabelMask m = blank(16, 16);
    for (auto &v : m.labels.data) {
        v = static_cast<std::uint16_t>(lab(rng));
    }
    const VoteMap2D map = build_vote_map(m, 0);
    for (std::size_t p : map.supervised) {
        const int label = m.labels.data[p];
        const PixelCentroid c = segment_centroid(m, label);
        EXPECT_EQ(map.vote(p), Vec2(c.x + 0.5, c.y + 0.5));
    }
}

TEST(LabelMaskIo, PgmRoundTrip) {
    TempDir dir;
    LabelMask m = blank(7, 5);
    m.labels.at(1, 1) = 300;
    m.labels.at(6, 4) = 65535;
    save_label_mask(m, dir / "m.pgm");
    EXPECT_EQ(load_label_mask(dir / "m.pgm", 0).labels, m.labels);
    // Big-endian samples: 300 = 0x012C.
    const std::string bytes = votesplat::testing::slurp(dir / "m.pgm");
    const std::size_t at = bytes.size() - 2 * 35 + 2 * (1 * 7 + 1);
    EXPECT_EQ(static_cast<unsigned char>(bytes[at]), 0x01);
    EXPECT_EQ(static_cast<unsigned char>(bytes[at + 1]), 0x2C);
}

TEST(LabelMaskIo, TruncatedPgmIsAParseError) {
    TempDir dir;
    save_label_mask(blank(8, 8), dir / "m.pgm");
    const std::string bytes = votesplat::testing::slurp(dir / "m.pgm");
    votesplat::testing::spit(dir / "m.pgm", bytes.substr(0, bytes.size() - 10));
    EXPECT_THROW(load_label_mask(dir / "m.pgm", 0), ParseError);
}

TEST(VoteMapIo, RoundTrip) {
    TempDir dir;
    LabelMask m = blank(12, 12);
    fill(m, 2, 5, 3, 8, 1);
    fill(m, 7, 9, 2, 4, 2);
    const VoteMap2D map = build_vote_map(m, 1);
    save_vote_map(map, dir / "v.vspl");
    const VoteMap2D back = load_vote_map(dir / "v.vspl");
    EXPECT_EQ(back.supervised, map.supervised);
    for (std::size_t p : map.supervised) {
        EXPECT_EQ(back.vote(p), map.vote(p));
    }
}

TEST(LabelRendering, MasksArePureAndClosed) {
    SyntheticSceneSpec spec;
    InstanceSpec a, b;
    a.center = Vec3(-1.2, 0, 0);
    b.center = Vec3(1.2, 0, 0);
    a.count = b.count = 200;
    spec.instances = {a, b};
    spec.scale_factor = 2.0;
    spec.seed = 4;
    const Scene s = generate_synthetic_scene(spec);
    const CameraView v = votesplat::testing::camera_at(Vec3(0, -8, 1), 64, 60.0);
    const LabelMask mask = render_label_mask(s, v, 0);
    const RenderOutput out = render(s, v);
    std::set<int> seen;
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
        const int label = mask.labels.data[p];
        if (label == 0) {
            continue;
        }
        seen.insert(label);
        for (int id : out.members_at(p)) {
            EXPECT_EQ(s.gaussians[static_cast<std::size_t>(id)].instance_label + 1, label);
        }
        EXPECT_LE(out.vote_transmittance.data[p], kFrontTransmittance);
    }
    EXPECT_EQ(seen, (std::set<int>{1, 2}));
}
