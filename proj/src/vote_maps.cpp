#include "votesplat/vote_maps.hpp"

#include "votesplat/rasterizer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace votesplat {

PixelCentroid segment_centroid(const LabelMask &mask, int segment_id) {
    std::int64_t sx = 0, sy = 0, count = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.labels.at(x, y) == segment_id) {
                sx += x;
                sy += y;
                ++count;
            }
        }
    }
    if (count == 0) {
        throw ValidationError("segment " + std::to_string(segment_id) + " is empty");
    }
    // Integer half-up rounding of a non-negative quotient.
    auto round_div = [](std::int64_t num, std::int64_t den) {
        return static_cast<int>((2 * num + den) / (2 * den));
    };
    return {round_div(sx, count), round_div(sy, count)};
}

VoteMap2D build_vote_map(const LabelMask &mask, int border_margin) {
    const int w = mask.width(), h = mask.height();
    struct Accum {
        std::int64_t sx = 0, sy = 0, count = 0;
        bool clipped = false;
    };
    std::map<int, Accum> segments;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int label = mask.labels.at(x, y);
            if (label == 0) {
                continue;
            }
            auto &a = segments[label];
            a.sx += x;
            a.sy += y;
            ++a.count;
            if (x < border_margin || y < border_margin || x >= w - border_margin || y >= h - border_margin) {
                a.clipped = true;
            }
        }
    }

    VoteMap2D map;
    map.votes = ImageD(w, h, 2, std::numeric_limits<double>::quiet_NaN());
    for (const auto &[label, a] : segments) {
        if (a.clipped) {
            continue;
        }
        map.centroids[label] = {static_cast<int>((2 * a.sx + a.count) / (2 * a.count)),
                                static_cast<int>((2 * a.sy + a.count) / (2 * a.count))};
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto it = map.centroids.find(mask.labels.at(x, y));
            if (it == map.centroids.end()) {
                continue;
            }
            map.votes.at(x, y, 0) = it->second.x + 0.5;
            map.votes.at(x, y, 1) = it->second.y + 0.5;
            map.supervised.push_back(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) +
                                     static_cast<std::size_t>(x));
        }
    }
    return map;
}

VoteMap2D empty_vote_map(int width, int height) {
    VoteMap2D map;
    map.votes = ImageD(width, height, 2, std::numeric_limits<double>::quiet_NaN());
    return map;
}

LabelMask render_label_mask(const Scene &scene, const CameraView &view, int level) {
    RenderOptions opts;
    opts.level = 0;
    opts.mode = RenderMode::Votes;
    const RenderOutput out = render(scene, view, opts);

    std::vector<int> segment(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        segment[i] = scene.segment_label(i, level);
    }

    LabelMask mask;
    mask.level = level;
    mask.labels = Image<std::uint16_t>(view.width, view.height, 1, 0);
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
        const auto members = out.members_at(p);
        if (members.empty() || !(out.vote_transmittance.data[p] <= kFrontTransmittance)) {
            continue;
        }
        const int first = segment[static_cast<std::size_t>(members.front())];
        if (first < 0) {
            continue;
        }
        bool pure = true;
        for (int id : members) {
            pure = pure && segment[static_cast<std::size_t>(id)] == first;
        }
        if (pure) {
            if (first + 1 > 65535) {
                throw ValidationError("segment label exceeds the 16-bit mask range");
            }
            mask.labels.data[p] = static_cast<std::uint16_t>(first + 1);
        }
    }
    return mask;
}

void save_label_mask(const LabelMask &mask, const std::filesystem::path &path) { write_pgm16(path, mask.labels); }

LabelMask load_label_mask(const std::filesystem::path &path, int level) {
    LabelMask mask;
    mask.level = level;
    mask.labels = read_pgm16(path);
    return mask;
}

void save_vote_map(const VoteMap2D &map, const std::filesystem::path &path) {
    ImageF plane(map.width(), map.height(), 2);
    for (std::size_t i = 0; i < plane.data.size(); ++i) {
        plane.data[i] = static_cast<float>(map.votes.data[i]);
    }
    write_float_plane(path, plane);
}

VoteMap2D load_vote_map(const std::filesystem::path &path) {
    const ImageF plane = read_float_plane(path);
    if (plane.channels != 2) {
        throw ParseError(path.string() + ": vote map must have 2 channels", 12);
    }
    VoteMap2D map;
    map.votes = ImageD(plane.width, plane.height, 2);
    for (std::size_t i = 0; i < plane.data.size(); ++i) {
        map.votes.data[i] = plane.data[i];
    }
    // Segment ids are not stored in the plane, so centroids stay empty.
    for (std::size_t p = 0; p < map.votes.pixel_count(); ++p) {
        if (map.is_supervised(p)) {
            map.supervised.push_back(p);
        }
    }
    return map;
}

std::filesystem::path mask_path(const std::filesystem::path &dir, std::size_t view, int level) {
    char name[64];
    std::snprintf(name, sizeof(name), "view_%03zu_l%d.pgm", view, level);
    return dir / name;
}

} // namespace votesplat
