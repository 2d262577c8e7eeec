#include "votesplat/semantics.hpp"

#include "votesplat/json_util.hpp"
#include "votesplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace votesplat {

namespace {

// Standard normal via Box-Muller on a fixed 53-bit uniform, so vectors are
// identical across standard library implementations.
double uniform01(std::mt19937_64 &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double normal(std::mt19937_64 &rng) {
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

bool usable(const FeatureVector &f) { return f.allFinite() && !f.isZero(); }

} // namespace

SyntheticFeatureSource::SyntheticFeatureSource(std::vector<LabelMask> masks, int dim, std::uint64_t seed)
    : masks_(std::move(masks)), dim_(dim) {
    if (dim < 1) {
        throw ValidationError("feature dimension must be at least 1");
    }
    int max_label = 0;
    for (const auto &m : masks_) {
        for (auto v : m.labels.data) {
            max_label = std::max<int>(max_label, v);
        }
    }
    // Vectors are drawn for labels 1..max in order so each label's vector does
    // not depend on which views are present.
    std::mt19937_64 rng(seed);
    for (int label = 1; label <= max_label; ++label) {
        FeatureVector f(dim);
        do {
            for (int d = 0; d < dim; ++d) {
                f[d] = normal(rng);
            }
        } while (f.norm() == 0.0);
        table_[label] = f.normalized();
    }
}

FeatureVector SyntheticFeatureSource::label_feature(int label) const {
    const auto it = table_.find(label);
    if (it == table_.end()) {
        throw ValidationError("no synthetic feature for label " + std::to_string(label));
    }
    return it->second;
}

ImageD SyntheticFeatureSource::view_features(std::size_t view) const {
    const auto &mask = masks_.at(view);
    ImageD out(mask.width(), mask.height(), dim_, 0.0);
    for (std::size_t p = 0; p < mask.labels.data.size(); ++p) {
        const int label = mask.labels.data[p];
        if (label == 0) {
            continue;
        }
        const auto &f = table_.at(label);
        for (int d = 0; d < dim_; ++d) {
            out.data[p * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(d)] = f[d];
        }
    }
    return out;
}

PlaneFeatureSource::PlaneFeatureSource(std::vector<std::filesystem::path> planes) : planes_(std::move(planes)) {
    if (planes_.empty()) {
        throw ValidationError("feature source needs at least one plane");
    }
    dim_ = read_float_plane(planes_.front()).channels;
}

ImageD PlaneFeatureSource::view_features(std::size_t view) const {
    const ImageF plane = read_float_plane(planes_.at(view));
    if (plane.channels != dim_) {
        throw ParseError(planes_[view].string() + ": feature plane has " + std::to_string(plane.channels) +
                             " channels, expected " + std::to_string(dim_),
                         12);
    }
    ImageD out(plane.width, plane.height, plane.channels);
    std::copy(plane.data.begin(), plane.data.end(), out.data.begin());
    return out;
}

FeatureBank associate_features(const Scene &scene, const InstanceTable &table, const CameraRig &rig,
                               const FeatureSource &source) {
    if (source.view_count() != rig.size()) {
        throw ValidationError("feature source view count does not match the camera count");
    }
    const int dim = source.dim();
    struct ViewPool {
        std::map<int, FeatureVector> sum;
        std::map<int, std::size_t> count;
    };
    std::vector<ViewPool> pools(rig.size());
    parallel_for(rig.size(), [&](std::size_t v) {
        RenderOptions opts;
        opts.mode = RenderMode::InstanceIds;
        opts.level = table.level;
        opts.keep_records = false;
        const RenderOutput out = render(scene, rig[v], opts);
        const ImageD features = source.view_features(v);
        if (features.width != rig[v].width || features.height != rig[v].height) {
            throw ValidationError("feature plane " + std::to_string(v) + " does not match its camera size");
        }
        auto &pool = pools[v];
        for (std::size_t p = 0; p < out.pixel_count(); ++p) {
            const int id = out.instance_ids.data[p];
            if (id < 0 || !table.instances.contains(id)) {
                continue;
            }
            const FeatureVector f = Eigen::Map<const FeatureVector>(
                features.data.data() + p * static_cast<std::size_t>(dim), dim);
            if (!usable(f)) {
                continue;
            }
            auto [it, inserted] = pool.sum.try_emplace(id, FeatureVector::Zero(dim));
            it->second += f;
            ++pool.count[id];
        }
    });

    FeatureBank bank;
    bank.dim = dim;
    for (const auto &[id, entry] : table.instances) {
        FeatureVector total = FeatureVector::Zero(dim);
        std::size_t pixels = 0;
        for (const auto &pool : pools) {
            const auto it = pool.sum.find(id);
            if (it == pool.sum.end()) {
                continue;
            }
            const std::size_t c = pool.count.at(id);
            const double norm = it->second.norm();
            if (norm == 0.0) {
                continue;
            }
            // Per-view mean direction, weighted by the view's pixel count.
            total += static_cast<double>(c) * (it->second / norm);
            pixels += c;
        }
        if (pixels == 0 || total.norm() == 0.0) {
            bank.missing.push_back(id);
            continue;
        }
        bank.features[id] = total.normalized();
    }
    return bank;
}

Image<std::uint8_t> render_selection_mask(const Scene &scene, std::span<const std::size_t> ids,
                                          const CameraView &view) {
    Image<std::uint8_t> mask(view.width, view.height, 1, 0);
    if (ids.empty()) {
        return mask;
    }
    Scene subset;
    subset.levels = scene.levels;
    subset.bounds = scene.bounds;
    subset.gaussians.reserve(ids.size());
    for (std::size_t g : ids) {
        subset.gaussians.push_back(scene.gaussians.at(g));
    }
    RenderOptions opts;
    opts.mode = RenderMode::Color;
    opts.keep_records = false;
    const RenderOutput out = render(subset, view, opts);
    for (std::size_t p = 0; p < out.pixel_count(); ++p) {
        mask.data[p] = out.alpha.data[p] >= 0.5 ? 1 : 0;
    }
    return mask;
}

QueryResult query(const FeatureBank &bank, const FeatureVector &query_vector, const Scene &scene,
                  const InstanceTable &table, const CameraRig &rig, const QueryOptions &options) {
    if (bank.features.empty()) {
        throw ValidationError("feature bank is empty");
    }
    if (query_vector.size() != bank.dim) {
        throw ValidationError("query has dimension " + std::to_string(query_vector.size()) + ", bank has " +
                              std::to_string(bank.dim));
    }
    const double qn = query_vector.norm();
    if (!(qn > 0.0) || !query_vector.allFinite()) {
        throw ValidationError("query vector must be finite and non-zero");
    }
    const FeatureVector q = query_vector / qn;

    QueryResult result;
    for (const auto &[id, f] : bank.features) {
        result.ranked.emplace_back(id, std::clamp(q.dot(f), -1.0, 1.0));
    }
    std::stable_sort(result.ranked.begin(), result.ranked.end(),
                     [](const auto &a, const auto &b) { return a.second > b.second; });
    if (options.threshold) {
        for (const auto &[id, score] : result.ranked) {
            if (score >= *options.threshold) {
                result.selected_instances.push_back(id);
            }
        }
    } else {
        result.selected_instances.push_back(result.ranked.front().first);
    }
    for (int id : result.selected_instances) {
        const auto it = table.instances.find(id);
        if (it == table.instances.end()) {
            throw ValidationError("feature bank refers to unknown instance " + std::to_string(id));
        }
        result.selected_gaussians.insert(result.selected_gaussians.end(), it->second.gaussian_ids.begin(),
                                         it->second.gaussian_ids.end());
    }
    std::sort(result.selected_gaussians.begin(), result.selected_gaussians.end());
    if (options.render_masks) {
        result.masks.resize(rig.size());
        parallel_for(rig.size(), [&](std::size_t v) {
            result.masks[v] = render_selection_mask(scene, result.selected_gaussians, rig[v]);
        });
    }
    return result;
}

int pick(const Scene &scene, const CameraRig &rig, std::size_t view_index, int x, int y) {
    if (view_index >= rig.size()) {
        throw ValidationError("view index " + std::to_string(view_index) + " out of range");
    }
    const auto &view = rig[view_index];
    if (x < 0 || y < 0 || x >= view.width || y >= view.height) {
        throw ValidationError("pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") is outside the image");
    }
    RenderOptions opts;
    opts.mode = RenderMode::InstanceIds;
    opts.keep_records = false;
    return render(scene, view, opts).instance_ids.at(x, y);
}

void save_feature_bank(const FeatureBank &bank, const std::filesystem::path &path) {
    json::Json j;
    j["format"] = "votesplat-features";
    j["version"] = 1;
    j["dim"] = bank.dim;
    json::Json list = json::Json::array();
    for (const auto &[id, f] : bank.features) {
        json::Json e;
        e["id"] = id;
        e["vector"] = std::vector<double>(f.data(), f.data() + f.size());
        list.push_back(std::move(e));
    }
    j["features"] = std::move(list);
    j["missing"] = bank.missing;
    json::write_file(path, j);
}

FeatureBank load_feature_bank(const std::filesystem::path &path) {
    const json::Json j = json::read_file(path);
    const std::string where = path.string();
    json::Reader r(j, where);
    r.expect_string("format", "votesplat-features");
    if (r.get<int>("version") != 1) {
        throw ParseError(where + ": unsupported feature bank version", 0);
    }
    FeatureBank bank;
    bank.dim = r.get<int>("dim");
    if (bank.dim < 1) {
        throw ValidationError(where + ": dim must be positive");
    }
    for (const auto &item : r.array("features")) {
        json::Reader er(item, where + ": features[]");
        const int id = er.get<int>("id");
        const auto v = er.get<std::vector<double>>("vector");
        er.finish();
        if (static_cast<int>(v.size()) != bank.dim) {
            throw ValidationError(where + ": features[" + std::to_string(id) + "].vector has the wrong length");
        }
        bank.features[id] = Eigen::Map<const FeatureVector>(v.data(), bank.dim);
    }
    bank.missing = r.get<std::vector<int>>("missing");
    r.finish();
    return bank;
}

} // namespace votesplat
