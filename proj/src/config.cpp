#include "votesplat/config.hpp"

namespace votesplat {

namespace {

template <class Fn>
auto enum_field(json::Reader &r, const std::string &key, Fn &&parse) {
    const auto name = r.get<std::string>(key);
    try {
        return parse(name);
    } catch (const ValidationError &e) {
        throw ValidationError(r.where() + ": field '" + key + "': " + e.what());
    }
}

void check_version(json::Reader &r) {
    const int version = r.get<int>("version");
    if (version != kConfigVersion) {
        throw ValidationError(r.where() + ": field 'version' is " + std::to_string(version) + ", expected " +
                              std::to_string(kConfigVersion));
    }
}

RigLayout rig_layout_from_string(const std::string &name) {
    if (name == "ring") {
        return RigLayout::Ring;
    }
    if (name == "arc") {
        return RigLayout::Arc;
    }
    throw ValidationError("unknown camera layout '" + name + "'");
}

} // namespace

std::string to_string(Membership membership) {
    return membership == Membership::VotingTransmittance ? "voting" : "full";
}

Membership membership_from_string(const std::string &name) {
    if (name == "voting") {
        return Membership::VotingTransmittance;
    }
    if (name == "full") {
        return Membership::FullTransmittance;
    }
    throw ValidationError("unknown membership '" + name + "'");
}

std::string to_string(DepthVariant variant) { return variant == DepthVariant::Unweighted ? "unweighted" : "weighted"; }

DepthVariant depth_variant_from_string(const std::string &name) {
    if (name == "unweighted") {
        return DepthVariant::Unweighted;
    }
    if (name == "weighted") {
        return DepthVariant::Weighted;
    }
    throw ValidationError("unknown depth variant '" + name + "'");
}

SyntheticSceneSpec parse_scene_spec(const json::Json &j, const std::string &where) {
    json::Reader r(j, where);
    SyntheticSceneSpec spec;
    spec.seed = r.get_or<std::uint64_t>("seed", spec.seed);
    spec.levels = r.get_or("levels", spec.levels);
    spec.opacity = r.get_or("opacity", spec.opacity);
    spec.scale_factor = r.get_or("scale_factor", spec.scale_factor);
    spec.surface_jitter = r.get_or("surface_jitter", spec.surface_jitter);
    std::size_t k = 0;
    for (const auto &item : r.array("instances")) {
        json::Reader ir(item, where + ": instances[" + std::to_string(k++) + "]");
        InstanceSpec inst;
        if (ir.has("shape")) {
            inst.shape = enum_field(ir, "shape", shell_shape_from_string);
        }
        inst.center = ir.vec3("center");
        inst.radius = ir.get_or("radius", inst.radius);
        if (ir.has("radii")) {
            inst.radii = ir.vec3("radii");
        }
        inst.count = ir.get_or("count", inst.count);
        if (ir.has("color")) {
            inst.color = ir.vec3("color");
        }
        ir.finish();
        spec.instances.push_back(inst);
    }
    if (r.has("background")) {
        json::Reader br(r.object("background"), where + ": background");
        auto &bg = spec.background;
        bg.count = br.get_or("count", bg.count);
        if (br.has("placement")) {
            bg.placement = enum_field(br, "placement", background_placement_from_string);
        }
        if (br.has("center")) {
            bg.center = br.vec3("center");
        }
        bg.extent = br.get_or("extent", bg.extent);
        bg.opacity = br.get_or("opacity", bg.opacity);
        br.finish();
    }
    r.finish();
    return spec;
}

RigSpec parse_rig_spec(const json::Json &j, const std::string &where) {
    json::Reader r(j, where);
    RigSpec spec;
    if (r.has("layout")) {
        spec.layout = enum_field(r, "layout", rig_layout_from_string);
    }
    spec.count = r.get_or("count", spec.count);
    spec.distance = r.get_or("distance", spec.distance);
    spec.elevations_deg = r.get_or("elevations_deg", spec.elevations_deg);
    spec.arc_deg = r.get_or("arc_deg", spec.arc_deg);
    spec.arc_center_deg = r.get_or("arc_center_deg", spec.arc_center_deg);
    spec.azimuth_phase_deg = r.get_or("azimuth_phase_deg", spec.azimuth_phase_deg);
    if (r.has("target")) {
        spec.target = r.vec3("target");
    }
    if (r.has("up")) {
        spec.up = r.vec3("up");
    }
    spec.width = r.get_or("width", spec.width);
    spec.height = r.get_or("height", spec.height);
    spec.fov_deg = r.get_or("fov_deg", spec.fov_deg);
    r.finish();
    return spec;
}

DatasetSpec parse_dataset_spec(const json::Json &j, const std::string &where) {
    json::Reader r(j, where);
    check_version(r);
    DatasetSpec spec;
    spec.scene = parse_scene_spec(r.object("scene"), where + ": scene");
    spec.rig = parse_rig_spec(r.object("cameras"), where + ": cameras");
    spec.border_margin = r.get_or("border_margin", spec.border_margin);
    if (r.has("features")) {
        json::Reader fr(r.object("features"), where + ": features");
        spec.feature_dim = fr.get_or("dim", spec.feature_dim);
        spec.feature_seed = fr.get_or<std::uint64_t>("seed", spec.feature_seed);
        fr.finish();
    }
    r.finish();
    if (spec.border_margin < 0) {
        throw ValidationError(where + ": field 'border_margin' must be non-negative");
    }
    if (spec.feature_dim < 1) {
        throw ValidationError(where + ": features: field 'dim' must be positive");
    }
    return spec;
}

DatasetSpec load_dataset_spec(const std::filesystem::path &path) {
    return parse_dataset_spec(json::read_file(path), path.string());
}

TrainConfig parse_train_config(const json::Json &j, const std::string &where, TrainConfig base) {
    json::Reader r(j, where);
    check_version(r);
    TrainConfig c = std::move(base);
    c.steps = r.get_or("steps", c.steps);
    if (r.has("optimizer")) {
        c.optimizer = enum_field(r, "optimizer", optimizer_kind_from_string);
    }
    if (r.has("lr_offset")) {
        c.lr_offset = r.get<double>("lr_offset");
    }
    c.lr_color = r.get_or("lr_color", c.lr_color);
    c.lr_opacity = r.get_or("lr_opacity", c.lr_opacity);
    c.lr_final_ratio = r.get_or("lr_final_ratio", c.lr_final_ratio);
    c.views_per_step = r.get_or("views_per_step", c.views_per_step);
    c.level = r.get_or("level", c.level);
    if (r.has("lambda_vote")) {
        c.lambda_vote = r.get<double>("lambda_vote");
    }
    if (r.has("lambda_depth")) {
        c.lambda_depth = r.get<double>("lambda_depth");
    }
    c.lambda_dssim = r.get_or("lambda_dssim", c.lambda_dssim);
    if (r.has("depth_variant")) {
        c.depth.variant = enum_field(r, "depth_variant", depth_variant_from_string);
    }
    if (r.has("raw_depth_sum")) {
        c.depth.normalize_pairs = !r.get<bool>("raw_depth_sum");
    }
    if (r.has("blend")) {
        c.blend = enum_field(r, "blend", blend_mode_from_string);
    }
    if (r.has("membership")) {
        c.membership = enum_field(r, "membership", membership_from_string);
    }
    if (r.has("trainable")) {
        const auto names = r.get<std::vector<std::string>>("trainable");
        c.trainable = {false, false, false};
        for (const auto &n : names) {
            if (n == "offset") {
                c.trainable.offset = true;
            } else if (n == "color") {
                c.trainable.color = true;
            } else if (n == "opacity") {
                c.trainable.opacity = true;
            } else {
                throw ValidationError(where + ": field 'trainable': unsupported parameter '" + n +
                                      "' (expected offset, color or opacity)");
            }
        }
    }
    c.seed = r.get_or<std::uint64_t>("seed", c.seed);
    c.checkpoint_every = r.get_or("checkpoint_every", c.checkpoint_every);
    if (r.has("checkpoint_dir")) {
        c.checkpoint_dir = r.get<std::string>("checkpoint_dir");
    }
    r.finish();
    try {
        c.validate();
    } catch (const ValidationError &e) {
        throw ValidationError(where + ": " + e.what());
    }
    return c;
}

TrainConfig load_train_config(const std::filesystem::path &path, TrainConfig base) {
    return parse_train_config(json::read_file(path), path.string(), std::move(base));
}

json::Json to_json(const TrainConfig &c) {
    json::Json j;
    j["version"] = kConfigVersion;
    j["steps"] = c.steps;
    j["optimizer"] = to_string(c.optimizer);
    if (c.lr_offset) {
        j["lr_offset"] = *c.lr_offset;
    }
    j["lr_color"] = c.lr_color;
    j["lr_opacity"] = c.lr_opacity;
    j["lr_final_ratio"] = c.lr_final_ratio;
    j["views_per_step"] = c.views_per_step;
    j["level"] = c.level;
    if (c.lambda_vote) {
        j["lambda_vote"] = *c.lambda_vote;
    }
    if (c.lambda_depth) {
        j["lambda_depth"] = *c.lambda_depth;
    }
    j["lambda_dssim"] = c.lambda_dssim;
    j["depth_variant"] = to_string(c.depth.variant);
    j["raw_depth_sum"] = !c.depth.normalize_pairs;
    j["blend"] = to_string(c.blend);
    j["membership"] = to_string(c.membership);
    json::Json trainable = json::Json::array();
    if (c.trainable.offset) {
        trainable.push_back("offset");
    }
    if (c.trainable.color) {
        trainable.push_back("color");
    }
    if (c.trainable.opacity) {
        trainable.push_back("opacity");
    }
    j["trainable"] = std::move(trainable);
    j["seed"] = c.seed;
    j["checkpoint_every"] = c.checkpoint_every;
    if (!c.checkpoint_dir.empty()) {
        j["checkpoint_dir"] = c.checkpoint_dir.string();
    }
    return j;
}

ClusterParams parse_cluster_params(const json::Json &j, const std::string &where, ClusterParams base) {
    json::Reader r(j, where);
    check_version(r);
    base.eps = r.get_or("eps", base.eps);
    base.min_pts = r.get_or("min_pts", base.min_pts);
    base.background_eps = r.get_or("background_eps", base.background_eps);
    r.finish();
    try {
        base.validate();
    } catch (const ValidationError &e) {
        throw ValidationError(where + ": " + e.what());
    }
    return base;
}

} // namespace votesplat
