// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "command.hpp"

#include "wheatgs/association.hpp"
#include "wheatgs/error.hpp"
#include "wheatgs/metrics.hpp"
#include "wheatgs/rasterizer.hpp"
#include "wheatgs/scene_io.hpp"
#include "wheatgs/synthbench.hpp"
#include "wheatgs/traits.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>

namespace wheatgs::cli {

nlohmann::json traits_config_to_json(const TraitsConfig &c) {
    return {{"max_points", c.max_points},
            {"min_points", c.min_points},
            {"min_cluster_size", c.min_cluster_size},
            {"min_samples", c.min_samples},
            {"sor_neighbors", c.sor_neighbors},
            {"sor_std_ratio", c.sor_std_ratio},
            {"sor_passes", c.sor_passes},
            {"spline_bins", c.spline_bins},
            {"arc_samples", c.arc_samples},
            {"width_percentile", c.width_percentile},
            {"thickness_factor", c.thickness_factor},
            {"unit_scale", c.unit_scale},
            {"seed", c.seed}};
}

TraitsConfig traits_config_from_json(const nlohmann::json &j) {
    TraitsConfig c;
    c.max_points = j.at("max_points").get<std::size_t>();
    c.min_points = j.at("min_points").get<std::size_t>();
    c.min_cluster_size = j.at("min_cluster_size").get<std::size_t>();
    c.min_samples = j.at("min_samples").get<std::size_t>();
    c.sor_neighbors = j.at("sor_neighbors").get<std::size_t>();
    c.sor_std_ratio = j.at("sor_std_ratio").get<double>();
    c.sor_passes = j.at("sor_passes").get<int>();
    c.spline_bins = j.at("spline_bins").get<int>();
    c.arc_samples = j.at("arc_samples").get<int>();
    c.width_percentile = j.at("width_percentile").get<double>();
    c.thickness_factor = j.at("thickness_factor").get<double>();
    c.unit_scale = j.at("unit_scale").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

namespace {

// ---------------------------------------------------------------- synth

class SynthCommand final : public Command {
  public:
    SynthCommand() : Command("synth", "Generate a synthetic plot: scene, cameras, masks and ground truth") {}

  protected:
    void add_options(CLI::App &app) override {
        app.add_option("--out-dir", out_dir_, "output directory")->required();
        app.add_option("--seed", seed_, "RNG seed");
        app.add_option("--n-heads", n_heads_, "number of wheat heads");
        app.add_option("--n-views", n_views_, "number of cameras");
        app.add_option("--image-size", image_size_, "image side length in pixels");
        app.add_option("--dropout", dropout_, "mask dropout probability per (head, view)");
        app.add_option("--morph", morph_, "maximum mask erosion/dilation radius in pixels");
        app.add_option("--reference-points", reference_points_, "reference samples per head (0 disables)");
    }

    nlohmann::json defaults() const override {
        auto j = synth_config_to_json(SynthConfig{});
        j["reference_points_per_head"] = 3000;
        return j;
    }

    nlohmann::json flag_overrides() const override {
        nlohmann::json j = nlohmann::json::object();
        set_if(j, "rng_seed", seed_);
        set_if(j, "n_heads", n_heads_);
        set_if(j, "n_views", n_views_);
        set_if(j, "image_size", image_size_);
        set_if(j, "mask_dropout", dropout_);
        set_if(j, "mask_morph_noise", morph_);
        set_if(j, "reference_points_per_head", reference_points_);
        return j;
    }

    fs::path default_manifest_path() const override { return fs::path(out_dir_) / "manifest.json"; }

    void run(const nlohmann::json &config, RunManifest &manifest) override {
        SynthConfig sc;
        nlohmann::json synth_keys = config;
        synth_keys.erase("reference_points_per_head");
        synth_config_from_json(synth_keys, sc);
        sc.validate();
        const int ref_points = config.at("reference_points_per_head").get<int>();
        if (ref_points < 0) {
            throw InputError("reference_points_per_head must be non-negative");
        }
        manifest.rng_seed = sc.rng_seed;

        const SynthScene synth = generate(sc);
        const fs::path dir(out_dir_);
        fs::create_directories(dir);
        save_scene_ply(synth.scene, dir / "scene.ply");
        save_cameras(synth.views, dir / "cameras.json");
        save_masks(synth.pool, dir / "masks");
        save_truth(synth.truth, dir / "truth.json");

        MaskPool gt;
        for (std::size_t v = 0; v < synth.views.size(); ++v) {
            for (std::size_t h = 0; h < synth.truth.ideal_masks[v].size(); ++h) {
                static_cast<void>(gt.add(synth.views[v].id, static_cast<int>(h + 1), synth.truth.ideal_masks[v][h]));
            }
        }
        save_masks(gt, dir / "gt_masks");
        manifest.outputs = {"scene.ply", "cameras.json", "masks", "gt_masks", "truth.json"};
        if (ref_points > 0) {
            const auto reference = sample_reference_cloud(synth.truth, ref_points, sc.rng_seed + 1);
            save_point_cloud_ply(reference, dir / "reference.ply");
            manifest.outputs.emplace_back("reference.ply");
        }
        manifest.metadata["gaussians"] = synth.scene.size();
        manifest.metadata["pool_masks"] = synth.pool.size();
        spdlog::info("synth: {} Gaussians, {} views, {} masks", synth.scene.size(), synth.views.size(),
                     synth.pool.size());
    }

  private:
    std::string out_dir_;
    std::optional<std::uint64_t> seed_;
    std::optional<int> n_heads_;
    std::optional<int> n_views_;
    std::optional<int> image_size_;
    std::optional<double> dropout_;
    std::optional<int> morph_;
    std::optional<int> reference_points_;
};

// ---------------------------------------------------------------- render

class RenderCommand final : public Command {
  public:
    RenderCommand() : Command("render", "Render one view as RGB, alpha or an instance label mask") {}

  protected:
    void add_options(CLI::App &app) override {
        app.add_option("--scene", scene_, "scene PLY")->required()->check(CLI::ExistingFile);
        app.add_option("--cameras", cameras_, "cameras JSON")->required()->check(CLI::ExistingFile);
        app.add_option("--view-id", view_id_, "camera id to render")->required();
        app.add_option("--mode", mode_, "rgb, alpha or label")->check(CLI::IsMember({"rgb", "alpha", "label"}));
        app.add_option("--threshold", threshold_, "label mask threshold");
        app.add_option("--instance", instance_, "instance id for label mode (0: every labeled Gaussian)");
        app.add_option("--out", out_, "output PNG")->required();
        app.add_option("--out-pfm", out_pfm_, "optional float PFM copy");
    }

    nlohmann::json defaults() const override { return {{"mode", "rgb"}, {"threshold", 0.5}, {"instance", 0}}; }

    nlohmann::json flag_overrides() const override {
        nlohmann::json j = nlohmann::json::object();
        set_if(j, "mode", mode_);
        set_if(j, "threshold", threshold_);
        set_if(j, "instance", instance_);
        return j;
    }

    fs::path default_manifest_path() const override { return out_ + ".manifest.json"; }

    void run(const nlohmann::json &config, RunManifest &manifest) override {
        manifest.add_input(scene_);
        manifest.add_input(cameras_);
        check_outputs(manifest, {out_});
        const auto mode = config.at("mode").get<std::string>();
        const double threshold = config.at("threshold").get<double>();
        const auto instance = config.at("instance").get<std::uint32_t>();
        if (mode != "rgb" && mode != "alpha" && mode != "label") {
            throw InputError("render mode must be rgb, alpha or label");
        }

        const GaussianScene scene = load_scene_ply(scene_);
        const auto views = load_cameras(cameras_);
        const auto it = std::find_if(views.begin(), views.end(), [&](const View &v) { return v.id == view_id_; });
        if (it == views.end()) {
            throw InputError("no camera with id '" + view_id_ + "'");
        }
        ImageD image;
        if (mode == "label") {
            std::vector<std::uint8_t> labels(scene.size());
            for (std::size_t i = 0; i < scene.size(); ++i) {
                const auto id = scene.gaussians[i].instance_id;
                labels[i] = (instance == 0 ? id != 0 : id == instance) ? 1 : 0;
            }
            const BinaryMask mask = render_label_mask(scene, *it, labels, threshold);
            write_mask_png(out_, mask);
            image = to_image(mask);
        } else {
            RenderOutput r = render_rgb(scene, *it);
            image = mode == "rgb" ? *r.rgb : r.alpha;
            write_png(out_, image);
        }
        manifest.outputs = {out_};
        if (out_pfm_) {
            check_outputs(manifest, {*out_pfm_});
            write_pfm(*out_pfm_, image);
            manifest.outputs.push_back(*out_pfm_);
        }
    }

  private:
    std::string scene_;
    std::string cameras_;
    std::string view_id_;
    std::optional<std::string> mode_;
    std::optional<double> threshold_;
    std::optional<std::uint32_t> instance_;
    std::string out_;
    std::optional<std::string> out_pfm_;
};

// ---------------------------------------------------------------- segment

SeedOrder parse_seed_order(const std::string &s) {
    if (s == "area_desc") {
        return SeedOrder::AreaDesc;
    }
    if (s == "view_order") {
        return SeedOrder::ViewOrder;
    }
    throw InputError("seed_order must be area_desc or view_order");
}

class SegmentCommand final : public Command {
  public:
    SegmentCommand() : Command("segment", "Lift per-view masks onto the scene as 3D instances") {}

  protected:
    void add_options(CLI::App &app) override {
        app.add_option("--scene", scene_, "scene PLY")->required()->check(CLI::ExistingFile);
        app.add_option("--cameras", cameras_, "cameras JSON")->required()->check(CLI::ExistingFile);
        app.add_option("--masks", masks_, "mask directory (<view_id>/<mask_id>.png)")
            ->required()
            ->check(CLI::ExistingDirectory);
        app.add_option("--gamma", gamma_, "background bias of the label vote");
        app.add_option("--precision-threshold", precision_, "rendered-vs-candidate precision gate");
        app.add_option("--refine-rounds", refine_rounds_, "fine-tune rounds per instance");
        app.add_option("--min-instance-gaussians", min_gaussians_, "smallest accepted instance");
        app.add_option("--seed-order", seed_order_, "area_desc or view_order")
            ->check(CLI::IsMember({"area_desc", "view_order"}));
        app.add_option("--views", views_, "comma-separated camera ids to use (default: all)")->delimiter(',');
        app.add_option("--out-ply", out_ply_, "stamped scene PLY")->required();
        app.add_option("--out-instances", out_instances_, "instance map JSON")->required();
    }

    nlohmann::json defaults() const override {
        const SolverConfig s;
        const AssociationConfig a;
        return {{"gamma", s.gamma},
                {"min_total_contribution", s.min_total_contribution},
                {"precision_threshold", a.precision_threshold},
                {"refine_rounds", a.refine_rounds},
                {"min_instance_gaussians", a.min_instance_gaussians},
                {"seed_order", "area_desc"},
                {"mask_threshold", a.mask_threshold},
                {"views", nlohmann::json::array()}};
    }

    nlohmann::json flag_overrides() const override {
        nlohmann::json j = nlohmann::json::object();
        set_if(j, "gamma", gamma_);
        set_if(j, "precision_threshold", precision_);
        set_if(j, "refine_rounds", refine_rounds_);
        set_if(j, "min_instance_gaussians", min_gaussians_);
        set_if(j, "seed_order", seed_order_);
        if (!views_.empty()) {
            j["views"] = views_;
        }
        return j;
    }

    fs::path default_manifest_path() const override { return out_instances_ + ".manifest.json"; }

    void run(const nlohmann::json &config, RunManifest &manifest) override {
        manifest.add_input(scene_);
        manifest.add_input(cameras_);
        manifest.add_input(masks_);
        check_outputs(manifest, {out_ply_, out_instances_});

        SolverConfig solver;
        solver.gamma = config.at("gamma").get<double>();
        solver.min_total_contribution = config.at("min_total_contribution").get<double>();
        solver.validate();
        AssociationConfig assoc;
        assoc.precision_threshold = config.at("precision_threshold").get<double>();
        assoc.refine_rounds = config.at("refine_rounds").get<int>();
        assoc.min_instance_gaussians = config.at("min_instance_gaussians").get<std::size_t>();
        assoc.seed_order = parse_seed_order(config.at("seed_order").get<std::string>());
        assoc.mask_threshold = config.at("mask_threshold").get<double>();
        assoc.validate();

        GaussianScene scene = load_scene_ply(scene_);
        auto views = load_cameras(cameras_);
        const auto wanted = config.at("views").get<std::vector<std::string>>();
        if (!wanted.empty()) {
            std::vector<View> kept;
            for (const auto &id : wanted) {
                const auto it = std::find_if(views.begin(), views.end(), [&](const View &v) { return v.id == id; });
                if (it == views.end()) {
                    throw InputError("no camera with id '" + id + "'");
                }
                kept.push_back(*it);
            }
            views = std::move(kept);
        }
        MaskPool pool = load_masks(masks_, views);
        const AssociationResult result = associate_all(scene, views, pool, solver, assoc);

        save_scene_ply(scene, out_ply_);
        save_instance_map(result.instances, out_instances_);
        manifest.outputs = {out_ply_, out_instances_};
        manifest.metadata["instances"] = result.instances.size();
        manifest.metadata["gamma"] = solver.gamma;
        manifest.metadata["unconsumed_masks"] = pool.available();
        auto discarded = nlohmann::json::array();
        for (const auto &k : result.discarded_seeds) {
            discarded.push_back({k.view_id, k.mask_id});
        }
        manifest.metadata["discarded_seeds"] = discarded;
        manifest.metadata["failed_seed_policy"] = "consumed permanently";
        manifest.metadata["refinement"] = "re-solved from scratch each round";
        spdlog::info("segment: {} instances from {} masks ({} seeds discarded)", result.instances.size(),
                     pool.size(), result.discarded_seeds.size());
    }

  private:
    std::string scene_;
    std::string cameras_;
    std::string masks_;
    std::optional<double> gamma_;
    std::optional<double> precision_;
    std::optional<int> refine_rounds_;
    std::optional<std::size_t> min_gaussians_;
    std::optional<std::string> seed_order_;
    std::vector<std::string> views_;
    std::string out_ply_;
    std::string out_instances_;
};

// ---------------------------------------------------------------- traits

class TraitsCommand final : public Command {
  public:
    TraitsCommand() : Command("traits", "Measure length, width and volume of every instance") {}

  protected:
    void add_options(CLI::App &app) override {
        app.add_option("--scene", scene_, "scene PLY with instance_id")->required()->check(CLI::ExistingFile);
        app.add_option("--instances", instances_, "instance map JSON (default: ids stamped in the scene)")
            ->check(CLI::ExistingFile);
        app.add_option("--out-csv", out_csv_, "trait table")->required();
        app.add_option("--seed", seed_, "subsampling seed");
        app.add_option("--unit-scale", unit_scale_, "centimetres per scene unit");
        app.add_option("--thickness-factor", thickness_, "width multiplier (2 reports full thickness)");
        app.add_option("--groups", groups_, "JSON object instance_id -> group")->check(CLI::ExistingFile);
    }

    nlohmann::json defaults() const override { return traits_config_to_json(TraitsConfig{}); }

    nlohmann::json flag_overrides() const override {
        nlohmann::json j = nlohmann::json::object();
        set_if(j, "seed", seed_);
        set_if(j, "unit_scale", unit_scale_);
        set_if(j, "thickness_factor", thickness_);
        return j;
    }

    fs::path default_manifest_path() const override { return out_csv_ + ".manifest.json"; }

    void run(const nlohmann::json &config, RunManifest &manifest) override {
        manifest.add_input(scene_);
        if (instances_) {
            manifest.add_input(*instances_);
        }
        if (groups_) {
            manifest.add_input(*groups_);
        }
        check_outputs(manifest, {out_csv_});
        const TraitsConfig tc = traits_config_from_json(config);
        manifest.rng_seed = tc.seed;

        const GaussianScene scene = load_scene_ply(scene_);
        const InstanceMap instances = instances_ ? load_instance_map(*instances_) : instances_from_scene(scene);
        const GroupMap groups = groups_ ? load_groups(*groups_) : GroupMap{};
        const auto records = measure_all(scene, instances, tc, groups);
        write_traits_csv(records, out_csv_);
        manifest.outputs = {out_csv_};
        const auto measured = std::count_if(records.begin(), records.end(), [](const auto &r) { return r.measured(); });
        manifest.metadata["instances"] = records.size();
        manifest.metadata["measured"] = measured;
        spdlog::info("traits: {} of {} instances measured", measured, records.size());
    }

  private:
    std::string scene_;
    std::optional<std::string> instances_;
    std::string out_csv_;
    std::optional<std::uint64_t> seed_;
    std::optional<double> unit_scale_;
    std::optional<double> thickness_;
    std::optional<std::string> groups_;
};

} // namespace

std::unique_ptr<Command> make_synth() { return std::make_unique<SynthCommand>(); }
std::unique_ptr<Command> make_render() { return std::make_unique<RenderCommand>(); }
std::unique_ptr<Command> make_segment() { return std::make_unique<SegmentCommand>(); }
std::unique_ptr<Command> make_traits() { return std::make_unique<TraitsCommand>(); }

} // namespace wheatgs::cli
