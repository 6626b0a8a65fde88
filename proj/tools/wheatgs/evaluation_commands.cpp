// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "command.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/instance_matching.hpp"
#include "wheatgs/metrics.hpp"
#include "wheatgs/rasterizer.hpp"
#include "wheatgs/registration.hpp"
#include "wheatgs/scene_io.hpp"
#include "wheatgs/statistics.hpp"
#include "wheatgs/synthbench.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>

namespace wheatgs::cli {

namespace {

double pair_rms(std::span<const Vec3> source, std::span<const Vec3> target, const RigidTransform &t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        sum += (t.apply(source[i]) - target[i]).squaredNorm();
    }
    return std::sqrt(sum / static_cast<double>(source.size()));
}

// ---------------------------------------------------------------- align

class AlignCommand final : public Command {
  public:
    AlignCommand() : Command("align", "Estimate the rigid transform taking a source cloud onto a target") {}

  protected:
    void add_options(CLI::App &app) override {
        app.add_option("--source", source_, "source cloud (PLY or XYZ) for ICP")->check(CLI::ExistingFile);
        app.add_option("--target", target_, "target cloud (PLY or XYZ) for ICP")->check(CLI::ExistingFile);
        app.add_option("--pairs", pairs_, "marker pairs: source xyz, target xyz per line")->check(CLI::ExistingFile);
        app.add_option("--init", init_, "initial transform JSON")->check(CLI::ExistingFile);
        app.add_flag("--with-scale", with_scale_, "estimate a similarity scale from the pairs");
        app.add_option("--trim-fraction", trim_, "fraction of closest pairs kept per ICP iteration");
        app.add_option("--max-iterations", max_iterations_, "ICP iteration cap");
        app.add_option("--out-transform", out_, "transform JSON")->required();
    }

    nlohmann::json defaults() const override {
        const IcpConfig c;
        return {{"with_scale", false},
                {"trim_fraction", c.trim_fraction},
                {"max_iterations", c.max_iterations},
                {"tolerance", c.tolerance},
                {"residual_warning", c.residual_warning},
                {"min_points", c.min_points}};
    }

    nlohmann::json flag_overrides() const override {
        nlohmann::json j = nlohmann::json::object();
        if (with_scale_) {
            j["with_scale"] = true;
        }
        set_if(j, "trim_fraction", trim_);
        set_if(j, "max_iterations", max_iterations_);
        return j;
    }

    fs::path default_manifest_path() const override { return out_ + ".manifest.json"; }

    void run(const nlohmann::json &config, RunManifest &manifest) override {
        if (source_.has_value() != target_.has_value()) {
            throw InputError("--source and --target must be given together");
        }
        if (!pairs_ && !source_) {
            throw InputError("align needs --pairs, or --source with --target");
        }
        for (const auto *p : {&source_, &target_, &pairs_, &init_}) {
            if (*p) {
                manifest.add_input(**p);
            }
        }
        check_outputs(manifest, {out_});
        IcpConfig icp;
        icp.trim_fraction = config.at("trim_fraction").get<double>();
        icp.max_iterations = config.at("max_iterations").get<int>();
        icp.tolerance = config.at("tolerance").get<double>();
        icp.residual_warning = config.at("residual_warning").get<double>();
        icp.min_points = config.at("min_points").get<std::size_t>();
        icp.validate();

        nlohmann::json out;
        RigidTransform transform = init_ ? load_transform(*init_) : RigidTransform{};
        if (pairs_) {
            PointCloud src;
            PointCloud dst;
            load_point_pairs(*pairs_, src, dst);
            transform = kabsch_align(src, dst, config.at("with_scale").get<bool>());
            out["kabsch"] = {{"pairs", src.size()}, {"rms", pair_rms(src, dst, transform)}};
        }
        if (source_) {
            const PointCloud src = load_point_cloud(*source_);
            const PointCloud dst = load_point_cloud(*target_);
            const IcpResult r = icp_align(src, dst, transform, icp);
            transform = r.transform;
            out["icp"] = {{"rms", r.rms},
                          {"iterations", r.iterations},
                          {"converged", r.converged},
                          {"high_residual", r.high_residual},
                          {"rms_history", r.rms_history},
                          {"diagnostics", r.diagnostics}};
            if (r.high_residual) {
                spdlog::warn("align: {}", r.diagnostics);
            }
        }
        out["transform"] = transform_to_json(transform);
        write_json_file(out, out_);
        manifest.outputs = {out_};
    }

  private:
    std::optional<std::string> source_;
    std::optional<std::string> target_;
    std::optional<std::string> pairs_;
    std::optional<std::string> init_;
    bool with_scale_ = false;
    std::optional<double> trim_;
    std::optional<int> max_iterations_;
    std::string out_;
};

// ---------------------------------------------------------------- evaluate

nlohmann::json anova_json(const std::vector<TraitRecord> &records, Trait trait) {
    std::vector<double> values;
    std::vector<std::string> groups;
    for (const auto &r : records) {
        const auto v = trait_value(r, trait);
        if (v && !r.group.empty()) {
            values.push_back(*v);
            groups.push_back(r.group);
        }
    }
    try {
        const AnovaResult a = anova_f(values, groups);
        nlohmann::json j = {{"df_between", a.df_between},
                            {"df_within", a.df_within},
                            {"p_value", a.p_value},
                            {"infinite_f", a.infinite_f}};
        j["f_statistic"] = a.infinite_f ? nlohmann::json("inf") : nlohmann::json(a.f_statistic);
        return j;
    } catch (const EvaluationError &e) {
        return {{"skipped", e.what()}};
    }
}

nlohmann::json mask_metrics_json(const MaskMetrics &m) {
    return {{"iou", m.iou},   {"precision", m.precision}, {"recall", m.recall},
            {"f1", m.f1},     {"mse", m.mse},             {"ssim", m.ssim},
            {"both_empty", m.both_empty}};
}

class EvaluateCommand final : public Command {
  public:
    EvaluateCommand() : Command("evaluate", "Compare extracted instances and traits with a reference") {}

  protected:
    void add_options(CLI::App &app) override {
        app.add_option("--scene", scene_, "stamped scene PLY")->check(CLI::ExistingFile);
        app.add_option("--instances", instances_, "instance map JSON (default: ids stamped in the scene)")
            ->check(CLI::ExistingFile);
        app.add_option("--traits-csv", traits_csv_, "estimated traits (default: measured from the scene)")
            ->check(CLI::ExistingFile);
        app.add_option("--ref-traits-csv", ref_traits_csv_, "reference traits by instance id")
            ->check(CLI::ExistingFile);
        app.add_option("--truth", truth_, "synthetic ground truth JSON")->check(CLI::ExistingFile);
        app.add_option("--reference", reference_, "reference cloud (PLY or XYZ)")->check(CLI::ExistingFile);
        app.add_option("--transform", transform_, "transform JSON taking the reference into the scene frame")
            ->check(CLI::ExistingFile);
        app.add_option("--gt-masks", gt_masks_, "ground-truth mask directory")->check(CLI::ExistingDirectory);
        app.add_option("--cameras", cameras_, "cameras JSON, needed with --gt-masks")->check(CLI::ExistingFile);
        app.add_option("--eval-view", eval_views_, "camera ids for mask metrics (default: first camera)")
            ->delimiter(',');
        app.add_option("--outlier", outlier_, "outlier filter before regression: none, mcd or trim")
            ->check(CLI::IsMember({"none", "mcd", "trim"}));
        app.add_option("--crop-distance-cm", crop_, "reference crop distance");
        app.add_option("--buffer-cm", buffer_, "oriented box buffer");
        app.add_option("--unit-scale", unit_scale_, "centimetres per scene unit");
        app.add_option("--out-report", out_report_, "report JSON")->required();
        app.add_option("--out-csv", out_csv_, "report CSV (default: report path with .csv)");
    }

    nlohmann::json defaults() const override {
        const MatchConfig m;
        return {{"outlier", "none"},
                {"crop_distance_cm", m.crop_distance_cm},
                {"buffer_cm", m.buffer_cm},
                {"traits", traits_config_to_json(TraitsConfig{})}};
    }

    nlohmann::json flag_overrides() const override {
        nlohmann::json j = nlohmann::json::object();
        set_if(j, "outlier", outlier_);
        set_if(j, "crop_distance_cm", crop_);
        set_if(j, "buffer_cm", buffer_);
        if (unit_scale_) {
            j["traits"] = {{"unit_scale", *unit_scale_}};
        }
        return j;
    }

    fs::path default_manifest_path() const override { return out_report_ + ".manifest.json"; }

    void run(const nlohmann::json &config, RunManifest &manifest) override {
        const fs::path csv_path = out_csv_ ? fs::path(*out_csv_) : fs::path(out_report_).replace_extension(".csv");
        for (const auto *p : {&scene_, &instances_, &traits_csv_, &ref_traits_csv_, &truth_, &reference_,
                              &transform_, &gt_masks_, &cameras_}) {
            if (*p) {
                manifest.add_input(**p);
            }
        }
        check_outputs(manifest, {out_report_, csv_path});
        const TraitsConfig tc = traits_config_from_json(config.at("traits"));
        const OutlierFilter filter = parse_outlier_filter(config.at("outlier").get<std::string>());
        MatchConfig mc;
        mc.crop_distance_cm = config.at("crop_distance_cm").get<double>();
        mc.buffer_cm = config.at("buffer_cm").get<double>();
        mc.unit_scale = tc.unit_scale;
        manifest.rng_seed = tc.seed;

        const bool need_scene = !traits_csv_ || (!ref_traits_csv_ && (truth_ || reference_)) || gt_masks_;
        if (need_scene && !scene_) {
            throw InputError("evaluate needs --scene for the requested comparison");
        }
        if (!ref_traits_csv_ && !truth_ && !reference_ && !gt_masks_) {
            throw InputError("evaluate needs --ref-traits-csv, --truth, --reference or --gt-masks");
        }
        std::optional<GaussianScene> scene;
        InstanceMap instances;
        if (scene_) {
            scene = load_scene_ply(*scene_);
            instances = instances_ ? load_instance_map(*instances_) : instances_from_scene(*scene);
        }

        nlohmann::json report;
        std::vector<TraitRecord> est = traits_csv_ ? read_traits_csv(*traits_csv_) : std::vector<TraitRecord>{};
        if (!traits_csv_ && scene) {
            est = measure_all(*scene, instances, tc);
        }

        std::optional<std::vector<TraitRecord>> ref;
        if (ref_traits_csv_) {
            ref = read_traits_csv(*ref_traits_csv_);
            report["reference_source"] = "traits_csv";
        } else if (truth_) {
            ref = truth_traits(instances, load_truth(*truth_), tc.unit_scale, report);
            report["reference_source"] = "truth";
        } else if (reference_) {
            ref = cloud_traits(*scene, instances, mc, tc, est, report);
            report["reference_source"] = "reference_cloud";
        }

        std::vector<RegressionReport> regressions;
        if (ref) {
            std::map<std::uint32_t, std::string> ref_groups;
            for (const auto &r : *ref) {
                if (!r.group.empty()) {
                    ref_groups[r.instance_id] = r.group;
                }
            }
            for (auto &e : est) {
                if (e.group.empty()) {
                    if (const auto it = ref_groups.find(e.instance_id); it != ref_groups.end()) {
                        e.group = it->second;
                    }
                }
            }
            regressions.push_back(regression_report(est, *ref, AggregationLevel::PerInstance, filter));
            const bool grouped = std::any_of(est.begin(), est.end(), [](const auto &r) { return !r.group.empty(); });
            if (grouped) {
                regressions.push_back(regression_report(est, *ref, AggregationLevel::PerGroup, filter));
            }
            auto &reg = report["regression"] = nlohmann::json::array();
            for (const auto &r : regressions) {
                reg.push_back(report_to_json(r));
            }
            auto &anova = report["anova"];
            for (const Trait t : all_traits) {
                anova["estimated"][std::string(trait_name(t))] = anova_json(est, t);
                anova["reference"][std::string(trait_name(t))] = anova_json(*ref, t);
            }
        }
        report["outlier_filter"] = to_string(filter);
        report["instances_estimated"] = est.size();

        if (gt_masks_) {
            report["mask_metrics"] = mask_report(*scene);
        }

        write_json_file(report, out_report_);
        write_report_csv(regressions, csv_path);
        manifest.outputs = {out_report_, csv_path.string()};
    }

  private:
    static std::vector<TraitRecord> truth_traits(const InstanceMap &instances, const GroundTruth &truth,
                                                 double unit_scale, nlohmann::json &report) {
        const TruthScore score = score_against_truth(instances, truth);
        report["detection"] = {{"detected_fraction", score.detected_fraction},
                               {"mean_set_iou", score.mean_set_iou},
                               {"method", score.method}};
        std::vector<TraitRecord> out;
        for (const auto &m : score.matches) {
            if (m.iou < 0.5) {
                continue;
            }
            const HeadTruth &h = truth.heads[m.head];
            TraitRecord r;
            r.instance_id = m.instance_id;
            r.length_cm = h.length_cm(unit_scale);
            r.width_cm = h.width_cm(unit_scale);
            r.volume_cm3 = h.volume_cm3(unit_scale);
            r.n_points_raw = r.n_points_final = h.gaussians.size();
            r.group = h.group;
            out.push_back(r);
        }
        std::sort(out.begin(), out.end(), [](const auto &a, const auto &b) { return a.instance_id < b.instance_id; });
        return out;
    }

    std::vector<TraitRecord> cloud_traits(const GaussianScene &scene, const InstanceMap &instances,
                                          const MatchConfig &mc, const TraitsConfig &tc,
                                          const std::vector<TraitRecord> &est, nlohmann::json &report) const {
        PointCloud reference = load_point_cloud(*reference_);
        if (transform_) {
            reference = load_transform(*transform_).apply(reference);
        }
        const auto matches = match_instances(scene, instances, reference, mc);
        std::map<std::uint32_t, std::string> groups;
        for (const auto &e : est) {
            groups[e.instance_id] = e.group;
        }
        std::vector<TraitRecord> out;
        std::size_t matched_points = 0;
        for (const auto &m : matches) {
            matched_points += m.reference_points.size();
            TraitRecord r = measure_cloud({m.instance_id, m.reference_points, CloudStage::Raw}, tc);
            r.group = groups[m.instance_id];
            out.push_back(std::move(r));
        }
        report["reference_matching"] = {{"reference_points", reference.size()},
                                        {"matched_points", matched_points},
                                        {"crop_distance_cm", mc.crop_distance_cm},
                                        {"buffer_cm", mc.buffer_cm}};
        return out;
    }

    nlohmann::json mask_report(const GaussianScene &scene) const {
        if (!cameras_) {
            throw InputError("--gt-masks needs --cameras");
        }
        const auto views = load_cameras(*cameras_);
        if (views.empty()) {
            throw InputError("camera file lists no views");
        }
        const std::vector<std::string> ids = eval_views_.empty() ? std::vector<std::string>{views.front().id}
                                                                  : eval_views_;
        std::vector<std::uint8_t> labels(scene.size());
        for (std::size_t i = 0; i < scene.size(); ++i) {
            labels[i] = scene.gaussians[i].instance_id != 0 ? 1 : 0;
        }
        const MaskPool gt = load_masks(*gt_masks_, views);
        nlohmann::json out = nlohmann::json::object();
        for (const auto &id : ids) {
            const auto it = std::find_if(views.begin(), views.end(), [&](const View &v) { return v.id == id; });
            if (it == views.end()) {
                throw InputError("no camera with id '" + id + "'");
            }
            BinaryMask gt_union(it->width, it->height, 1);
            for (const auto idx : gt.indices_for_view(id)) {
                const auto &rec = gt.record(idx);
                for (std::size_t p = 0; p < rec.bitmap.data.size(); ++p) {
                    gt_union.data[p] = (gt_union.data[p] != 0 || rec.bitmap.data[p] != 0) ? 1 : 0;
                }
            }
            const BinaryMask pred = render_label_mask(scene, *it, labels);
            out[id] = mask_metrics_json(mask_metrics(pred, gt_union));
        }
        return out;
    }

    std::optional<std::string> scene_;
    std::optional<std::string> instances_;
    std::optional<std::string> traits_csv_;
    std::optional<std::string> ref_traits_csv_;
    std::optional<std::string> truth_;
    std::optional<std::string> reference_;
    std::optional<std::string> transform_;
    std::optional<std::string> gt_masks_;
    std::optional<std::string> cameras_;
    std::vector<std::string> eval_views_;
    std::optional<std::string> outlier_;
    std::optional<double> crop_;
    std::optional<double> buffer_;
    std::optional<double> unit_scale_;
    std::string out_report_;
    std::optional<std::string> out_csv_;
};

} // namespace

std::unique_ptr<Command> make_align() { return std::make_unique<AlignCommand>(); }
std::unique_ptr<Command> make_evaluate() { return std::make_unique<EvaluateCommand>(); }

} // namespace wheatgs::cli
