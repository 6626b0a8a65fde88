// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/geometry.hpp"
#include "wheatgs/image.hpp"
#include "wheatgs/scene.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace wheatgs {

/// Synthetic wheat plot: ellipsoidal heads of splats on a jittered grid above
/// a layer of clutter, seen by cameras on an overhead ring.
struct SynthConfig {
    int n_heads = 20;
    Vec3 head_semi_axes_cm = {4.0, 1.2, 1.2};
    double head_size_jitter = 0.0; // per-head scale factor drawn from [1 - j, 1 + j]
    int gaussians_per_head_min = 100;
    int gaussians_per_head_max = 300;
    int clutter_gaussians = 300;
    int n_views = 8;
    int image_size = 512;
    double mask_dropout = 0.0;  // probability per (head, view)
    int mask_morph_noise = 0;   // max erosion/dilation radius in pixels
    std::uint64_t rng_seed = 7;

    double unit_scale = 100.0;        // cm per scene unit (scene is in meters)
    double grid_spacing_cm = 16.0;
    double grid_jitter_cm = 2.0;
    double canopy_height_cm = 35.0;
    double max_head_elevation_deg = 40.0;
    double camera_distance_cm = 120.0;
    double camera_tilt_deg = 30.0;    // from vertical
    int rows_per_group = 1;           // grid rows sharing a group key

    void validate() const;
};

struct HeadTruth {
    std::vector<std::size_t> gaussians; // ascending indices
    Vec3 center = Vec3::Zero();         // scene units
    Vec3 semi_axes = Vec3::Zero();      // scene units
    Mat3 orientation = Mat3::Identity(); // columns: head axes in world frame
    std::string group;

    [[nodiscard]] double length_cm(double unit_scale) const { return 2.0 * semi_axes.x() * unit_scale; }
    [[nodiscard]] double width_cm(double unit_scale) const { return semi_axes.y() * unit_scale; }
    [[nodiscard]] double volume_cm3(double unit_scale) const;
};

struct GroundTruth {
    std::vector<HeadTruth> heads;
    /// ideal_masks[view][head]: rendered from the true index set (may be empty).
    std::vector<std::vector<BinaryMask>> ideal_masks;
    /// Which head produced each pool mask.
    std::vector<std::pair<MaskKey, std::size_t>> mask_sources;
    double unit_scale = 100.0;
};

struct SynthScene {
    GaussianScene scene;
    std::vector<View> views;
    MaskPool pool;
    GroundTruth truth;
};

[[nodiscard]] SynthScene generate(const SynthConfig &config);

struct TruthMatch {
    std::size_t head = 0;
    std::uint32_t instance_id = 0;
    double iou = 0.0;
};

struct TruthScore {
    double detected_fraction = 0.0;
    /// Mean over true heads of the matched set IoU (0 for unmatched heads).
    double mean_set_iou = 0.0;
    std::string method = "hungarian";
    std::vector<TruthMatch> matches; // one-to-one, IoU > 0 only
};

/// One-to-one matching of predicted and true Gaussian sets maximizing total
/// set IoU; a head counts as detected when its match has IoU >= 0.5.
[[nodiscard]] TruthScore score_against_truth(const InstanceMap &instances, const GroundTruth &truth);

/// Dense surface samples of every head (a laser-scan stand-in), scene units.
[[nodiscard]] PointCloud sample_reference_cloud(const GroundTruth &truth, int points_per_head, std::uint64_t seed);

[[nodiscard]] nlohmann::json synth_config_to_json(const SynthConfig &config);
/// Overlays keys present in `j` onto `config`; unknown keys are an InputError.
void synth_config_from_json(const nlohmann::json &j, SynthConfig &config);

void save_truth(const GroundTruth &truth, const std::filesystem::path &path);
/// Loads heads (not ideal masks) from a truth JSON file.
[[nodiscard]] GroundTruth load_truth(const std::filesystem::path &path);

/// Minimum-cost assignment on a rectangular cost matrix (rows x cols, row-major).
/// Returns, for each row, the assigned column or -1.
[[nodiscard]] std::vector<int> hungarian_assign(const std::vector<double> &cost, std::size_t rows, std::size_t cols);

} // namespace wheatgs
