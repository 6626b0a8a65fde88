// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/error.hpp"
#include "wheatgs/geometry.hpp"
#include "wheatgs/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wheatgs {

enum class CloudStage { Raw, Subsampled, Clustered, Filtered };

struct InstanceCloud {
    std::uint32_t instance_id = 0;
    PointCloud points; // scene units
    CloudStage stage = CloudStage::Raw;
};

struct TraitsConfig {
    std::size_t max_points = 5000;
    std::size_t min_points = 30;
    std::size_t min_cluster_size = 15;
    std::size_t min_samples = 5;
    std::size_t sor_neighbors = 16;
    double sor_std_ratio = 2.0;
    int sor_passes = 2;
    int spline_bins = 50;
    int arc_samples = 1001;
    double width_percentile = 99.0;
    double thickness_factor = 1.0; // 2.0 reports full thickness instead of half
    double unit_scale = 100.0;     // centimetres per scene unit
    std::uint64_t seed = 0;

    void validate() const;
};

/// A cloud that cannot be measured (too few points, degenerate geometry).
/// measure_all records these as flagged rows instead of failing.
class UnmeasurableError : public InputError {
  public:
    using InputError::InputError;
};

/// Subsample -> keep the largest HDBSCAN cluster -> repeated SOR.
/// The subsample RNG is seeded from (config.seed, cloud.instance_id).
[[nodiscard]] InstanceCloud preprocess(const InstanceCloud &cloud, const TraitsConfig &config);

/// Arc length of a smoothing spline through the cloud's PC1/PC2 projection, cm.
[[nodiscard]] double measure_length(std::span<const Vec3> points, const TraitsConfig &config = {});
[[nodiscard]] double measure_length(std::span<const Vec3> points, const PrincipalFrame &frame,
                                    const TraitsConfig &config);
/// Percentile of |PC3| times thickness_factor, cm.
[[nodiscard]] double measure_width(std::span<const Vec3> points, const TraitsConfig &config = {});
[[nodiscard]] double measure_width(std::span<const Vec3> points, const PrincipalFrame &frame,
                                   const TraitsConfig &config);
/// Convex hull volume, cm^3.
[[nodiscard]] double measure_volume(std::span<const Vec3> points, const TraitsConfig &config = {});

/// Linear-interpolation percentile (p in [0, 100]) of unsorted values.
[[nodiscard]] double percentile(std::vector<double> values, double p);

struct TraitRecord {
    std::uint32_t instance_id = 0;
    std::optional<double> length_cm;
    std::optional<double> width_cm;
    std::optional<double> volume_cm3;
    std::size_t n_points_raw = 0;
    std::size_t n_points_final = 0;
    std::string group;
    std::string flags; // empty when measured

    [[nodiscard]] bool measured() const { return length_cm && width_cm && volume_cm3; }
};

using GroupMap = std::map<std::uint32_t, std::string>;

/// Measures every instance of `instances` from the Gaussian centroids of
/// `scene`. Rows come out in ascending instance id.
[[nodiscard]] std::vector<TraitRecord> measure_all(const GaussianScene &scene, const InstanceMap &instances,
                                                   const TraitsConfig &config, const GroupMap &groups = {});

/// Single-cloud convenience used by measure_all.
[[nodiscard]] TraitRecord measure_cloud(const InstanceCloud &cloud, const TraitsConfig &config);

void write_traits_csv(std::span<const TraitRecord> records, const std::filesystem::path &path);
[[nodiscard]] std::vector<TraitRecord> read_traits_csv(const std::filesystem::path &path);
/// JSON object {"<instance_id>": "<group>", ...}.
[[nodiscard]] GroupMap load_groups(const std::filesystem::path &path);

} // namespace wheatgs
