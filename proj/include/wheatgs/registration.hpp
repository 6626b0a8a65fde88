// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/geometry.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace wheatgs {

/// p -> scale * rotation * p + translation
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    double scale = 1.0;

    [[nodiscard]] Vec3 apply(const Vec3 &p) const { return scale * (rotation * p) + translation; }
    [[nodiscard]] PointCloud apply(std::span<const Vec3> points) const;
    [[nodiscard]] Mat4 matrix() const;
    /// this ∘ other (other is applied first).
    [[nodiscard]] RigidTransform compose(const RigidTransform &other) const;
    [[nodiscard]] RigidTransform inverse() const;
};

/// Angle of the relative rotation a^T b, radians.
[[nodiscard]] double rotation_angle(const Mat3 &a, const Mat3 &b);

/// Least-squares transform mapping source[i] onto target[i] (SVD of the
/// cross-covariance, reflection-corrected). Throws AlignmentError for fewer
/// than three pairs or collinear configurations.
[[nodiscard]] RigidTransform kabsch_align(std::span<const Vec3> source, std::span<const Vec3> target,
                                          bool with_scale = false);

struct IcpConfig {
    double trim_fraction = 0.8; // fraction of closest pairs kept per iteration
    int max_iterations = 50;
    double tolerance = 1e-6;         // minimum RMS improvement, scene units
    double residual_warning = 0.005; // final RMS above this is flagged, scene units
    std::size_t min_points = 100;

    void validate() const;
};

struct IcpResult {
    RigidTransform transform;
    double rms = 0.0; // trimmed RMS of the returned transform
    int iterations = 0;
    bool converged = false;
    bool high_residual = false;
    std::vector<double> rms_history; // trimmed RMS before each update
    std::string diagnostics;
};

/// Trimmed point-to-point ICP from `init`. Never throws on non-convergence;
/// the best transform seen is returned with diagnostics.
[[nodiscard]] IcpResult icp_align(std::span<const Vec3> source, std::span<const Vec3> target,
                                  const RigidTransform &init = {}, const IcpConfig &config = {});

[[nodiscard]] nlohmann::json transform_to_json(const RigidTransform &t);
[[nodiscard]] RigidTransform transform_from_json(const nlohmann::json &j);
/// Reads a bare transform object or the "transform" member of an align result.
[[nodiscard]] RigidTransform load_transform(const std::filesystem::path &path);

/// Marker pairs as text: six numbers per line (source xyz, target xyz); '#' comments.
void load_point_pairs(const std::filesystem::path &path, PointCloud &source, PointCloud &target);

} // namespace wheatgs
