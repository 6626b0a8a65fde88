// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>
#include <vector>

namespace wheatgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

using PointCloud = std::vector<Vec3>;

/// Principal axes of a point set. `axes.col(i)` is the i-th principal direction
/// (descending variance), `variances(i)` the matching eigenvalue of the
/// population covariance.
struct PrincipalFrame {
    Vec3 mean = Vec3::Zero();
    Mat3 axes = Mat3::Identity();
    Vec3 variances = Vec3::Zero();

    /// Coordinates of `p` in the principal frame.
    [[nodiscard]] Vec3 to_local(const Vec3 &p) const { return axes.transpose() * (p - mean); }
};

/// PCA of `points`. Equal eigenvalues keep the solver's axis order, so the
/// result is deterministic. Requires at least one point.
[[nodiscard]] PrincipalFrame principal_frame(std::span<const Vec3> points);

/// Numerical rank of the centered point set (0..3), relative to its extent.
[[nodiscard]] int affine_rank(std::span<const Vec3> points, double rel_tol = 1e-9);

} // namespace wheatgs
