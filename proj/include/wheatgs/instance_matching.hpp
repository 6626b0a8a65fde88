// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/geometry.hpp"
#include "wheatgs/scene.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace wheatgs {

struct OrientedBox {
    Vec3 center = Vec3::Zero();
    Mat3 axes = Mat3::Identity(); // columns
    Vec3 half_extents = Vec3::Zero();

    [[nodiscard]] bool contains(const Vec3 &p) const;
};

/// Box aligned with the principal axes of `points`, grown by `buffer` on every side.
[[nodiscard]] OrientedBox oriented_box(std::span<const Vec3> points, double buffer);

struct InstanceMatch {
    std::uint32_t instance_id = 0;
    PointCloud extracted_points;
    PointCloud reference_points;
    OrientedBox obb;
};

struct MatchConfig {
    double crop_distance_cm = 1.5;
    double buffer_cm = 1.0;
    double unit_scale = 100.0; // cm per scene unit
};

/// Crops the (already aligned) reference cloud to points within the crop
/// distance of any extracted point, then hands each remaining point to the
/// instance whose buffered box contains it; several candidates resolve to the
/// instance with the nearest extracted point. One entry per instance, in id order.
[[nodiscard]] std::vector<InstanceMatch> match_instances(const GaussianScene &scene, const InstanceMap &instances,
                                                         std::span<const Vec3> reference,
                                                         const MatchConfig &config = {});

} // namespace wheatgs
