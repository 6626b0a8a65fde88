// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/geometry.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace wheatgs {

/// Triangulated convex hull. Faces index into the input point array and are
/// wound counter-clockwise seen from outside.
struct ConvexHull {
    std::vector<std::array<std::size_t, 3>> faces;
    std::vector<std::size_t> vertices; // ascending

    /// Enclosed volume as a sum of signed tetrahedra about the vertex centroid.
    [[nodiscard]] double volume(std::span<const Vec3> points) const;
};

/// Quickhull. Throws InputError when the points do not span three dimensions.
[[nodiscard]] ConvexHull convex_hull(std::span<const Vec3> points);

} // namespace wheatgs
