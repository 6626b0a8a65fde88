// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

// Slow, straightforward reference implementations used to check the
// optimized library code, plus small builders for random test inputs.

#pragma once

#include "wheatgs/rasterizer.hpp"
#include "wheatgs/scene.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace wheatgs::testing {

/// Camera at the origin looking down +z with the principal point at the image center.
[[nodiscard]] View axis_view(int width, int height, double focal, std::string id = "v0");

/// Camera at `eye` looking at `target` (OpenCV convention, +y down in the image).
[[nodiscard]] View look_at(const Vec3 &eye, const Vec3 &target, int size, double focal, std::string id);

/// K random Gaussians inside the frustum of axis_view(size, size, focal) at depth [2, 6].
[[nodiscard]] GaussianScene random_scene(std::mt19937_64 &rng, std::size_t k, int size, double focal,
                                         double scale_min = 0.02, double scale_max = 0.2);

[[nodiscard]] Quat random_rotation(std::mt19937_64 &rng);

struct NaiveImage {
    ImageD weight;
    ImageD alpha;
};

/// Per-pixel compositing over every splat in (depth, index) order, no tiles.
[[nodiscard]] NaiveImage naive_rasterize(std::span<const Splat2D> splats, std::span<const double> x, int width,
                                         int height, const RasterSettings &settings = {});

[[nodiscard]] ContributionLedger naive_ledger(std::span<const Splat2D> splats, std::size_t gaussian_count,
                                              const BinaryMask &mask, const RasterSettings &settings = {});

/// Sum over views and pixels of |weight - mask| using naive_rasterize.
[[nodiscard]] double naive_objective(const GaussianScene &scene, std::span<const MaskedView> views,
                                     std::span<const std::uint8_t> labels, const RasterSettings &settings = {});

/// 2D covariance J W Sigma W^T J^T with J from central finite differences of the projection.
[[nodiscard]] Mat2 numeric_projected_covariance(const Gaussian &g, const View &view);

struct ExhaustiveResult {
    std::vector<std::uint8_t> labels;
    double objective = 0.0;
};

/// Minimum of evaluate_objective over all 2^K label vectors (K <= 20).
[[nodiscard]] ExhaustiveResult exhaustive_labels(const GaussianScene &scene, std::span<const MaskedView> views,
                                                 const RasterSettings &settings = {});

/// Points uniformly distributed on an ellipsoid surface (approximately, by
/// rejection on the area element) with the given semi-axes.
[[nodiscard]] PointCloud ellipsoid_surface(std::mt19937_64 &rng, const Vec3 &semi, std::size_t n);
[[nodiscard]] PointCloud ellipsoid_volume(std::mt19937_64 &rng, const Vec3 &semi, std::size_t n);

} // namespace wheatgs::testing
