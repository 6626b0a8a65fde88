// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/geometry.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace wheatgs {

struct HdbscanParams {
    std::size_t min_cluster_size = 15;
    std::size_t min_samples = 5; // neighbourhood size for core distances, the point itself included
};

/// Density clustering over Euclidean distance: mutual-reachability MST,
/// condensed tree, excess-of-mass selection. The root may be selected when
/// the data holds a single cluster, in which case every point is a member.
/// Returns one label per point, -1 for noise; labels are 0..C-1 in order of
/// first appearance in the condensed tree.
[[nodiscard]] std::vector<int> hdbscan(std::span<const Vec3> points, const HdbscanParams &params = {});

/// Indices of the points carrying the most common non-negative label
/// (ties go to the smaller label). Empty when everything is noise.
[[nodiscard]] std::vector<std::size_t> largest_cluster(std::span<const int> labels);

/// Statistical outlier removal: keeps points whose mean distance to their
/// k nearest neighbours is at most mean + std_ratio * stddev of that
/// statistic over the cloud. Returns ascending kept indices.
[[nodiscard]] std::vector<std::size_t> statistical_outlier_removal(std::span<const Vec3> points, std::size_t k,
                                                                   double std_ratio);

} // namespace wheatgs
