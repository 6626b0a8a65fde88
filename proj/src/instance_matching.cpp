// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/instance_matching.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/parallel.hpp"
#include "wheatgs/spatial_index.hpp"

#include <algorithm>
#include <limits>

namespace wheatgs {

bool OrientedBox::contains(const Vec3 &p) const {
    const Vec3 local = axes.transpose() * (p - center);
    return (local.cwiseAbs().array() <= half_extents.array()).all();
}

OrientedBox oriented_box(std::span<const Vec3> points, double buffer) {
    if (points.empty()) {
        throw InputError("oriented_box of an empty point set");
    }
    const PrincipalFrame frame = principal_frame(points);
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto &p : points) {
        const Vec3 l = frame.to_local(p);
        lo = lo.cwiseMin(l);
        hi = hi.cwiseMax(l);
    }
    OrientedBox box;
    box.axes = frame.axes;
    box.center = frame.mean + frame.axes * (0.5 * (lo + hi));
    box.half_extents = (0.5 * (hi - lo)).array() + buffer;
    return box;
}

std::vector<InstanceMatch> match_instances(const GaussianScene &scene, const InstanceMap &instances,
                                           std::span<const Vec3> reference, const MatchConfig &config) {
    if (!(config.unit_scale > 0.0) || !(config.crop_distance_cm >= 0.0) || !(config.buffer_cm >= 0.0)) {
        throw InputError("match_instances: unit_scale must be positive, distances non-negative");
    }
    const double crop = config.crop_distance_cm / config.unit_scale;
    const double buffer = config.buffer_cm / config.unit_scale;

    std::vector<InstanceMatch> matches;
    std::vector<PointIndex> indices;
    PointCloud all_points;
    for (const auto &[id, entry] : instances) {
        InstanceMatch m;
        m.instance_id = id;
        for (const auto k : entry.gaussians) {
            if (k >= scene.size()) {
                throw InputError("instance " + std::to_string(id) + " references a Gaussian outside the scene");
            }
            m.extracted_points.push_back(scene.gaussians[k].position);
        }
        if (m.extracted_points.empty()) {
            throw InputError("instance " + std::to_string(id) + " has no Gaussians");
        }
        m.obb = oriented_box(m.extracted_points, buffer);
        all_points.insert(all_points.end(), m.extracted_points.begin(), m.extracted_points.end());
        indices.emplace_back(m.extracted_points);
        matches.push_back(std::move(m));
    }
    if (matches.empty()) {
        throw EvaluationError("match_instances: no extracted instances");
    }

    const PointIndex all_index(all_points);
    std::vector<int> owner(reference.size(), -1);
    std::vector<std::uint8_t> within(reference.size(), 0);
    parallel_for(reference.size(), [&](std::size_t r) {
        const Vec3 &p = reference[r];
        if (all_index.nearest(p).distance > crop) {
            return;
        }
        within[r] = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < matches.size(); ++i) {
            if (!matches[i].obb.contains(p)) {
                continue;
            }
            const double d = indices[i].nearest(p).distance;
            if (d < best) {
                best = d;
                owner[r] = static_cast<int>(i);
            }
        }
    });
    for (std::size_t r = 0; r < reference.size(); ++r) {
        if (owner[r] >= 0) {
            matches[static_cast<std::size_t>(owner[r])].reference_points.push_back(reference[r]);
        }
    }
    if (std::find(within.begin(), within.end(), 1) == within.end()) {
        throw EvaluationError("match_instances: no reference point lies within the crop distance");
    }
    return matches;
}

} // namespace wheatgs
