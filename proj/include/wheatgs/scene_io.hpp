// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/geometry.hpp"
#include "wheatgs/scene.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace wheatgs {

/// Loads a splat scene in the standard PLY layout (x,y,z, f_dc_*, f_rest_*,
/// opacity, scale_*, rot_*), binary little-endian or ASCII. Quaternions are
/// normalized. An optional `instance_id` property and `comment unit_scale <v>`
/// header line are honored.
[[nodiscard]] GaussianScene load_scene_ply(const std::filesystem::path &path);

/// Writes the scene as binary little-endian PLY with an extra `instance_id`
/// unsigned-int property.
void save_scene_ply(const GaussianScene &scene, const std::filesystem::path &path);

/// Camera list from JSON: an array of {id, width, height, fx, fy, cx, cy,
/// world_to_camera: 16 row-major numbers}. Rotation blocks whose singular
/// values lie within 1e-3 of one are re-orthonormalized by polar decomposition.
[[nodiscard]] std::vector<View> load_cameras(const std::filesystem::path &path);
void save_cameras(std::span<const View> views, const std::filesystem::path &path);

/// Loads root/<view_id>/<mask_id>.png for every view. Foreground is gray >= 128.
/// All-background masks are skipped with a warning.
[[nodiscard]] MaskPool load_masks(const std::filesystem::path &root, std::span<const View> views);
/// Writes the pool as root/<view_id>/<mask_id>.png plus root/index.json.
void save_masks(const MaskPool &pool, const std::filesystem::path &root);

/// Point cloud from PLY (vertex x,y,z) or whitespace-separated XYZ text
/// (extra columns ignored, '#' comments allowed).
[[nodiscard]] PointCloud load_point_cloud(const std::filesystem::path &path);
void save_point_cloud_ply(std::span<const Vec3> points, const std::filesystem::path &path);

/// {"<id>": {"gaussians": [...], "sources": [[view_id, mask_id], ...]}}
void save_instance_map(const InstanceMap &map, const std::filesystem::path &path);
[[nodiscard]] InstanceMap load_instance_map(const std::filesystem::path &path);

} // namespace wheatgs
