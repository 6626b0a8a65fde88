// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/geometry.hpp"
#include "wheatgs/image.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wheatgs {

/// One 3D Gaussian primitive in the standard splat export parameterization.
struct Gaussian {
    Vec3 position = Vec3::Zero();
    Vec3 scale_log = Vec3::Zero();
    Quat rotation = Quat::Identity(); // unit, (w, x, y, z)
    double opacity_logit = 0.0;
    /// Spherical-harmonics coefficients, one RGB triple per basis function
    /// (1, 4, 9 or 16 entries).
    std::vector<Vec3> sh = {Vec3::Zero()};
    std::uint32_t instance_id = 0; // 0 = unassigned

    [[nodiscard]] Vec3 scale() const { return scale_log.array().exp(); }
    [[nodiscard]] double opacity() const;
    /// World-space covariance R diag(s)^2 R^T.
    [[nodiscard]] Mat3 covariance() const;
};

struct GaussianScene {
    std::vector<Gaussian> gaussians;
    /// Centimeters per scene unit.
    double unit_scale = 100.0;

    [[nodiscard]] std::size_t size() const { return gaussians.size(); }
    [[nodiscard]] bool empty() const { return gaussians.empty(); }
    /// SH degree shared by all Gaussians; throws FormatError on mixed or invalid counts.
    [[nodiscard]] int sh_degree() const;
};

/// Number of SH basis functions for a degree in 0..3, or nullopt for other counts.
[[nodiscard]] std::optional<int> sh_degree_for_count(std::size_t coeff_count);

/// Calibrated pinhole camera, OpenCV convention (+z forward, +y down).
struct View {
    std::string id;
    int width = 0;
    int height = 0;
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Mat3 rotation = Mat3::Identity(); // world -> camera
    Vec3 translation = Vec3::Zero();  // world -> camera

    [[nodiscard]] Vec3 to_camera(const Vec3 &world) const { return rotation * world + translation; }
    /// Pixel coordinates of a camera-frame point (z must be non-zero).
    [[nodiscard]] Vec2 project_camera(const Vec3 &cam) const {
        return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
    }
    [[nodiscard]] Vec2 project(const Vec3 &world) const { return project_camera(to_camera(world)); }
    [[nodiscard]] Vec3 center() const { return -rotation.transpose() * translation; }
    [[nodiscard]] Mat4 world_to_camera() const;
};

struct MaskKey {
    std::string view_id;
    int mask_id = 0;
    auto operator<=>(const MaskKey &) const = default;
};

struct MaskRecord {
    std::string view_id;
    int mask_id = 0;
    BinaryMask bitmap;
    PixelRect bbox;
    std::size_t area = 0;
    bool consumed = false;

    [[nodiscard]] MaskKey key() const { return {view_id, mask_id}; }
};

/// Per-view collections of instance-agnostic binary masks with consumption state.
class MaskPool {
  public:
    /// Adds a mask, computing bbox and area. Returns false (and does not add)
    /// when the bitmap has no foreground pixel.
    bool add(std::string view_id, int mask_id, BinaryMask bitmap);

    [[nodiscard]] std::size_t size() const { return records_.size(); }
    [[nodiscard]] bool empty() const { return records_.empty(); }
    [[nodiscard]] std::size_t available() const;
    [[nodiscard]] const std::vector<MaskRecord> &records() const { return records_; }
    [[nodiscard]] const MaskRecord &record(std::size_t index) const { return records_.at(index); }
    /// Indices of records belonging to `view_id`, in insertion order.
    [[nodiscard]] std::vector<std::size_t> indices_for_view(const std::string &view_id) const;
    [[nodiscard]] std::optional<std::size_t> find(const MaskKey &key) const;
    void consume(std::size_t index) { records_.at(index).consumed = true; }

  private:
    std::vector<MaskRecord> records_;
};

struct InstanceEntry {
    std::vector<std::size_t> gaussians; // ascending Gaussian indices
    std::vector<MaskKey> sources;       // seed first
};

/// instance_id -> Gaussian members and the masks they were lifted from.
using InstanceMap = std::map<std::uint32_t, InstanceEntry>;

/// Rebuilds an instance map (without sources) from the scene's instance_id stamps.
[[nodiscard]] InstanceMap instances_from_scene(const GaussianScene &scene);

} // namespace wheatgs
