// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/scene.hpp"

#include "wheatgs/error.hpp"

#include <algorithm>
#include <cmath>

namespace wheatgs {

double Gaussian::opacity() const { return 1.0 / (1.0 + std::exp(-opacity_logit)); }

Mat3 Gaussian::covariance() const {
    const Mat3 r = rotation.normalized().toRotationMatrix();
    const Vec3 s = scale();
    return r * s.array().square().matrix().asDiagonal() * r.transpose();
}

std::optional<int> sh_degree_for_count(std::size_t coeff_count) {
    switch (coeff_count) {
    case 1:
        return 0;
    case 4:
        return 1;
    case 9:
        return 2;
    case 16:
        return 3;
    default:
        return std::nullopt;
    }
}

int GaussianScene::sh_degree() const {
    if (gaussians.empty()) {
        return 0;
    }
    const std::size_t count = gaussians.front().sh.size();
    const auto degree = sh_degree_for_count(count);
    if (!degree) {
        throw FormatError("unsupported spherical-harmonics coefficient count " + std::to_string(count));
    }
    for (const auto &g : gaussians) {
        if (g.sh.size() != count) {
            throw FormatError("Gaussians carry differing spherical-harmonics coefficient counts");
        }
    }
    return *degree;
}

Mat4 View::world_to_camera() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

bool MaskPool::add(std::string view_id, int mask_id, BinaryMask bitmap) {
    const std::size_t area = count_foreground(bitmap);
    if (area == 0) {
        return false;
    }
    MaskRecord rec;
    rec.view_id = std::move(view_id);
    rec.mask_id = mask_id;
    rec.bbox = foreground_bbox(bitmap);
    rec.area = area;
    rec.bitmap = std::move(bitmap);
    records_.push_back(std::move(rec));
    return true;
}

std::size_t MaskPool::available() const {
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [](const MaskRecord &r) { return !r.consumed; }));
}

std::vector<std::size_t> MaskPool::indices_for_view(const std::string &view_id) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (records_[i].view_id == view_id) {
            out.push_back(i);
        }
    }
    return out;
}

std::optional<std::size_t> MaskPool::find(const MaskKey &key) const {
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (records_[i].view_id == key.view_id && records_[i].mask_id == key.mask_id) {
            return i;
        }
    }
    return std::nullopt;
}

InstanceMap instances_from_scene(const GaussianScene &scene) {
    InstanceMap map;
    for (std::size_t k = 0; k < scene.size(); ++k) {
        const auto id = scene.gaussians[k].instance_id;
        if (id != 0) {
            map[id].gaussians.push_back(k);
        }
    }
    return map;
}

} // namespace wheatgs
