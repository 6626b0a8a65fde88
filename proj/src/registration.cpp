// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/registration.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/parallel.hpp"
#include "wheatgs/spatial_index.hpp"

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace wheatgs {

using nlohmann::json;

PointCloud RigidTransform::apply(std::span<const Vec3> points) const {
    PointCloud out;
    out.reserve(points.size());
    for (const auto &p : points) {
        out.push_back(apply(p));
    }
    return out;
}

Mat4 RigidTransform::matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = scale * rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
}

RigidTransform RigidTransform::compose(const RigidTransform &other) const {
    RigidTransform out;
    out.rotation = rotation * other.rotation;
    out.scale = scale * other.scale;
    out.translation = scale * (rotation * other.translation) + translation;
    return out;
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.scale = 1.0 / scale;
    out.translation = -out.scale * (out.rotation * translation);
    return out;
}

double rotation_angle(const Mat3 &a, const Mat3 &b) {
    const Mat3 rel = a.transpose() * b;
    // atan2 form stays accurate for tiny angles, unlike acos of the trace.
    const Vec3 axis(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
    return std::atan2(0.5 * axis.norm(), 0.5 * (rel.trace() - 1.0));
}

RigidTransform kabsch_align(std::span<const Vec3> source, std::span<const Vec3> target, bool with_scale) {
    if (source.size() != target.size()) {
        throw AlignmentError("kabsch: source and target differ in length");
    }
    if (source.size() < 3) {
        throw AlignmentError("kabsch: need at least three point pairs");
    }
    if (affine_rank(source, 1e-9) < 2 || affine_rank(target, 1e-9) < 2) {
        throw AlignmentError("kabsch: point pairs are collinear");
    }
    const auto n = static_cast<double>(source.size());
    Vec3 ms = Vec3::Zero();
    Vec3 mt = Vec3::Zero();
    for (std::size_t i = 0; i < source.size(); ++i) {
        ms += source[i];
        mt += target[i];
    }
    ms /= n;
    mt /= n;
    Mat3 h = Mat3::Zero();
    double var_s = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const Vec3 a = source[i] - ms;
        h.noalias() += a * (target[i] - mt).transpose();
        var_s += a.squaredNorm();
    }
    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    Vec3 d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
    RigidTransform t;
    t.rotation = v * d.asDiagonal() * u.transpose();
    if (with_scale) {
        t.scale = svd.singularValues().dot(d) / var_s;
    }
    t.translation = mt - t.scale * (t.rotation * ms);
    return t;
}

void IcpConfig::validate() const {
    if (!(trim_fraction > 0.0 && trim_fraction <= 1.0)) {
        throw InputError("icp: trim_fraction must lie in (0, 1]");
    }
    if (max_iterations < 1 || !(tolerance >= 0.0) || min_points < 3) {
        throw InputError("icp: invalid iteration limit, tolerance or min_points");
    }
}

IcpResult icp_align(std::span<const Vec3> source, std::span<const Vec3> target, const RigidTransform &init,
                    const IcpConfig &config) {
    config.validate();
    if (source.size() < config.min_points || target.size() < config.min_points) {
        throw AlignmentError("icp: both clouds need at least " + std::to_string(config.min_points) + " points");
    }
    const PointIndex index(target);
    const std::size_t keep = std::max<std::size_t>(
        3, static_cast<std::size_t>(std::floor(config.trim_fraction * static_cast<double>(source.size()))));

    IcpResult result;
    RigidTransform current = init;
    RigidTransform best = init;
    double best_rms = std::numeric_limits<double>::infinity();
    double previous = std::numeric_limits<double>::infinity();
    std::vector<Neighbor> match(source.size());
    std::vector<std::size_t> order(source.size());

    for (int it = 0; it < config.max_iterations; ++it) {
        parallel_for(source.size(), [&](std::size_t i) { match[i] = index.nearest(current.apply(source[i])); });
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              return match[a].distance < match[b].distance ||
                                     (match[a].distance == match[b].distance && a < b);
                          });
        double ss = 0.0;
        for (std::size_t k = 0; k < keep; ++k) {
            ss += match[order[k]].distance * match[order[k]].distance;
        }
        const double rms = std::sqrt(ss / static_cast<double>(keep));
        result.rms_history.push_back(rms);
        result.iterations = it + 1;
        if (rms < best_rms) {
            best_rms = rms;
            best = current;
        }
        if (previous - rms < config.tolerance) {
            result.converged = true;
            break;
        }
        previous = rms;

        PointCloud src;
        PointCloud dst;
        src.reserve(keep);
        dst.reserve(keep);
        for (std::size_t k = 0; k < keep; ++k) {
            src.push_back(source[order[k]]);
            dst.push_back(target[match[order[k]].index]);
        }
        try {
            current = kabsch_align(src, dst, false);
        } catch (const AlignmentError &e) {
            result.diagnostics = std::string("stopped early: ") + e.what();
            break;
        }
    }
    result.transform = best;
    result.rms = best_rms;
    result.high_residual = best_rms > config.residual_warning;
    if (result.high_residual) {
        std::ostringstream msg;
        msg << "high residual: trimmed RMS " << best_rms << " exceeds " << config.residual_warning;
        result.diagnostics += (result.diagnostics.empty() ? "" : "; ") + msg.str();
    }
    if (!result.converged && result.diagnostics.empty()) {
        result.diagnostics = "iteration limit reached";
    }
    return result;
}

json transform_to_json(const RigidTransform &t) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            rot.push_back(t.rotation(r, c));
        }
    }
    return {{"rotation", rot},
            {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}},
            {"scale", t.scale}};
}

RigidTransform transform_from_json(const json &j) {
    try {
        const auto rot = j.at("rotation").get<std::vector<double>>();
        const auto tr = j.at("translation").get<std::vector<double>>();
        if (rot.size() != 9 || tr.size() != 3) {
            throw FormatError("transform needs 9 rotation and 3 translation values");
        }
        RigidTransform t;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                t.rotation(r, c) = rot[static_cast<std::size_t>(3 * r + c)];
            }
        }
        t.translation = Vec3(tr[0], tr[1], tr[2]);
        t.scale = j.value("scale", 1.0);
        if ((t.rotation.transpose() * t.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
            t.rotation.determinant() < 0.0 || !(t.scale > 0.0)) {
            throw FormatError("transform rotation is not a proper rotation or scale is not positive");
        }
        return t;
    } catch (const json::exception &e) {
        throw FormatError(std::string("malformed transform: ") + e.what());
    }
}

RigidTransform load_transform(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    try {
        const json j = json::parse(in);
        return transform_from_json(j.is_object() && j.contains("transform") ? j.at("transform") : j);
    } catch (const json::exception &e) {
        throw FormatError("malformed transform file '" + path.string() + "': " + e.what());
    }
}

void load_point_pairs(const std::filesystem::path &path, PointCloud &source, PointCloud &target) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    source.clear();
    target.clear();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = line.substr(0, line.find('#'));
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        std::vector<double> v;
        double x = 0.0;
        while (ss >> x) {
            v.push_back(x);
        }
        if (!ss.eof()) {
            throw FormatError("pairs file line " + std::to_string(line_no) + " has a non-numeric field");
        }
        if (v.empty()) {
            continue;
        }
        if (v.size() != 6) {
            throw FormatError("pairs file line " + std::to_string(line_no) + " needs 6 numbers");
        }
        source.emplace_back(v[0], v[1], v[2]);
        target.emplace_back(v[3], v[4], v[5]);
    }
}

} // namespace wheatgs
