// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <stdexcept>

namespace wheatgs {

namespace {

// Flip `v` so its largest-magnitude component is positive.
Vec3 canonical_sign(const Vec3 &v) {
    Eigen::Index idx = 0;
    v.cwiseAbs().maxCoeff(&idx);
    return v(idx) < 0.0 ? Vec3(-v) : v;
}

} // namespace

PrincipalFrame principal_frame(std::span<const Vec3> points) {
    if (points.empty()) {
        throw std::invalid_argument("principal_frame: empty point set");
    }
    PrincipalFrame frame;
    for (const auto &p : points) {
        frame.mean += p;
    }
    frame.mean /= static_cast<double>(points.size());

    Mat3 cov = Mat3::Zero();
    for (const auto &p : points) {
        const Vec3 d = p - frame.mean;
        cov.noalias() += d * d.transpose();
    }
    cov /= static_cast<double>(points.size());

    Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
    // Eigen returns ascending eigenvalues.
    const Vec3 evals = solver.eigenvalues();
    const Mat3 evecs = solver.eigenvectors();
    for (int i = 0; i < 3; ++i) {
        frame.variances(i) = std::max(0.0, evals(2 - i));
    }
    const Vec3 a0 = canonical_sign(evecs.col(2));
    const Vec3 a1 = canonical_sign(evecs.col(1));
    frame.axes.col(0) = a0;
    frame.axes.col(1) = a1;
    frame.axes.col(2) = a0.cross(a1).normalized();
    return frame;
}

int affine_rank(std::span<const Vec3> points, double rel_tol) {
    if (points.size() < 2) {
        return 0;
    }
    Vec3 mean = Vec3::Zero();
    for (const auto &p : points) {
        mean += p;
    }
    mean /= static_cast<double>(points.size());
    Eigen::MatrixXd centered(points.size(), 3);
    for (std::size_t i = 0; i < points.size(); ++i) {
        centered.row(static_cast<Eigen::Index>(i)) = (points[i] - mean).transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    const Vec3 sv = svd.singularValues();
    if (sv(0) <= 0.0) {
        return 0;
    }
    int rank = 0;
    for (int i = 0; i < 3; ++i) {
        if (sv(i) > rel_tol * sv(0)) {
            ++rank;
        }
    }
    return rank;
}

} // namespace wheatgs
