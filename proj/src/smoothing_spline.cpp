// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/smoothing_spline.hpp"

#include "wheatgs/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace wheatgs {

namespace {

void check_inputs(std::span<const double> x, std::span<const double> y, std::span<const double> w) {
    if (x.size() != y.size() || x.size() != w.size()) {
        throw InputError("smoothing spline: x, y and w differ in length");
    }
    if (x.size() < 2) {
        throw InputError("smoothing spline needs at least two knots");
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(w[i] > 0.0) || !std::isfinite(w[i])) {
            throw InputError("smoothing spline: weights must be positive and finite");
        }
        if (i > 0 && !(x[i] > x[i - 1])) {
            throw InputError("smoothing spline: knots must be strictly increasing");
        }
    }
}

struct Penalty {
    Eigen::MatrixXd q; // m x (m-2)
    Eigen::MatrixXd r; // (m-2) x (m-2)
};

Penalty penalty_matrices(std::span<const double> x) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::VectorXd h(n - 1);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        h(i) = x[static_cast<std::size_t>(i + 1)] - x[static_cast<std::size_t>(i)];
    }
    Penalty p{Eigen::MatrixXd::Zero(n, n - 2), Eigen::MatrixXd::Zero(n - 2, n - 2)};
    for (Eigen::Index j = 1; j + 1 < n; ++j) {
        p.q(j - 1, j - 1) = 1.0 / h(j - 1);
        p.q(j, j - 1) = -1.0 / h(j - 1) - 1.0 / h(j);
        p.q(j + 1, j - 1) = 1.0 / h(j);
        p.r(j - 1, j - 1) = (h(j - 1) + h(j)) / 3.0;
        if (j + 2 < n) {
            p.r(j - 1, j) = h(j) / 6.0;
            p.r(j, j - 1) = h(j) / 6.0;
        }
    }
    return p;
}

} // namespace

SmoothingSpline SmoothingSpline::fit(std::span<const double> x, std::span<const double> y, std::span<const double> w,
                                     double lambda) {
    check_inputs(x, y, w);
    if (!(lambda >= 0.0)) {
        throw InputError("smoothing spline: lambda must be non-negative");
    }
    const std::size_t m = x.size();
    SmoothingSpline s;
    s.x_.assign(x.begin(), x.end());
    s.gamma_.assign(m, 0.0);
    s.lambda_ = lambda;

    if (std::isinf(lambda) || m == 2) {
        double sw = 0.0;
        double sx = 0.0;
        double sy = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            sw += w[i];
            sx += w[i] * x[i];
            sy += w[i] * y[i];
        }
        const double mx = sx / sw;
        const double my = sy / sw;
        double sxx = 0.0;
        double sxy = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            sxx += w[i] * (x[i] - mx) * (x[i] - mx);
            sxy += w[i] * (x[i] - mx) * (y[i] - my);
        }
        const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
        s.g_.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            s.g_[i] = my + slope * (x[i] - mx);
        }
        return s;
    }

    const auto n = static_cast<Eigen::Index>(m);
    const Penalty pen = penalty_matrices(x);
    const Eigen::MatrixXd &q = pen.q;
    const Eigen::MatrixXd &r = pen.r;
    Eigen::VectorXd yv(n);
    Eigen::VectorXd winv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        yv(i) = y[static_cast<std::size_t>(i)];
        winv(i) = 1.0 / w[static_cast<std::size_t>(i)];
    }
    const Eigen::MatrixXd a = r + lambda * q.transpose() * winv.asDiagonal() * q;
    const Eigen::VectorXd gamma = a.ldlt().solve(q.transpose() * yv);
    const Eigen::VectorXd g = yv - lambda * (winv.asDiagonal() * (q * gamma));
    s.g_.assign(g.data(), g.data() + n);
    for (Eigen::Index j = 1; j + 1 < n; ++j) {
        s.gamma_[static_cast<std::size_t>(j)] = gamma(j - 1);
    }
    return s;
}

SmoothingSpline SmoothingSpline::fit_to_residual(std::span<const double> x, std::span<const double> y,
                                                 std::span<const double> w, double target) {
    const double inf = std::numeric_limits<double>::infinity();
    SmoothingSpline line = fit(x, y, w, inf);
    if (x.size() <= 2 || line.weighted_residual(y, w) <= target) {
        return line;
    }
    auto rss = [&](double lambda) { return fit(x, y, w, lambda).weighted_residual(y, w); };
    double lo = 1.0;
    double hi = 1.0;
    while (rss(hi) < target && hi < 1e30) {
        hi *= 10.0;
    }
    while (rss(lo) > target && lo > 1e-30) {
        lo *= 0.1;
    }
    for (int it = 0; it < 200 && hi / lo > 1.0 + 1e-13; ++it) {
        const double mid = std::sqrt(lo * hi);
        if (rss(mid) > target) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return fit(x, y, w, std::sqrt(lo * hi));
}

std::size_t SmoothingSpline::segment(double t) const {
    const auto it = std::upper_bound(x_.begin(), x_.end(), t);
    const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - x_.begin()));
    return std::min(idx, x_.size() - 1) - 1;
}

double SmoothingSpline::value(double t) const {
    if (x_.empty()) {
        return 0.0;
    }
    if (t < x_.front()) {
        return g_.front() + derivative(x_.front()) * (t - x_.front());
    }
    if (t > x_.back()) {
        return g_.back() + derivative(x_.back()) * (t - x_.back());
    }
    const std::size_t i = segment(t);
    const double h = x_[i + 1] - x_[i];
    const double d0 = t - x_[i];
    const double d1 = x_[i + 1] - t;
    return gamma_[i] * d1 * d1 * d1 / (6.0 * h) + gamma_[i + 1] * d0 * d0 * d0 / (6.0 * h) +
           (g_[i] / h - gamma_[i] * h / 6.0) * d1 + (g_[i + 1] / h - gamma_[i + 1] * h / 6.0) * d0;
}

double SmoothingSpline::derivative(double t) const {
    if (x_.size() < 2) {
        return 0.0;
    }
    const double tc = std::clamp(t, x_.front(), x_.back());
    const std::size_t i = segment(tc);
    const double h = x_[i + 1] - x_[i];
    const double d0 = tc - x_[i];
    const double d1 = x_[i + 1] - tc;
    return -gamma_[i] * d1 * d1 / (2.0 * h) + gamma_[i + 1] * d0 * d0 / (2.0 * h) - (g_[i] / h - gamma_[i] * h / 6.0) +
           (g_[i + 1] / h - gamma_[i + 1] * h / 6.0);
}

double SmoothingSpline::weighted_residual(std::span<const double> y, std::span<const double> w) const {
    double total = 0.0;
    for (std::size_t i = 0; i < g_.size(); ++i) {
        total += w[i] * (y[i] - g_[i]) * (y[i] - g_[i]);
    }
    return total;
}

double SmoothingSpline::arc_length(double a, double b, int samples) const {
    if (samples < 3 || samples % 2 == 0) {
        throw InputError("arc_length: sample count must be odd and at least 3");
    }
    const double step = (b - a) / (samples - 1);
    auto f = [&](int k) {
        const double d = derivative(a + step * k);
        return std::sqrt(1.0 + d * d);
    };
    double sum = f(0) + f(samples - 1);
    for (int k = 1; k < samples - 1; ++k) {
        sum += (k % 2 == 1 ? 4.0 : 2.0) * f(k);
    }
    return sum * step / 3.0;
}

} // namespace wheatgs
