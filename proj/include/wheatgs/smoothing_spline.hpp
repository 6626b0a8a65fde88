// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

namespace wheatgs {

/// Natural cubic smoothing spline minimizing
///   sum_i w_i (y_i - f(x_i))^2 + lambda * integral f''(x)^2 dx
/// (Reinsch form). Knots must be strictly increasing. Outside the knot range
/// the spline continues linearly.
class SmoothingSpline {
  public:
    SmoothingSpline() = default;

    /// lambda = +inf gives the weighted least-squares line.
    static SmoothingSpline fit(std::span<const double> x, std::span<const double> y, std::span<const double> w,
                               double lambda);

    /// Picks lambda so that the weighted residual sum equals `target`
    /// (bisection in log lambda). Falls back to the weighted line when even
    /// the line fits within the target.
    static SmoothingSpline fit_to_residual(std::span<const double> x, std::span<const double> y,
                                           std::span<const double> w, double target);

    [[nodiscard]] double value(double t) const;
    [[nodiscard]] double derivative(double t) const;
    [[nodiscard]] double weighted_residual(std::span<const double> y, std::span<const double> w) const;
    [[nodiscard]] double lambda() const { return lambda_; }
    [[nodiscard]] const std::vector<double> &knots() const { return x_; }

    /// Arc length of the graph over [a, b] by composite Simpson on `samples`
    /// (odd, >= 3) equally spaced abscissae.
    [[nodiscard]] double arc_length(double a, double b, int samples = 1001) const;

  private:
    std::vector<double> x_;
    std::vector<double> g_;     // fitted values at the knots
    std::vector<double> gamma_; // second derivatives at the knots, zero at both ends
    double lambda_ = 0.0;

    [[nodiscard]] std::size_t segment(double t) const;
};

} // namespace wheatgs
