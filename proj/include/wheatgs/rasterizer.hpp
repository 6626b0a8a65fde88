// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/geometry.hpp"
#include "wheatgs/image.hpp"
#include "wheatgs/scene.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace wheatgs {

/// Constants of the forward splatting rasterizer.
struct RasterSettings {
    double near = 0.01;                     // scene units
    double alpha_clamp = 0.99;              // per-splat alpha ceiling
    double min_alpha = 1.0 / 255.0;         // splats below this alpha are skipped at a pixel
    double transmittance_stop = 1e-4;       // front-to-back early termination
    double lowpass = 0.3;                   // pixels^2 added to the 2D covariance diagonal
    double extent_sigmas = 3.0;             // splat radius in standard deviations
    int tile_size = 16;
    double min_contribution = 1.0 / 255.0;  // ledger floor on alpha * T
};

/// Screen-space footprint of one Gaussian in one view.
struct Splat2D {
    std::size_t gaussian_index = 0;
    Vec2 mean2d = Vec2::Zero();
    double conic_a = 1.0; // inverse covariance [[a, b], [b, c]]
    double conic_b = 0.0;
    double conic_c = 1.0;
    double depth = 0.0; // camera z
    int radius = 1;     // pixels, square support around mean2d
    double opacity = 0.0;

    /// Whether the integer pixel (x, y) lies inside the square support.
    [[nodiscard]] bool covers(int x, int y) const {
        return std::abs(x - mean2d.x()) <= radius && std::abs(y - mean2d.y()) <= radius;
    }
    /// Unclamped alpha at pixel (x, y): opacity * exp(-d^T conic d / 2).
    [[nodiscard]] double alpha_at(double x, double y) const;
};

struct RenderOutput {
    ImageD weight; // sum_k x_k alpha_k T_k (first channel of x)
    ImageD alpha;  // sum_k alpha_k T_k
    std::optional<ImageD> rgb;
};

/// Per-Gaussian blended weight over foreground (plus) and background (minus) pixels.
struct ContributionLedger {
    std::vector<double> s_plus;
    std::vector<double> s_minus;

    ContributionLedger() = default;
    explicit ContributionLedger(std::size_t n) : s_plus(n, 0.0), s_minus(n, 0.0) {}
    [[nodiscard]] std::size_t size() const { return s_plus.size(); }
    ContributionLedger &operator+=(const ContributionLedger &other);
};

/// One view paired with its binary mask (non-owning).
struct MaskedView {
    const View *view = nullptr;
    const BinaryMask *mask = nullptr;
};

/// Camera-space 2D covariance J W Sigma W^T J^T of a Gaussian, before the
/// low-pass dilation.
[[nodiscard]] Mat2 projected_covariance(const Gaussian &gaussian, const View &view);

/// Projects and culls the scene for one view. The result is sorted by
/// ascending depth, ties broken by Gaussian index.
[[nodiscard]] std::vector<Splat2D> project_gaussians(const GaussianScene &scene, const View &view,
                                                     const RasterSettings &settings = {});

/// Front-to-back alpha compositing of `x[gaussian_index]` for every pixel.
/// Splats are sorted internally if needed.
[[nodiscard]] RenderOutput rasterize(std::span<const Splat2D> splats, std::span<const double> x, const View &view,
                                     const RasterSettings &settings = {});

/// View-dependent color of a Gaussian seen from `camera_center`
/// (SH evaluation + 0.5, clamped at 0).
[[nodiscard]] Vec3 gaussian_color(const Gaussian &gaussian, const Vec3 &camera_center);

/// Raw real spherical-harmonics expansion (no offset, no clamp) along a unit direction.
[[nodiscard]] Vec3 evaluate_sh(std::span<const Vec3> coeffs, const Vec3 &dir);

[[nodiscard]] RenderOutput render_rgb(const GaussianScene &scene, const View &view,
                                      const RasterSettings &settings = {});

/// Pixels whose blended label weight reaches `threshold`.
[[nodiscard]] BinaryMask render_label_mask(const GaussianScene &scene, const View &view,
                                           std::span<const std::uint8_t> labels, double threshold = 0.5,
                                           const RasterSettings &settings = {});
/// Same, on pre-projected splats.
[[nodiscard]] BinaryMask render_label_mask(std::span<const Splat2D> splats, const View &view,
                                           std::span<const std::uint8_t> labels, double threshold = 0.5,
                                           const RasterSettings &settings = {});

/// Ledger of one view against its mask, on pre-projected splats.
[[nodiscard]] ContributionLedger accumulate_view(std::span<const Splat2D> splats, std::size_t gaussian_count,
                                                 const View &view, const BinaryMask &mask,
                                                 const RasterSettings &settings = {});

/// Sums per-view ledgers over all provided views.
[[nodiscard]] ContributionLedger accumulate_contributions(const GaussianScene &scene,
                                                          std::span<const MaskedView> views_with_masks,
                                                          const RasterSettings &settings = {});

} // namespace wheatgs
