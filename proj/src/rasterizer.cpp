// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/rasterizer.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace wheatgs {

namespace {

bool depth_order(const Splat2D &a, const Splat2D &b) {
    if (a.depth != b.depth) {
        return a.depth < b.depth;
    }
    return a.gaussian_index < b.gaussian_index;
}

// Splat list ordered front to back; copies only when the input is unsorted.
std::vector<Splat2D> sorted_copy(std::span<const Splat2D> splats) {
    std::vector<Splat2D> out(splats.begin(), splats.end());
    if (!std::is_sorted(out.begin(), out.end(), depth_order)) {
        std::sort(out.begin(), out.end(), depth_order);
    }
    return out;
}

/// Splat indices overlapping each screen tile, in depth order.
struct TileBins {
    int tile_size = 16;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> lists;

    [[nodiscard]] std::size_t count() const { return lists.size(); }
};

TileBins bin_splats(std::span<const Splat2D> splats, int width, int height, int tile_size) {
    TileBins bins;
    bins.tile_size = std::max(1, tile_size);
    bins.tiles_x = (width + bins.tile_size - 1) / bins.tile_size;
    bins.tiles_y = (height + bins.tile_size - 1) / bins.tile_size;
    bins.lists.resize(static_cast<std::size_t>(bins.tiles_x) * static_cast<std::size_t>(bins.tiles_y));
    for (std::size_t s = 0; s < splats.size(); ++s) {
        const Splat2D &sp = splats[s];
        const int x0 = std::max(0, static_cast<int>(std::ceil(sp.mean2d.x() - sp.radius)));
        const int x1 = std::min(width - 1, static_cast<int>(std::floor(sp.mean2d.x() + sp.radius)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(sp.mean2d.y() - sp.radius)));
        const int y1 = std::min(height - 1, static_cast<int>(std::floor(sp.mean2d.y() + sp.radius)));
        if (x0 > x1 || y0 > y1) {
            continue;
        }
        for (int ty = y0 / bins.tile_size; ty <= y1 / bins.tile_size; ++ty) {
            for (int tx = x0 / bins.tile_size; tx <= x1 / bins.tile_size; ++tx) {
                bins.lists[static_cast<std::size_t>(ty) * static_cast<std::size_t>(bins.tiles_x) +
                           static_cast<std::size_t>(tx)]
                    .push_back(static_cast<std::uint32_t>(s));
            }
        }
    }
    return bins;
}

/// Front-to-back compositing at one pixel over the given splat list.
/// `visit(list_position, splat, weight)` receives alpha * T for every
/// contributing splat.
template <typename Visit>
void composite_pixel(std::span<const Splat2D> splats, std::span<const std::uint32_t> list, int px, int py,
                     const RasterSettings &settings, Visit &&visit) {
    double transmittance = 1.0;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const Splat2D &sp = splats[list[i]];
        if (!sp.covers(px, py)) {
            continue;
        }
        const double alpha = std::min(settings.alpha_clamp, sp.alpha_at(px, py));
        if (alpha < settings.min_alpha) {
            continue;
        }
        visit(i, sp, alpha * transmittance);
        transmittance *= 1.0 - alpha;
        if (transmittance < settings.transmittance_stop) {
            break;
        }
    }
}

/// Runs `per_pixel(tile, px, py, list)` over every pixel, tile-parallel.
template <typename PerPixel>
void for_each_tile_pixel(const TileBins &bins, int width, int height, PerPixel &&per_pixel) {
    parallel_for(bins.count(), [&](std::size_t tile) {
        const int tx = static_cast<int>(tile % static_cast<std::size_t>(bins.tiles_x));
        const int ty = static_cast<int>(tile / static_cast<std::size_t>(bins.tiles_x));
        const int x0 = tx * bins.tile_size;
        const int y0 = ty * bins.tile_size;
        const int x1 = std::min(width, x0 + bins.tile_size);
        const int y1 = std::min(height, y0 + bins.tile_size);
        const std::span<const std::uint32_t> list = bins.lists[tile];
        for (int py = y0; py < y1; ++py) {
            for (int px = x0; px < x1; ++px) {
                per_pixel(tile, px, py, list);
            }
        }
    });
}

/// Composites `channels` features per Gaussian (`features[k * channels + c]`).
RenderOutput composite(std::span<const Splat2D> splats_in, std::span<const double> features, int channels,
                       const View &view, const RasterSettings &settings) {
    const std::vector<Splat2D> splats = sorted_copy(splats_in);
    const TileBins bins = bin_splats(splats, view.width, view.height, settings.tile_size);
    RenderOutput out;
    out.alpha = ImageD(view.width, view.height, 1, 0.0);
    ImageD feature_image(view.width, view.height, channels, 0.0);
    for_each_tile_pixel(bins, view.width, view.height,
                        [&](std::size_t, int px, int py, std::span<const std::uint32_t> list) {
                            double alpha_sum = 0.0;
                            double acc[3] = {0.0, 0.0, 0.0};
                            composite_pixel(splats, list, px, py, settings,
                                            [&](std::size_t, const Splat2D &sp, double w) {
                                                alpha_sum += w;
                                                const std::size_t base =
                                                    sp.gaussian_index * static_cast<std::size_t>(channels);
                                                for (int c = 0; c < channels; ++c) {
                                                    acc[c] += features[base + static_cast<std::size_t>(c)] * w;
                                                }
                                            });
                            out.alpha(px, py) = alpha_sum;
                            for (int c = 0; c < channels; ++c) {
                                feature_image(px, py, c) = acc[c];
                            }
                        });
    if (channels == 1) {
        out.weight = std::move(feature_image);
    } else {
        out.weight = out.alpha;
        out.rgb = std::move(feature_image);
    }
    return out;
}

} // namespace

double Splat2D::alpha_at(double x, double y) const {
    const double dx = x - mean2d.x();
    const double dy = y - mean2d.y();
    const double power = -0.5 * (conic_a * dx * dx + conic_c * dy * dy) - conic_b * dx * dy;
    if (power > 0.0) {
        return 0.0;
    }
    return opacity * std::exp(power);
}

ContributionLedger &ContributionLedger::operator+=(const ContributionLedger &other) {
    if (s_plus.empty()) {
        *this = other;
        return *this;
    }
    if (other.size() != size()) {
        throw InvariantError("ContributionLedger: size mismatch in accumulation");
    }
    for (std::size_t k = 0; k < size(); ++k) {
        s_plus[k] += other.s_plus[k];
        s_minus[k] += other.s_minus[k];
    }
    return *this;
}

Mat2 projected_covariance(const Gaussian &gaussian, const View &view) {
    const Vec3 t = view.to_camera(gaussian.position);
    const double z = t.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << view.fx / z, 0.0, -view.fx * t.x() / (z * z), 0.0, view.fy / z, -view.fy * t.y() / (z * z);
    const Mat3 cov_cam = view.rotation * gaussian.covariance() * view.rotation.transpose();
    return jac * cov_cam * jac.transpose();
}

std::vector<Splat2D> project_gaussians(const GaussianScene &scene, const View &view,
                                       const RasterSettings &settings) {
    std::vector<Splat2D> splats;
    splats.reserve(scene.size());
    for (std::size_t k = 0; k < scene.size(); ++k) {
        const Gaussian &g = scene.gaussians[k];
        const Vec3 t = view.to_camera(g.position);
        if (!(t.z() > settings.near)) {
            continue;
        }
        Mat2 cov = projected_covariance(g, view);
        cov(0, 0) += settings.lowpass;
        cov(1, 1) += settings.lowpass;
        const double det = cov.determinant();
        if (!(det > 0.0) || !std::isfinite(det)) {
            continue;
        }
        const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
        const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
        const int radius = std::max(1, static_cast<int>(std::ceil(settings.extent_sigmas * std::sqrt(lambda_max))));
        const Vec2 mean = view.project_camera(t);
        if (mean.x() + radius < 0.0 || mean.x() - radius > view.width - 1 || mean.y() + radius < 0.0 ||
            mean.y() - radius > view.height - 1) {
            continue;
        }
        Splat2D sp;
        sp.gaussian_index = k;
        sp.mean2d = mean;
        sp.conic_a = cov(1, 1) / det;
        sp.conic_b = -cov(0, 1) / det;
        sp.conic_c = cov(0, 0) / det;
        sp.depth = t.z();
        sp.radius = radius;
        sp.opacity = g.opacity();
        splats.push_back(sp);
    }
    std::sort(splats.begin(), splats.end(), depth_order);
    return splats;
}

RenderOutput rasterize(std::span<const Splat2D> splats, std::span<const double> x, const View &view,
                       const RasterSettings &settings) {
    for (const auto &sp : splats) {
        if (sp.gaussian_index >= x.size()) {
            throw InvariantError("rasterize: per-Gaussian values shorter than the splat indices");
        }
    }
    return composite(splats, x, 1, view, settings);
}

Vec3 evaluate_sh(std::span<const Vec3> coeffs, const Vec3 &dir) {
    constexpr double c0 = 0.28209479177387814;
    constexpr double c1 = 0.4886025119029199;
    constexpr double c2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                             0.5462742152960396};
    constexpr double c3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                             -0.4570457994644658, 1.445305721320277, -0.5900435899266435};
    const std::size_t n = coeffs.size();
    if (!sh_degree_for_count(n)) {
        throw FormatError("unsupported spherical-harmonics coefficient count " + std::to_string(n));
    }
    Vec3 result = c0 * coeffs[0];
    if (n > 1) {
        const double x = dir.x();
        const double y = dir.y();
        const double z = dir.z();
        result += -c1 * y * coeffs[1] + c1 * z * coeffs[2] - c1 * x * coeffs[3];
        if (n > 4) {
            const double xx = x * x;
            const double yy = y * y;
            const double zz = z * z;
            result += c2[0] * x * y * coeffs[4] + c2[1] * y * z * coeffs[5] +
                      c2[2] * (2.0 * zz - xx - yy) * coeffs[6] + c2[3] * x * z * coeffs[7] +
                      c2[4] * (xx - yy) * coeffs[8];
            if (n > 9) {
                result += c3[0] * y * (3.0 * xx - yy) * coeffs[9] + c3[1] * x * y * z * coeffs[10] +
                          c3[2] * y * (4.0 * zz - xx - yy) * coeffs[11] +
                          c3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * coeffs[12] +
                          c3[4] * x * (4.0 * zz - xx - yy) * coeffs[13] + c3[5] * z * (xx - yy) * coeffs[14] +
                          c3[6] * x * (xx - 3.0 * yy) * coeffs[15];
            }
        }
    }
    return result;
}

Vec3 gaussian_color(const Gaussian &gaussian, const Vec3 &camera_center) {
    Vec3 dir = gaussian.position - camera_center;
    const double len = dir.norm();
    dir = len > 0.0 ? Vec3(dir / len) : Vec3(0.0, 0.0, 1.0);
    return (evaluate_sh(gaussian.sh, dir).array() + 0.5).max(0.0).matrix();
}

RenderOutput render_rgb(const GaussianScene &scene, const View &view, const RasterSettings &settings) {
    static_cast<void>(scene.sh_degree()); // validates coefficient counts
    const Vec3 center = view.center();
    std::vector<double> colors(scene.size() * 3);
    for (std::size_t k = 0; k < scene.size(); ++k) {
        const Vec3 c = gaussian_color(scene.gaussians[k], center);
        colors[3 * k + 0] = c.x();
        colors[3 * k + 1] = c.y();
        colors[3 * k + 2] = c.z();
    }
    return composite(project_gaussians(scene, view, settings), colors, 3, view, settings);
}

BinaryMask render_label_mask(std::span<const Splat2D> splats, const View &view, std::span<const std::uint8_t> labels,
                             double threshold, const RasterSettings &settings) {
    std::vector<double> x(labels.size());
    std::transform(labels.begin(), labels.end(), x.begin(), [](std::uint8_t w) { return w != 0 ? 1.0 : 0.0; });
    const RenderOutput out = rasterize(splats, x, view, settings);
    BinaryMask mask(view.width, view.height);
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        mask.data[i] = out.weight.data[i] >= threshold ? 1 : 0;
    }
    return mask;
}

BinaryMask render_label_mask(const GaussianScene &scene, const View &view, std::span<const std::uint8_t> labels,
                             double threshold, const RasterSettings &settings) {
    if (labels.size() != scene.size()) {
        throw InvariantError("render_label_mask: label vector length differs from scene size");
    }
    return render_label_mask(project_gaussians(scene, view, settings), view, labels, threshold, settings);
}

ContributionLedger accumulate_view(std::span<const Splat2D> splats_in, std::size_t gaussian_count, const View &view,
                                   const BinaryMask &mask, const RasterSettings &settings) {
    if (mask.width != view.width || mask.height != view.height) {
        throw InputError("accumulate_view: mask size differs from view '" + view.id + "'");
    }
    const std::vector<Splat2D> splats = sorted_copy(splats_in);
    const TileBins bins = bin_splats(splats, view.width, view.height, settings.tile_size);

    // Per-tile partial sums indexed by position in the tile list, merged in
    // tile order so the result does not depend on the worker count.
    std::vector<std::vector<double>> tile_plus(bins.count());
    std::vector<std::vector<double>> tile_minus(bins.count());
    for (std::size_t t = 0; t < bins.count(); ++t) {
        tile_plus[t].assign(bins.lists[t].size(), 0.0);
        tile_minus[t].assign(bins.lists[t].size(), 0.0);
    }
    for_each_tile_pixel(bins, view.width, view.height,
                        [&](std::size_t tile, int px, int py, std::span<const std::uint32_t> list) {
                            auto &sums = mask(px, py) != 0 ? tile_plus[tile] : tile_minus[tile];
                            composite_pixel(splats, list, px, py, settings,
                                            [&](std::size_t pos, const Splat2D &, double w) {
                                                if (w >= settings.min_contribution) {
                                                    sums[pos] += w;
                                                }
                                            });
                        });

    ContributionLedger ledger(gaussian_count);
    for (std::size_t t = 0; t < bins.count(); ++t) {
        const auto &list = bins.lists[t];
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::size_t k = splats[list[i]].gaussian_index;
            ledger.s_plus.at(k) += tile_plus[t][i];
            ledger.s_minus.at(k) += tile_minus[t][i];
        }
    }
    return ledger;
}

ContributionLedger accumulate_contributions(const GaussianScene &scene, std::span<const MaskedView> views_with_masks,
                                            const RasterSettings &settings) {
    ContributionLedger total(scene.size());
    for (const auto &vm : views_with_masks) {
        total += accumulate_view(project_gaussians(scene, *vm.view, settings), scene.size(), *vm.view, *vm.mask,
                                 settings);
    }
    return total;
}

} // namespace wheatgs
