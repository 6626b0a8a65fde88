// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/metrics.hpp"

#include "wheatgs/error.hpp"

#include <algorithm>
#include <cmath>

namespace wheatgs {

namespace {

void require_same_shape(const ImageD &a, const ImageD &b, const char *what) {
    if (!a.same_shape(b) || a.data.empty()) {
        throw InputError(std::string(what) + ": images must be non-empty and equal in shape");
    }
}

std::vector<double> gaussian_taps(int size, double sigma) {
    std::vector<double> taps(static_cast<std::size_t>(size));
    const double mid = 0.5 * (size - 1);
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - mid;
        taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += taps[static_cast<std::size_t>(i)];
    }
    for (auto &t : taps) {
        t /= sum;
    }
    return taps;
}

// Valid-mode separable filtering of one channel.
std::vector<double> filter_valid(const std::vector<double> &img, int w, int h, const std::vector<double> &taps) {
    const int k = static_cast<int>(taps.size());
    const int ow = w - k + 1;
    const int oh = h - k + 1;
    std::vector<double> rows(static_cast<std::size_t>(ow) * static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) {
                s += taps[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y * w + x + i)];
            }
            rows[static_cast<std::size_t>(y * ow + x)] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(ow) * static_cast<std::size_t>(oh));
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < k; ++i) {
                s += taps[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>((y + i) * ow + x)];
            }
            out[static_cast<std::size_t>(y * ow + x)] = s;
        }
    }
    return out;
}

} // namespace

double ssim(const ImageD &a, const ImageD &b, const SsimParams &params) {
    require_same_shape(a, b, "ssim");
    int size = std::min({params.window, a.width, a.height});
    if (size % 2 == 0) {
        --size;
    }
    const auto taps = gaussian_taps(size, params.sigma);
    const std::size_t n = a.pixel_count();
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        std::vector<double> x(n);
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = a.data[i * static_cast<std::size_t>(a.channels) + static_cast<std::size_t>(c)];
            y[i] = b.data[i * static_cast<std::size_t>(b.channels) + static_cast<std::size_t>(c)];
        }
        std::vector<double> xx(n);
        std::vector<double> yy(n);
        std::vector<double> xy(n);
        for (std::size_t i = 0; i < n; ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, a.width, a.height, taps);
        const auto my = filter_valid(y, a.width, a.height, taps);
        const auto sxx = filter_valid(xx, a.width, a.height, taps);
        const auto syy = filter_valid(yy, a.width, a.height, taps);
        const auto sxy = filter_valid(xy, a.width, a.height, taps);
        double sum = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cxy = sxy[i] - mx[i] * my[i];
            sum += ((2.0 * mx[i] * my[i] + params.c1) * (2.0 * cxy + params.c2)) /
                   ((mx[i] * mx[i] + my[i] * my[i] + params.c1) * (vx + vy + params.c2));
        }
        total += sum / static_cast<double>(mx.size());
    }
    return total / a.channels;
}

double psnr(const ImageD &a, const ImageD &b, double cap) {
    require_same_shape(a, b, "psnr");
    double se = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse <= 0.0) {
        return cap;
    }
    return std::min(cap, -10.0 * std::log10(mse));
}

ImageQuality image_psnr_ssim(const ImageD &a, const ImageD &b) { return {psnr(a, b), ssim(a, b)}; }

ImageD to_image(const BinaryMask &mask) {
    ImageD out(mask.width, mask.height, mask.channels);
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        out.data[i] = mask.data[i] != 0 ? 1.0 : 0.0;
    }
    return out;
}

MaskMetrics mask_metrics(const BinaryMask &pred, const BinaryMask &gt) {
    if (!pred.same_shape(gt) || pred.data.empty()) {
        throw InputError("mask_metrics: masks must be non-empty and equal in size");
    }
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0;
        const bool g = gt.data[i] != 0;
        tp += (p && g) ? 1U : 0U;
        fp += (p && !g) ? 1U : 0U;
        fn += (!p && g) ? 1U : 0U;
    }
    MaskMetrics m;
    const auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    if (tp + fp + fn == 0) {
        m.both_empty = true;
        m.iou = m.precision = m.recall = m.f1 = 1.0;
    } else {
        m.iou = ratio(tp, tp + fp + fn);
        m.precision = ratio(tp, tp + fp);
        m.recall = ratio(tp, tp + fn);
        m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
    }
    m.mse = static_cast<double>(fp + fn) / static_cast<double>(pred.data.size());
    m.ssim = ssim(to_image(pred), to_image(gt));
    return m;
}

} // namespace wheatgs
