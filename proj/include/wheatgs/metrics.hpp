// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/image.hpp"

namespace wheatgs {

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double c1 = 1e-4; // (0.01 * L)^2 with dynamic range L = 1
    double c2 = 9e-4; // (0.03 * L)^2
};

/// Mean SSIM over all valid window positions, averaged over channels.
/// Images smaller than the window use a window clipped to the smaller side.
[[nodiscard]] double ssim(const ImageD &a, const ImageD &b, const SsimParams &params = {});

/// 10 log10(1 / MSE) for images in [0, 1], capped at `cap` dB.
[[nodiscard]] double psnr(const ImageD &a, const ImageD &b, double cap = 100.0);

struct ImageQuality {
    double psnr = 0.0;
    double ssim = 0.0;
};

[[nodiscard]] ImageQuality image_psnr_ssim(const ImageD &a, const ImageD &b);

struct MaskMetrics {
    double iou = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double mse = 0.0;
    double ssim = 0.0;
    bool both_empty = false; // iou, precision, recall and f1 are then 1 by convention
};

[[nodiscard]] MaskMetrics mask_metrics(const BinaryMask &pred, const BinaryMask &gt);

[[nodiscard]] ImageD to_image(const BinaryMask &mask);

} // namespace wheatgs
