// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/rasterizer.hpp"
#include "wheatgs/scene.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace wheatgs {

/// Binary per-Gaussian membership for one target instance.
struct LabelAssignment {
    std::vector<std::uint8_t> labels;
    std::uint32_t target_instance = 0;

    [[nodiscard]] std::size_t size() const { return labels.size(); }
    [[nodiscard]] std::size_t count() const;
    [[nodiscard]] std::vector<std::size_t> members() const;
};

struct SolverConfig {
    /// Background bias in [-1, 1): a Gaussian is foreground when its
    /// foreground share exceeds (1 + gamma) / 2.
    double gamma = 0.1;
    /// Gaussians with less total blended weight than this stay background.
    double min_total_contribution = 1e-4;

    void validate() const;
};

/// Closed-form minimizer of the summed absolute mask residual: a weighted
/// majority vote of each Gaussian's foreground versus background weight.
[[nodiscard]] LabelAssignment solve_labels(const ContributionLedger &ledger, const SolverConfig &config = {});

/// Sum over views and pixels of |sum_k W_k alpha_k T_k - M(p)| using the
/// continuous rendered weight.
[[nodiscard]] double evaluate_objective(const GaussianScene &scene, std::span<const MaskedView> views_with_masks,
                                        std::span<const std::uint8_t> labels, const RasterSettings &settings = {});

} // namespace wheatgs
