// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/label_solver.hpp"

#include "wheatgs/error.hpp"

#include <algorithm>
#include <cmath>

namespace wheatgs {

std::size_t LabelAssignment::count() const {
    return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](std::uint8_t w) { return w != 0; }));
}

std::vector<std::size_t> LabelAssignment::members() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        if (labels[k] != 0) {
            out.push_back(k);
        }
    }
    return out;
}

void SolverConfig::validate() const {
    if (!(gamma >= -1.0 && gamma < 1.0)) {
        throw InputError("background bias gamma must lie in [-1, 1)");
    }
    if (!(min_total_contribution >= 0.0)) {
        throw InputError("min_total_contribution must be non-negative");
    }
}

LabelAssignment solve_labels(const ContributionLedger &ledger, const SolverConfig &config) {
    config.validate();
    if (ledger.s_minus.size() != ledger.s_plus.size()) {
        throw InvariantError("solve_labels: ledger halves differ in length");
    }
    const double threshold = 0.5 * (1.0 + config.gamma);
    LabelAssignment out;
    out.labels.assign(ledger.size(), 0);
    for (std::size_t k = 0; k < ledger.size(); ++k) {
        const double plus = ledger.s_plus[k];
        const double total = plus + ledger.s_minus[k];
        // plus / total > threshold, written without the division.
        if (total > 0.0 && total >= config.min_total_contribution && plus > threshold * total) {
            out.labels[k] = 1;
        }
    }
    return out;
}

double evaluate_objective(const GaussianScene &scene, std::span<const MaskedView> views_with_masks,
                          std::span<const std::uint8_t> labels, const RasterSettings &settings) {
    if (labels.size() != scene.size()) {
        throw InvariantError("evaluate_objective: label vector length differs from scene size");
    }
    std::vector<double> x(labels.size());
    std::transform(labels.begin(), labels.end(), x.begin(), [](std::uint8_t w) { return w != 0 ? 1.0 : 0.0; });
    double total = 0.0;
    for (const auto &vm : views_with_masks) {
        const View &view = *vm.view;
        const BinaryMask &mask = *vm.mask;
        if (mask.width != view.width || mask.height != view.height) {
            throw InputError("evaluate_objective: mask size differs from view '" + view.id + "'");
        }
        const RenderOutput out = rasterize(project_gaussians(scene, view, settings), x, view, settings);
        for (std::size_t i = 0; i < mask.data.size(); ++i) {
            total += std::abs(out.weight.data[i] - (mask.data[i] != 0 ? 1.0 : 0.0));
        }
    }
    return total;
}

} // namespace wheatgs
