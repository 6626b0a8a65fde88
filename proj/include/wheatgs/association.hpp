// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/label_solver.hpp"
#include "wheatgs/rasterizer.hpp"
#include "wheatgs/scene.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wheatgs {

enum class SeedOrder {
    AreaDesc,  // largest unconsumed mask first (ties: view order, then mask id)
    ViewOrder, // camera order, then mask id
};

struct AssociationConfig {
    double precision_threshold = 0.8;
    int refine_rounds = 2;
    std::size_t min_instance_gaussians = 20;
    SeedOrder seed_order = SeedOrder::AreaDesc;
    double mask_threshold = 0.5; // binarization of rendered label weights

    void validate() const;
};

/// Masks lifted together into one instance. The seed is always the first member.
struct MatchSet {
    std::uint32_t instance_id = 0;
    MaskKey seed;
    std::vector<MaskKey> members;
};

struct ViewMatch {
    std::size_t pool_index = 0;
    int mask_id = 0;
    double precision = 0.0;
    double iou = 0.0;
};

/// Best-IoU unconsumed candidate of `view_id` for a rendered mask, accepted
/// only when |rendered ∩ candidate| / |rendered| exceeds `threshold`.
/// IoU ties go to the smaller mask id; an empty rendered mask never matches.
[[nodiscard]] std::optional<ViewMatch> match_in_view(const BinaryMask &rendered, const MaskPool &pool,
                                                     const std::string &view_id, double threshold);

struct AssociationResult {
    InstanceMap instances;
    std::vector<MatchSet> match_sets;
    /// Seeds whose lift fell below min_instance_gaussians; consumed permanently.
    std::vector<MaskKey> discarded_seeds;
};

/// Iterative match-and-fine-tune over the whole pool. Only Gaussians with
/// instance_id == 0 can be labeled; accepted instances are stamped into
/// `scene` with fresh ids (max existing id + 1, ...) and their masks consumed.
AssociationResult associate_all(GaussianScene &scene, std::span<const View> views, MaskPool &pool,
                                const SolverConfig &solver_config = {}, const AssociationConfig &config = {},
                                const RasterSettings &settings = {});

} // namespace wheatgs
