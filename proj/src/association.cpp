// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/association.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/parallel.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <unordered_map>

namespace wheatgs {

void AssociationConfig::validate() const {
    if (!(precision_threshold > 0.0 && precision_threshold <= 1.0)) {
        throw InputError("precision_threshold must lie in (0, 1]");
    }
    if (refine_rounds < 1) {
        throw InputError("refine_rounds must be at least 1");
    }
    if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) {
        throw InputError("mask_threshold must lie in (0, 1)");
    }
}

std::optional<ViewMatch> match_in_view(const BinaryMask &rendered, const MaskPool &pool, const std::string &view_id,
                                       double threshold) {
    const std::size_t rendered_area = count_foreground(rendered);
    if (rendered_area == 0) {
        return std::nullopt;
    }
    std::optional<ViewMatch> best;
    std::size_t best_inter = 0;
    for (const std::size_t idx : pool.indices_for_view(view_id)) {
        const MaskRecord &rec = pool.record(idx);
        if (rec.consumed) {
            continue;
        }
        if (!rec.bitmap.same_shape(rendered)) {
            throw InputError("match_in_view: mask " + std::to_string(rec.mask_id) + " of view '" + view_id +
                             "' differs in size from the rendered mask");
        }
        std::size_t inter = 0;
        for (int y = rec.bbox.y0; y < rec.bbox.y0 + rec.bbox.height; ++y) {
            for (int x = rec.bbox.x0; x < rec.bbox.x0 + rec.bbox.width; ++x) {
                inter += (rec.bitmap(x, y) != 0 && rendered(x, y) != 0) ? 1U : 0U;
            }
        }
        const double iou = static_cast<double>(inter) / static_cast<double>(rendered_area + rec.area - inter);
        if (!best || iou > best->iou || (iou == best->iou && rec.mask_id < best->mask_id)) {
            best = ViewMatch{idx, rec.mask_id, 0.0, iou};
            best_inter = inter;
        }
    }
    if (!best) {
        return std::nullopt;
    }
    best->precision = static_cast<double>(best_inter) / static_cast<double>(rendered_area);
    if (best->precision > threshold) {
        return best;
    }
    return std::nullopt;
}

namespace {

std::optional<std::size_t> pick_seed(const MaskPool &pool, const std::unordered_map<std::string, std::size_t> &view_rank,
                                     SeedOrder order) {
    std::optional<std::size_t> best;
    auto key = [&](std::size_t i) {
        const MaskRecord &r = pool.record(i);
        const auto area = order == SeedOrder::AreaDesc ? -static_cast<long long>(r.area) : 0LL;
        return std::tuple(area, view_rank.at(r.view_id), r.mask_id);
    };
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool.record(i).consumed) {
            continue;
        }
        if (!best || key(i) < key(*best)) {
            best = i;
        }
    }
    return best;
}

} // namespace

AssociationResult associate_all(GaussianScene &scene, std::span<const View> views, MaskPool &pool,
                                const SolverConfig &solver_config, const AssociationConfig &config,
                                const RasterSettings &settings) {
    solver_config.validate();
    config.validate();
    AssociationResult result;
    if (pool.empty() || scene.empty()) {
        for (std::size_t i = 0; i < pool.size(); ++i) {
            pool.consume(i);
            result.discarded_seeds.push_back(pool.record(i).key());
        }
        return result;
    }

    std::unordered_map<std::string, std::size_t> view_rank;
    for (std::size_t v = 0; v < views.size(); ++v) {
        view_rank.emplace(views[v].id, v);
    }
    for (const auto &rec : pool.records()) {
        if (view_rank.count(rec.view_id) == 0) {
            throw InputError("mask pool references unknown view '" + rec.view_id + "'");
        }
    }

    // Splat footprints do not depend on labels; project every view once.
    std::vector<std::vector<Splat2D>> splats(views.size());
    parallel_for(views.size(), [&](std::size_t v) { splats[v] = project_gaussians(scene, views[v], settings); });

    std::vector<std::uint8_t> eligible(scene.size());
    std::uint32_t next_id = 1;
    for (std::size_t k = 0; k < scene.size(); ++k) {
        eligible[k] = scene.gaussians[k].instance_id == 0 ? 1 : 0;
        next_id = std::max(next_id, scene.gaussians[k].instance_id + 1);
    }

    std::size_t iterations = 0;
    while (const auto seed = pick_seed(pool, view_rank, config.seed_order)) {
        if (++iterations > pool.size()) {
            throw InvariantError("associate_all: seed loop exceeded the pool size");
        }
        const MaskRecord &seed_rec = pool.record(*seed);

        // view index -> pool index of the member mask from that view
        std::map<std::size_t, std::size_t> members;
        members.emplace(view_rank.at(seed_rec.view_id), *seed);
        std::vector<std::size_t> member_order{*seed};
        std::unordered_map<std::size_t, ContributionLedger> ledgers;

        auto solve_members = [&] {
            ContributionLedger total(scene.size());
            for (const auto &[v, idx] : members) {
                auto it = ledgers.find(idx);
                if (it == ledgers.end()) {
                    it = ledgers
                             .emplace(idx, accumulate_view(splats[v], scene.size(), views[v],
                                                           pool.record(idx).bitmap, settings))
                             .first;
                }
                total += it->second;
            }
            // Already-stamped Gaussians are masked out of the vote.
            for (std::size_t k = 0; k < scene.size(); ++k) {
                if (eligible[k] == 0) {
                    total.s_plus[k] = 0.0;
                    total.s_minus[k] = 0.0;
                }
            }
            return solve_labels(total, solver_config);
        };

        LabelAssignment labels = solve_members();
        for (int round = 0; round < config.refine_rounds; ++round) {
            if (labels.count() == 0) {
                break;
            }
            std::vector<std::optional<ViewMatch>> found(views.size());
            parallel_for(views.size(), [&](std::size_t v) {
                if (members.count(v) != 0) {
                    return;
                }
                const BinaryMask rendered =
                    render_label_mask(splats[v], views[v], labels.labels, config.mask_threshold, settings);
                found[v] = match_in_view(rendered, pool, views[v].id, config.precision_threshold);
            });
            bool added = false;
            for (std::size_t v = 0; v < views.size(); ++v) {
                if (found[v]) {
                    members.emplace(v, found[v]->pool_index);
                    member_order.push_back(found[v]->pool_index);
                    added = true;
                }
            }
            if (!added) {
                break;
            }
            labels = solve_members();
        }

        const std::vector<std::size_t> gaussians = labels.members();
        if (gaussians.size() >= config.min_instance_gaussians) {
            const std::uint32_t id = next_id++;
            MatchSet set;
            set.instance_id = id;
            set.seed = seed_rec.key();
            InstanceEntry entry;
            entry.gaussians = gaussians;
            for (const std::size_t idx : member_order) {
                set.members.push_back(pool.record(idx).key());
                entry.sources.push_back(pool.record(idx).key());
                pool.consume(idx);
            }
            for (const std::size_t k : gaussians) {
                scene.gaussians[k].instance_id = id;
                eligible[k] = 0;
            }
            spdlog::debug("instance {}: {} Gaussians from {} masks", id, gaussians.size(), set.members.size());
            result.instances.emplace(id, std::move(entry));
            result.match_sets.push_back(std::move(set));
        } else {
            spdlog::debug("discarding lift of seed {}:{} ({} Gaussians)", seed_rec.view_id, seed_rec.mask_id,
                          gaussians.size());
            result.discarded_seeds.push_back(seed_rec.key());
            pool.consume(*seed);
        }
    }
    return result;
}

} // namespace wheatgs
