// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include "wheatgs/association.hpp"
#include "wheatgs/parallel.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <set>

using namespace wheatgs;
namespace wt = wheatgs::testing;

namespace {

BinaryMask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
    BinaryMask m(w, h);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            m(x, y) = 1;
        }
    }
    return m;
}

/// Rendered mask of exactly 100 pixels (10x10) and a candidate sharing `overlap` of them.
std::pair<BinaryMask, MaskPool> gate_case(int overlap) {
    const BinaryMask rendered = rect_mask(40, 40, 0, 0, 10, 10);
    BinaryMask candidate(40, 40);
    int placed = 0;
    for (int y = 0; y < 10 && placed < overlap; ++y) {
        for (int x = 0; x < 10 && placed < overlap; ++x, ++placed) {
            candidate(x, y) = 1;
        }
    }
    MaskPool pool;
    static_cast<void>(pool.add("v", 1, candidate));
    return {rendered, pool};
}

struct ClusterScene {
    GaussianScene scene;
    std::vector<View> views;
    std::vector<std::vector<std::size_t>> clusters;
};

ClusterScene five_clusters(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    ClusterScene cs;
    for (int c = 0; c < 5; ++c) {
        const Vec3 center(0.5 * (c - 2), 0.25 * (c % 2), 0.0);
        std::vector<std::size_t> members;
        for (int i = 0; i < 40; ++i) {
            Gaussian g;
            g.position = center + 0.04 * Vec3(n01(rng), n01(rng), n01(rng));
            g.scale_log = Vec3::Constant(std::log(0.025));
            g.rotation = wt::random_rotation(rng);
            g.opacity_logit = 3.0;
            members.push_back(cs.scene.size());
            cs.scene.gaussians.push_back(g);
        }
        cs.clusters.push_back(members);
    }
    for (int v = 0; v < 4; ++v) {
        const double az = 2.0 * std::numbers::pi * v / 4.0 + 0.3;
        cs.views.push_back(wt::look_at(Vec3(0.6 * std::cos(az), 0.6 * std::sin(az), 3.0), Vec3::Zero(), 96, 110.0,
                                       "v" + std::to_string(v)));
    }
    return cs;
}

/// Noise-free masks covering each cluster's whole footprint, so silhouette Gaussians keep all their weight inside.
MaskPool ideal_pool(const ClusterScene &cs, std::size_t skip_cluster = 99, std::size_t keep_view = 0) {
    MaskPool pool;
    for (std::size_t v = 0; v < cs.views.size(); ++v) {
        for (std::size_t c = 0; c < cs.clusters.size(); ++c) {
            if (c == skip_cluster && v != keep_view) {
                continue;
            }
            std::vector<std::uint8_t> labels(cs.scene.size(), 0);
            for (const auto k : cs.clusters[c]) {
                labels[k] = 1;
            }
            static_cast<void>(pool.add(cs.views[v].id, static_cast<int>(10 * c + v + 1),
                                       render_label_mask(cs.scene, cs.views[v], labels, 1e-3)));
        }
    }
    return pool;
}

/// Members with any blended weight in some view; fully occluded Gaussians carry no mask evidence.
std::vector<std::size_t> observable(const ClusterScene &cs, const std::vector<std::size_t> &cluster) {
    std::vector<BinaryMask> full;
    std::vector<MaskedView> views;
    full.reserve(cs.views.size());
    for (const auto &v : cs.views) {
        full.emplace_back(v.width, v.height, 1, std::uint8_t{1});
    }
    for (std::size_t i = 0; i < cs.views.size(); ++i) {
        views.push_back({&cs.views[i], &full[i]});
    }
    const auto ledger = accumulate_contributions(cs.scene, views);
    std::vector<std::size_t> out;
    for (const auto k : cluster) {
        if (ledger.s_plus[k] >= SolverConfig{}.min_total_contribution) {
            out.push_back(k);
        }
    }
    return out;
}

void expect_clusters_recovered(const AssociationResult &r, const ClusterScene &cs) {
    ASSERT_EQ(r.instances.size(), cs.clusters.size());
    std::set<std::vector<std::size_t>> got;
    for (const auto &[id, entry] : r.instances) {
        got.insert(entry.gaussians);
    }
    for (const auto &c : cs.clusters) {
        const auto visible = observable(cs, c);
        EXPECT_GE(visible.size(), c.size() - 3);
        EXPECT_TRUE(got.count(visible)) << "cluster starting at " << c.front() << " not recovered exactly";
    }
}

} // namespace

TEST(MatchInView, IdentityCandidate) {
    const BinaryMask m = rect_mask(20, 20, 2, 2, 8, 9);
    MaskPool pool;
    static_cast<void>(pool.add("v", 4, m));
    const auto hit = match_in_view(m, pool, "v", 0.8);
    ASSERT_TRUE(hit.has_value());
    EXPECT_EQ(hit->mask_id, 4);
    EXPECT_DOUBLE_EQ(hit->precision, 1.0);
    EXPECT_DOUBLE_EQ(hit->iou, 1.0);
}

TEST(MatchInView, PrecisionGateAtPointEight) {
    const auto [r79, p79] = gate_case(79);
    EXPECT_FALSE(match_in_view(r79, p79, "v", 0.8).has_value());
    const auto [r80, p80] = gate_case(80);
    EXPECT_FALSE(match_in_view(r80, p80, "v", 0.8).has_value());
    const auto [r81, p81] = gate_case(81);
    const auto hit = match_in_view(r81, p81, "v", 0.8);
    ASSERT_TRUE(hit.has_value());
    EXPECT_DOUBLE_EQ(hit->precision, 0.81);
}

TEST(MatchInView, ArgmaxIouAndTies) {
    const BinaryMask rendered = rect_mask(40, 40, 0, 0, 10, 10);
    MaskPool pool;
    static_cast<void>(pool.add("v", 1, rect_mask(40, 40, 0, 0, 10, 25)));  // IoU 0.4
    static_cast<void>(pool.add("v", 2, rect_mask(40, 40, 0, 0, 10, 16)));  // IoU 0.625
    static_cast<void>(pool.add("w", 3, rendered));                         // other view
    const auto hit = match_in_view(rendered, pool, "v", 0.8);
    ASSERT_TRUE(hit.has_value());
    EXPECT_EQ(hit->mask_id, 2);

    MaskPool ties;
    static_cast<void>(ties.add("v", 7, rect_mask(40, 40, 0, 0, 10, 12)));
    static_cast<void>(ties.add("v", 5, rect_mask(40, 40, 0, 0, 12, 10)));
    EXPECT_EQ(match_in_view(rendered, ties, "v", 0.8)->mask_id, 5);
}

TEST(MatchInView, EmptyRenderAndConsumedCandidates) {
    MaskPool pool;
    const BinaryMask m = rect_mask(20, 20, 2, 2, 8, 9);
    static_cast<void>(pool.add("v", 1, m));
    EXPECT_FALSE(match_in_view(BinaryMask(20, 20), pool, "v", 0.8).has_value());
    pool.consume(0);
    EXPECT_FALSE(match_in_view(m, pool, "v", 0.8).has_value());
}

TEST(AssociateAll, EmptyPool) {
    auto cs = five_clusters(1);
    MaskPool pool;
    const auto r = associate_all(cs.scene, cs.views, pool);
    EXPECT_TRUE(r.instances.empty());
}

TEST(AssociateAll, RecoversDisjointClusters) {
    auto cs = five_clusters(2);
    MaskPool pool = ideal_pool(cs);
    const std::size_t initial = pool.size();
    GaussianScene scene = cs.scene;
    const auto r = associate_all(scene, cs.views, pool);
    expect_clusters_recovered(r, cs);
    std::size_t members = 0;
    std::uint32_t expected_id = 1;
    for (const auto &ms : r.match_sets) {
        members += ms.members.size();
        EXPECT_EQ(ms.instance_id, expected_id++);
        std::set<std::string> views;
        for (const auto &k : ms.members) {
            EXPECT_TRUE(views.insert(k.view_id).second) << "two masks from one view";
        }
    }
    EXPECT_EQ(members + r.discarded_seeds.size(), initial);
    EXPECT_EQ(pool.available(), 0U);
    for (const auto &[id, entry] : r.instances) {
        for (const auto k : entry.gaussians) {
            EXPECT_EQ(scene.gaussians[k].instance_id, id);
        }
    }
}

TEST(AssociateAll, SingleViewClusterStillInstantiated) {
    auto cs = five_clusters(3);
    MaskPool pool = ideal_pool(cs, 3, 1);
    const auto r = associate_all(cs.scene, cs.views, pool);
    expect_clusters_recovered(r, cs);
    bool found_single = false;
    for (const auto &ms : r.match_sets) {
        found_single = found_single || ms.members.size() == 1;
    }
    EXPECT_TRUE(found_single);
}

TEST(AssociateAll, ThreadCountInvariant) {
    auto cs = five_clusters(4);
    set_thread_count(1);
    MaskPool p1 = ideal_pool(cs);
    GaussianScene s1 = cs.scene;
    const auto r1 = associate_all(s1, cs.views, p1);
    set_thread_count(3);
    MaskPool p3 = ideal_pool(cs);
    GaussianScene s3 = cs.scene;
    const auto r3 = associate_all(s3, cs.views, p3);
    set_thread_count(0);
    ASSERT_EQ(r1.instances.size(), r3.instances.size());
    for (const auto &[id, e] : r1.instances) {
        EXPECT_EQ(e.gaussians, r3.instances.at(id).gaussians);
        EXPECT_EQ(e.sources, r3.instances.at(id).sources);
    }
}
