// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"
#include "temp_dir.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/instance_matching.hpp"
#include "wheatgs/registration.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

using namespace wheatgs;
namespace wt = wheatgs::testing;

namespace {

PointCloud box_cloud(std::mt19937_64 &rng, std::size_t n, const Vec3 &extent) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    PointCloud pts;
    for (std::size_t i = 0; i < n; ++i) {
        pts.push_back(Vec3(u(rng), u(rng), u(rng)).cwiseProduct(extent));
    }
    return pts;
}

RigidTransform random_rigid(std::mt19937_64 &rng) {
    std::normal_distribution<double> n01;
    RigidTransform t;
    t.rotation = wt::random_rotation(rng).toRotationMatrix();
    t.translation = Vec3(n01(rng), n01(rng), n01(rng));
    return t;
}

RigidTransform small_perturbation(double degrees, double shift) {
    RigidTransform t;
    t.rotation = Eigen::AngleAxisd(degrees * std::numbers::pi / 180.0, Vec3(1.0, 2.0, 0.5).normalized())
                     .toRotationMatrix();
    t.translation = shift * Vec3(0.6, -0.8, 0.0);
    return t;
}

/// Cloud with three distinct extents and a bump, so ICP has no sliding symmetry.
PointCloud asymmetric_cloud(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    PointCloud pts = box_cloud(rng, 3000, Vec3(0.10, 0.06, 0.03));
    const PointCloud bump = box_cloud(rng, 300, Vec3(0.02, 0.02, 0.02));
    for (const auto &p : bump) {
        pts.push_back(p + Vec3(0.04, 0.03, 0.025));
    }
    return pts;
}

} // namespace

TEST(Kabsch, IdentityForEqualClouds) {
    std::mt19937_64 rng(1);
    const auto pts = box_cloud(rng, 50, Vec3(1.0, 2.0, 3.0));
    const auto t = kabsch_align(pts, pts);
    EXPECT_LT((t.rotation - Mat3::Identity()).norm(), 1e-12);
    EXPECT_LT(t.translation.norm(), 1e-12);
    EXPECT_DOUBLE_EQ(t.scale, 1.0);
}

TEST(Kabsch, RecoversRandomRigidTransforms) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const auto src = box_cloud(rng, 20, Vec3(0.5, 0.3, 0.2));
        const auto truth = random_rigid(rng);
        const auto t = kabsch_align(src, truth.apply(src));
        EXPECT_LT(rotation_angle(t.rotation, truth.rotation), 1e-9);
        EXPECT_LT((t.translation - truth.translation).norm(), 1e-9);
        EXPECT_NEAR(t.rotation.determinant(), 1.0, 1e-9);
    }
}

TEST(Kabsch, RecoversScaleWhenRequested) {
    std::mt19937_64 rng(3);
    const auto src = box_cloud(rng, 30, Vec3(1.0, 1.0, 1.0));
    auto truth = random_rigid(rng);
    truth.scale = 2.5;
    const auto t = kabsch_align(src, truth.apply(src), true);
    EXPECT_NEAR(t.scale, 2.5, 1e-10);
    EXPECT_LT(rotation_angle(t.rotation, truth.rotation), 1e-9);
}

TEST(Kabsch, RealigningAlignedPairsGivesIdentity) {
    std::mt19937_64 rng(4);
    const auto src = box_cloud(rng, 25, Vec3(1.0, 0.5, 0.25));
    const auto dst = random_rigid(rng).apply(src);
    const auto first = kabsch_align(src, dst);
    const auto second = kabsch_align(first.apply(src), dst);
    EXPECT_LT((second.rotation - Mat3::Identity()).norm(), 1e-9);
    EXPECT_LT(second.translation.norm(), 1e-9);
}

TEST(Kabsch, ReflectionIsCorrected) {
    std::mt19937_64 rng(5);
    const auto src = box_cloud(rng, 30, Vec3(1.0, 0.6, 0.3));
    PointCloud mirrored;
    for (const auto &p : src) {
        mirrored.emplace_back(-p.x(), p.y(), p.z());
    }
    EXPECT_NEAR(kabsch_align(src, mirrored).rotation.determinant(), 1.0, 1e-9);
}

TEST(Kabsch, DegenerateInputsThrow) {
    const PointCloud collinear = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
    EXPECT_THROW(static_cast<void>(kabsch_align(collinear, collinear)), AlignmentError);
    const PointCloud two = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    EXPECT_THROW(static_cast<void>(kabsch_align(two, two)), AlignmentError);
}

TEST(RigidTransformAlgebra, ComposeAndInverse) {
    std::mt19937_64 rng(6);
    auto a = random_rigid(rng);
    a.scale = 1.7;
    const auto b = random_rigid(rng);
    const Vec3 p(0.3, -0.2, 0.9);
    EXPECT_LT((a.compose(b).apply(p) - a.apply(b.apply(p))).norm(), 1e-12);
    EXPECT_LT((a.inverse().apply(a.apply(p)) - p).norm(), 1e-12);
    const Mat4 m = a.matrix();
    EXPECT_LT((m.topLeftCorner<3, 3>() * p + m.topRightCorner<3, 1>() - a.apply(p)).norm(), 1e-12);
}

TEST(RigidTransformJson, RoundTrip) {
    std::mt19937_64 rng(7);
    auto t = random_rigid(rng);
    t.scale = 0.9;
    const auto back = transform_from_json(transform_to_json(t));
    EXPECT_LT((back.rotation - t.rotation).norm(), 1e-15);
    EXPECT_LT((back.translation - t.translation).norm(), 1e-15);
    EXPECT_EQ(back.scale, t.scale);
}

TEST(PointPairs, ParsesCommentsAndRejectsShortLines) {
    wt::TempDir dir;
    std::ofstream(dir / "pairs.txt") << "# marker pairs\n0 0 0 1 1 1\n1 0 0 2 1 1\n\n0 1 0 1 2 1 # tail\n";
    PointCloud src;
    PointCloud dst;
    load_point_pairs(dir / "pairs.txt", src, dst);
    ASSERT_EQ(src.size(), 3u);
    EXPECT_EQ(dst[2], Vec3(1, 2, 1));
    std::ofstream(dir / "bad.txt") << "0 0 0 1 1\n";
    EXPECT_THROW(load_point_pairs(dir / "bad.txt", src, dst), InputError);
}

TEST(Icp, ConvergesFromSmallPerturbation) {
    const auto target = asymmetric_cloud(11);
    const auto truth = small_perturbation(2.0, 0.005);
    const auto source = truth.inverse().apply(target);
    const auto r = icp_align(source, target);
    EXPECT_LT(r.rms, 1e-4);
    EXPECT_TRUE(r.converged);
    EXPECT_FALSE(r.high_residual);
    EXPECT_LT(rotation_angle(r.transform.rotation, truth.rotation), 1e-6);
}

TEST(Icp, ExactInitIsAFixedPoint) {
    const auto target = asymmetric_cloud(12);
    const auto truth = small_perturbation(3.0, 0.01);
    const auto source = truth.inverse().apply(target);
    const auto r = icp_align(source, target, truth);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 2);
    EXPECT_LT(r.rms, 1e-9);
}

TEST(Icp, RmsHistoryIsNonIncreasing) {
    const auto target = asymmetric_cloud(13);
    const auto source = small_perturbation(4.0, 0.01).inverse().apply(target);
    const auto r = icp_align(source, target);
    ASSERT_GE(r.rms_history.size(), 2u);
    for (std::size_t i = 1; i < r.rms_history.size(); ++i) {
        EXPECT_LE(r.rms_history[i], r.rms_history[i - 1] * (1.0 + 1e-12));
    }
    EXPECT_LE(r.rms, r.rms_history.back() * (1.0 + 1e-12));
}

TEST(Icp, DisjointCloudsAreFlagged) {
    const auto target = asymmetric_cloud(14);
    PointCloud source;
    for (const auto &p : target) {
        source.push_back(p + Vec3(1.0, 0.0, 0.0));
    }
    IcpConfig c;
    c.max_iterations = 3;
    const auto r = icp_align(source, target, {}, c);
    EXPECT_TRUE(r.high_residual);
    EXPECT_FALSE(r.diagnostics.empty());
}

TEST(Icp, TooFewPointsThrows) {
    std::mt19937_64 rng(15);
    const auto pts = box_cloud(rng, 20, Vec3(1.0, 1.0, 1.0));
    EXPECT_THROW(static_cast<void>(icp_align(pts, pts)), AlignmentError);
}

// --- instance matching -------------------------------------------------------

namespace {

struct MatchScene {
    GaussianScene scene;
    InstanceMap instances;
};

MatchScene two_instances() {
    std::mt19937_64 rng(21);
    MatchScene ms;
    for (std::uint32_t id = 1; id <= 2; ++id) {
        const Vec3 center(0.2 * id, 0.0, 0.0);
        for (const auto &p : box_cloud(rng, 200, Vec3(0.08, 0.02, 0.02))) {
            Gaussian g;
            g.position = center + p;
            g.instance_id = id;
            ms.instances[id].gaussians.push_back(ms.scene.size());
            ms.scene.gaussians.push_back(g);
        }
    }
    return ms;
}

} // namespace

TEST(InstanceMatching, SelfMatch) {
    const auto ms = two_instances();
    PointCloud reference;
    for (const auto &g : ms.scene.gaussians) {
        reference.push_back(g.position);
    }
    const auto matches = match_instances(ms.scene, ms.instances, reference);
    ASSERT_EQ(matches.size(), 2u);
    for (const auto &m : matches) {
        EXPECT_EQ(m.reference_points.size(), m.extracted_points.size());
        std::vector<std::array<double, 3>> a;
        std::vector<std::array<double, 3>> b;
        for (const auto &p : m.reference_points) {
            a.push_back({p.x(), p.y(), p.z()});
        }
        for (const auto &p : m.extracted_points) {
            b.push_back({p.x(), p.y(), p.z()});
        }
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        EXPECT_EQ(a, b);
        for (const auto &p : m.reference_points) {
            EXPECT_TRUE(m.obb.contains(p));
        }
    }
}

TEST(InstanceMatching, DistantPointIsCropped) {
    const auto ms = two_instances();
    GaussianScene one;
    InstanceMap map;
    Gaussian g;
    for (int i = 0; i < 10; ++i) {
        g.position = Vec3(0.01 * i, 0.0, 0.0);
        g.instance_id = 1;
        map[1].gaussians.push_back(one.size());
        one.gaussians.push_back(g);
    }
    const PointCloud reference = {Vec3(0.045, 0.020, 0.0), Vec3(0.045, 0.008, 0.0)};
    const auto matches = match_instances(one, map, reference);
    ASSERT_EQ(matches.size(), 1u);
    ASSERT_EQ(matches[0].reference_points.size(), 1u);
    EXPECT_EQ(matches[0].reference_points[0], reference[1]);
}

TEST(InstanceMatching, OverlapGoesToNearerInstance) {
    GaussianScene scene;
    InstanceMap map;
    const auto add = [&](std::uint32_t id, const Vec3 &p) {
        Gaussian g;
        g.position = p;
        g.instance_id = id;
        map[id].gaussians.push_back(scene.size());
        scene.gaussians.push_back(g);
    };
    for (int i = 0; i < 5; ++i) {
        add(1, Vec3(0.002 * i, 0.0, 0.001 * (i % 2)));
        add(2, Vec3(0.02 + 0.002 * i, 0.0, 0.001 * (i % 2)));
    }
    // Both buffered boxes contain x = 0.0145, which lies 5.5 mm from instance 2 and 6.5 mm from instance 1.
    const PointCloud reference = {Vec3(0.0145, 0.0, 0.0)};
    const auto matches = match_instances(scene, map, reference);
    ASSERT_EQ(matches.size(), 2u);
    EXPECT_TRUE(matches[0].obb.contains(reference[0]));
    EXPECT_TRUE(matches[1].obb.contains(reference[0]));
    EXPECT_TRUE(matches[0].reference_points.empty());
    EXPECT_EQ(matches[1].reference_points.size(), 1u);
}

TEST(InstanceMatching, EmptyReferenceThrows) {
    const auto ms = two_instances();
    EXPECT_THROW(static_cast<void>(match_instances(ms.scene, ms.instances, PointCloud{})), InputError);
}

TEST(OrientedBoxTest, BufferGrowsEverySide) {
    PointCloud pts;
    for (int i = 0; i < 8; ++i) {
        pts.emplace_back(i & 1 ? 1.0 : -1.0, i & 2 ? 0.5 : -0.5, i & 4 ? 0.1 : -0.1);
    }
    const auto box = oriented_box(pts, 0.05);
    EXPECT_TRUE(box.contains(Vec3(1.04, 0.0, 0.0)));
    EXPECT_FALSE(box.contains(Vec3(1.06, 0.0, 0.0)));
}
