// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"
#include "temp_dir.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/scene_io.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <fstream>

using namespace wheatgs;
using wheatgs::testing::TempDir;

namespace {

void write_text(const std::filesystem::path &p, const std::string &text) {
    std::ofstream(p, std::ios::binary) << text;
}

std::string ascii_ply(const std::string &vertex_line, bool with_rot = true) {
    std::string h = "ply\nformat ascii 1.0\nelement vertex 1\n"
                    "property float x\nproperty float y\nproperty float z\n"
                    "property float f_dc_0\nproperty float f_dc_1\nproperty float f_dc_2\n"
                    "property float opacity\n"
                    "property float scale_0\nproperty float scale_1\nproperty float scale_2\n";
    if (with_rot) {
        h += "property float rot_0\nproperty float rot_1\nproperty float rot_2\nproperty float rot_3\n";
    }
    return h + "end_header\n" + vertex_line + "\n";
}

nlohmann::json camera_json(double scale_rot) {
    return nlohmann::json::array({{{"id", "cam"},
                                   {"width", 100},
                                   {"height", 100},
                                   {"fx", 100.0},
                                   {"fy", 100.0},
                                   {"cx", 50.0},
                                   {"cy", 50.0},
                                   {"world_to_camera",
                                    {scale_rot, 0, 0, 0, 0, scale_rot, 0, 0, 0, 0, scale_rot, 0, 0, 0, 0, 1}}}});
}

} // namespace

TEST(SceneIo, SingleIdentityVertex) {
    TempDir dir;
    write_text(dir / "s.ply", ascii_ply("0 0 1 0.1 0.2 0.3 0.5 0 0 0 1 0 0 0"));
    const auto scene = load_scene_ply(dir / "s.ply");
    ASSERT_EQ(scene.size(), 1U);
    const auto &g = scene.gaussians[0];
    EXPECT_TRUE(g.rotation.toRotationMatrix().isApprox(Mat3::Identity(), 1e-12));
    EXPECT_TRUE(g.scale().isApprox(Vec3::Ones(), 1e-12));
    EXPECT_EQ(g.instance_id, 0U);
}

TEST(SceneIo, QuaternionIsNormalized) {
    TempDir dir;
    write_text(dir / "s.ply", ascii_ply("0 0 1 0 0 0 0 0 0 0 2 0 0 0"));
    const auto scene = load_scene_ply(dir / "s.ply");
    EXPECT_NEAR(scene.gaussians[0].rotation.w(), 1.0, 1e-12);
    EXPECT_NEAR(scene.gaussians[0].rotation.norm(), 1.0, 1e-6);
}

TEST(SceneIo, MissingPropertyIsNamed) {
    TempDir dir;
    write_text(dir / "s.ply", ascii_ply("0 0 1 0 0 0 0 0 0 0", false));
    try {
        static_cast<void>(load_scene_ply(dir / "s.ply"));
        FAIL() << "expected FormatError";
    } catch (const FormatError &e) {
        EXPECT_NE(std::string(e.what()).find("rot_0"), std::string::npos);
    }
}

TEST(SceneIo, EmptySceneRejected) {
    TempDir dir;
    std::string ply = ascii_ply("");
    ply.replace(ply.find("vertex 1"), 8, "vertex 0");
    write_text(dir / "s.ply", ply);
    EXPECT_THROW(static_cast<void>(load_scene_ply(dir / "s.ply")), FormatError);
    EXPECT_THROW(save_scene_ply(GaussianScene{}, dir / "e.ply"), InputError);
}

TEST(SceneIo, RandomSceneRoundTrip) {
    TempDir dir;
    std::mt19937_64 rng(3);
    GaussianScene scene = wheatgs::testing::random_scene(rng, 100, 64, 60.0);
    std::normal_distribution<double> n01;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        auto &g = scene.gaussians[i];
        g.sh.resize(16);
        for (auto &c : g.sh) {
            c = Vec3(n01(rng), n01(rng), n01(rng));
        }
        g.instance_id = static_cast<std::uint32_t>(i % 7);
    }
    save_scene_ply(scene, dir / "r.ply");
    const auto back = load_scene_ply(dir / "r.ply");
    ASSERT_EQ(back.size(), scene.size());
    double max_err = 0.0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto &a = scene.gaussians[i];
        const auto &b = back.gaussians[i];
        max_err = std::max(max_err, (a.position - b.position).cwiseAbs().maxCoeff());
        max_err = std::max(max_err, (a.scale_log - b.scale_log).cwiseAbs().maxCoeff());
        max_err = std::max(max_err, std::abs(a.opacity_logit - b.opacity_logit));
        max_err = std::max(max_err, (a.rotation.coeffs() - b.rotation.coeffs()).cwiseAbs().maxCoeff());
        ASSERT_EQ(a.sh.size(), b.sh.size());
        for (std::size_t c = 0; c < a.sh.size(); ++c) {
            max_err = std::max(max_err, (a.sh[c] - b.sh[c]).cwiseAbs().maxCoeff());
        }
        EXPECT_EQ(a.instance_id, b.instance_id);
    }
    EXPECT_LT(max_err, 1e-6);
}

TEST(SceneIo, InstanceIdColumn) {
    TempDir dir;
    GaussianScene scene;
    scene.gaussians.resize(3);
    scene.gaussians[1].instance_id = 1;
    scene.gaussians[2].instance_id = 1;
    save_scene_ply(scene, dir / "s.ply");
    const auto back = load_scene_ply(dir / "s.ply");
    EXPECT_EQ(back.gaussians[0].instance_id, 0U);
    EXPECT_EQ(back.gaussians[1].instance_id, 1U);
    EXPECT_EQ(back.gaussians[2].instance_id, 1U);
    const auto map = instances_from_scene(back);
    ASSERT_EQ(map.size(), 1U);
    EXPECT_EQ(map.at(1).gaussians, (std::vector<std::size_t>{1, 2}));
}

TEST(SceneIo, PinholeIdentityCamera) {
    TempDir dir;
    write_text(dir / "c.json", camera_json(1.0).dump());
    const auto views = load_cameras(dir / "c.json");
    ASSERT_EQ(views.size(), 1U);
    const Vec2 p = views[0].project(Vec3(0, 0, 1));
    EXPECT_NEAR(p.x(), 50.0, 1e-12);
    EXPECT_NEAR(p.y(), 50.0, 1e-12);
}

TEST(SceneIo, NearOrthonormalRotationRepaired) {
    TempDir dir;
    write_text(dir / "c.json", camera_json(1.0005).dump());
    const auto views = load_cameras(dir / "c.json");
    const Mat3 r = views[0].rotation;
    EXPECT_LT((r * r.transpose() - Mat3::Identity()).norm(), 1e-12);
    // Polar factor of s * I is I.
    EXPECT_LT((r - Mat3::Identity()).norm(), 1e-12);
}

TEST(SceneIo, PolarFactorOfPerturbedRotation) {
    TempDir dir;
    std::mt19937_64 rng(5);
    const Mat3 rot = wheatgs::testing::random_rotation(rng).toRotationMatrix();
    Mat3 perturb = Mat3::Identity();
    perturb(0, 1) = perturb(1, 0) = 2e-4;
    perturb(2, 2) = 1.0003;
    const Mat3 m = rot * perturb;
    auto j = camera_json(1.0);
    std::vector<double> w2c(16, 0.0);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            w2c[static_cast<std::size_t>(r * 4 + c)] = m(r, c);
        }
    }
    w2c[15] = 1.0;
    j[0]["world_to_camera"] = w2c;
    write_text(dir / "c.json", j.dump());
    const Mat3 got = load_cameras(dir / "c.json")[0].rotation;
    // Symmetric positive perturbation: the polar factor is exactly `rot`.
    EXPECT_LT((got - rot).norm(), 1e-9);
}

TEST(SceneIo, GrossNonOrthonormalRejected) {
    TempDir dir;
    write_text(dir / "c.json", camera_json(2.0).dump());
    EXPECT_THROW(static_cast<void>(load_cameras(dir / "c.json")), CalibrationError);
}

TEST(SceneIo, DuplicateCameraIdsRejected) {
    TempDir dir;
    auto j = camera_json(1.0);
    j.push_back(j[0]);
    write_text(dir / "c.json", j.dump());
    EXPECT_THROW(static_cast<void>(load_cameras(dir / "c.json")), FormatError);
}

TEST(SceneIo, MasksAreaBboxAndCounting) {
    TempDir dir;
    std::vector<View> views{wheatgs::testing::axis_view(4, 4, 4.0, "a"), wheatgs::testing::axis_view(4, 4, 4.0, "b")};
    std::filesystem::create_directories(dir / "m/a");
    std::filesystem::create_directories(dir / "m/b");
    for (const char *v : {"a", "b"}) {
        for (int id = 1; id <= 3; ++id) {
            BinaryMask m(4, 4);
            m(1, 2) = m(2, 2) = m(1, 3) = m(2, 3) = 1;
            write_mask_png(dir.path() / "m" / v / (std::to_string(id) + ".png"), m);
        }
    }
    write_mask_png(dir.path() / "m/a/9.png", BinaryMask(4, 4));
    const MaskPool pool = load_masks(dir / "m", views);
    EXPECT_EQ(pool.size(), 6U);
    EXPECT_EQ(pool.indices_for_view("a").size(), 3U);
    const auto &r = pool.record(0);
    EXPECT_EQ(r.area, 4U);
    EXPECT_EQ(r.bbox, (PixelRect{1, 2, 2, 2}));
    for (const auto &rec : pool.records()) {
        EXPECT_EQ(rec.area, count_foreground(rec.bitmap));
        EXPECT_FALSE(rec.consumed);
    }
}

TEST(SceneIo, MaskSizeMismatchRejected) {
    TempDir dir;
    std::vector<View> views{wheatgs::testing::axis_view(4, 4, 4.0, "a")};
    std::filesystem::create_directories(dir / "m/a");
    BinaryMask m(5, 4);
    m(0, 0) = 1;
    write_mask_png(dir / "m/a/1.png", m);
    EXPECT_THROW(static_cast<void>(load_masks(dir / "m", views)), FormatError);
}

TEST(SceneIo, MaskPoolSaveLoadRoundTrip) {
    TempDir dir;
    std::vector<View> views{wheatgs::testing::axis_view(8, 6, 4.0, "v")};
    MaskPool pool;
    BinaryMask m(8, 6);
    m(3, 4) = 1;
    ASSERT_TRUE(pool.add("v", 5, m));
    EXPECT_FALSE(pool.add("v", 6, BinaryMask(8, 6)));
    save_masks(pool, dir / "masks");
    const MaskPool back = load_masks(dir / "masks", views);
    ASSERT_EQ(back.size(), 1U);
    EXPECT_EQ(back.record(0).mask_id, 5);
    EXPECT_EQ(back.record(0).bitmap, m);
}

TEST(SceneIo, PointCloudFormats) {
    TempDir dir;
    write_text(dir / "p.xyz", "# comment\n0 0 0\n1 2 3 255 0 0\n\n4 5 6\n");
    const auto xyz = load_point_cloud(dir / "p.xyz");
    ASSERT_EQ(xyz.size(), 3U);
    EXPECT_EQ(xyz[1], Vec3(1, 2, 3));
    save_point_cloud_ply(xyz, dir / "p.ply");
    const auto ply = load_point_cloud(dir / "p.ply");
    ASSERT_EQ(ply.size(), 3U);
    EXPECT_LT((ply[2] - Vec3(4, 5, 6)).norm(), 1e-6);
}

TEST(SceneIo, InstanceMapRoundTrip) {
    TempDir dir;
    InstanceMap map;
    map[1] = {{0, 4, 9}, {{"v0", 2}, {"v3", 1}}};
    map[2] = {{1, 2}, {{"v1", 7}}};
    save_instance_map(map, dir / "i.json");
    const auto back = load_instance_map(dir / "i.json");
    ASSERT_EQ(back.size(), 2U);
    EXPECT_EQ(back.at(1).gaussians, map.at(1).gaussians);
    EXPECT_EQ(back.at(1).sources, map.at(1).sources);
    EXPECT_EQ(back.at(2).sources, map.at(2).sources);
}
