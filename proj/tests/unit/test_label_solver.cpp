// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "oracles.hpp"

#include "wheatgs/label_solver.hpp"

#include <gtest/gtest.h>

using namespace wheatgs;
namespace wt = wheatgs::testing;

namespace {

ContributionLedger ledger_of(std::vector<double> plus, std::vector<double> minus) {
    ContributionLedger l;
    l.s_plus = std::move(plus);
    l.s_minus = std::move(minus);
    return l;
}

} // namespace

TEST(SolveLabels, UnanimousForeground) {
    SolverConfig c;
    c.gamma = 0.0;
    EXPECT_EQ(solve_labels(ledger_of({1.0}, {0.0}), c).labels[0], 1);
}

TEST(SolveLabels, BackgroundBiasThreshold) {
    SolverConfig c;
    c.gamma = 0.2;
    EXPECT_EQ(solve_labels(ledger_of({0.55}, {0.45}), c).labels[0], 0);
    c.gamma = 0.0;
    EXPECT_EQ(solve_labels(ledger_of({0.55}, {0.45}), c).labels[0], 1);
}

TEST(SolveLabels, MinimumContributionGuard) {
    SolverConfig c;
    c.gamma = 0.0;
    c.min_total_contribution = 1e-3;
    EXPECT_EQ(solve_labels(ledger_of({5e-4}, {0.0}), c).labels[0], 0);
}

TEST(SolveLabels, InvalidGammaRejected) {
    SolverConfig c;
    c.gamma = 1.0;
    EXPECT_ANY_THROW(c.validate());
}

TEST(SolveLabels, GammaMonotone) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> plus(500);
    std::vector<double> minus(500);
    for (std::size_t i = 0; i < plus.size(); ++i) {
        plus[i] = u(rng);
        minus[i] = u(rng);
    }
    const auto ledger = ledger_of(plus, minus);
    std::vector<std::uint8_t> previous(500, 1);
    for (double gamma = -0.9; gamma < 0.99; gamma += 0.05) {
        SolverConfig c;
        c.gamma = gamma;
        const auto labels = solve_labels(ledger, c).labels;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            EXPECT_LE(labels[i], previous[i]) << "gamma " << gamma;
        }
        previous = labels;
    }
}

TEST(SolveLabels, ViewOrderIrrelevant) {
    std::mt19937_64 rng(9);
    const auto scene = wt::random_scene(rng, 40, 32, 25.0);
    const View a = wt::axis_view(32, 32, 25.0, "a");
    View b = a;
    b.id = "b";
    b.translation = Vec3(0.3, -0.2, 0.1);
    BinaryMask ma(32, 32);
    BinaryMask mb(32, 32);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            ma(x, y) = x < 16 ? 1 : 0;
            mb(x, y) = y < 20 ? 1 : 0;
        }
    }
    const std::vector<MaskedView> ab{{&a, &ma}, {&b, &mb}};
    const std::vector<MaskedView> ba{{&b, &mb}, {&a, &ma}};
    auto split = accumulate_contributions(scene, std::vector<MaskedView>{ab[0]});
    split += accumulate_contributions(scene, std::vector<MaskedView>{ab[1]});
    const auto l1 = solve_labels(accumulate_contributions(scene, ab)).labels;
    const auto l2 = solve_labels(accumulate_contributions(scene, ba)).labels;
    EXPECT_EQ(l1, l2);
    EXPECT_EQ(l1, solve_labels(split).labels);
}

TEST(Objective, ZeroLabelsOnBackground) {
    std::mt19937_64 rng(2);
    const auto scene = wt::random_scene(rng, 8, 32, 25.0);
    const View v = wt::axis_view(32, 32, 25.0);
    const BinaryMask bg(32, 32);
    const std::vector<MaskedView> views{{&v, &bg}};
    EXPECT_EQ(evaluate_objective(scene, views, std::vector<std::uint8_t>(8, 0)), 0.0);
}

TEST(Objective, ZeroLabelsCountForeground) {
    std::mt19937_64 rng(2);
    const auto scene = wt::random_scene(rng, 8, 32, 25.0);
    const View v = wt::axis_view(32, 32, 25.0);
    BinaryMask m(32, 32);
    for (int i = 0; i < 37; ++i) {
        m.data[static_cast<std::size_t>(i * 7)] = 1;
    }
    const std::vector<MaskedView> views{{&v, &m}};
    EXPECT_DOUBLE_EQ(evaluate_objective(scene, views, std::vector<std::uint8_t>(8, 0)), 37.0);
}

TEST(Objective, MatchesNaiveOnRandomLabels) {
    std::mt19937_64 rng(13);
    std::bernoulli_distribution coin(0.5);
    for (int trial = 0; trial < 10; ++trial) {
        const auto scene = wt::random_scene(rng, 12, 32, 25.0, 0.05, 0.3);
        const View v = wt::axis_view(32, 32, 25.0);
        BinaryMask m(32, 32);
        for (auto &p : m.data) {
            p = coin(rng) ? 1 : 0;
        }
        std::vector<std::uint8_t> labels(scene.size());
        for (auto &l : labels) {
            l = coin(rng) ? 1 : 0;
        }
        const std::vector<MaskedView> views{{&v, &m}};
        EXPECT_NEAR(evaluate_objective(scene, views, labels), wt::naive_objective(scene, views, labels), 1e-5);
    }
}

TEST(SolveLabels, RecoversSubsetWithoutScreenOverlap) {
    // Eight well-separated opaque splats; the mask is rendered from a known subset.
    GaussianScene scene;
    for (int i = 0; i < 8; ++i) {
        Gaussian g;
        g.position = Vec3(-0.7 + 0.2 * i, 0.0, 2.0);
        g.scale_log = Vec3::Constant(std::log(0.02));
        g.opacity_logit = 5.0;
        scene.gaussians.push_back(g);
    }
    const View v = wt::axis_view(64, 32, 40.0);
    const std::vector<std::uint8_t> truth{1, 0, 1, 1, 0, 0, 1, 0};
    const BinaryMask m = render_label_mask(scene, v, truth);
    const std::vector<MaskedView> views{{&v, &m}};
    SolverConfig c;
    c.gamma = 0.0;
    EXPECT_EQ(solve_labels(accumulate_contributions(scene, views), c).labels, truth);
}
