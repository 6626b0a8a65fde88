// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "temp_dir.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/statistics.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

using namespace wheatgs;
namespace wt = wheatgs::testing;

namespace {

double naive_pearson(const std::vector<double> &x, const std::vector<double> &y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> random_values(std::mt19937_64 &rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto &x : v) {
        x = u(rng);
    }
    return v;
}

TraitRecord row(std::uint32_t id, double length, double width, double volume, std::string group = {}) {
    TraitRecord r;
    r.instance_id = id;
    r.length_cm = length;
    r.width_cm = width;
    r.volume_cm3 = volume;
    r.group = std::move(group);
    return r;
}

/// Correlated bivariate normal (ref, est) pairs around (8, 8).
void bivariate(std::mt19937_64 &rng, std::size_t n, std::vector<double> &ref, std::vector<double> &est) {
    std::normal_distribution<double> n01;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = n01(rng);
        const double b = n01(rng);
        ref.push_back(8.0 + a);
        est.push_back(8.0 + 0.8 * a + 0.6 * b);
    }
}

} // namespace

// --- paired statistics -------------------------------------------------------

TEST(PairedStatistics, IdenticalSeries) {
    const std::vector<double> v = {1.0, 2.5, 3.0, 7.0, 4.0};
    const auto s = paired_statistics(v, v);
    EXPECT_NEAR(s.rho, 1.0, 1e-12);
    EXPECT_EQ(s.mae, 0.0);
    EXPECT_EQ(s.mape, 0.0);
    EXPECT_EQ(s.n, 5u);
}

TEST(PairedStatistics, UniformTenPercentOverestimate) {
    std::mt19937_64 rng(1);
    const auto ref = random_values(rng, 30, 1.0, 10.0);
    std::vector<double> est;
    for (const auto r : ref) {
        est.push_back(1.1 * r);
    }
    const auto s = paired_statistics(est, ref);
    EXPECT_NEAR(s.mape, 10.0, 1e-9);
    EXPECT_NEAR(s.rho, 1.0, 1e-12);
}

TEST(PairedStatistics, HandComputedTable) {
    const std::vector<double> est = {2.0, 4.0, 5.0, 4.0, 5.0};
    const std::vector<double> ref = {1.0, 3.0, 5.0, 4.0, 6.0};
    const auto s = paired_statistics(est, ref);
    EXPECT_NEAR(s.rho, 0.9550718099505202, 1e-9);
    EXPECT_NEAR(s.p_value, 0.011354384599263741, 1e-9);
    EXPECT_NEAR(s.mae, 0.6, 1e-12);
    EXPECT_NEAR(s.mape, 30.0, 1e-9);
}

TEST(PairedStatistics, MatchesDirectFormulas) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const auto ref = random_values(rng, 25, 2.0, 12.0);
        const auto est = random_values(rng, 25, 2.0, 12.0);
        const auto s = paired_statistics(est, ref);
        double mae = 0.0;
        double mape = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) {
            mae += std::abs(est[i] - ref[i]);
            mape += std::abs(est[i] - ref[i]) / ref[i];
        }
        EXPECT_NEAR(s.rho, naive_pearson(est, ref), 1e-9);
        EXPECT_NEAR(s.mae, mae / 25.0, 1e-9);
        EXPECT_NEAR(s.mape, 100.0 * mape / 25.0, 1e-9);
        EXPECT_LE(std::abs(s.rho), 1.0);
        EXPECT_GE(s.mape, 0.0);
    }
}

TEST(PairedStatistics, Invariances) {
    std::mt19937_64 rng(3);
    const auto ref = random_values(rng, 40, 2.0, 12.0);
    const auto est = random_values(rng, 40, 2.0, 12.0);
    const auto base = paired_statistics(est, ref);
    std::vector<double> est_affine;
    std::vector<double> ref_scaled;
    std::vector<double> est_scaled;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        est_affine.push_back(3.0 * est[i] + 7.0);
        ref_scaled.push_back(2.5 * ref[i]);
        est_scaled.push_back(2.5 * est[i]);
    }
    EXPECT_NEAR(paired_statistics(est_affine, ref).rho, base.rho, 1e-12);
    const auto scaled = paired_statistics(est_scaled, ref_scaled);
    EXPECT_NEAR(scaled.mape, base.mape, 1e-9);
    EXPECT_NEAR(scaled.rho, base.rho, 1e-12);
}

TEST(PairedStatistics, ZeroReferenceExcludedFromMape) {
    const std::vector<double> est = {1.0, 2.0, 3.0, 4.0};
    const std::vector<double> ref = {0.0, 2.0, 3.0, 5.0};
    const auto s = paired_statistics(est, ref);
    EXPECT_EQ(s.n_mape, 3u);
    EXPECT_NEAR(s.mape, 100.0 * 0.2 / 3.0, 1e-12);
}

TEST(PairedStatistics, NeedsThreePairs) {
    const std::vector<double> v = {1.0, 2.0};
    EXPECT_THROW(static_cast<void>(paired_statistics(v, v)), EvaluationError);
}

// --- ANOVA -------------------------------------------------------------------

TEST(Anova, IdenticalGroupMeansGiveZero) {
    const std::vector<double> v = {1, 2, 3, 1, 2, 3};
    const std::vector<std::string> g = {"a", "a", "a", "b", "b", "b"};
    const auto r = anova_f(v, g);
    EXPECT_NEAR(r.f_statistic, 0.0, 1e-12);
    EXPECT_NEAR(r.p_value, 1.0, 1e-9);
}

TEST(Anova, TwoGroupHandExample) {
    const std::vector<double> v = {0, 1, 10, 11};
    const std::vector<std::string> g = {"a", "a", "b", "b"};
    const auto r = anova_f(v, g);
    EXPECT_NEAR(r.f_statistic, 200.0, 1e-9);
    EXPECT_EQ(r.df_between, 1u);
    EXPECT_EQ(r.df_within, 2u);
    EXPECT_NEAR(r.p_value, 0.004962809790010866, 1e-9);
}

TEST(Anova, PermutationWithinGroupsAndAffineInvariance) {
    std::mt19937_64 rng(4);
    auto v = random_values(rng, 30, 0.0, 5.0);
    std::vector<std::string> g;
    for (int i = 0; i < 30; ++i) {
        g.push_back(std::string(1, static_cast<char>('a' + i / 10)));
        v[static_cast<std::size_t>(i)] += 0.5 * (i / 10);
    }
    const double f = anova_f(v, g).f_statistic;
    auto shuffled = v;
    for (int k = 0; k < 3; ++k) {
        std::shuffle(shuffled.begin() + 10 * k, shuffled.begin() + 10 * (k + 1), rng);
    }
    EXPECT_NEAR(anova_f(shuffled, g).f_statistic, f, 1e-9 * f);
    std::vector<double> moved;
    for (const auto x : v) {
        moved.push_back(4.0 * x + 100.0);
    }
    EXPECT_NEAR(anova_f(moved, g).f_statistic, f, 1e-9 * f);
}

TEST(Anova, ZeroWithinVarianceIsInfinite) {
    const std::vector<double> v = {1, 1, 2, 2};
    const std::vector<std::string> g = {"a", "a", "b", "b"};
    const auto r = anova_f(v, g);
    EXPECT_TRUE(r.infinite_f);
    EXPECT_TRUE(std::isinf(r.f_statistic));
}

TEST(Anova, RejectsDegenerateInput) {
    const std::vector<double> one_group = {1, 2, 3};
    const std::vector<std::string> g1 = {"a", "a", "a"};
    EXPECT_THROW(static_cast<void>(anova_f(one_group, g1)), EvaluationError);
    const std::vector<double> same = {2, 2, 2, 2};
    const std::vector<std::string> g2 = {"a", "a", "b", "b"};
    EXPECT_THROW(static_cast<void>(anova_f(same, g2)), EvaluationError);
}

// --- outlier filters ---------------------------------------------------------

TEST(Mcd, GateIsChiSquaredQuantile) { EXPECT_NEAR(mcd_gate(), 5.9915, 1e-3); }

TEST(Mcd, KeepsCleanBivariateNormal) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        std::mt19937_64 rng(seed);
        std::vector<double> ref;
        std::vector<double> est;
        bivariate(rng, 400, ref, est);
        const auto kept = mcd_outlier_filter(ref, est);
        EXPECT_GE(kept.size(), static_cast<std::size_t>(0.93 * 400)) << "seed " << seed;
        EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end()));
    }
}

TEST(Mcd, RemovesPlantedOutliers) {
    std::mt19937_64 rng(5);
    std::vector<double> ref;
    std::vector<double> est;
    bivariate(rng, 180, ref, est);
    std::uniform_real_distribution<double> angle(0.0, 6.283185307179586);
    for (int i = 0; i < 20; ++i) {
        const double t = angle(rng);
        ref.push_back(8.0 + 10.0 * std::cos(t));
        est.push_back(8.0 + 10.0 * std::sin(t));
    }
    const auto kept = mcd_outlier_filter(ref, est);
    EXPECT_EQ(std::count_if(kept.begin(), kept.end(), [](std::size_t i) { return i >= 180; }), 0);
    EXPECT_GE(kept.size(), static_cast<std::size_t>(0.9 * 180));
}

TEST(Mcd, AffineEquivariance) {
    std::mt19937_64 rng(6);
    std::vector<double> ref;
    std::vector<double> est;
    bivariate(rng, 120, ref, est);
    ref.push_back(30.0);
    est.push_back(-5.0);
    const auto base = mcd_outlier_filter(ref, est);
    std::vector<double> ref2;
    std::vector<double> est2;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        ref2.push_back(2.0 * ref[i] + 0.5 * est[i] - 3.0);
        est2.push_back(-0.7 * ref[i] + 1.5 * est[i] + 11.0);
    }
    EXPECT_EQ(mcd_outlier_filter(ref2, est2), base);
}

TEST(Mcd, DeterministicForFixedSeed) {
    std::mt19937_64 rng(7);
    std::vector<Eigen::Vector2d> pts;
    std::normal_distribution<double> n01;
    for (int i = 0; i < 60; ++i) {
        pts.emplace_back(n01(rng), n01(rng));
    }
    const auto a = mcd_fit(pts);
    const auto b = mcd_fit(pts);
    EXPECT_EQ(a.kept, b.kept);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.covariance, b.covariance);
}

TEST(Mcd, SingularDataFallsBack) {
    std::vector<Eigen::Vector2d> pts;
    for (int i = 0; i < 30; ++i) {
        pts.emplace_back(i, 2.0 * i);
    }
    const auto fit = mcd_fit(pts);
    EXPECT_TRUE(fit.fallback);
}

TEST(Trim, DropsLargestTenPercentOfErrors) {
    std::vector<double> ref(20, 5.0);
    std::vector<double> est(20, 5.0);
    est[3] = 9.0;
    est[11] = 1.5;
    est[15] = 6.0;
    const auto kept = trim_outlier_filter(ref, est);
    ASSERT_EQ(kept.size(), 18u);
    EXPECT_EQ(std::count(kept.begin(), kept.end(), 3u), 0);
    EXPECT_EQ(std::count(kept.begin(), kept.end(), 11u), 0);
    EXPECT_EQ(std::count(kept.begin(), kept.end(), 15u), 1);
    EXPECT_TRUE(std::is_sorted(kept.begin(), kept.end()));
}

// --- regression report -------------------------------------------------------

TEST(RegressionReport, PairsByIdAndAveragesGroups) {
    std::vector<TraitRecord> est;
    std::vector<TraitRecord> ref;
    for (std::uint32_t id = 1; id <= 12; ++id) {
        const std::string group = "g" + std::to_string((id - 1) / 3);
        ref.push_back(row(id, 6.0 + id, 1.0 + 0.1 * id, 10.0 + id, group));
        est.push_back(row(id, 6.5 + id * 1.02, 1.05 + 0.1 * id, 9.0 + id));
    }
    std::reverse(est.begin(), est.end());
    const auto inst = regression_report(est, ref, AggregationLevel::PerInstance);
    ASSERT_EQ(inst.traits.size(), 3u);
    ASSERT_TRUE(inst.traits[0].stats);
    EXPECT_EQ(inst.traits[0].stats->n, 12u);
    EXPECT_GT(inst.traits[0].stats->rho, 0.99);

    const auto grouped = regression_report(est, ref, AggregationLevel::PerGroup);
    ASSERT_TRUE(grouped.traits[0].stats);
    EXPECT_EQ(grouped.traits[0].stats->n, 4u);
    std::vector<double> ge;
    std::vector<double> gr;
    for (int g = 0; g < 4; ++g) {
        double se = 0.0;
        double sr = 0.0;
        for (int k = 1; k <= 3; ++k) {
            const double id = 3 * g + k;
            se += 6.5 + id * 1.02;
            sr += 6.0 + id;
        }
        ge.push_back(se / 3.0);
        gr.push_back(sr / 3.0);
    }
    EXPECT_NEAR(grouped.traits[0].stats->mae, paired_statistics(ge, gr).mae, 1e-12);
}

TEST(RegressionReport, MissingPairsAndTooFewItems) {
    std::vector<TraitRecord> est = {row(1, 5, 1, 4), row(2, 6, 1, 5), row(9, 7, 1, 6)};
    std::vector<TraitRecord> ref = {row(1, 5, 1, 4), row(2, 6.5, 1.1, 5)};
    const auto r = regression_report(est, ref, AggregationLevel::PerInstance);
    EXPECT_EQ(r.traits[0].n_paired, 2u);
    EXPECT_FALSE(r.traits[0].stats.has_value());
    EXPECT_FALSE(r.warnings.empty());
}

TEST(RegressionReport, DuplicateReferenceIdThrows) {
    std::vector<TraitRecord> est = {row(1, 5, 1, 4)};
    std::vector<TraitRecord> ref = {row(1, 5, 1, 4), row(1, 6, 1, 4)};
    EXPECT_THROW(static_cast<void>(regression_report(est, ref, AggregationLevel::PerInstance)), InputError);
}

TEST(RegressionReport, TrimFilterCountsRemovals) {
    std::vector<TraitRecord> est;
    std::vector<TraitRecord> ref;
    for (std::uint32_t id = 1; id <= 20; ++id) {
        ref.push_back(row(id, 5.0 + 0.1 * id, 1.0, 3.0 + 0.1 * id));
        est.push_back(row(id, 5.0 + 0.1 * id + (id == 7 ? 4.0 : 0.01 * id), 1.0 + 0.001 * id, 3.0 + 0.1 * id));
    }
    const auto r = regression_report(est, ref, AggregationLevel::PerInstance, OutlierFilter::Trim);
    EXPECT_EQ(r.traits[0].n_paired, 20u);
    EXPECT_EQ(r.traits[0].n_removed, 2u);
    EXPECT_EQ(r.traits[0].stats->n, 18u);
}

TEST(RegressionReport, JsonAndCsvOutput) {
    std::vector<TraitRecord> est;
    std::vector<TraitRecord> ref;
    for (std::uint32_t id = 1; id <= 5; ++id) {
        ref.push_back(row(id, 5.0 + id, 1.0, 3.0));
        est.push_back(row(id, 5.2 + id, 1.0 + 0.01 * id, 3.0));
    }
    const auto r = regression_report(est, ref, AggregationLevel::PerInstance);
    const auto j = report_to_json(r);
    EXPECT_EQ(j.at("level"), "per_instance");
    // Constant reference volumes have no correlation.
    EXPECT_TRUE(j.at("traits").at("volume_cm3").at("rho").is_null());
    EXPECT_TRUE(j.at("traits").at("length_cm").at("rho").is_number());
    wt::TempDir dir;
    const std::vector<RegressionReport> reports = {r};
    write_report_csv(reports, dir / "r.csv");
    std::ifstream in(dir / "r.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "level,outlier_filter,trait,n_paired,n_removed,n,n_mape,rho,p_value,mae,mape");
    int rows = 0;
    for (std::string line; std::getline(in, line);) {
        ++rows;
    }
    EXPECT_EQ(rows, 3);
}

TEST(OutlierFilterNames, RoundTrip) {
    for (const auto f : {OutlierFilter::None, OutlierFilter::Mcd, OutlierFilter::Trim}) {
        EXPECT_EQ(parse_outlier_filter(to_string(f)), f);
    }
    EXPECT_THROW(static_cast<void>(parse_outlier_filter("median")), InputError);
}
