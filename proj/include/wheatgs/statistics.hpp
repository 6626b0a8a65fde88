// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/traits.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wheatgs {

enum class Trait { Length, Width, Volume };
inline constexpr std::array<Trait, 3> all_traits{Trait::Length, Trait::Width, Trait::Volume};

[[nodiscard]] std::string_view trait_name(Trait trait);
[[nodiscard]] std::optional<double> trait_value(const TraitRecord &record, Trait trait);

/// Agreement between estimates and reference values.
struct PairedStats {
    double rho = 0.0;     // Pearson correlation
    double p_value = 1.0; // two-sided t-test on rho
    double mae = 0.0;
    double mape = 0.0; // percent, over pairs with non-zero reference
    std::size_t n = 0;
    std::size_t n_mape = 0;
};

/// Needs at least three pairs. Pairs whose reference is zero are left out of MAPE.
[[nodiscard]] PairedStats paired_statistics(std::span<const double> est, std::span<const double> ref);

enum class AggregationLevel { PerInstance, PerGroup };
enum class OutlierFilter { None, Mcd, Trim };

[[nodiscard]] std::string_view to_string(AggregationLevel level);
[[nodiscard]] std::string_view to_string(OutlierFilter filter);
[[nodiscard]] OutlierFilter parse_outlier_filter(std::string_view text);

struct TraitAgreement {
    Trait trait = Trait::Length;
    std::optional<PairedStats> stats; // empty when fewer than three pairs remain
    std::size_t n_paired = 0;         // pairs before outlier filtering
    std::size_t n_removed = 0;
};

struct RegressionReport {
    AggregationLevel level = AggregationLevel::PerInstance;
    OutlierFilter filter = OutlierFilter::None;
    std::vector<TraitAgreement> traits;
    std::vector<std::string> warnings;
};

/// Pairs estimates with references by instance id. Outlier filtering runs on
/// the per-instance pairs; the per-group level then averages estimates and
/// references within each group (group taken from the estimate row, falling
/// back to the reference row) and compares the group means.
[[nodiscard]] RegressionReport regression_report(std::span<const TraitRecord> est, std::span<const TraitRecord> ref,
                                                 AggregationLevel level, OutlierFilter filter = OutlierFilter::None);

[[nodiscard]] nlohmann::json report_to_json(const RegressionReport &report);
/// One row per (report, trait).
void write_report_csv(std::span<const RegressionReport> reports, const std::filesystem::path &path);

struct AnovaResult {
    double f_statistic = 0.0;
    double p_value = 1.0;
    std::size_t df_between = 0;
    std::size_t df_within = 0;
    bool infinite_f = false; // within-group variance was zero
};

/// One-way ANOVA. Needs at least two groups with at least two values each.
[[nodiscard]] AnovaResult anova_f(std::span<const double> values, std::span<const std::string> groups);

/// chi-squared 0.95 quantile with two degrees of freedom.
[[nodiscard]] double mcd_gate();

struct McdConfig {
    int starts = 500;
    std::uint64_t seed = 0;
    int max_csteps = 100;
};

struct McdFit {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Identity();
    std::vector<std::size_t> kept;
    bool fallback = false; // robust covariance was singular
};

/// FAST-MCD on 2D points, reweighted, then gated at mcd_gate(). Needs at least ten points.
[[nodiscard]] McdFit mcd_fit(std::span<const Eigen::Vector2d> points, const McdConfig &config = {});

/// Indices (ascending) of the (ref, est) pairs that pass the MCD gate.
[[nodiscard]] std::vector<std::size_t> mcd_outlier_filter(std::span<const double> ref, std::span<const double> est,
                                                          const McdConfig &config = {});

/// Drops the 10% of pairs with the largest absolute error; indices ascending.
[[nodiscard]] std::vector<std::size_t> trim_outlier_filter(std::span<const double> ref, std::span<const double> est,
                                                           double fraction = 0.1);

} // namespace wheatgs
