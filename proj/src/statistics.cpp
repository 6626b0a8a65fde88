// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/statistics.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/parallel.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace wheatgs {

std::string_view trait_name(Trait trait) {
    switch (trait) {
    case Trait::Length:
        return "length_cm";
    case Trait::Width:
        return "width_cm";
    case Trait::Volume:
        return "volume_cm3";
    }
    return "unknown";
}

std::optional<double> trait_value(const TraitRecord &record, Trait trait) {
    switch (trait) {
    case Trait::Length:
        return record.length_cm;
    case Trait::Width:
        return record.width_cm;
    case Trait::Volume:
        return record.volume_cm3;
    }
    return std::nullopt;
}

std::string_view to_string(AggregationLevel level) {
    return level == AggregationLevel::PerInstance ? "per_instance" : "per_group";
}

std::string_view to_string(OutlierFilter filter) {
    switch (filter) {
    case OutlierFilter::None:
        return "none";
    case OutlierFilter::Mcd:
        return "mcd";
    case OutlierFilter::Trim:
        return "trim";
    }
    return "none";
}

OutlierFilter parse_outlier_filter(std::string_view text) {
    if (text == "none") {
        return OutlierFilter::None;
    }
    if (text == "mcd") {
        return OutlierFilter::Mcd;
    }
    if (text == "trim") {
        return OutlierFilter::Trim;
    }
    throw InputError("unknown outlier filter '" + std::string(text) + "' (expected none, mcd or trim)");
}

namespace {

constexpr double kRoundoff = 1e-20;

} // namespace

PairedStats paired_statistics(std::span<const double> est, std::span<const double> ref) {
    if (est.size() != ref.size()) {
        throw EvaluationError("paired_statistics: series differ in length");
    }
    const std::size_t n = est.size();
    if (n < 3) {
        throw EvaluationError("paired_statistics: at least three pairs are required");
    }
    PairedStats s;
    s.n = n;
    const double me = std::accumulate(est.begin(), est.end(), 0.0) / static_cast<double>(n);
    const double mr = std::accumulate(ref.begin(), ref.end(), 0.0) / static_cast<double>(n);
    double see = 0.0;
    double srr = 0.0;
    double ser = 0.0;
    double abs_sum = 0.0;
    double pct_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double de = est[i] - me;
        const double dr = ref[i] - mr;
        see += de * de;
        srr += dr * dr;
        ser += de * dr;
        const double err = std::abs(est[i] - ref[i]);
        abs_sum += err;
        if (ref[i] != 0.0) {
            pct_sum += err / std::abs(ref[i]);
            ++s.n_mape;
        }
    }
    s.mae = abs_sum / static_cast<double>(n);
    if (s.n_mape < n) {
        spdlog::warn("{} pair(s) with zero reference left out of MAPE", n - s.n_mape);
    }
    s.mape = s.n_mape > 0 ? 100.0 * pct_sum / static_cast<double>(s.n_mape) : 0.0;
    // Sums of squares at rounding level mean a constant series.
    double e2 = 0.0;
    double r2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        e2 += est[i] * est[i];
        r2 += ref[i] * ref[i];
    }
    if (see <= kRoundoff * e2 || srr <= kRoundoff * r2) {
        s.rho = std::numeric_limits<double>::quiet_NaN();
        s.p_value = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    s.rho = std::clamp(ser / std::sqrt(see * srr), -1.0, 1.0);
    const double dof = static_cast<double>(n - 2);
    if (std::abs(s.rho) >= 1.0) {
        s.p_value = 0.0;
    } else {
        const double t = s.rho * std::sqrt(dof / (1.0 - s.rho * s.rho));
        const boost::math::students_t dist(dof);
        s.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    }
    return s;
}

namespace {

struct Pairs {
    std::vector<double> est;
    std::vector<double> ref;
    std::vector<std::string> group;
};

Pairs collect_pairs(std::span<const TraitRecord> est, const std::map<std::uint32_t, const TraitRecord *> &ref_by_id,
                    Trait trait) {
    Pairs p;
    for (const auto &e : est) {
        const auto it = ref_by_id.find(e.instance_id);
        if (it == ref_by_id.end()) {
            continue;
        }
        const auto ev = trait_value(e, trait);
        const auto rv = trait_value(*it->second, trait);
        if (!ev || !rv) {
            continue;
        }
        p.est.push_back(*ev);
        p.ref.push_back(*rv);
        p.group.push_back(e.group.empty() ? it->second->group : e.group);
    }
    return p;
}

Pairs select(const Pairs &p, const std::vector<std::size_t> &keep) {
    Pairs out;
    for (const auto i : keep) {
        out.est.push_back(p.est[i]);
        out.ref.push_back(p.ref[i]);
        out.group.push_back(p.group[i]);
    }
    return out;
}

Pairs group_means(const Pairs &p, std::vector<std::string> &warnings, Trait trait) {
    std::map<std::string, std::array<double, 3>> acc;
    std::size_t ungrouped = 0;
    for (std::size_t i = 0; i < p.est.size(); ++i) {
        if (p.group[i].empty()) {
            ++ungrouped;
            continue;
        }
        auto &a = acc[p.group[i]];
        a[0] += p.est[i];
        a[1] += p.ref[i];
        a[2] += 1.0;
    }
    if (ungrouped > 0) {
        warnings.push_back(std::string(trait_name(trait)) + ": " + std::to_string(ungrouped) +
                           " pair(s) without a group key skipped at per_group level");
    }
    Pairs out;
    for (const auto &[key, a] : acc) {
        out.est.push_back(a[0] / a[2]);
        out.ref.push_back(a[1] / a[2]);
        out.group.push_back(key);
    }
    return out;
}

} // namespace

RegressionReport regression_report(std::span<const TraitRecord> est, std::span<const TraitRecord> ref,
                                   AggregationLevel level, OutlierFilter filter) {
    std::map<std::uint32_t, const TraitRecord *> ref_by_id;
    for (const auto &r : ref) {
        if (!ref_by_id.emplace(r.instance_id, &r).second) {
            throw EvaluationError("reference traits list instance " + std::to_string(r.instance_id) + " twice");
        }
    }
    RegressionReport report;
    report.level = level;
    report.filter = filter;
    for (const Trait trait : all_traits) {
        TraitAgreement agreement;
        agreement.trait = trait;
        Pairs pairs = collect_pairs(est, ref_by_id, trait);
        agreement.n_paired = pairs.est.size();
        if (filter != OutlierFilter::None) {
            if (filter == OutlierFilter::Mcd && pairs.est.size() < 10) {
                report.warnings.push_back(std::string(trait_name(trait)) +
                                          ": fewer than 10 pairs, MCD filter skipped");
            } else {
                const auto keep = filter == OutlierFilter::Mcd ? mcd_outlier_filter(pairs.ref, pairs.est)
                                                               : trim_outlier_filter(pairs.ref, pairs.est);
                agreement.n_removed = pairs.est.size() - keep.size();
                pairs = select(pairs, keep);
            }
        }
        if (level == AggregationLevel::PerGroup) {
            pairs = group_means(pairs, report.warnings, trait);
        }
        const std::size_t zero_ref =
            static_cast<std::size_t>(std::count(pairs.ref.begin(), pairs.ref.end(), 0.0));
        if (zero_ref > 0) {
            report.warnings.push_back(std::string(trait_name(trait)) + ": " + std::to_string(zero_ref) +
                                      " zero reference value(s) excluded from MAPE");
        }
        if (pairs.est.size() >= 3) {
            agreement.stats = paired_statistics(pairs.est, pairs.ref);
        } else {
            report.warnings.push_back(std::string(trait_name(trait)) + ": fewer than three " +
                                      (level == AggregationLevel::PerGroup ? "groups" : "pairs") +
                                      ", statistics not computed");
        }
        report.traits.push_back(agreement);
    }
    return report;
}

nlohmann::json report_to_json(const RegressionReport &report) {
    nlohmann::json j;
    j["level"] = to_string(report.level);
    j["outlier_filter"] = to_string(report.filter);
    auto &traits = j["traits"] = nlohmann::json::object();
    const auto number = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    for (const auto &t : report.traits) {
        nlohmann::json entry;
        entry["n_paired"] = t.n_paired;
        entry["n_removed"] = t.n_removed;
        if (t.stats) {
            entry["n"] = t.stats->n;
            entry["n_mape"] = t.stats->n_mape;
            entry["rho"] = number(t.stats->rho);
            entry["p_value"] = number(t.stats->p_value);
            entry["mae"] = number(t.stats->mae);
            entry["mape"] = number(t.stats->mape);
        } else {
            entry["n"] = 0;
        }
        traits[std::string(trait_name(t.trait))] = entry;
    }
    j["warnings"] = report.warnings;
    return j;
}

void write_report_csv(std::span<const RegressionReport> reports, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "level,outlier_filter,trait,n_paired,n_removed,n,n_mape,rho,p_value,mae,mape\n";
    const auto fmt = [](double v) {
        if (!std::isfinite(v)) {
            return std::string();
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        return std::string(buf);
    };
    for (const auto &r : reports) {
        for (const auto &t : r.traits) {
            out << to_string(r.level) << ',' << to_string(r.filter) << ',' << trait_name(t.trait) << ','
                << t.n_paired << ',' << t.n_removed << ',';
            if (t.stats) {
                out << t.stats->n << ',' << t.stats->n_mape << ',' << fmt(t.stats->rho) << ','
                    << fmt(t.stats->p_value) << ',' << fmt(t.stats->mae) << ',' << fmt(t.stats->mape) << '\n';
            } else {
                out << "0,0,,,,\n";
            }
        }
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

AnovaResult anova_f(std::span<const double> values, std::span<const std::string> groups) {
    if (values.size() != groups.size()) {
        throw EvaluationError("anova_f: values and group keys differ in length");
    }
    std::map<std::string, std::vector<double>> by_group;
    for (std::size_t i = 0; i < values.size(); ++i) {
        by_group[groups[i]].push_back(values[i]);
    }
    if (by_group.size() < 2) {
        throw EvaluationError("anova_f: at least two groups are required");
    }
    for (const auto &[key, v] : by_group) {
        if (v.size() < 2) {
            throw EvaluationError("anova_f: group '" + key + "' has fewer than two values");
        }
    }
    const double n = static_cast<double>(values.size());
    const double grand = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ssb = 0.0;
    double ssw = 0.0;
    for (const auto &[key, v] : by_group) {
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        ssb += static_cast<double>(v.size()) * (m - grand) * (m - grand);
        for (const double x : v) {
            ssw += (x - m) * (x - m);
        }
    }
    AnovaResult r;
    r.df_between = by_group.size() - 1;
    r.df_within = values.size() - by_group.size();
    double total_sq = 0.0;
    for (const double x : values) {
        total_sq += x * x;
    }
    if (ssb <= kRoundoff * total_sq) {
        ssb = 0.0;
    }
    if (ssw <= kRoundoff * total_sq) {
        ssw = 0.0;
    }
    const double msb = ssb / static_cast<double>(r.df_between);
    const double msw = ssw / static_cast<double>(r.df_within);
    if (msw <= 0.0) {
        if (msb <= 0.0) {
            throw EvaluationError("anova_f: all values are identical");
        }
        r.infinite_f = true;
        r.f_statistic = std::numeric_limits<double>::infinity();
        r.p_value = 0.0;
        return r;
    }
    r.f_statistic = msb / msw;
    const boost::math::fisher_f dist(static_cast<double>(r.df_between), static_cast<double>(r.df_within));
    r.p_value = boost::math::cdf(boost::math::complement(dist, r.f_statistic));
    return r;
}

double mcd_gate() { return boost::math::quantile(boost::math::chi_squared(2.0), 0.95); }

namespace {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct Estimate {
    Vec2 mean = Vec2::Zero();
    Mat2 cov = Mat2::Zero();
    double det = std::numeric_limits<double>::infinity();
};

Estimate estimate(std::span<const Vec2> pts, const std::vector<std::size_t> &idx) {
    Estimate e;
    for (const auto i : idx) {
        e.mean += pts[i];
    }
    e.mean /= static_cast<double>(idx.size());
    for (const auto i : idx) {
        const Vec2 d = pts[i] - e.mean;
        e.cov += d * d.transpose();
    }
    e.cov /= static_cast<double>(idx.size() - 1);
    e.det = e.cov.determinant();
    return e;
}

std::vector<double> squared_distances(std::span<const Vec2> pts, const Estimate &e) {
    const Mat2 inv = e.cov.inverse();
    std::vector<double> d(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec2 v = pts[i] - e.mean;
        d[i] = v.dot(inv * v);
    }
    return d;
}

std::vector<std::size_t> smallest(const std::vector<double> &d, std::size_t h) {
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    order.resize(h);
    std::sort(order.begin(), order.end());
    return order;
}

double median(std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return m;
}

bool singular(const Estimate &e) {
    const double tr = e.cov.trace();
    return !(tr > 0.0) || !(e.det > 1e-12 * tr * tr);
}

Estimate consistency_corrected(std::span<const Vec2> pts, Estimate e) {
    const double chi50 = boost::math::quantile(boost::math::chi_squared(2.0), 0.5);
    const double med = median(squared_distances(pts, e));
    if (med > 0.0) {
        e.cov *= med / chi50;
        e.det = e.cov.determinant();
    }
    return e;
}

Estimate fast_mcd_start(std::span<const Vec2> pts, std::size_t h, std::uint64_t seed, int start, int max_csteps) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32U),
                      static_cast<std::uint32_t>(start)};
    std::mt19937_64 rng(seq);
    const std::size_t n = pts.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    // Grow a random subset from three points until its covariance is regular.
    std::size_t k = 3;
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(perm[i], perm[pick(rng)]);
    }
    Estimate e;
    while (true) {
        std::vector<std::size_t> subset(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
        e = estimate(pts, subset);
        if (!singular(e) || k >= h) {
            break;
        }
        ++k;
    }
    if (singular(e)) {
        return e;
    }
    std::vector<std::size_t> current = smallest(squared_distances(pts, e), h);
    e = estimate(pts, current);
    for (int step = 0; step < max_csteps && !singular(e); ++step) {
        auto next = smallest(squared_distances(pts, e), h);
        if (next == current) {
            break;
        }
        const Estimate ne = estimate(pts, next);
        if (!(ne.det < e.det)) {
            break;
        }
        current = std::move(next);
        e = ne;
    }
    return e;
}

Estimate trimmed_classical(std::span<const Vec2> pts, std::size_t h) {
    std::vector<std::size_t> all(pts.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    Estimate e = estimate(pts, all);
    const auto ridge = [](Estimate &est) {
        const double tr = std::max(est.cov.trace(), 1e-300);
        if (singular(est)) {
            est.cov += 1e-9 * tr * Mat2::Identity();
            est.det = est.cov.determinant();
        }
    };
    ridge(e);
    e = estimate(pts, smallest(squared_distances(pts, e), h));
    ridge(e);
    return e;
}

} // namespace

McdFit mcd_fit(std::span<const Eigen::Vector2d> points, const McdConfig &config) {
    const std::size_t n = points.size();
    if (n < 10) {
        throw EvaluationError("MCD filter needs at least 10 pairs");
    }
    if (config.starts < 1) {
        throw InputError("MCD start count must be positive");
    }
    for (const auto &p : points) {
        if (!p.allFinite()) {
            throw EvaluationError("MCD filter: non-finite value");
        }
    }
    const std::size_t h = (n + 3) / 2;
    std::vector<Estimate> starts(static_cast<std::size_t>(config.starts));
    parallel_for(starts.size(), [&](std::size_t s) {
        starts[s] = fast_mcd_start(points, h, config.seed, static_cast<int>(s), config.max_csteps);
    });
    std::size_t best = 0;
    for (std::size_t s = 1; s < starts.size(); ++s) {
        if (starts[s].det < starts[best].det) {
            best = s;
        }
    }
    McdFit fit;
    Estimate raw = starts[best];
    if (singular(raw)) {
        spdlog::warn("MCD robust covariance is singular; falling back to a trimmed classical estimate");
        fit.fallback = true;
        raw = trimmed_classical(points, h);
    }
    raw = consistency_corrected(points, raw);

    // Reweighting step: classical estimate over points inside the 97.5% ellipse.
    const double chi975 = boost::math::quantile(boost::math::chi_squared(2.0), 0.975);
    const auto d_raw = squared_distances(points, raw);
    std::vector<std::size_t> inliers;
    for (std::size_t i = 0; i < n; ++i) {
        if (d_raw[i] <= chi975) {
            inliers.push_back(i);
        }
    }
    Estimate final_est = raw;
    if (inliers.size() >= 3) {
        Estimate rw = estimate(points, inliers);
        if (!singular(rw)) {
            final_est = consistency_corrected(points, rw);
        }
    }
    fit.mean = final_est.mean;
    fit.covariance = final_est.cov;
    const double gate = mcd_gate();
    const auto d = squared_distances(points, final_est);
    for (std::size_t i = 0; i < n; ++i) {
        if (d[i] <= gate) {
            fit.kept.push_back(i);
        }
    }
    return fit;
}

std::vector<std::size_t> mcd_outlier_filter(std::span<const double> ref, std::span<const double> est,
                                            const McdConfig &config) {
    if (ref.size() != est.size()) {
        throw EvaluationError("mcd_outlier_filter: series differ in length");
    }
    std::vector<Eigen::Vector2d> pts(ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        pts[i] = Eigen::Vector2d(ref[i], est[i]);
    }
    return mcd_fit(pts, config).kept;
}

std::vector<std::size_t> trim_outlier_filter(std::span<const double> ref, std::span<const double> est,
                                             double fraction) {
    if (ref.size() != est.size()) {
        throw EvaluationError("trim_outlier_filter: series differ in length");
    }
    if (!(fraction >= 0.0 && fraction < 1.0)) {
        throw InputError("trim fraction must lie in [0, 1)");
    }
    const std::size_t n = ref.size();
    std::vector<double> err(n);
    for (std::size_t i = 0; i < n; ++i) {
        err[i] = std::abs(est[i] - ref[i]);
    }
    const auto drop = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    return smallest(err, n - drop);
}

} // namespace wheatgs
