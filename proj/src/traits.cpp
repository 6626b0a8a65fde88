// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/traits.hpp"

#include "wheatgs/clustering.hpp"
#include "wheatgs/convex_hull.hpp"
#include "wheatgs/parallel.hpp"
#include "wheatgs/smoothing_spline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace wheatgs {

void TraitsConfig::validate() const {
    if (min_points < 4 || max_points < min_points) {
        throw InputError("traits: need 4 <= min_points <= max_points");
    }
    if (min_cluster_size < 2 || min_samples < 1 || sor_neighbors < 1 || sor_passes < 0) {
        throw InputError("traits: invalid clustering or outlier-removal parameters");
    }
    if (!(sor_std_ratio >= 0.0)) {
        throw InputError("traits: sor_std_ratio must be non-negative");
    }
    if (spline_bins < 2 || arc_samples < 3 || arc_samples % 2 == 0) {
        throw InputError("traits: spline_bins must be >= 2 and arc_samples odd and >= 3");
    }
    if (!(width_percentile >= 0.0 && width_percentile <= 100.0) || !(thickness_factor > 0.0) ||
        !(unit_scale > 0.0)) {
        throw InputError("traits: invalid width percentile, thickness factor or unit scale");
    }
}

namespace {

PointCloud select(std::span<const Vec3> points, const std::vector<std::size_t> &idx) {
    PointCloud out;
    out.reserve(idx.size());
    for (const auto i : idx) {
        out.push_back(points[i]);
    }
    return out;
}

void require_points(std::size_t n, const TraitsConfig &config, const char *stage) {
    if (n < config.min_points) {
        throw UnmeasurableError(std::string("too_few_points_after_") + stage);
    }
}

double median_of(std::vector<double> v) { return percentile(std::move(v), 50.0); }

} // namespace

double percentile(std::vector<double> values, double p) {
    if (values.empty()) {
        throw InputError("percentile of an empty set");
    }
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

InstanceCloud preprocess(const InstanceCloud &cloud, const TraitsConfig &config) {
    config.validate();
    if (cloud.stage != CloudStage::Raw) {
        throw InputError("preprocess expects a raw cloud");
    }
    require_points(cloud.points.size(), config, "load");

    InstanceCloud out{cloud.instance_id, cloud.points, CloudStage::Subsampled};
    if (out.points.size() > config.max_points) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                          cloud.instance_id};
        std::mt19937_64 rng(seq);
        std::vector<std::size_t> idx(out.points.size());
        std::iota(idx.begin(), idx.end(), 0);
        // Partial Fisher-Yates: the first max_points slots are a uniform sample.
        for (std::size_t i = 0; i < config.max_points; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
            std::swap(idx[i], idx[pick(rng)]);
        }
        idx.resize(config.max_points);
        std::sort(idx.begin(), idx.end());
        out.points = select(cloud.points, idx);
    }

    const auto labels = hdbscan(out.points, {config.min_cluster_size, config.min_samples});
    out.points = select(out.points, largest_cluster(labels));
    out.stage = CloudStage::Clustered;
    require_points(out.points.size(), config, "clustering");

    for (int pass = 0; pass < config.sor_passes; ++pass) {
        out.points = select(out.points, statistical_outlier_removal(out.points, config.sor_neighbors,
                                                                    config.sor_std_ratio));
        require_points(out.points.size(), config, "outlier_removal");
    }
    out.stage = CloudStage::Filtered;
    return out;
}

double measure_length(std::span<const Vec3> points, const TraitsConfig &config) {
    if (points.size() < 2 || affine_rank(points) < 2) {
        throw UnmeasurableError("degenerate_pca");
    }
    return measure_length(points, principal_frame(points), config);
}

double measure_length(std::span<const Vec3> points, const PrincipalFrame &frame, const TraitsConfig &config) {
    if (points.size() < 2 || !(frame.variances(1) > 0.0)) {
        throw UnmeasurableError("degenerate_pca");
    }
    struct UV {
        double u;
        double v;
    };
    std::vector<UV> uv;
    uv.reserve(points.size());
    for (const auto &p : points) {
        const Vec3 l = frame.to_local(p);
        uv.push_back({l.x(), l.y()});
    }
    std::stable_sort(uv.begin(), uv.end(), [](const UV &a, const UV &b) { return a.u < b.u; });
    const double u_min = uv.front().u;
    const double u_max = uv.back().u;
    const double span = u_max - u_min;
    if (!(span > 0.0)) {
        throw UnmeasurableError("degenerate_pca");
    }
    // Work in coordinates normalized by the u extent so the fit does not
    // depend on the absolute scale of the cloud.
    for (auto &q : uv) {
        q.u = (q.u - u_min) / span;
        q.v /= span;
    }

    const int bins = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(config.spline_bins), uv.size()));
    struct Bin {
        std::vector<double> u;
        std::vector<double> v;
    };
    std::vector<Bin> grid(static_cast<std::size_t>(bins));
    for (const auto &q : uv) {
        const int b = std::min(bins - 1, static_cast<int>(std::floor(q.u * bins)));
        grid[static_cast<std::size_t>(b)].u.push_back(q.u);
        grid[static_cast<std::size_t>(b)].v.push_back(q.v);
    }

    // Noise model: each bin's residual variance about a straight line fitted
    // inside it (bins with at least four points), floored by a robust pooled
    // scale so that sparse bins cannot claim spurious precision. Fitting a
    // line first keeps the local slope from counting as noise.
    std::vector<double> bin_var(grid.size(), 0.0);
    std::vector<double> deviations;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const Bin &b = grid[k];
        const std::size_t n = b.u.size();
        if (n < 4) {
            continue;
        }
        const double mu = std::accumulate(b.u.begin(), b.u.end(), 0.0) / static_cast<double>(n);
        const double mv = std::accumulate(b.v.begin(), b.v.end(), 0.0) / static_cast<double>(n);
        double suu = 0.0;
        double suv = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            suu += (b.u[i] - mu) * (b.u[i] - mu);
            suv += (b.u[i] - mu) * (b.v[i] - mv);
        }
        const double slope = suu > 0.0 ? suv / suu : 0.0;
        // The line uses two degrees of freedom of the bin.
        const double dof = std::sqrt(static_cast<double>(n) / static_cast<double>(n - 2));
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = b.v[i] - mv - slope * (b.u[i] - mu);
            ss += r * r;
            deviations.push_back(dof * std::abs(r));
        }
        bin_var[k] = ss / static_cast<double>(n - 2);
    }
    const double sigma = std::max(deviations.empty() ? 0.0 : 1.4826 * median_of(deviations), 1e-9);
    const double var1 = sigma * sigma;

    std::vector<double> fx;
    std::vector<double> fy;
    std::vector<double> fvar;
    auto push = [&](double x, double y, double var) {
        if (!fx.empty() && x <= fx.back() + 1e-12) {
            // Coincident abscissae: merge as an inverse-variance mean.
            const double w0 = 1.0 / fvar.back();
            const double w1 = 1.0 / var;
            fy.back() = (w0 * fy.back() + w1 * y) / (w0 + w1);
            fvar.back() = 1.0 / (w0 + w1);
            return;
        }
        fx.push_back(x);
        fy.push_back(y);
        fvar.push_back(var);
    };
    // The extreme points sit in the first and last bins and pin the ends of the fit.
    push(uv.front().u, uv.front().v, var1);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const Bin &b = grid[k];
        if (b.u.empty()) {
            continue;
        }
        const double n = static_cast<double>(b.u.size());
        const double mu = std::accumulate(b.u.begin(), b.u.end(), 0.0) / n;
        const double mv = std::accumulate(b.v.begin(), b.v.end(), 0.0) / n;
        push(mu, mv, std::max(var1, bin_var[k]) / n);
    }
    push(uv.back().u, uv.back().v, var1);

    double arc = 0.0;
    if (fx.size() < 2) {
        arc = 1.0;
    } else {
        std::vector<double> w(fvar.size());
        std::transform(fvar.begin(), fvar.end(), w.begin(), [](double v) { return 1.0 / v; });
        const auto spline = SmoothingSpline::fit_to_residual(fx, fy, w, static_cast<double>(fx.size()));
        arc = spline.arc_length(fx.front(), fx.back(), config.arc_samples);
    }
    return arc * span * config.unit_scale;
}

double measure_width(std::span<const Vec3> points, const TraitsConfig &config) {
    if (points.empty()) {
        throw UnmeasurableError("empty_cloud");
    }
    return measure_width(points, principal_frame(points), config);
}

double measure_width(std::span<const Vec3> points, const PrincipalFrame &frame, const TraitsConfig &config) {
    if (points.empty()) {
        throw UnmeasurableError("empty_cloud");
    }
    std::vector<double> dist;
    dist.reserve(points.size());
    for (const auto &p : points) {
        dist.push_back(std::abs(frame.to_local(p).z()));
    }
    return percentile(std::move(dist), config.width_percentile) * config.thickness_factor * config.unit_scale;
}

double measure_volume(std::span<const Vec3> points, const TraitsConfig &config) {
    if (points.size() < 4 || affine_rank(points) < 3) {
        throw UnmeasurableError("coplanar");
    }
    const ConvexHull hull = convex_hull(points);
    return hull.volume(points) * std::pow(config.unit_scale, 3);
}

TraitRecord measure_cloud(const InstanceCloud &cloud, const TraitsConfig &config) {
    TraitRecord rec;
    rec.instance_id = cloud.instance_id;
    rec.n_points_raw = cloud.points.size();
    try {
        const InstanceCloud filtered = preprocess(cloud, config);
        rec.n_points_final = filtered.points.size();
        const PrincipalFrame frame = principal_frame(filtered.points);
        if (affine_rank(filtered.points) < 2) {
            throw UnmeasurableError("degenerate_pca");
        }
        const double length = measure_length(filtered.points, frame, config);
        const double width = measure_width(filtered.points, frame, config);
        const double volume = measure_volume(filtered.points, config);
        if (!(length > 0.0 && width > 0.0 && volume > 0.0)) {
            throw UnmeasurableError("zero_trait");
        }
        rec.length_cm = length;
        rec.width_cm = width;
        rec.volume_cm3 = volume;
    } catch (const UnmeasurableError &e) {
        rec.flags = std::string("unmeasurable:") + e.what();
    }
    return rec;
}

std::vector<TraitRecord> measure_all(const GaussianScene &scene, const InstanceMap &instances,
                                     const TraitsConfig &config, const GroupMap &groups) {
    config.validate();
    std::vector<std::pair<std::uint32_t, const InstanceEntry *>> items;
    for (const auto &[id, entry] : instances) {
        for (const auto k : entry.gaussians) {
            if (k >= scene.size()) {
                throw InputError("instance " + std::to_string(id) + " references Gaussian " + std::to_string(k) +
                                 " but the scene has " + std::to_string(scene.size()));
            }
        }
        items.emplace_back(id, &entry);
    }
    std::vector<TraitRecord> out(items.size());
    parallel_for(items.size(), [&](std::size_t i) {
        InstanceCloud cloud;
        cloud.instance_id = items[i].first;
        for (const auto k : items[i].second->gaussians) {
            cloud.points.push_back(scene.gaussians[k].position);
        }
        out[i] = measure_cloud(cloud, config);
        const auto g = groups.find(items[i].first);
        if (g != groups.end()) {
            out[i].group = g->second;
        }
    });
    return out;
}

// --- CSV ---------------------------------------------------------------------

namespace {

constexpr const char *kHeader = "instance_id,length_cm,width_cm,volume_cm3,n_points_raw,n_points_final,group,flags";

std::string format_number(const std::optional<double> &v) {
    if (!v) {
        return {};
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", *v);
    return buf;
}

std::string quote(const std::string &s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (const char c : s) {
        out += c;
        if (c == '"') {
            out += '"';
        }
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else if (c != '\r') {
            fields.back() += c;
        }
    }
    return fields;
}

} // namespace

void write_traits_csv(std::span<const TraitRecord> records, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << kHeader << "\n";
    for (const auto &r : records) {
        out << r.instance_id << ',' << format_number(r.length_cm) << ',' << format_number(r.width_cm) << ','
            << format_number(r.volume_cm3) << ',' << r.n_points_raw << ',' << r.n_points_final << ','
            << quote(r.group) << ',' << quote(r.flags) << "\n";
    }
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

std::vector<TraitRecord> read_traits_csv(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("'" + path.string() + "' is empty");
    }
    const auto header = split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) {
        col[header[i]] = i;
    }
    for (const char *required : {"instance_id", "length_cm", "width_cm", "volume_cm3"}) {
        if (col.count(required) == 0) {
            throw FormatError("traits CSV '" + path.string() + "' lacks column '" + required + "'");
        }
    }
    std::vector<TraitRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != header.size()) {
            throw FormatError("traits CSV line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                              " fields, expected " + std::to_string(header.size()));
        }
        auto number = [&](const char *name) -> std::optional<double> {
            const std::string &s = f[col.at(name)];
            if (s.empty()) {
                return std::nullopt;
            }
            try {
                std::size_t used = 0;
                const double v = std::stod(s, &used);
                if (used != s.size()) {
                    throw std::invalid_argument(s);
                }
                return v;
            } catch (const std::exception &) {
                throw FormatError("traits CSV line " + std::to_string(line_no) + ": bad number '" + s + "'");
            }
        };
        auto count = [&](const char *name) -> std::size_t {
            const auto it = col.find(name);
            if (it == col.end() || f[it->second].empty()) {
                return 0;
            }
            return static_cast<std::size_t>(number(name).value_or(0.0));
        };
        TraitRecord r;
        const auto id = number("instance_id");
        if (!id || *id < 0.0 || *id != std::floor(*id)) {
            throw FormatError("traits CSV line " + std::to_string(line_no) + ": bad instance_id");
        }
        r.instance_id = static_cast<std::uint32_t>(*id);
        r.length_cm = number("length_cm");
        r.width_cm = number("width_cm");
        r.volume_cm3 = number("volume_cm3");
        r.n_points_raw = count("n_points_raw");
        r.n_points_final = count("n_points_final");
        if (col.count("group") != 0) {
            r.group = f[col.at("group")];
        }
        if (col.count("flags") != 0) {
            r.flags = f[col.at("flags")];
        }
        out.push_back(std::move(r));
    }
    return out;
}

GroupMap load_groups(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    GroupMap groups;
    try {
        const auto doc = nlohmann::json::parse(in);
        if (!doc.is_object()) {
            throw FormatError("groups file must be a JSON object");
        }
        for (const auto &[key, value] : doc.items()) {
            const unsigned long id = std::stoul(key);
            groups[static_cast<std::uint32_t>(id)] = value.is_string() ? value.get<std::string>() : value.dump();
        }
    } catch (const nlohmann::json::exception &e) {
        throw FormatError("malformed groups file '" + path.string() + "': " + e.what());
    } catch (const std::logic_error &) {
        throw FormatError("groups file '" + path.string() + "' has a non-numeric instance id");
    }
    return groups;
}

} // namespace wheatgs
