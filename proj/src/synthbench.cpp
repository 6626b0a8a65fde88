// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/synthbench.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/parallel.hpp"
#include "wheatgs/rasterizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

namespace wheatgs {

using nlohmann::json;

namespace {

constexpr double kShC0 = 0.28209479177387814;
constexpr double kShellInner = 0.7; // heads are sampled between 0.7 and 1.0 of their radius

Vec3 random_unit(std::mt19937_64 &rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (;;) {
        const Vec3 v(n01(rng), n01(rng), n01(rng));
        const double len = v.norm();
        if (len > 1e-12) {
            return v / len;
        }
    }
}

Quat random_rotation(std::mt19937_64 &rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Quat q(n01(rng), n01(rng), n01(rng), n01(rng));
    return q.normalized();
}

Vec3 dc_for_color(const Vec3 &rgb) { return (rgb.array() - 0.5).matrix() / kShC0; }

Mat3 head_frame(double azimuth, double elevation, double roll) {
    const Vec3 major(std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth),
                     std::sin(elevation));
    Vec3 side = Vec3::UnitZ().cross(major);
    if (side.norm() < 1e-9) {
        side = Vec3::UnitX();
    }
    side.normalize();
    const Vec3 third = major.cross(side).normalized();
    // Roll the two minor axes about the major axis.
    const Vec3 minor1 = std::cos(roll) * side + std::sin(roll) * third;
    const Vec3 minor2 = major.cross(minor1).normalized();
    Mat3 frame;
    frame.col(0) = major;
    frame.col(1) = minor1;
    frame.col(2) = minor2;
    return frame;
}

View look_at_view(const std::string &id, const Vec3 &eye, const Vec3 &target, int size, double focal) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(Vec3::UnitZ());
    if (right.norm() < 1e-9) {
        right = Vec3::UnitX();
    }
    right.normalize();
    const Vec3 down = forward.cross(right).normalized();
    View v;
    v.id = id;
    v.width = size;
    v.height = size;
    v.fx = focal;
    v.fy = focal;
    v.cx = 0.5 * size;
    v.cy = 0.5 * size;
    v.rotation.row(0) = right.transpose();
    v.rotation.row(1) = down.transpose();
    v.rotation.row(2) = forward.transpose();
    v.translation = -v.rotation * eye;
    return v;
}

} // namespace

void SynthConfig::validate() const {
    if (n_heads < 1) {
        throw InputError("synth: n_heads must be at least 1");
    }
    if (n_views < 2) {
        throw InputError("synth: n_views must be at least 2");
    }
    if (gaussians_per_head_min < 1 || gaussians_per_head_max < gaussians_per_head_min) {
        throw InputError("synth: invalid gaussians_per_head range");
    }
    if (clutter_gaussians < 0 || mask_morph_noise < 0 || image_size < 8) {
        throw InputError("synth: counts must be non-negative and image_size >= 8");
    }
    if (!(mask_dropout >= 0.0 && mask_dropout <= 1.0)) {
        throw InputError("synth: mask_dropout must lie in [0, 1]");
    }
    if (!(head_size_jitter >= 0.0 && head_size_jitter < 1.0)) {
        throw InputError("synth: head_size_jitter must lie in [0, 1)");
    }
    if (!(head_semi_axes_cm.minCoeff() > 0.0) || !(unit_scale > 0.0) || rows_per_group < 1) {
        throw InputError("synth: head axes, unit_scale and rows_per_group must be positive");
    }
}

double HeadTruth::volume_cm3(double unit_scale) const {
    return 4.0 / 3.0 * std::numbers::pi * semi_axes.prod() * unit_scale * unit_scale * unit_scale;
}

SynthScene generate(const SynthConfig &config) {
    config.validate();
    std::mt19937_64 rng(config.rng_seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    const double to_scene = 1.0 / config.unit_scale;
    const Vec3 semi = config.head_semi_axes_cm * to_scene;

    SynthScene out;
    out.scene.unit_scale = config.unit_scale;
    out.truth.unit_scale = config.unit_scale;

    // --- head placement -----------------------------------------------------
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(config.n_heads))));
    const int rows = (config.n_heads + cols - 1) / cols;
    const double spacing = config.grid_spacing_cm * to_scene;
    const double jitter = config.grid_jitter_cm * to_scene;
    const double height = config.canopy_height_cm * to_scene;
    const double min_gap = 2.0 * (1.0 + config.head_size_jitter) * semi.x() + 0.5 * to_scene;

    std::vector<HeadTruth> heads;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
        heads.assign(static_cast<std::size_t>(config.n_heads), HeadTruth{});
        for (int h = 0; h < config.n_heads; ++h) {
            const int r = h / cols;
            const int c = h % cols;
            HeadTruth &head = heads[static_cast<std::size_t>(h)];
            head.center = Vec3((c - 0.5 * (cols - 1)) * spacing + jitter * (2.0 * u01(rng) - 1.0),
                               (r - 0.5 * (rows - 1)) * spacing + jitter * (2.0 * u01(rng) - 1.0),
                               height + 0.01 * n01(rng));
            head.semi_axes = semi;
            if (config.head_size_jitter > 0.0) {
                head.semi_axes *= 1.0 + config.head_size_jitter * (2.0 * u01(rng) - 1.0);
            }
            const double az = 2.0 * std::numbers::pi * u01(rng);
            const double el = config.max_head_elevation_deg * std::numbers::pi / 180.0 * u01(rng);
            const double roll = 2.0 * std::numbers::pi * u01(rng);
            head.orientation = head_frame(az, el, roll);
            head.group = "row" + std::to_string(r / config.rows_per_group);
        }
        placed = true;
        for (std::size_t a = 0; a < heads.size() && placed; ++a) {
            for (std::size_t b = a + 1; b < heads.size(); ++b) {
                if ((heads[a].center - heads[b].center).norm() < min_gap) {
                    placed = false;
                    break;
                }
            }
        }
    }
    if (!placed) {
        throw InputError("synth: could not place heads without overlap after 100 attempts");
    }

    // --- head Gaussians -----------------------------------------------------
    std::uniform_int_distribution<int> count_dist(config.gaussians_per_head_min, config.gaussians_per_head_max);
    const double shell_volume_fraction = 1.0 - std::pow(kShellInner, 3.0);
    for (auto &head : heads) {
        const int n = count_dist(rng);
        const double volume = 4.0 / 3.0 * std::numbers::pi * head.semi_axes.prod() * shell_volume_fraction;
        const double local_spacing = std::cbrt(volume / n);
        const Vec3 tint(0.05 * n01(rng), 0.05 * n01(rng), 0.03 * n01(rng));
        for (int i = 0; i < n; ++i) {
            const double rho = std::cbrt(std::pow(kShellInner, 3.0) + shell_volume_fraction * u01(rng));
            const Vec3 local = rho * random_unit(rng).cwiseProduct(head.semi_axes);
            Gaussian g;
            g.position = head.center + head.orientation * local;
            const double sigma = 0.5 * local_spacing;
            g.scale_log = Vec3::Constant(std::log(sigma)) + 0.1 * Vec3(n01(rng), n01(rng), n01(rng));
            g.rotation = random_rotation(rng);
            g.opacity_logit = 1.5 + 0.25 * n01(rng);
            g.sh = {dc_for_color((Vec3(0.82, 0.70, 0.32) + tint).cwiseMax(0.0).cwiseMin(1.0))};
            head.gaussians.push_back(out.scene.size());
            out.scene.gaussians.push_back(std::move(g));
        }
    }

    // --- clutter below the heads -------------------------------------------
    const double half_x = 0.5 * (cols - 1) * spacing + semi.x() + jitter;
    const double half_y = 0.5 * (rows - 1) * spacing + semi.x() + jitter;
    for (int i = 0; i < config.clutter_gaussians; ++i) {
        Gaussian g;
        g.position = Vec3((2.0 * u01(rng) - 1.0) * half_x, (2.0 * u01(rng) - 1.0) * half_y,
                          height * (0.1 + 0.4 * u01(rng)));
        const double sigma = 0.8 * to_scene * std::exp(0.3 * n01(rng));
        g.scale_log = Vec3(std::log(sigma), std::log(sigma), std::log(0.4 * sigma));
        g.rotation = random_rotation(rng);
        g.opacity_logit = 0.5 + 0.5 * n01(rng);
        g.sh = {dc_for_color(Vec3(0.20 + 0.05 * n01(rng), 0.45 + 0.05 * n01(rng), 0.15).cwiseMax(0.0))};
        out.scene.gaussians.push_back(std::move(g));
    }

    // --- cameras on an overhead ring ---------------------------------------
    const Vec3 target(0.0, 0.0, height);
    const double distance = config.camera_distance_cm * to_scene;
    const double tilt = config.camera_tilt_deg * std::numbers::pi / 180.0;
    const double plot_radius = std::hypot(half_x, half_y);
    const double focal = 0.5 * config.image_size * (distance - plot_radius * std::sin(tilt)) / (1.1 * plot_radius);
    const double phase = 2.0 * std::numbers::pi * u01(rng);
    for (int v = 0; v < config.n_views; ++v) {
        const double az = phase + 2.0 * std::numbers::pi * v / config.n_views;
        const Vec3 eye = target + distance * Vec3(std::sin(tilt) * std::cos(az), std::sin(tilt) * std::sin(az),
                                                  std::cos(tilt));
        out.views.push_back(look_at_view("view" + std::to_string(v), eye, target, config.image_size, focal));
    }

    // --- ideal masks, then dropout and morphological noise ----------------
    out.truth.ideal_masks.assign(out.views.size(), {});
    parallel_for(out.views.size(), [&](std::size_t v) {
        const auto splats = project_gaussians(out.scene, out.views[v]);
        auto &masks = out.truth.ideal_masks[v];
        masks.reserve(heads.size());
        std::vector<std::uint8_t> labels(out.scene.size(), 0);
        for (const auto &head : heads) {
            std::fill(labels.begin(), labels.end(), 0);
            for (const auto k : head.gaussians) {
                labels[k] = 1;
            }
            masks.push_back(render_label_mask(splats, out.views[v], labels));
        }
    });

    std::uniform_int_distribution<int> morph_dist(-config.mask_morph_noise, config.mask_morph_noise);
    for (std::size_t v = 0; v < out.views.size(); ++v) {
        std::vector<int> order(heads.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        int next_mask_id = 0;
        for (const int h : order) {
            const bool dropped = u01(rng) < config.mask_dropout;
            const int radius = morph_dist(rng);
            if (dropped) {
                continue;
            }
            BinaryMask mask = morph(out.truth.ideal_masks[v][static_cast<std::size_t>(h)], radius);
            const int id = next_mask_id;
            if (out.pool.add(out.views[v].id, id, std::move(mask))) {
                out.truth.mask_sources.push_back({MaskKey{out.views[v].id, id}, static_cast<std::size_t>(h)});
                ++next_mask_id;
            }
        }
    }
    out.truth.heads = std::move(heads);
    return out;
}

// ---------------------------------------------------------------------------

std::vector<int> hungarian_assign(const std::vector<double> &cost, std::size_t rows, std::size_t cols) {
    if (cost.size() != rows * cols) {
        throw InvariantError("hungarian_assign: cost matrix size mismatch");
    }
    if (rows == 0 || cols == 0) {
        return std::vector<int>(rows, -1);
    }
    // Square padding keeps the classic potentials formulation simple.
    const std::size_t n = std::max(rows, cols);
    auto c = [&](std::size_t i, std::size_t j) { return (i < rows && j < cols) ? cost[i * cols + j] : 0.0; };
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0);
    std::vector<double> v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0);
    std::vector<std::size_t> way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) {
                    continue;
                }
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> assignment(rows, -1);
    for (std::size_t j = 1; j <= n; ++j) {
        if (p[j] != 0 && p[j] - 1 < rows && j - 1 < cols) {
            assignment[p[j] - 1] = static_cast<int>(j - 1);
        }
    }
    return assignment;
}

TruthScore score_against_truth(const InstanceMap &instances, const GroundTruth &truth) {
    TruthScore score;
    const std::size_t n_true = truth.heads.size();
    if (n_true == 0) {
        return score;
    }
    std::vector<std::uint32_t> ids;
    std::vector<const std::vector<std::size_t> *> sets;
    for (const auto &[id, entry] : instances) {
        ids.push_back(id);
        sets.push_back(&entry.gaussians);
    }
    auto set_iou = [](const std::vector<std::size_t> &a, const std::vector<std::size_t> &b) {
        std::vector<std::size_t> sa(a);
        std::vector<std::size_t> sb(b);
        std::sort(sa.begin(), sa.end());
        std::sort(sb.begin(), sb.end());
        std::vector<std::size_t> inter;
        std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
        const std::size_t uni = sa.size() + sb.size() - inter.size();
        return uni == 0 ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni);
    };
    std::vector<double> iou(n_true * ids.size(), 0.0);
    std::vector<double> cost(iou.size(), 0.0);
    for (std::size_t h = 0; h < n_true; ++h) {
        for (std::size_t p = 0; p < ids.size(); ++p) {
            iou[h * ids.size() + p] = set_iou(truth.heads[h].gaussians, *sets[p]);
            cost[h * ids.size() + p] = 1.0 - iou[h * ids.size() + p];
        }
    }
    const std::vector<int> assign = hungarian_assign(cost, n_true, ids.size());
    std::size_t detected = 0;
    double iou_sum = 0.0;
    for (std::size_t h = 0; h < n_true; ++h) {
        if (assign[h] < 0) {
            continue;
        }
        const double value = iou[h * ids.size() + static_cast<std::size_t>(assign[h])];
        if (value <= 0.0) {
            continue;
        }
        score.matches.push_back({h, ids[static_cast<std::size_t>(assign[h])], value});
        iou_sum += value;
        detected += value >= 0.5 ? 1U : 0U;
    }
    score.detected_fraction = static_cast<double>(detected) / static_cast<double>(n_true);
    score.mean_set_iou = iou_sum / static_cast<double>(n_true);
    return score;
}

PointCloud sample_reference_cloud(const GroundTruth &truth, int points_per_head, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05 / truth.unit_scale); // 0.5 mm
    PointCloud cloud;
    cloud.reserve(truth.heads.size() * static_cast<std::size_t>(std::max(0, points_per_head)));
    for (const auto &head : truth.heads) {
        for (int i = 0; i < points_per_head; ++i) {
            const Vec3 local = random_unit(rng).cwiseProduct(head.semi_axes);
            cloud.push_back(head.center + head.orientation * local + Vec3(noise(rng), noise(rng), noise(rng)));
        }
    }
    return cloud;
}

// ---------------------------------------------------------------------------

json synth_config_to_json(const SynthConfig &c) {
    return {{"n_heads", c.n_heads},
            {"head_semi_axes_cm", {c.head_semi_axes_cm.x(), c.head_semi_axes_cm.y(), c.head_semi_axes_cm.z()}},
            {"head_size_jitter", c.head_size_jitter},
            {"gaussians_per_head", {c.gaussians_per_head_min, c.gaussians_per_head_max}},
            {"clutter_gaussians", c.clutter_gaussians},
            {"n_views", c.n_views},
            {"image_size", c.image_size},
            {"mask_dropout", c.mask_dropout},
            {"mask_morph_noise", c.mask_morph_noise},
            {"rng_seed", c.rng_seed},
            {"unit_scale", c.unit_scale},
            {"grid_spacing_cm", c.grid_spacing_cm},
            {"grid_jitter_cm", c.grid_jitter_cm},
            {"canopy_height_cm", c.canopy_height_cm},
            {"max_head_elevation_deg", c.max_head_elevation_deg},
            {"camera_distance_cm", c.camera_distance_cm},
            {"camera_tilt_deg", c.camera_tilt_deg},
            {"rows_per_group", c.rows_per_group}};
}

void synth_config_from_json(const json &j, SynthConfig &c) {
    if (!j.is_object()) {
        throw InputError("synth config must be a JSON object");
    }
    try {
        for (const auto &[key, value] : j.items()) {
            if (key == "n_heads") {
                c.n_heads = value.get<int>();
            } else if (key == "head_semi_axes_cm") {
                const auto v = value.get<std::vector<double>>();
                if (v.size() != 3) {
                    throw InputError("head_semi_axes_cm needs three values");
                }
                c.head_semi_axes_cm = Vec3(v[0], v[1], v[2]);
            } else if (key == "head_size_jitter") {
                c.head_size_jitter = value.get<double>();
            } else if (key == "gaussians_per_head") {
                const auto v = value.get<std::vector<int>>();
                if (v.size() != 2) {
                    throw InputError("gaussians_per_head needs [min, max]");
                }
                c.gaussians_per_head_min = v[0];
                c.gaussians_per_head_max = v[1];
            } else if (key == "clutter_gaussians") {
                c.clutter_gaussians = value.get<int>();
            } else if (key == "n_views") {
                c.n_views = value.get<int>();
            } else if (key == "image_size") {
                c.image_size = value.get<int>();
            } else if (key == "mask_dropout") {
                c.mask_dropout = value.get<double>();
            } else if (key == "mask_morph_noise") {
                c.mask_morph_noise = value.get<int>();
            } else if (key == "rng_seed") {
                c.rng_seed = value.get<std::uint64_t>();
            } else if (key == "unit_scale") {
                c.unit_scale = value.get<double>();
            } else if (key == "grid_spacing_cm") {
                c.grid_spacing_cm = value.get<double>();
            } else if (key == "grid_jitter_cm") {
                c.grid_jitter_cm = value.get<double>();
            } else if (key == "canopy_height_cm") {
                c.canopy_height_cm = value.get<double>();
            } else if (key == "max_head_elevation_deg") {
                c.max_head_elevation_deg = value.get<double>();
            } else if (key == "camera_distance_cm") {
                c.camera_distance_cm = value.get<double>();
            } else if (key == "camera_tilt_deg") {
                c.camera_tilt_deg = value.get<double>();
            } else if (key == "rows_per_group") {
                c.rows_per_group = value.get<int>();
            } else {
                throw InputError("unknown synth config key '" + key + "'");
            }
        }
    } catch (const json::exception &e) {
        throw InputError(std::string("invalid synth config: ") + e.what());
    }
}

void save_truth(const GroundTruth &truth, const std::filesystem::path &path) {
    json heads = json::array();
    for (std::size_t h = 0; h < truth.heads.size(); ++h) {
        const auto &head = truth.heads[h];
        std::vector<double> orient;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                orient.push_back(head.orientation(r, c));
            }
        }
        heads.push_back({{"head", h},
                         {"group", head.group},
                         {"center", {head.center.x(), head.center.y(), head.center.z()}},
                         {"semi_axes", {head.semi_axes.x(), head.semi_axes.y(), head.semi_axes.z()}},
                         {"orientation", orient},
                         {"length_cm", head.length_cm(truth.unit_scale)},
                         {"width_cm", head.width_cm(truth.unit_scale)},
                         {"volume_cm3", head.volume_cm3(truth.unit_scale)},
                         {"gaussians", head.gaussians}});
    }
    json sources = json::array();
    for (const auto &[key, head] : truth.mask_sources) {
        sources.push_back({key.view_id, key.mask_id, head});
    }
    const json doc = {{"unit_scale", truth.unit_scale}, {"heads", heads}, {"mask_sources", sources}};
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << doc.dump(1) << "\n";
}

GroundTruth load_truth(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    GroundTruth truth;
    try {
        const json doc = json::parse(in);
        truth.unit_scale = doc.at("unit_scale").get<double>();
        for (const auto &h : doc.at("heads")) {
            HeadTruth head;
            const auto c = h.at("center").get<std::vector<double>>();
            const auto s = h.at("semi_axes").get<std::vector<double>>();
            const auto o = h.at("orientation").get<std::vector<double>>();
            if (c.size() != 3 || s.size() != 3 || o.size() != 9) {
                throw FormatError("truth head has malformed geometry");
            }
            head.center = Vec3(c[0], c[1], c[2]);
            head.semi_axes = Vec3(s[0], s[1], s[2]);
            for (int r = 0; r < 3; ++r) {
                for (int col = 0; col < 3; ++col) {
                    head.orientation(r, col) = o[static_cast<std::size_t>(3 * r + col)];
                }
            }
            head.group = h.value("group", std::string{});
            head.gaussians = h.at("gaussians").get<std::vector<std::size_t>>();
            truth.heads.push_back(std::move(head));
        }
    } catch (const json::exception &e) {
        throw FormatError("malformed truth file '" + path.string() + "': " + e.what());
    }
    return truth;
}

} // namespace wheatgs
