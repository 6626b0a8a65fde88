// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/clustering.hpp"

#include "wheatgs/error.hpp"
#include "wheatgs/parallel.hpp"
#include "wheatgs/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace wheatgs {

namespace {

struct Edge {
    std::size_t a = 0;
    std::size_t b = 0;
    double weight = 0.0;
};

std::vector<double> core_distances(std::span<const Vec3> points, std::size_t min_samples) {
    const PointIndex index(points);
    const std::size_t k = std::max<std::size_t>(1, std::min(min_samples, points.size()));
    std::vector<double> core(points.size(), 0.0);
    parallel_for(points.size(), [&](std::size_t i) { core[i] = index.nearest(points[i], k).back().distance; });
    return core;
}

// Dense Prim's algorithm on the mutual-reachability graph, O(n^2).
std::vector<Edge> mutual_reachability_mst(std::span<const Vec3> points, const std::vector<double> &core) {
    const std::size_t n = points.size();
    std::vector<Edge> edges;
    edges.reserve(n - 1);
    std::vector<bool> in_tree(n, false);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> from(n, 0);
    std::size_t current = 0;
    in_tree[0] = true;
    for (std::size_t step = 1; step < n; ++step) {
        std::size_t next = n;
        double next_w = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (in_tree[j]) {
                continue;
            }
            const double d = std::max({(points[current] - points[j]).norm(), core[current], core[j]});
            if (d < best[j]) {
                best[j] = d;
                from[j] = current;
            }
            if (best[j] < next_w) {
                next_w = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push_back({from[next], next, next_w});
        current = next;
    }
    std::stable_sort(edges.begin(), edges.end(), [](const Edge &x, const Edge &y) { return x.weight < y.weight; });
    return edges;
}

struct LinkageNode {
    std::size_t left = 0;
    std::size_t right = 0;
    double distance = 0.0;
    std::size_t size = 1;
};

// Single-linkage dendrogram: ids < n are points, n + i is the merge of edge i.
std::vector<LinkageNode> single_linkage(const std::vector<Edge> &edges, std::size_t n) {
    std::vector<std::size_t> parent(2 * n - 1);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    std::vector<LinkageNode> nodes(2 * n - 1);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::size_t ra = find(edges[i].a);
        const std::size_t rb = find(edges[i].b);
        const std::size_t id = n + i;
        nodes[id] = {ra, rb, edges[i].weight, nodes[ra].size + nodes[rb].size};
        parent[ra] = id;
        parent[rb] = id;
    }
    return nodes;
}

struct CondensedRow {
    std::size_t parent = 0; // cluster id
    std::size_t child = 0;  // point index or cluster id
    bool child_is_cluster = false;
    double lambda = 0.0;
    std::size_t size = 1;
};

} // namespace

std::vector<int> hdbscan(std::span<const Vec3> points, const HdbscanParams &params) {
    if (params.min_cluster_size < 2 || params.min_samples < 1) {
        throw InputError("hdbscan: min_cluster_size must be >= 2 and min_samples >= 1");
    }
    const std::size_t n = points.size();
    std::vector<int> labels(n, -1);
    if (n < params.min_cluster_size) {
        return labels;
    }
    const auto core = core_distances(points, params.min_samples);
    const auto edges = mutual_reachability_mst(points, core);
    const auto nodes = single_linkage(edges, n);

    // Zero-length merges (duplicate points) would give infinite lambdas.
    const double max_weight = edges.empty() ? 1.0 : std::max(edges.back().weight, 1e-300);
    auto lambda_of = [&](double d) { return 1.0 / std::max(d, 1e-12 * max_weight); };

    // --- condense --------------------------------------------------------------
    std::vector<CondensedRow> rows;
    std::vector<double> birth{0.0};
    std::vector<std::size_t> cluster_parent{0};
    const std::size_t root = 2 * n - 2;
    std::vector<std::size_t> cluster_of(2 * n - 1, 0); // dendrogram node -> owning cluster
    std::vector<std::size_t> stack{root};

    auto emit_leaves = [&](std::size_t node, std::size_t cluster, double lambda) {
        std::vector<std::size_t> pending{node};
        while (!pending.empty()) {
            const std::size_t x = pending.back();
            pending.pop_back();
            if (x < n) {
                rows.push_back({cluster, x, false, lambda, 1});
            } else {
                pending.push_back(nodes[x].right);
                pending.push_back(nodes[x].left);
            }
        }
    };

    // Depth-first with explicit order keeps cluster ids deterministic.
    while (!stack.empty()) {
        const std::size_t node = stack.back();
        stack.pop_back();
        if (node < n) {
            rows.push_back({cluster_of[node], node, false, birth[cluster_of[node]], 1});
            continue;
        }
        const std::size_t cluster = cluster_of[node];
        const LinkageNode &ln = nodes[node];
        const double lambda = lambda_of(ln.distance);
        const bool left_big = nodes[ln.left].size >= params.min_cluster_size;
        const bool right_big = nodes[ln.right].size >= params.min_cluster_size;
        if (left_big && right_big) {
            for (const std::size_t child : {ln.left, ln.right}) {
                const std::size_t id = birth.size();
                birth.push_back(lambda);
                cluster_parent.push_back(cluster);
                rows.push_back({cluster, id, true, lambda, nodes[child].size});
                cluster_of[child] = id;
            }
            stack.push_back(ln.right);
            stack.push_back(ln.left);
        } else if (!left_big && !right_big) {
            emit_leaves(ln.left, cluster, lambda);
            emit_leaves(ln.right, cluster, lambda);
        } else {
            const std::size_t keep = left_big ? ln.left : ln.right;
            const std::size_t drop = left_big ? ln.right : ln.left;
            emit_leaves(drop, cluster, lambda);
            cluster_of[keep] = cluster;
            stack.push_back(keep);
        }
    }

    // --- excess-of-mass selection ---------------------------------------------
    const std::size_t n_clusters = birth.size();
    std::vector<double> stability(n_clusters, 0.0);
    std::vector<std::vector<std::size_t>> children(n_clusters);
    std::vector<std::size_t> point_cluster(n, 0);
    for (const auto &row : rows) {
        stability[row.parent] += (row.lambda - birth[row.parent]) * static_cast<double>(row.size);
        if (row.child_is_cluster) {
            children[row.parent].push_back(row.child);
        } else {
            point_cluster[row.child] = row.parent;
        }
    }
    std::vector<bool> selected(n_clusters, false);
    // Children always carry larger ids than their parent.
    for (std::size_t c = n_clusters; c-- > 0;) {
        if (children[c].empty()) {
            selected[c] = true;
            continue;
        }
        double child_sum = 0.0;
        for (const auto ch : children[c]) {
            child_sum += stability[ch];
        }
        if (stability[c] < child_sum) {
            stability[c] = child_sum;
        } else {
            selected[c] = true;
            std::vector<std::size_t> pending(children[c]);
            while (!pending.empty()) {
                const std::size_t d = pending.back();
                pending.pop_back();
                selected[d] = false;
                pending.insert(pending.end(), children[d].begin(), children[d].end());
            }
        }
    }

    // --- labelling --------------------------------------------------------------
    std::map<std::size_t, int> label_of;
    for (std::size_t c = 0; c < n_clusters; ++c) {
        if (selected[c]) {
            label_of.emplace(c, static_cast<int>(label_of.size()));
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = point_cluster[i];
        for (;;) {
            if (selected[c]) {
                labels[i] = label_of.at(c);
                break;
            }
            if (c == 0) {
                break;
            }
            c = cluster_parent[c];
        }
    }
    return labels;
}

std::vector<std::size_t> largest_cluster(std::span<const int> labels) {
    std::map<int, std::size_t> counts;
    for (const int l : labels) {
        if (l >= 0) {
            ++counts[l];
        }
    }
    if (counts.empty()) {
        return {};
    }
    int best = counts.begin()->first;
    for (const auto &[label, count] : counts) {
        if (count > counts[best]) {
            best = label;
        }
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == best) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> statistical_outlier_removal(std::span<const Vec3> points, std::size_t k, double std_ratio) {
    if (k == 0 || !(std_ratio >= 0.0)) {
        throw InputError("statistical_outlier_removal: k must be positive and std_ratio non-negative");
    }
    const std::size_t n = points.size();
    std::vector<std::size_t> kept;
    if (n < 2) {
        kept.resize(n);
        std::iota(kept.begin(), kept.end(), 0);
        return kept;
    }
    const PointIndex index(points);
    const std::size_t kk = std::min(k, n - 1);
    std::vector<double> mean_dist(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        const auto nn = index.nearest(points[i], kk + 1);
        double sum = 0.0;
        std::size_t used = 0;
        for (const auto &nb : nn) {
            if (nb.index == i || used == kk) {
                continue;
            }
            sum += nb.distance;
            ++used;
        }
        mean_dist[i] = sum / static_cast<double>(used);
    });
    const double mean = std::accumulate(mean_dist.begin(), mean_dist.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (const double d : mean_dist) {
        var += (d - mean) * (d - mean);
    }
    var /= static_cast<double>(n - 1);
    const double limit = mean + std_ratio * std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) {
        if (mean_dist[i] <= limit) {
            kept.push_back(i);
        }
    }
    return kept;
}

} // namespace wheatgs
