// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/convex_hull.hpp"

#include "wheatgs/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>

namespace wheatgs {

namespace {

struct Face {
    std::array<std::size_t, 3> v{};
    Vec3 normal = Vec3::Zero();
    double offset = 0.0;
    std::vector<std::size_t> outside;
    bool alive = true;

    [[nodiscard]] double distance(const Vec3 &p) const { return normal.dot(p) - offset; }
};

class Quickhull {
  public:
    explicit Quickhull(std::span<const Vec3> points) : pts_(points) {
        Vec3 lo = points[0];
        Vec3 hi = points[0];
        for (const auto &p : points) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const double scale = (hi - lo).norm() + lo.cwiseAbs().maxCoeff() + hi.cwiseAbs().maxCoeff();
        eps_ = 1e-12 * scale;
    }

    ConvexHull run() {
        build_simplex();
        for (;;) {
            const auto it = std::find_if(faces_.begin(), faces_.end(),
                                         [](const Face &f) { return f.alive && !f.outside.empty(); });
            if (it == faces_.end()) {
                break;
            }
            add_point(static_cast<std::size_t>(it - faces_.begin()));
        }
        ConvexHull hull;
        std::vector<bool> used(pts_.size(), false);
        for (const auto &f : faces_) {
            if (f.alive) {
                hull.faces.push_back(f.v);
                for (const auto i : f.v) {
                    used[i] = true;
                }
            }
        }
        for (std::size_t i = 0; i < used.size(); ++i) {
            if (used[i]) {
                hull.vertices.push_back(i);
            }
        }
        return hull;
    }

  private:
    std::span<const Vec3> pts_;
    double eps_ = 0.0;
    std::vector<Face> faces_;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> edge_face_; // directed edge -> face

    std::size_t make_face(std::size_t a, std::size_t b, std::size_t c) {
        Face f;
        f.v = {a, b, c};
        const Vec3 n = (pts_[b] - pts_[a]).cross(pts_[c] - pts_[a]);
        const double len = n.norm();
        f.normal = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
        f.offset = f.normal.dot(pts_[a]);
        const std::size_t id = faces_.size();
        faces_.push_back(std::move(f));
        edge_face_[{a, b}] = id;
        edge_face_[{b, c}] = id;
        edge_face_[{c, a}] = id;
        return id;
    }

    void kill_face(std::size_t id) {
        Face &f = faces_[id];
        f.alive = false;
        for (int e = 0; e < 3; ++e) {
            const auto key = std::make_pair(f.v[e], f.v[(e + 1) % 3]);
            const auto it = edge_face_.find(key);
            if (it != edge_face_.end() && it->second == id) {
                edge_face_.erase(it);
            }
        }
    }

    void assign(std::size_t p, const std::vector<std::size_t> &candidates) {
        double best = eps_;
        std::size_t best_face = std::numeric_limits<std::size_t>::max();
        for (const auto fid : candidates) {
            const double d = faces_[fid].distance(pts_[p]);
            if (d > best) {
                best = d;
                best_face = fid;
            }
        }
        if (best_face != std::numeric_limits<std::size_t>::max()) {
            faces_[best_face].outside.push_back(p);
        }
    }

    void build_simplex() {
        const std::size_t n = pts_.size();
        // Extreme points along each axis; the farthest pair seeds the simplex.
        std::array<std::size_t, 6> ext{};
        for (int axis = 0; axis < 3; ++axis) {
            std::size_t lo = 0;
            std::size_t hi = 0;
            for (std::size_t i = 1; i < n; ++i) {
                if (pts_[i](axis) < pts_[lo](axis)) {
                    lo = i;
                }
                if (pts_[i](axis) > pts_[hi](axis)) {
                    hi = i;
                }
            }
            ext[static_cast<std::size_t>(2 * axis)] = lo;
            ext[static_cast<std::size_t>(2 * axis + 1)] = hi;
        }
        std::size_t i0 = ext[0];
        std::size_t i1 = ext[1];
        double best = -1.0;
        for (const auto a : ext) {
            for (const auto b : ext) {
                const double d = (pts_[a] - pts_[b]).squaredNorm();
                if (d > best) {
                    best = d;
                    i0 = a;
                    i1 = b;
                }
            }
        }
        const Vec3 dir = (pts_[i1] - pts_[i0]).normalized();
        std::size_t i2 = i0;
        best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 d = pts_[i] - pts_[i0];
            const double dist = (d - d.dot(dir) * dir).norm();
            if (dist > best) {
                best = dist;
                i2 = i;
            }
        }
        if (best <= eps_) {
            throw InputError("convex hull: points are collinear");
        }
        const Vec3 normal = (pts_[i1] - pts_[i0]).cross(pts_[i2] - pts_[i0]).normalized();
        std::size_t i3 = i0;
        best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dist = std::abs(normal.dot(pts_[i] - pts_[i0]));
            if (dist > best) {
                best = dist;
                i3 = i;
            }
        }
        if (best <= eps_) {
            throw InputError("convex hull: points are coplanar");
        }
        // Orient so every face normal points away from the fourth vertex.
        if (normal.dot(pts_[i3] - pts_[i0]) > 0.0) {
            std::swap(i1, i2);
        }
        const std::vector<std::size_t> ids{make_face(i0, i1, i2), make_face(i0, i3, i1), make_face(i1, i3, i2),
                                           make_face(i2, i3, i0)};
        for (std::size_t i = 0; i < n; ++i) {
            if (i != i0 && i != i1 && i != i2 && i != i3) {
                assign(i, ids);
            }
        }
    }

    void add_point(std::size_t start) {
        const Face &seed = faces_[start];
        const std::size_t eye = *std::max_element(seed.outside.begin(), seed.outside.end(), [&](auto a, auto b) {
            return seed.distance(pts_[a]) < seed.distance(pts_[b]);
        });
        const Vec3 &p = pts_[eye];

        // Visible region by flood fill across shared edges.
        std::vector<std::size_t> visible{start};
        std::vector<bool> is_visible(faces_.size(), false);
        is_visible[start] = true;
        for (std::size_t k = 0; k < visible.size(); ++k) {
            const Face &f = faces_[visible[k]];
            for (int e = 0; e < 3; ++e) {
                const auto twin = edge_face_.find({f.v[(e + 1) % 3], f.v[e]});
                if (twin == edge_face_.end()) {
                    throw InvariantError("convex hull: open edge in the hull mesh");
                }
                const std::size_t nb = twin->second;
                if (!is_visible[nb] && faces_[nb].distance(p) > eps_) {
                    is_visible[nb] = true;
                    visible.push_back(nb);
                }
            }
        }
        std::vector<std::pair<std::size_t, std::size_t>> horizon;
        std::vector<std::size_t> orphans;
        for (const auto fid : visible) {
            const Face &f = faces_[fid];
            for (int e = 0; e < 3; ++e) {
                const std::size_t a = f.v[e];
                const std::size_t b = f.v[(e + 1) % 3];
                if (!is_visible[edge_face_.at({b, a})]) {
                    horizon.emplace_back(a, b);
                }
            }
            for (const auto q : f.outside) {
                if (q != eye) {
                    orphans.push_back(q);
                }
            }
        }
        for (const auto fid : visible) {
            kill_face(fid);
            faces_[fid].outside.clear();
        }
        std::vector<std::size_t> created;
        created.reserve(horizon.size());
        for (const auto &[a, b] : horizon) {
            created.push_back(make_face(a, b, eye));
        }
        std::sort(orphans.begin(), orphans.end());
        for (const auto q : orphans) {
            assign(q, created);
        }
    }
};

} // namespace

double ConvexHull::volume(std::span<const Vec3> points) const {
    if (faces.empty()) {
        return 0.0;
    }
    Vec3 c = Vec3::Zero();
    for (const auto i : vertices) {
        c += points[i];
    }
    c /= static_cast<double>(vertices.size());
    double six_v = 0.0;
    for (const auto &f : faces) {
        six_v += (points[f[0]] - c).dot((points[f[1]] - c).cross(points[f[2]] - c));
    }
    return six_v / 6.0;
}

ConvexHull convex_hull(std::span<const Vec3> points) {
    if (points.size() < 4) {
        throw InputError("convex hull needs at least 4 points");
    }
    return Quickhull(points).run();
}

} // namespace wheatgs
