// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#include "wheatgs/spatial_index.hpp"

#include "wheatgs/error.hpp"

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include <algorithm>
#include <iterator>

namespace wheatgs {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using Entry = std::pair<BPoint, std::size_t>;

struct PointIndex::Impl {
    bgi::rtree<Entry, bgi::rstar<16>> tree;
    std::vector<Vec3> points;
};

namespace {

BPoint to_bpoint(const Vec3 &p) { return {p.x(), p.y(), p.z()}; }

} // namespace

PointIndex::PointIndex(std::span<const Vec3> points) : impl_(std::make_unique<Impl>()), size_(points.size()) {
    std::vector<Entry> entries;
    entries.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        entries.emplace_back(to_bpoint(points[i]), i);
    }
    impl_->tree = bgi::rtree<Entry, bgi::rstar<16>>(entries.begin(), entries.end());
    impl_->points.assign(points.begin(), points.end());
}

PointIndex::~PointIndex() = default;
PointIndex::PointIndex(PointIndex &&) noexcept = default;
PointIndex &PointIndex::operator=(PointIndex &&) noexcept = default;

std::vector<Neighbor> PointIndex::nearest(const Vec3 &query, std::size_t k) const {
    std::vector<Neighbor> out;
    if (k == 0 || size_ == 0) {
        return out;
    }
    // Ask for one extra candidate so exact distance ties at the boundary are
    // resolved by index rather than by tree layout.
    std::vector<Entry> hits;
    impl_->tree.query(bgi::nearest(to_bpoint(query), static_cast<unsigned>(std::min(k + 1, size_))),
                      std::back_inserter(hits));
    out.reserve(hits.size());
    for (const auto &[pt, idx] : hits) {
        out.push_back({idx, (impl_->points[idx] - query).norm()});
    }
    std::sort(out.begin(), out.end(), [](const Neighbor &a, const Neighbor &b) {
        return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    });
    if (out.size() > k) {
        out.resize(k);
    }
    return out;
}

Neighbor PointIndex::nearest(const Vec3 &query) const {
    if (size_ == 0) {
        throw InvariantError("PointIndex::nearest on an empty index");
    }
    return nearest(query, 1).front();
}

} // namespace wheatgs
