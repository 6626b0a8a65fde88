// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "wheatgs/geometry.hpp"

#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace wheatgs {

struct Neighbor {
    std::size_t index = 0;
    double distance = 0.0;
};

/// Read-only nearest-neighbor index over a fixed point set. Queries are
/// const and may run concurrently.
class PointIndex {
  public:
    explicit PointIndex(std::span<const Vec3> points);
    ~PointIndex();
    PointIndex(PointIndex &&) noexcept;
    PointIndex &operator=(PointIndex &&) noexcept;

    [[nodiscard]] std::size_t size() const { return size_; }

    /// Up to k nearest points sorted by (distance, index).
    [[nodiscard]] std::vector<Neighbor> nearest(const Vec3 &query, std::size_t k) const;
    [[nodiscard]] Neighbor nearest(const Vec3 &query) const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::size_t size_ = 0;
};

} // namespace wheatgs
