// Copyright Contributors to the wheatgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace wheatgs {

/// Sets the worker count used by parallel loops. 0 selects hardware concurrency.
void set_thread_count(unsigned count);
[[nodiscard]] unsigned thread_count();

/// Calls `fn(i)` for every i in [0, n). Work items must write to disjoint
/// outputs; results never depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn);

} // namespace wheatgs
