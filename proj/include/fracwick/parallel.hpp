// SPDX-License-Identifier: MIT
#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace fracwick {

/// Calls f(j) for j in [0, n), splitting the range into `workers`
/// contiguous blocks. The first exception thrown by any block is rethrown
/// after all threads have joined.
template <class F>
void parallel_for(std::size_t n, unsigned workers, F&& f) {
    if (n == 0) return;
    const auto w = static_cast<std::size_t>(std::max(1u, workers));
    const std::size_t blocks = std::min(w, n);
    if (blocks == 1) {
        for (std::size_t j = 0; j < n; ++j) f(j);
        return;
    }
    std::vector<std::exception_ptr> errors(blocks);
    {
        std::vector<std::jthread> pool;
        pool.reserve(blocks);
        for (std::size_t b = 0; b < blocks; ++b) {
            pool.emplace_back([&, b] {
                try {
                    for (std::size_t j = n * b / blocks; j < n * (b + 1) / blocks; ++j) f(j);
                } catch (...) {
                    errors[b] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace fracwick
