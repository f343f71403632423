#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace sthawkes {

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Work items are
/// claimed dynamically, so callers must write results to per-index slots for
/// the outcome to be independent of the thread count. The exception of the
/// lowest failing index is rethrown after all workers finish.
template <class F>
void parallel_for(std::ptrdiff_t n, int threads, F&& fn) {
    if (n <= 0) return;
    const auto workers = static_cast<std::ptrdiff_t>(std::clamp<std::ptrdiff_t>(threads, 1, n));
    if (workers == 1) {
        for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::ptrdiff_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    auto work = [&] {
        for (std::ptrdiff_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (std::ptrdiff_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace sthawkes
