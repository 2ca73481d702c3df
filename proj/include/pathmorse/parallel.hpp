#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace pathmorse {

/// Worker count: the requested value, or the available cores when it is 0.
inline int resolve_workers(int requested) {
    if (requested > 0) return requested;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Each index is claimed once; the
/// first exception (by index) is rethrown after all workers finish.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
    const auto n = static_cast<std::size_t>(std::min<std::size_t>(resolve_workers(workers), std::max<std::size_t>(count, 1)));
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < count;) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (n <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace pathmorse
