#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dirmax {

namespace detail {
inline std::atomic<unsigned>& worker_setting() {
    static std::atomic<unsigned> n{0};
    return n;
}
}  // namespace detail

/// Number of worker threads used by the parallel kernels. Zero selects
/// std::thread::hardware_concurrency(). Results never depend on this value.
inline void set_worker_count(unsigned n) { detail::worker_setting() = n; }

inline unsigned worker_count() {
    unsigned n = detail::worker_setting();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

/// Splits [0, n) into contiguous chunks and calls fn(begin, end) for each,
/// one chunk per worker. The chunking depends only on n and the worker
/// count; callers make results chunking-independent.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
    if (workers <= 1) {
        if (n > 0) fn(std::size_t{0}, n);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned t = 0; t < workers; ++t) {
        std::size_t begin = n * t / workers;
        std::size_t end = n * (t + 1) / workers;
        pool.emplace_back([&, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace dirmax
