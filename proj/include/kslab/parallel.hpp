#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace kslab {

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
/// Callers must write results into per-index slots; combined with the
/// fixed-order reductions used throughout, outputs are identical for
/// every worker count. The first exception thrown by any item is rethrown.
inline void parallel_for(std::size_t n, int workers,
                         const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&, t] {
            // static block partition keeps item -> thread assignment stable
            const std::size_t lo = n * t / nthreads;
            const std::size_t hi = n * (t + 1) / nthreads;
            for (std::size_t i = lo; i < hi; ++i) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace kslab
