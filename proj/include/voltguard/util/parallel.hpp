#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace voltguard {

/// Runs body(i) for i in [0, count) on up to hardware_concurrency threads.
/// Work items must be independent; results should be written to per-index slots.
/// The first exception thrown by any worker is rethrown on the calling thread.
template <class Body>
void parallel_for(std::size_t count, Body&& body, unsigned max_threads = 0) {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (max_threads != 0) hw = std::min(hw, max_threads);
    const auto n_threads = static_cast<unsigned>(std::min<std::size_t>(hw, count));
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = count;
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace voltguard
