#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace apsde {

/// Worker count: `requested` if positive, else APSDE_THREADS if set and
/// positive, else the hardware concurrency (at least 1).
inline int resolve_worker_count(int requested = 0) {
    if (requested > 0) {
        return requested;
    }
    if (const char* env = std::getenv("APSDE_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) {
                return n;
            }
        } catch (const std::exception&) {
            // fall through to auto
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(chunk) for chunk = 0..chunks-1 on up to `workers` threads. Chunks
/// are the unit of work; callers store per-chunk results by index and reduce
/// in order, which makes results independent of the worker count.
template <class Fn>
void parallel_for_chunks(std::int64_t chunks, int workers, Fn&& fn) {
    workers = static_cast<int>(std::min<std::int64_t>(std::max(1, workers), std::max<std::int64_t>(chunks, 1)));
    if (workers == 1) {
        for (std::int64_t c = 0; c < chunks; ++c) {
            fn(c);
        }
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto body = [&] {
        for (;;) {
            const std::int64_t c = next.fetch_add(1);
            if (c >= chunks) {
                return;
            }
            try {
                fn(c);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next.store(chunks);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back(body);
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace apsde
