#include "terraclust/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace terraclust {

namespace {
int g_threads = 0;
}

void set_thread_count(int n) { g_threads = n; }

int thread_count() {
    if (g_threads > 0) return g_threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_for_chunks(size_t n, size_t chunk,
                         const std::function<void(size_t, size_t)>& fn) {
    if (n == 0) return;
    const size_t workers = std::min<size_t>(thread_count(), (n + chunk - 1) / chunk);
    if (workers <= 1) {
        for (size_t b = 0; b < n; b += chunk) fn(b, std::min(n, b + chunk));
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const size_t b = next.fetch_add(chunk);
            if (b >= n) return;
            try {
                fn(b, std::min(n, b + chunk));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (size_t t = 1; t < workers; ++t) pool.emplace_back(body);
    body();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    // Chunk size keeps scheduling overhead low for fine-grained bodies.
    const size_t chunk = std::max<size_t>(1, n / (4 * static_cast<size_t>(thread_count()) + 1));
    parallel_for_chunks(n, chunk, [&](size_t b, size_t e) {
        for (size_t i = b; i < e; ++i) fn(i);
    });
}

}  // namespace terraclust
