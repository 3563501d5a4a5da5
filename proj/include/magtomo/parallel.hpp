#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace magtomo {

// Worker count: MAGTOMO_THREADS if set and positive, else hardware concurrency.
inline unsigned thread_count() {
    if (const char* env = std::getenv("MAGTOMO_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Calls f(task) for task in [0, ntasks) across workers. Each task must write only its own
// outputs, which keeps results independent of the worker count.
template <class F>
void parallel_tasks(std::size_t ntasks, F&& f, unsigned workers = thread_count()) {
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, ntasks));
    if (workers <= 1) {
        for (std::size_t t = 0; t < ntasks; ++t) f(t);
        return;
    }
    std::exception_ptr failure;
    std::mutex mu;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t t = w; t < ntasks; t += workers) {
                try {
                    f(t);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

// Fixed-order pairwise sum of per-block partials; the tree shape depends only on parts.size().
template <class T>
T pairwise_sum(std::vector<T> parts) {
    if (parts.empty()) return T{};
    while (parts.size() > 1) {
        std::vector<T> next;
        next.reserve((parts.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < parts.size(); i += 2) next.push_back(parts[i] + parts[i + 1]);
        if (parts.size() % 2) next.push_back(std::move(parts.back()));
        parts = std::move(next);
    }
    return std::move(parts.front());
}

}  // namespace magtomo
