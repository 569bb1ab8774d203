#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace headgrow {

/// Worker count resolution: explicit request > HEADGROW_THREADS > hardware.
inline int resolve_workers(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("HEADGROW_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Static-chunked parallel loop over [0, n). Each index is visited exactly
/// once; callers must write only to per-index slots so results are identical
/// for any worker count.
inline void parallel_for(int n, const std::function<void(int)>& body, int workers = 0) {
    if (n <= 0) return;
    int w = std::min(resolve_workers(workers), n);
    if (w <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(w);
    for (int t = 0; t < w; ++t) {
        int begin = static_cast<int>(static_cast<long long>(n) * t / w);
        int end = static_cast<int>(static_cast<long long>(n) * (t + 1) / w);
        threads.emplace_back([&body, begin, end] {
            for (int i = begin; i < end; ++i) body(i);
        });
    }
    for (auto& th : threads) th.join();
}

}  // namespace headgrow
