#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <vector>

namespace irg {

/// Warm-up calls are discarded; the reported figure is the median over batches.
struct TimingProtocol {
    std::size_t warmup = 100;
    std::size_t batches = 5;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    if (v.size() % 2 == 1) return v[mid];
    const double upper = v[mid];
    return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

/// Median seconds per call of `fn(i)` for i in [0, calls), split into
/// `protocol.batches` contiguous batches. `warm(i)` runs the discarded
/// warm-up calls so that they need not share state with the timed ones.
template <class Fn, class Warm>
double timed_batches(std::size_t calls, Fn&& fn, Warm&& warm, TimingProtocol protocol = {}) {
    using clock = std::chrono::steady_clock;
    for (std::size_t i = 0; i < protocol.warmup; ++i) warm(i);
    const std::size_t batches = std::max<std::size_t>(1, std::min(protocol.batches, calls));
    std::vector<double> per_call;
    std::size_t begin = 0;
    for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t end = calls * (b + 1) / batches;
        const auto start = clock::now();
        for (std::size_t i = begin; i < end; ++i) fn(i);
        const std::chrono::duration<double> elapsed = clock::now() - start;
        if (end > begin) per_call.push_back(elapsed.count() / static_cast<double>(end - begin));
        begin = end;
    }
    return median(std::move(per_call));
}

template <class Fn>
double timed_batches(std::size_t calls, Fn&& fn, TimingProtocol protocol = {}) {
    return timed_batches(calls, fn, [&](std::size_t i) { fn(i % std::max<std::size_t>(calls, 1)); }, protocol);
}

}  // namespace irg
