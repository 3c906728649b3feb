#pragma once

#include <array>
#include <cstddef>

namespace onset {

/// Selects the serial reference path or the OpenMP path of a kernel.
enum class ExecPolicy { serial, parallel };

/// Reductions are split into this many fixed chunks whatever the thread count,
/// so results are bitwise reproducible across OMP_NUM_THREADS settings.
inline constexpr std::size_t kReductionChunks = 64;

/// Deterministic sum of f(i) for i in [0, n).
template <class F>
double chunked_sum(std::size_t n, ExecPolicy policy, F&& f) {
    std::array<double, kReductionChunks> partial{};
    const std::size_t chunk = (n + kReductionChunks - 1) / kReductionChunks;
    const auto body = [&](std::size_t c) {
        const std::size_t lo = c * chunk;
        const std::size_t hi = lo + chunk < n ? lo + chunk : n;
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += f(i);
        partial[c] = acc;
    };
    if (policy == ExecPolicy::parallel) {
#pragma omp parallel for schedule(static)
        for (std::size_t c = 0; c < kReductionChunks; ++c) body(c);
    } else {
        for (std::size_t c = 0; c < kReductionChunks; ++c) body(c);
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace onset
