// Serial reference vs OpenMP kernels, and whole split steps under both policies.
//   bench_kernels --benchmark_filter=potential

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "onset/bands.hpp"
#include "onset/kernels.hpp"
#include "onset/propagator.hpp"

using namespace onset;
using kernels::cplx;

namespace {

struct Data {
    std::vector<cplx> psi, phase;
    std::vector<double> z;

    explicit Data(std::size_t n) : psi(n), phase(n), z(n) {
        for (std::size_t i = 0; i < n; ++i) {
            const double x = double(i) / double(n);
            psi[i] = std::polar(std::exp(-x), 3.0 * x);
            phase[i] = std::polar(1.0, 0.1 * std::cos(7.0 * x));
            z[i] = x;
        }
    }
};

template <class Fn>
void run(benchmark::State& st, Fn fn) {
    Data d(std::size_t(st.range(0)));
    for (auto _ : st) fn(d);
    st.SetItemsProcessed(std::int64_t(st.iterations()) * st.range(0));
}

void serial_multiply(benchmark::State& st) {
    run(st, [](Data& d) { kernels::serial::multiply(d.psi, d.phase); });
}
void omp_multiply(benchmark::State& st) {
    run(st, [](Data& d) { kernels::omp::multiply(d.psi, d.phase); });
}
void serial_potential(benchmark::State& st) {
    run(st, [](Data& d) { kernels::serial::potential_step(d.psi, d.phase, d.z, 1e-4, 0.0); });
}
void omp_potential(benchmark::State& st) {
    run(st, [](Data& d) { kernels::omp::potential_step(d.psi, d.phase, d.z, 1e-4, 0.0); });
}
void serial_norm(benchmark::State& st) {
    run(st, [](Data& d) { benchmark::DoNotOptimize(kernels::serial::norm_sq(d.psi)); });
}
void omp_norm(benchmark::State& st) {
    run(st, [](Data& d) { benchmark::DoNotOptimize(kernels::omp::norm_sq(d.psi)); });
}
void serial_expectation(benchmark::State& st) {
    run(st, [](Data& d) { benchmark::DoNotOptimize(kernels::serial::expectation(d.psi, d.z)); });
}
void omp_expectation(benchmark::State& st) {
    run(st, [](Data& d) { benchmark::DoNotOptimize(kernels::omp::expectation(d.psi, d.z)); });
}

void split_step(benchmark::State& st, ExecPolicy policy) {
    LatticeConfig cfg;
    cfg.depth = 9.4;
    const propagator::GridSpec grid{std::size_t(st.range(0)), 16};
    const propagator::SplitStepPropagator prop(cfg, grid, propagator::ForceSchedule{0.0, 0.0, 0.2}, 1.0 / 500, 0.0,
                                               policy);
    auto psi = propagator::prepare_ground_state(cfg, grid, 0.1 * double(grid.sites));
    for (auto _ : st) prop.advance(psi, 10);
    st.SetItemsProcessed(std::int64_t(st.iterations()) * 10);
}

void band_solve(benchmark::State& st, ExecPolicy policy) {
    LatticeConfig cfg;
    cfg.depth = 9.4;
    bands::SolveOptions o;
    o.policy = policy;
    for (auto _ : st) benchmark::DoNotOptimize(bands::solve_bands(cfg, bands::KGrid::brillouin_zone(257), o));
}

}  // namespace

BENCHMARK(serial_multiply)->Range(1 << 13, 1 << 19);
BENCHMARK(omp_multiply)->Range(1 << 13, 1 << 19)->UseRealTime();
BENCHMARK(serial_potential)->Range(1 << 13, 1 << 19);
BENCHMARK(omp_potential)->Range(1 << 13, 1 << 19)->UseRealTime();
BENCHMARK(serial_norm)->Range(1 << 13, 1 << 19);
BENCHMARK(omp_norm)->Range(1 << 13, 1 << 19)->UseRealTime();
BENCHMARK(serial_expectation)->Range(1 << 13, 1 << 19);
BENCHMARK(omp_expectation)->Range(1 << 13, 1 << 19)->UseRealTime();
BENCHMARK_CAPTURE(split_step, serial, ExecPolicy::serial)->Arg(512)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(split_step, parallel, ExecPolicy::parallel)->Arg(512)->Arg(4096)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(band_solve, serial, ExecPolicy::serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(band_solve, parallel, ExecPolicy::parallel)->UseRealTime()->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
