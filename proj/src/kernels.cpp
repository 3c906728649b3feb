#include "onset/kernels.hpp"

#include "onset/units.hpp"

namespace onset::kernels {

namespace {
inline void check(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw InvalidArgument(std::string("kernels::") + what + ": length mismatch");
}

// plain product; operator* on std::complex goes through __muldc3 (inf/nan recovery)
inline cplx mul(cplx a, cplx b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

inline cplx potential_factor(cplx psi, cplx lattice, double z, double f_dt, double g_dt) {
    cplx f = mul(lattice, std::polar(1.0, f_dt * z));
    if (g_dt != 0.0) f = mul(f, std::polar(1.0, -g_dt * std::norm(psi)));
    return f;
}
}  // namespace

namespace serial {
void multiply(std::span<cplx> psi, std::span<const cplx> factor) {
    check(psi.size(), factor.size(), "multiply");
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = mul(psi[i], factor[i]);
}

void potential_step(std::span<cplx> psi, std::span<const cplx> lattice_phase, std::span<const double> z,
                    double f_dt, double g_dt) {
    check(psi.size(), lattice_phase.size(), "potential_step");
    check(psi.size(), z.size(), "potential_step");
    for (std::size_t i = 0; i < psi.size(); ++i)
        psi[i] = mul(psi[i], potential_factor(psi[i], lattice_phase[i], z[i], f_dt, g_dt));
}

void scale(std::span<cplx> psi, double a) {
    for (auto& x : psi) x *= a;
}

double norm_sq(std::span<const cplx> psi) {
    return chunked_sum(psi.size(), ExecPolicy::serial, [&](std::size_t i) { return std::norm(psi[i]); });
}

double expectation(std::span<const cplx> psi, std::span<const double> w) {
    check(psi.size(), w.size(), "expectation");
    return chunked_sum(psi.size(), ExecPolicy::serial, [&](std::size_t i) { return w[i] * std::norm(psi[i]); });
}
}  // namespace serial

namespace omp {
void multiply(std::span<cplx> psi, std::span<const cplx> factor) {
    check(psi.size(), factor.size(), "multiply");
    const std::size_t n = psi.size();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) psi[i] = mul(psi[i], factor[i]);
}

void potential_step(std::span<cplx> psi, std::span<const cplx> lattice_phase, std::span<const double> z,
                    double f_dt, double g_dt) {
    check(psi.size(), lattice_phase.size(), "potential_step");
    check(psi.size(), z.size(), "potential_step");
    const std::size_t n = psi.size();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) psi[i] = mul(psi[i], potential_factor(psi[i], lattice_phase[i], z[i], f_dt, g_dt));
}

void scale(std::span<cplx> psi, double a) {
    const std::size_t n = psi.size();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) psi[i] *= a;
}

double norm_sq(std::span<const cplx> psi) {
    return chunked_sum(psi.size(), ExecPolicy::parallel, [&](std::size_t i) { return std::norm(psi[i]); });
}

double expectation(std::span<const cplx> psi, std::span<const double> w) {
    check(psi.size(), w.size(), "expectation");
    return chunked_sum(psi.size(), ExecPolicy::parallel,
                       [&](std::size_t i) { return w[i] * std::norm(psi[i]); });
}
}  // namespace omp

void multiply(ExecPolicy p, std::span<cplx> psi, std::span<const cplx> factor) {
    p == ExecPolicy::parallel ? omp::multiply(psi, factor) : serial::multiply(psi, factor);
}
void potential_step(ExecPolicy p, std::span<cplx> psi, std::span<const cplx> lattice_phase,
                    std::span<const double> z, double f_dt, double g_dt) {
    p == ExecPolicy::parallel ? omp::potential_step(psi, lattice_phase, z, f_dt, g_dt)
                              : serial::potential_step(psi, lattice_phase, z, f_dt, g_dt);
}
void scale(ExecPolicy p, std::span<cplx> psi, double a) {
    p == ExecPolicy::parallel ? omp::scale(psi, a) : serial::scale(psi, a);
}
double norm_sq(ExecPolicy p, std::span<const cplx> psi) {
    return p == ExecPolicy::parallel ? omp::norm_sq(psi) : serial::norm_sq(psi);
}
double expectation(ExecPolicy p, std::span<const cplx> psi, std::span<const double> w) {
    return p == ExecPolicy::parallel ? omp::expectation(psi, w) : serial::expectation(psi, w);
}

}  // namespace onset::kernels
