#pragma once

#include <complex>
#include <span>

#include "onset/parallel.hpp"

/// Pointwise split-step kernels and reductions over a wavefunction.
/// serial:: is the reference; omp:: must agree with it bitwise (fixed-chunk
/// reductions, identical per-element arithmetic).
namespace onset::kernels {

using cplx = std::complex<double>;

namespace serial {
void multiply(std::span<cplx> psi, std::span<const cplx> factor);
// psi *= lattice_phase * exp(i f_dt z) * exp(-i g_dt |psi|^2)
void potential_step(std::span<cplx> psi, std::span<const cplx> lattice_phase, std::span<const double> z,
                    double f_dt, double g_dt);
void scale(std::span<cplx> psi, double a);
double norm_sq(std::span<const cplx> psi);
// sum_i w_i |psi_i|^2
double expectation(std::span<const cplx> psi, std::span<const double> w);
}  // namespace serial

namespace omp {
void multiply(std::span<cplx> psi, std::span<const cplx> factor);
void potential_step(std::span<cplx> psi, std::span<const cplx> lattice_phase, std::span<const double> z,
                    double f_dt, double g_dt);
void scale(std::span<cplx> psi, double a);
double norm_sq(std::span<const cplx> psi);
double expectation(std::span<const cplx> psi, std::span<const double> w);
}  // namespace omp

// dispatch on policy
void multiply(ExecPolicy p, std::span<cplx> psi, std::span<const cplx> factor);
void potential_step(ExecPolicy p, std::span<cplx> psi, std::span<const cplx> lattice_phase,
                    std::span<const double> z, double f_dt, double g_dt);
void scale(ExecPolicy p, std::span<cplx> psi, double a);
double norm_sq(ExecPolicy p, std::span<const cplx> psi);
double expectation(ExecPolicy p, std::span<const cplx> psi, std::span<const double> w);

}  // namespace onset::kernels
