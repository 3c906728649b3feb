#pragma once

#include "onset/bands.hpp"

namespace onset::bands {

/// Smooth evaluation of band quantities at arbitrary k in [k_lo, k_hi].
///
/// Energies use quintic Hermite interpolation (E, dE/dk = 2 p_nn, d2E/dk2 =
/// 2 m0/m*), momentum matrix elements and inverse masses 4-point Lagrange.
/// The antiderivative G_n(k) = int_{k_lo}^k E_n dq is tabulated at the nodes
/// by adaptive Simpson on exact eigenvalues and Hermite-interpolated between.
class BandInterpolant {
public:
    /// Band quantities solved directly at one k, signs aligned to the nearest node.
    struct Point {
        double k = 0.0;
        std::vector<double> energy, inverse_mass;  // [n]
        std::vector<cplx> p;                       // [n * n_bands + m]
        cplx momentum(int n, int m) const { return p[std::size_t(n) * energy.size() + std::size_t(m)]; }
    };

    BandInterpolant(const LatticeConfig& cfg, double k_lo, double k_hi, const SolveOptions& opts = {},
                    double step = 1.0 / 256.0, double phase_tol = 1e-10);

    const BandData& data() const { return data_; }
    int n_bands() const { return data_.n_bands(); }
    double k_lo() const { return data_.grid().k_min; }
    double k_hi() const { return data_.grid().k_max; }

    double energy(int n, double k) const;
    double inverse_mass(int n, double k) const;
    cplx momentum(int n, int m, double k) const;
    /// int_{k_lo}^{k} E_n(q) dq
    double antiderivative(int n, double k) const;
    /// direct solve at k (no interpolation error), in the same gauge as the nodes
    Point exact(double k) const;

private:
    struct Loc {
        std::size_t i;
        double t;
    };
    Loc locate(double k) const;
    template <class F>
    auto lagrange(double k, F&& value) const;

    BandData data_;
    SolveOptions opts_;
    double h_ = 0.0;
    std::vector<double> g_;  // [ik][n]
};

}  // namespace onset::bands
