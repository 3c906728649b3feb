#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "onset/parallel.hpp"
#include "onset/tridiagonal.hpp"
#include "onset/units.hpp"

namespace onset::bands {

using cplx = std::complex<double>;

/// Uniform crystal-momentum grid in units of k_r. The default zone grid is
/// the inclusive symmetric grid over [-1, 1]; arbitrary intervals (including
/// paths that leave the first zone) are allowed.
struct KGrid {
    double k_min = -1.0;
    double k_max = 1.0;
    std::size_t count = 257;

    static KGrid brillouin_zone(std::size_t count = 257) { return {-1.0, 1.0, count}; }

    double spacing() const { return count > 1 ? (k_max - k_min) / double(count - 1) : 0.0; }
    double at(std::size_t i) const;
    /// Symmetric about k = 0 with a node at k = 0.
    bool symmetric() const { return count % 2 == 1 && k_min == -k_max; }
    void validate() const;
};

/// Hamiltonian H(k) in the plane-wave basis k + 2l, l = -cutoff..cutoff, in E_r:
/// diagonal (k + 2l)^2 + s/2, first off-diagonals s/4. The force is not included.
/// Outside |k| <= 1 this is the periodic continuation (shifted basis).
TridiagonalMatrix build_hamiltonian(const LatticeConfig& cfg, double k, int cutoff);

/// Lowest n_bands eigenvalues of H(k), in E_r.
std::vector<double> band_energies(const LatticeConfig& cfg, double k, int cutoff, int n_bands);

/// Rotates v so that its largest-modulus component is real and positive.
void gauge_fix(std::span<cplx> v);

struct SolveOptions {
    int cutoff = 32;
    int n_bands = 8;
    double mass_step = 2.5e-4;       // k step of the 5-point stencil on dE/dk = 2 p_nn
    double degeneracy_floor = 1e-6; // |E_nm| below this withholds xi_nm
    ExecPolicy policy = ExecPolicy::parallel;
    /// Applied to each raw eigenvector before gauge fixing (tests use it to
    /// inject arbitrary global phases).
    std::function<void(std::span<cplx>)> phase_hook;
};

class BandSolveError : public Error {
public:
    BandSolveError(const std::string& what, double k, std::size_t band)
        : Error(what), k_(k), band_(band) {}
    double k() const { return k_; }
    std::size_t band() const { return band_; }

private:
    double k_;
    std::size_t band_;
};

/// Raised when the plane-wave cutoff cannot represent the requested bands.
class TruncationError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

/// Band quantities on a k grid. Immutable once built by solve_bands.
/// Band indices are 0-based (0 = ground band).
class BandData {
public:
    const LatticeConfig& config() const { return config_; }
    const KGrid& grid() const { return grid_; }
    int n_bands() const { return n_bands_; }
    int cutoff() const { return cutoff_; }
    std::size_t basis_size() const { return std::size_t(2 * cutoff_ + 1); }
    double degeneracy_floor() const { return floor_; }

    double k(std::size_t ik) const { return grid_.at(ik); }
    double energy(int n, std::size_t ik) const { return energies_[ik * nb() + std::size_t(n)]; }
    /// Plane-wave coefficients c_n(G = 2l, k), l = -cutoff..cutoff.
    std::span<const cplx> coefficients(int n, std::size_t ik) const;
    /// m0 / m*_n(k) = (1/2) d^2E_n/dk^2 in recoil units.
    double inverse_mass(int n, std::size_t ik) const { return inv_mass_[ik * nb() + std::size_t(n)]; }
    /// m*_n(k) / m0 (infinite at inflection points).
    double mass_ratio(int n, std::size_t ik) const { return 1.0 / inverse_mass(n, ik); }
    /// E_n(k) - E_m(k) in E_r.
    double gap(int n, int m, std::size_t ik) const { return energy(n, ik) - energy(m, ik); }
    /// p_nm(k) in hbar k_r.
    cplx momentum(int n, int m, std::size_t ik) const {
        return p_[(ik * nb() + std::size_t(n)) * nb() + std::size_t(m)];
    }
    /// Diagonal Lax connection xi_nn(k) in 1/k_r (gauge-fixed central differences).
    double lax_diagonal(int n, std::size_t ik) const { return xi_diag_[ik * nb() + std::size_t(n)]; }

private:
    friend BandData solve_bands(const LatticeConfig&, const KGrid&, const SolveOptions&);
    std::size_t nb() const { return std::size_t(n_bands_); }

    LatticeConfig config_;
    KGrid grid_;
    int n_bands_ = 0;
    int cutoff_ = 0;
    double floor_ = 0.0;
    std::vector<double> energies_;
    std::vector<cplx> coeffs_;  // [ik][n][G]
    std::vector<double> inv_mass_;
    std::vector<cplx> p_;
    std::vector<double> xi_diag_;
};

BandData solve_bands(const LatticeConfig& cfg, const KGrid& grid, const SolveOptions& opts = {});

/// p_nm(k) = sum_G c*_n(G,k) (k + G) c_m(G,k), in hbar k_r.
cplx momentum_matrix(const BandData& bands, int n, int m, std::size_t ik);

/// Lax connection xi_nm(k) in 1/k_r. Off-diagonal: hbar p_nm / (i m0 E_nm),
/// i.e. 2 p_nm / (i E_nm) in recoil units; empty when |E_nm| is below the
/// degeneracy floor. Diagonal: the stored gauge-fixed finite difference.
std::optional<cplx> lax_connection(const BandData& bands, int n, int m, std::size_t ik);

/// |m0/m*_N + sum_{n != N, n < n_terms} (2/m0) |p_nN|^2 / Delta_nN - 1|.
/// n_terms counts bands from the ground band up (0-based indices below n_terms).
double sum_rule_residual(const BandData& bands, int band, std::size_t ik, int n_terms);

/// CSV band table: k/k_r, E_n/E_r per band, m*_n/m0 per band, Delta_21/E_r, |p_21|/hbar k_r.
void write_band_table(std::ostream& out, const BandData& bands);

}  // namespace onset::bands
