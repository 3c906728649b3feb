#include "onset/bands.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <ostream>

#include "onset/csv.hpp"

namespace onset::bands {

namespace {
constexpr std::size_t kMaxStencilBands = 256;
}

double KGrid::at(std::size_t i) const {
    if (count == 1) return k_min;
    if (symmetric()) {
        // built from the centre so that at(count-1-i) == -at(i) bit for bit
        const auto ic = static_cast<long>((count - 1) / 2);
        return double(static_cast<long>(i) - ic) * (k_max / double(ic));
    }
    if (i + 1 == count) return k_max;
    return k_min + spacing() * double(i);
}

void KGrid::validate() const {
    std::string problems;
    if (count == 0) problems += " count must be >= 1;";
    if (!std::isfinite(k_min) || !std::isfinite(k_max)) problems += " bounds must be finite;";
    if (count > 1 && !(k_max > k_min)) problems += " k_max must exceed k_min;";
    if (!problems.empty()) throw InvalidArgument("invalid k grid:" + problems);
}

TridiagonalMatrix build_hamiltonian(const LatticeConfig& cfg, double k, int cutoff) {
    cfg.validate();
    if (cutoff < 1) throw InvalidArgument("build_hamiltonian: cutoff must be >= 1");
    if (!std::isfinite(k)) throw InvalidArgument("build_hamiltonian: k must be finite");
    const std::size_t n = std::size_t(2 * cutoff + 1);
    TridiagonalMatrix h;
    h.diagonal.resize(n);
    h.off_diagonal.assign(n - 1, 0.25 * cfg.depth);
    for (int l = -cutoff; l <= cutoff; ++l) {
        const double q = k + 2.0 * l;
        h.diagonal[std::size_t(l + cutoff)] = q * q + 0.5 * cfg.depth;
    }
    return h;
}

std::vector<double> band_energies(const LatticeConfig& cfg, double k, int cutoff, int n_bands) {
    if (n_bands < 1 || n_bands > 2 * cutoff)
        throw TruncationError("band_energies: need 1 <= n_bands <= 2*cutoff");
    auto eig = solve_tridiagonal(build_hamiltonian(cfg, k, cutoff), false);
    eig.values.resize(std::size_t(n_bands));
    return eig.values;
}

void gauge_fix(std::span<cplx> v) {
    if (v.empty()) return;
    double vmax = 0.0;
    for (const auto& c : v) vmax = std::max(vmax, std::abs(c));
    if (vmax == 0.0) return;
    // first component within rounding of the maximum, so near-ties between
    // +l and -l coefficients resolve the same way whatever the input phase
    std::size_t pick = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (std::abs(v[i]) >= vmax * (1.0 - 1e-9)) {
            pick = i;
            break;
        }
    const cplx phase = std::conj(v[pick]) / std::abs(v[pick]);
    for (auto& c : v) c *= phase;
    v[pick] = cplx(v[pick].real(), 0.0);
}

std::span<const cplx> BandData::coefficients(int n, std::size_t ik) const {
    const std::size_t ng = basis_size();
    return {coeffs_.data() + (ik * nb() + std::size_t(n)) * ng, ng};
}

BandData solve_bands(const LatticeConfig& cfg, const KGrid& grid, const SolveOptions& opts) {
    cfg.validate();
    grid.validate();
    const int L = opts.cutoff;
    if (L < 4) throw TruncationError("solve_bands: cutoff must be >= 4");
    if (opts.n_bands < 1 || opts.n_bands > 2 * L)
        throw TruncationError("solve_bands: n_bands = " + std::to_string(opts.n_bands) +
                              " exceeds 2*cutoff = " + std::to_string(2 * L) +
                              "; raise the plane-wave cutoff");
    if (opts.n_bands > int(kMaxStencilBands))
        throw InvalidArgument("solve_bands: at most " + std::to_string(kMaxStencilBands) + " bands");
    if (!(opts.mass_step > 0.0)) throw InvalidArgument("solve_bands: mass_step must be > 0");
    if (!(opts.degeneracy_floor >= 0.0))
        throw InvalidArgument("solve_bands: degeneracy_floor must be >= 0");

    BandData bd;
    bd.config_ = cfg;
    bd.grid_ = grid;
    bd.n_bands_ = opts.n_bands;
    bd.cutoff_ = L;
    bd.floor_ = opts.degeneracy_floor;

    const std::size_t nk = grid.count;
    const std::size_t nb = std::size_t(opts.n_bands);
    const std::size_t ng = std::size_t(2 * L + 1);
    bd.energies_.assign(nk * nb, 0.0);
    bd.coeffs_.assign(nk * nb * ng, cplx{});
    bd.inv_mass_.assign(nk * nb, 0.0);
    bd.p_.assign(nk * nb * nb, cplx{});
    bd.xi_diag_.assign(nk * nb, std::numeric_limits<double>::quiet_NaN());

    const bool mirror = grid.symmetric() && nk >= 3;
    const std::size_t first = mirror ? (nk - 1) / 2 : 0;
    const double h = opts.mass_step;

    std::vector<std::exception_ptr> failures(nk);
    const auto solve_point = [&](std::size_t ik) {
        const double k = grid.at(ik);
        try {
            const auto eig = solve_tridiagonal_lowest(build_hamiltonian(cfg, k, L), nb);
            // m0/m* = (1/2) d2E/dk2 = d p_nn/dk, 5-point stencil on exact p_nn
            const double shifts[4] = {-2.0 * h, -h, h, 2.0 * h};
            double pside[4][kMaxStencilBands];
            for (int s = 0; s < 4; ++s) {
                const double ks = k + shifts[s];
                const auto es = solve_tridiagonal_lowest(build_hamiltonian(cfg, ks, L), nb);
                for (std::size_t n = 0; n < nb; ++n) {
                    double p = 0.0;
                    for (std::size_t g = 0; g < ng; ++g) {
                        const double v = es.vector(g, n);
                        p += v * v * (ks + 2.0 * (double(g) - double(L)));
                    }
                    pside[s][n] = p;
                }
            }
            for (std::size_t n = 0; n < nb; ++n) {
                bd.energies_[ik * nb + n] = eig.values[n];
                bd.inv_mass_[ik * nb + n] =
                    (pside[0][n] - 8.0 * pside[1][n] + 8.0 * pside[2][n] - pside[3][n]) / (12.0 * h);
                cplx* c = bd.coeffs_.data() + (ik * nb + n) * ng;
                for (std::size_t g = 0; g < ng; ++g) c[g] = eig.vector(g, n);
                std::span<cplx> v(c, ng);
                if (opts.phase_hook) opts.phase_hook(v);
                gauge_fix(v);
            }
        } catch (const EigenSolveError& e) {
            failures[ik] = std::make_exception_ptr(BandSolveError(
                "eigensolve did not converge at k = " + std::to_string(k) + " (band index " +
                    std::to_string(e.index() + 1) + ")",
                k, e.index()));
        } catch (...) {
            failures[ik] = std::current_exception();
        }
    };

    if (opts.policy == ExecPolicy::parallel) {
#pragma omp parallel for schedule(dynamic, 4)
        for (std::size_t ik = first; ik < nk; ++ik) solve_point(ik);
    } else {
        for (std::size_t ik = first; ik < nk; ++ik) solve_point(ik);
    }
    for (const auto& f : failures)
        if (f) std::rethrow_exception(f);

    // sign continuity along k, anchored at the node nearest k = 0
    const auto coeff = [&](std::size_t ik, std::size_t n) {
        return bd.coeffs_.data() + (ik * nb + n) * ng;
    };
    const auto align = [&](std::size_t ref, std::size_t ik) {
        for (std::size_t n = 0; n < nb; ++n) {
            const cplx* a = coeff(ref, n);
            cplx* b = coeff(ik, n);
            cplx ov{};
            for (std::size_t g = 0; g < ng; ++g) ov += std::conj(a[g]) * b[g];
            if (ov.real() < 0.0)
                for (std::size_t g = 0; g < ng; ++g) b[g] = -b[g];
        }
    };
    std::size_t anchor = first;
    if (!mirror) {
        double best = std::abs(grid.at(0));
        for (std::size_t ik = 1; ik < nk; ++ik)
            if (std::abs(grid.at(ik)) < best) {
                best = std::abs(grid.at(ik));
                anchor = ik;
            }
    }
    for (std::size_t ik = anchor + 1; ik < nk; ++ik) align(ik - 1, ik);
    for (std::size_t ik = anchor; ik-- > first;) align(ik + 1, ik);

    if (mirror) {
        // c_n(G, -k) = sigma_n c_n(-G, k), sigma_n the parity of band n at k = 0
        const std::size_t ic = first;
        for (std::size_t n = 0; n < nb; ++n) {
            const cplx* c0 = coeff(ic, n);
            double par = 0.0;
            for (std::size_t g = 0; g < ng; ++g) par += (std::conj(c0[g]) * c0[ng - 1 - g]).real();
            const double sigma = par < -0.5 ? -1.0 : 1.0;
            for (std::size_t ik = 0; ik < ic; ++ik) {
                const std::size_t jk = nk - 1 - ik;
                bd.energies_[ik * nb + n] = bd.energies_[jk * nb + n];
                bd.inv_mass_[ik * nb + n] = bd.inv_mass_[jk * nb + n];
                const cplx* src = coeff(jk, n);
                cplx* dst = coeff(ik, n);
                for (std::size_t g = 0; g < ng; ++g) dst[g] = sigma * src[ng - 1 - g];
            }
        }
    }

    const auto fill_p = [&](std::size_t ik) {
        const double k = grid.at(ik);
        for (std::size_t n = 0; n < nb; ++n) {
            const cplx* a = coeff(ik, n);
            for (std::size_t m = n; m < nb; ++m) {
                const cplx* b = coeff(ik, m);
                cplx acc{};
                for (std::size_t g = 0; g < ng; ++g) {
                    const double q = k + 2.0 * (double(g) - double(L));
                    acc += std::conj(a[g]) * q * b[g];
                }
                if (m == n) acc = cplx(acc.real(), 0.0);
                bd.p_[(ik * nb + n) * nb + m] = acc;
                bd.p_[(ik * nb + m) * nb + n] = std::conj(acc);
            }
        }
        if (nk < 2) return;
        const std::size_t lo = ik == 0 ? 0 : ik - 1;
        const std::size_t hi = ik + 1 == nk ? ik : ik + 1;
        const double dk = grid.at(hi) - grid.at(lo);
        for (std::size_t n = 0; n < nb; ++n) {
            const cplx* c = coeff(ik, n);
            const cplx* cp = coeff(hi, n);
            const cplx* cm = coeff(lo, n);
            cplx acc{};
            for (std::size_t g = 0; g < ng; ++g) acc += std::conj(c[g]) * (cp[g] - cm[g]);
            // xi = i <u|du/dk>, real for normalized u
            bd.xi_diag_[ik * nb + n] = -acc.imag() / dk;
        }
    };
    if (opts.policy == ExecPolicy::parallel) {
#pragma omp parallel for schedule(static)
        for (std::size_t ik = 0; ik < nk; ++ik) fill_p(ik);
    } else {
        for (std::size_t ik = 0; ik < nk; ++ik) fill_p(ik);
    }
    return bd;
}

namespace {
void check_indices(const BandData& bd, int n, int m, std::size_t ik) {
    if (n < 0 || m < 0 || n >= bd.n_bands() || m >= bd.n_bands())
        throw InvalidArgument("band index out of range");
    if (ik >= bd.grid().count) throw InvalidArgument("k index out of range");
}
}  // namespace

cplx momentum_matrix(const BandData& bands, int n, int m, std::size_t ik) {
    check_indices(bands, n, m, ik);
    return bands.momentum(n, m, ik);
}

std::optional<cplx> lax_connection(const BandData& bands, int n, int m, std::size_t ik) {
    check_indices(bands, n, m, ik);
    if (n == m) return cplx(bands.lax_diagonal(n, ik), 0.0);
    const double e = bands.gap(n, m, ik);
    if (std::abs(e) < bands.degeneracy_floor()) return std::nullopt;
    return 2.0 * bands.momentum(n, m, ik) / (cplx(0.0, 1.0) * e);
}

double sum_rule_residual(const BandData& bands, int band, std::size_t ik, int n_terms) {
    check_indices(bands, band, band, ik);
    if (n_terms < 1 || n_terms > bands.n_bands())
        throw InvalidArgument("sum_rule_residual: n_terms must be in [1, n_bands]");
    double total = bands.inverse_mass(band, ik);
    for (int n = 0; n < n_terms; ++n) {
        if (n == band) continue;
        const double gap = bands.gap(n, band, ik);
        if (std::abs(gap) < bands.degeneracy_floor()) continue;
        total += 4.0 * std::norm(bands.momentum(n, band, ik)) / gap;
    }
    return std::abs(total - 1.0);
}

void write_band_table(std::ostream& out, const BandData& bands) {
    const int nb = bands.n_bands();
    std::vector<std::string> header{"k"};
    for (int n = 1; n <= nb; ++n) header.push_back("E_" + std::to_string(n));
    for (int n = 1; n <= nb; ++n) header.push_back("mstar_" + std::to_string(n));
    header.push_back("gap_21");
    header.push_back("abs_p21");
    csv::Writer w(out, header);
    std::vector<double> row;
    for (std::size_t ik = 0; ik < bands.grid().count; ++ik) {
        row.clear();
        row.push_back(bands.k(ik));
        for (int n = 0; n < nb; ++n) row.push_back(bands.energy(n, ik));
        for (int n = 0; n < nb; ++n) row.push_back(bands.mass_ratio(n, ik));
        const bool two = nb >= 2;
        row.push_back(two ? bands.gap(1, 0, ik) : std::numeric_limits<double>::quiet_NaN());
        row.push_back(two ? std::abs(bands.momentum(1, 0, ik))
                          : std::numeric_limits<double>::quiet_NaN());
        w.row(row);
    }
}

}  // namespace onset::bands
