#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "onset/bands.hpp"
#include "onset/csv.hpp"

using namespace onset;
using namespace onset::bands;

namespace {
LatticeConfig lattice(double s) {
    LatticeConfig c;
    c.depth = s;
    return c;
}

// H(k) written out densely, independent of build_hamiltonian
Eigen::MatrixXd dense_hamiltonian(double s, double k, int L) {
    const int n = 2 * L + 1;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (int a = 0; a < n; ++a) {
        const double q = k + 2.0 * (a - L);
        h(a, a) = q * q + s / 2.0;
        if (a + 1 < n) h(a, a + 1) = h(a + 1, a) = s / 4.0;
    }
    return h;
}

BandData single_point(double s, double k, int n_bands = 8, int cutoff = 32) {
    SolveOptions o;
    o.n_bands = n_bands;
    o.cutoff = cutoff;
    return solve_bands(lattice(s), KGrid{k, k, 1}, o);
}
}  // namespace

TEST_CASE("free-particle Hamiltonian at k = 0, L = 2") {
    const auto h = build_hamiltonian(lattice(0.0), 0.0, 2);
    const std::vector<double> diag{16, 4, 0, 4, 16};
    CHECK(h.diagonal == diag);
    for (double e : h.off_diagonal) CHECK(e == 0.0);
}

TEST_CASE("off-diagonal coupling is the Fourier coefficient of the lattice") {
    // (1/pi) int_0^pi s cos^2 z e^{-2iz} dz by the midpoint rule
    const double s = 9.4;
    const int n = 4096;
    double re = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = M_PI * (i + 0.5) / n;
        re += s * std::cos(z) * std::cos(z) * std::cos(2.0 * z);
    }
    re /= n;
    const auto h = build_hamiltonian(lattice(s), 0.37, 6);
    for (double e : h.off_diagonal) CHECK(e == doctest::Approx(re).epsilon(1e-12));
    CHECK(re == doctest::Approx(2.35).epsilon(1e-12));
}

TEST_CASE("L = 8 eigenvalues match a dense L = 64 diagonalization") {
    const auto eig = solve_tridiagonal(build_hamiltonian(lattice(9.4), 0.5, 8), false);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(dense_hamiltonian(9.4, 0.5, 64));
    for (int n = 0; n < 5; ++n) CHECK(std::abs(eig.values[std::size_t(n)] - ref.eigenvalues()(n)) < 1e-10);
}

TEST_CASE("free particle bands") {
    SolveOptions o;
    const auto bd = solve_bands(lattice(0.0), KGrid::brillouin_zone(), o);
    for (std::size_t ik = 0; ik < bd.grid().count; ++ik) {
        const double k = bd.k(ik);
        CHECK(bd.energy(0, ik) == doctest::Approx(k * k).epsilon(1e-12).scale(1e-12));
        if (std::abs(k) < 0.9) CHECK(std::abs(bd.mass_ratio(0, ik) - 1.0) < 1e-6);
    }
    const auto p = single_point(0.0, 0.3);
    CHECK(momentum_matrix(p, 0, 0, 0).real() == doctest::Approx(0.3).epsilon(1e-13));
}

TEST_CASE("weak lattice gap at the zone edge is s/2") {
    const auto bd = single_point(1.0, 1.0);
    CHECK(bd.gap(1, 0, 0) == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("gap at s = 9.4 is of order h/(100 us)") {
    const auto cfg = lattice(9.4);
    const auto bd = single_point(9.4, 0.0);
    const double period = 2.0 * M_PI / cfg.angular_frequency(bd.gap(1, 0, 0));
    CHECK(period > 50e-6);
    CHECK(period < 200e-6);
}

TEST_CASE("band data invariants") {
    for (double s : {0.5, 5.0, 9.4}) {
        const auto bd = solve_bands(lattice(s), KGrid::brillouin_zone());
        const auto ng = bd.basis_size();
        for (std::size_t ik = 0; ik < bd.grid().count; ++ik) {
            for (int n = 0; n < bd.n_bands(); ++n) {
                const auto c = bd.coefficients(n, ik);
                REQUIRE(c.size() == ng);
                double norm = 0.0;
                for (const auto& x : c) norm += std::norm(x);
                CHECK(std::abs(norm - 1.0) < 1e-12);
                if (n > 0) CHECK(bd.energy(n - 1, ik) <= bd.energy(n, ik));
                for (int m = 0; m < bd.n_bands(); ++m)
                    CHECK(std::abs(bd.momentum(n, m, ik) - std::conj(bd.momentum(m, n, ik))) < 1e-10);
            }
        }
    }
}

TEST_CASE("diagonal momentum is the group velocity") {
    const auto cfg = lattice(5.0);
    const auto bd = solve_bands(cfg, KGrid::brillouin_zone());
    const double h = 1e-4;
    for (std::size_t ik = 0; ik < bd.grid().count; ik += 7) {
        const double k = bd.k(ik);
        std::vector<std::vector<double>> e;
        for (int s : {-2, -1, 1, 2}) e.push_back(band_energies(cfg, k + s * h, bd.cutoff(), 4));
        for (int n = 0; n < 4; ++n) {
            // 4th-order central difference of E around k, p_nn = (1/2) dE/dk
            const double d = (e[0][n] - 8 * e[1][n] + 8 * e[2][n] - e[3][n]) / (12 * h);
            CHECK(std::abs(bd.momentum(n, n, ik).real() - 0.5 * d) < 1e-6);
        }
    }
}

TEST_CASE("sum rule oracles") {
    {
        const auto bd = single_point(9.4, 0.0, 10, 32);
        CHECK(sum_rule_residual(bd, 0, 0, 10) < 1e-8);
    }
    {
        const auto bd = single_point(18.0, 0.9, 15, 32);
        CHECK(sum_rule_residual(bd, 0, 0, 15) < 1e-6);
    }
    {
        const auto bd = single_point(0.0, 0.4);
        CHECK(sum_rule_residual(bd, 0, 0, 8) < 1e-6);
    }
}

TEST_CASE("f-sum rule across depths and the zone") {
    for (double s : {0.5, 1.0, 5.0, 9.4, 18.0}) {
        const auto bd = solve_bands(lattice(s), KGrid{-1.0, 1.0, 11});
        for (std::size_t ik = 0; ik < 11; ++ik) CHECK(sum_rule_residual(bd, 0, ik, 8) < 1e-6);
    }
}

TEST_CASE("Lax connection") {
    SUBCASE("diagonal part vanishes at k = 0") {
        const auto bd = solve_bands(lattice(9.4), KGrid::brillouin_zone());
        const std::size_t ic = (bd.grid().count - 1) / 2;
        for (int n = 0; n < bd.n_bands(); ++n) CHECK(std::abs(lax_connection(bd, n, n, ic)->real()) < 1e-12);
    }
    SUBCASE("off-diagonal part against a finite-difference overlap") {
        const double s = 5.0, k = 0.2, dk = 1e-5;
        const int L = 32;
        const auto bd = single_point(s, k, 8, L);
        const auto u1 = bd.coefficients(0, 0);
        const auto u2 = bd.coefficients(1, 0);
        Eigen::VectorXd ref(2 * L + 1);
        for (int g = 0; g < 2 * L + 1; ++g) ref(g) = u2[std::size_t(g)].real();
        const auto band2 = [&](double kk) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_hamiltonian(s, kk, L));
            Eigen::VectorXd v = es.eigenvectors().col(1);
            if (v.dot(ref) < 0) v = -v;
            return v;
        };
        const Eigen::VectorXd du = (band2(k + dk) - band2(k - dk)) / (2 * dk);
        std::complex<double> overlap{};
        for (int g = 0; g < 2 * L + 1; ++g) overlap += std::conj(u1[std::size_t(g)]) * du(g);
        const auto oracle = std::complex<double>(0.0, 1.0) * overlap;
        const auto xi = lax_connection(bd, 0, 1, 0);
        REQUIRE(xi.has_value());
        CHECK(std::abs(*xi - oracle) < 1e-6);
        CHECK(std::abs(std::abs(*xi) - 2.0 * std::abs(bd.momentum(0, 1, 0)) / std::abs(bd.gap(0, 1, 0))) < 1e-12);
    }
    SUBCASE("degenerate pairs are withheld") {
        const auto bd = single_point(0.0, 0.0);
        CHECK_FALSE(lax_connection(bd, 1, 2, 0).has_value());
        CHECK(lax_connection(bd, 0, 1, 0).has_value());
    }
}

TEST_CASE("gauge robustness under random eigenvector phases") {
    const auto cfg = lattice(9.4);
    SolveOptions plain;
    SolveOptions phased;
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> angle(-M_PI, M_PI);
    phased.policy = ExecPolicy::serial;
    phased.phase_hook = [&](std::span<cplx> v) {
        const auto ph = std::polar(1.0, angle(rng));
        for (auto& x : v) x *= ph;
    };
    const auto a = solve_bands(cfg, KGrid::brillouin_zone(), plain);
    const auto b = solve_bands(cfg, KGrid::brillouin_zone(), phased);
    for (std::size_t ik = 0; ik < a.grid().count; ++ik)
        for (int n = 0; n < a.n_bands(); ++n) {
            CHECK(a.energy(n, ik) == b.energy(n, ik));
            CHECK(a.inverse_mass(n, ik) == b.inverse_mass(n, ik));
            CHECK(std::abs(a.lax_diagonal(n, ik) - b.lax_diagonal(n, ik)) < 1e-9);
            for (int m = 0; m < a.n_bands(); ++m) {
                const double pa = std::abs(a.momentum(n, m, ik)), pb = std::abs(b.momentum(n, m, ik));
                CHECK(std::abs(pa - pb) <= 1e-13 * std::max(1.0, pa));
                if (m != n) {
                    const auto la = lax_connection(a, n, m, ik), lb = lax_connection(b, n, m, ik);
                    REQUIRE(la.has_value() == lb.has_value());
                    if (!la) continue;  // degenerate pair
                    const double xa = std::abs(*la), xb = std::abs(*lb);
                    CHECK(std::abs(xa - xb) <= 1e-13 * std::max(1.0, xa));
                }
            }
        }
}

TEST_CASE("parity on the symmetric grid is exact") {
    const auto bd = solve_bands(lattice(9.4), KGrid::brillouin_zone());
    const std::size_t nk = bd.grid().count;
    for (std::size_t ik = 0; ik < nk; ++ik) {
        CHECK(bd.k(nk - 1 - ik) == -bd.k(ik));
        for (int n = 0; n < bd.n_bands(); ++n) {
            CHECK(bd.energy(n, ik) == bd.energy(n, nk - 1 - ik));
            CHECK(bd.mass_ratio(n, ik) == bd.mass_ratio(n, nk - 1 - ik));
        }
    }
}

TEST_CASE("doubling the cutoff leaves the low bands unchanged") {
    for (double s : {1.0, 9.4, 20.0})
        for (double k : {0.0, 0.35, 1.0}) {
            const auto a = band_energies(lattice(s), k, 32, 5);
            const auto b = band_energies(lattice(s), k, 64, 5);
            for (int n = 0; n < 5; ++n) CHECK(std::abs(a[std::size_t(n)] - b[std::size_t(n)]) < 1e-10);
        }
}

TEST_CASE("serial and parallel solves are bitwise identical") {
    SolveOptions ser, par;
    ser.policy = ExecPolicy::serial;
    par.policy = ExecPolicy::parallel;
    const auto a = solve_bands(lattice(9.4), KGrid{-0.7, 1.3, 101}, ser);
    const auto b = solve_bands(lattice(9.4), KGrid{-0.7, 1.3, 101}, par);
    for (std::size_t ik = 0; ik < 101; ++ik)
        for (int n = 0; n < 8; ++n) {
            CHECK(a.energy(n, ik) == b.energy(n, ik));
            CHECK(a.lax_diagonal(n, ik) == b.lax_diagonal(n, ik));
            for (int m = 0; m < 8; ++m) CHECK(a.momentum(n, m, ik) == b.momentum(n, m, ik));
        }
}

TEST_CASE("truncation and argument errors") {
    SolveOptions o;
    o.cutoff = 4;
    o.n_bands = 9;
    CHECK_THROWS_AS(solve_bands(lattice(1.0), KGrid::brillouin_zone(17), o), TruncationError);
    o.cutoff = 3;
    o.n_bands = 2;
    CHECK_THROWS_AS(solve_bands(lattice(1.0), KGrid::brillouin_zone(17), o), TruncationError);
    CHECK_THROWS_AS(solve_bands(lattice(-1.0), KGrid::brillouin_zone(17)), InvalidArgument);
    CHECK_THROWS_AS(solve_bands(lattice(1.0), KGrid{1.0, -1.0, 9}), InvalidArgument);
}

TEST_CASE("band table export") {
    SolveOptions o;
    o.n_bands = 3;
    const auto bd = solve_bands(lattice(9.4), KGrid::brillouin_zone(33), o);
    std::stringstream ss;
    write_band_table(ss, bd);
    const auto t = csv::read(ss);
    CHECK(t.rows() == 33);
    CHECK(t.header.front() == "k");
    CHECK(t.has("E_3"));
    CHECK(t.has("mstar_1"));
    CHECK(t.has("gap_21"));
    CHECK(t.has("abs_p21"));
    CHECK(t.column("gap_21")[16] == bd.gap(1, 0, 16));
}
