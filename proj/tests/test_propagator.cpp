#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "doctest.h"
#include "onset/analytic.hpp"
#include "onset/bands.hpp"
#include "onset/csv.hpp"
#include "onset/propagator.hpp"

using namespace onset;
using namespace onset::propagator;

namespace {
LatticeConfig lattice(double s) {
    LatticeConfig c;
    c.depth = s;
    return c;
}

double width_20um(const LatticeConfig& c) { return c.length_to_recoil(20e-6); }

GridSpec small_grid() { return GridSpec{256, 16}; }
}  // namespace

TEST_CASE("grid and schedule validation") {
    CHECK_THROWS_AS(GridSpec({3, 16}).validate(), InvalidArgument);
    CHECK_THROWS_AS(GridSpec({512, 4}).validate(), InvalidArgument);
    const GridSpec g;
    CHECK(g.size() == 8192);
    CHECK(g.z(g.size() / 2) == 0.0);
    CHECK(g.q(1) == doctest::Approx(2.0 / 512.0));
    CHECK(g.q(g.size() - 1) == doctest::Approx(-2.0 / 512.0));

    const ForceSchedule f{2.0, 1.0, 0.5};
    CHECK(f.at(1.999) == 0.0);
    CHECK(f.at(2.5) == doctest::Approx(0.25));
    CHECK(f.at(3.0) == 0.5);
    CHECK(f.at(10.0) == 0.5);
    double prev = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double v = f.at(1.5 + 0.02 * i);
        CHECK(v >= prev);
        prev = v;
    }
    CHECK_THROWS_AS(ForceSchedule({-1.0, 0.0, 1.0}).validate(), InvalidArgument);
}

TEST_CASE("time-step guards") {
    CHECK_NOTHROW(check_time_step(lattice(9.4), 1.0 / 500));
    CHECK_THROWS_AS(check_time_step(lattice(9.4), 1.0 / 100), InvalidArgument);
    try {
        check_time_step(lattice(300.0), 1.0 / 500);
        FAIL("expected a guard");
    } catch (const InvalidArgument& e) {
        CHECK(std::string(e.what()).find("s*dt/t_r") != std::string::npos);
    }
}

TEST_CASE("ground state construction") {
    SUBCASE("s = 0 gives a single momentum peak") {
        const auto c = lattice(0.0);
        const auto psi = prepare_ground_state(c, GridSpec{}, width_20um(c));
        CHECK(std::abs(psi.norm() - 1.0) < 1e-12);
        const auto ob = observables(psi, c, 0.0);
        CHECK(ob.peak_populations[2] > 1.0 - 1e-12);
        const auto it = std::max_element(ob.momentum_distribution.begin(), ob.momentum_distribution.end());
        CHECK(ob.q[std::size_t(it - ob.momentum_distribution.begin())] == 0.0);
    }
    SUBCASE("sidebands follow the k = 0 plane-wave coefficients") {
        for (double s : {2.0, 9.4, 15.0}) {
            const auto c = lattice(s);
            const auto psi = prepare_ground_state(c, GridSpec{}, width_20um(c));
            const auto bd = bands::solve_bands(c, bands::KGrid{0.0, 0.0, 1});
            const auto coef = bd.coefficients(0, 0);
            const int L = bd.cutoff();
            const double expected = std::norm(coef[std::size_t(L + 1)]) / std::norm(coef[std::size_t(L)]);
            const auto ob = observables(psi, c, 0.0);
            CHECK(ob.peak_populations[3] / ob.peak_populations[2] == doctest::Approx(expected).epsilon(1e-3));
            CHECK(ob.peak_populations[1] / ob.peak_populations[2] == doctest::Approx(expected).epsilon(1e-3));
        }
    }
    SUBCASE("band projection") {
        const auto c = lattice(9.4);
        const auto psi = prepare_ground_state(c, GridSpec{}, width_20um(c));
        const auto pop = band_populations(psi, c, 8);
        CHECK(pop[0] > 0.999);
        double upper = 0.0;
        for (std::size_t n = 1; n < pop.size(); ++n) upper += pop[n];
        CHECK(upper < 1e-3);
    }
    SUBCASE("envelope too narrow") {
        CHECK_THROWS_AS(prepare_ground_state(lattice(9.4), GridSpec{}, 3.0), InvalidArgument);
    }
}

TEST_CASE("free particle accelerates uniformly") {
    const auto c = lattice(0.0);
    const auto psi = prepare_ground_state(c, GridSpec{}, width_20um(c));
    const double F = 0.3;
    EvolveOptions eo;
    eo.t_final = 2.0;
    eo.sample_every = 0.25;
    const auto r = evolve(psi, c, ForceSchedule{0.0, 0.0, F}, eo);
    REQUIRE(r.trace.size() == 9);
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        CHECK(std::abs(r.trace.v[i] - F * r.trace.t[i]) < 1e-11);
        CHECK(std::abs(r.trace.a[i] - F) < 1e-14);
    }
}

TEST_CASE("norm and energy conservation") {
    const auto c = lattice(9.4);
    GroundStateOptions go;
    go.k0 = 0.3;
    const auto start = prepare_ground_state(c, small_grid(), 30.0, go);
    SUBCASE("static lattice at the default step") {
        const auto centred = prepare_ground_state(c, small_grid(), 30.0);
        for (const auto* psi0 : {&start, &centred}) {
            const double e0 = energy(*psi0, c, 0.0);
            const SplitStepPropagator prop(c, small_grid(), ForceSchedule{}, 1.0 / 500);
            Wavefunction psi = *psi0;
            double worst_e = 0.0, worst_n = 0.0;
            for (int i = 0; i < 50; ++i) {
                prop.advance(psi, 400);
                worst_e = std::max(worst_e, std::abs(energy(psi, c, 0.0) - e0));
                worst_n = std::max(worst_n, std::abs(psi.norm() - 1.0));
            }
            CHECK(worst_e < 1e-8);
            CHECK(worst_n < 1e-9);
        }
    }
    SUBCASE("fixed tilt: second-order energy error") {
        // with F != 0 the splitting error in <H> is of order F s dt^2
        const double F = 0.02;
        std::vector<double> err;
        for (double dt : {1.0 / 1000, 1.0 / 2000}) {
            const double e0 = energy(start, c, F);
            const SplitStepPropagator prop(c, small_grid(), ForceSchedule{0.0, 0.0, F}, dt);
            Wavefunction psi = start;
            double worst = 0.0;
            const auto n = std::size_t(std::llround(0.1 / dt));
            for (int i = 0; i < 40; ++i) {
                prop.advance(psi, n);
                worst = std::max(worst, std::abs(energy(psi, c, F) - e0));
            }
            err.push_back(worst);
        }
        CHECK(err[1] < 1e-8);
        CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.1));
    }
}

TEST_CASE("second-order convergence in dt") {
    const auto c = lattice(9.4);
    const auto psi0 = prepare_ground_state(c, GridSpec{}, width_20um(c));
    const double F = c.force_from_acceleration(11.7);
    double v[3];
    for (int j = 0; j < 3; ++j) {
        const double dt = 1.0 / double(500 << j);
        const SplitStepPropagator prop(c, GridSpec{}, ForceSchedule{0.0, 0.0, F}, dt);
        Wavefunction psi = psi0;
        prop.advance(psi, std::size_t(std::llround(1.0 / dt)));
        v[j] = observables(psi, c, F).mean_velocity;
    }
    const double d1 = v[0] - v[1], d2 = v[1] - v[2];
    CHECK(d1 / d2 == doctest::Approx(4.0).epsilon(0.05));
    // measured 7.2e-7 v_r at the default step (see notes)
    CHECK(std::abs(d1) < 1e-6);
}

TEST_CASE("bare-mass response at the onset") {
    const double accel = 11.7;
    for (double s : {2.0, 9.4, 15.0}) {
        const auto c = lattice(s);
        const auto psi = prepare_ground_state(c, GridSpec{}, width_20um(c));
        const double F = c.force_from_acceleration(accel);
        EvolveOptions eo;
        eo.t_final = 0.02;
        const auto sched = ForceSchedule{0.01, 0.0, F};
        const auto r = evolve(psi, c, sched, eo);
        // before the onset the packet is at rest
        CHECK(std::abs(r.trace.a[0]) < 1e-8 * F);
        CHECK(std::abs(r.trace.a[4]) < 1e-8 * F);
        REQUIRE(r.trace.t[5] == doctest::Approx(0.01));
        CHECK(std::abs(r.trace.a[5] / F - 1.0) < 1e-3);
        CHECK(std::abs(r.trace.a[6] / F - 1.0) < 1e-3);
    }
}

namespace {
struct OracleRun {
    VelocityTrace prop, pert;
};

OracleRun oracle_run(double accel, double sigma_k, double t_end_s) {
    const auto c = lattice(9.4);
    const double F = c.force_from_acceleration(accel);
    const double t_end = c.time_to_recoil(t_end_s);
    const auto psi = prepare_ground_state(c, GridSpec{}, 0.5 / sigma_k);
    EvolveOptions eo;
    eo.t_final = t_end;
    eo.sample_every = 0.02;
    OracleRun out;
    out.prop = evolve(psi, c, ForceSchedule{0.0, 0.0, F}, eo).trace;
    analytic::WavepacketSpec w;
    w.sigma_k = sigma_k;
    const analytic::Model m(c, w, F, t_end);
    out.pert = analytic::perturbative_velocity_trace(m, out.prop.t);
    return out;
}

double rms_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s / double(a.size()));
}

double range(const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}
}  // namespace

TEST_CASE("split-step matches direct integration of a single quasi-momentum") {
    // i dc/dt = H(k0 + F t) c in the plane-wave basis, exponential midpoint rule
    const auto c = lattice(9.4);
    const double F = c.force_from_acceleration(11.7);
    const int L = 12;
    const int n = 2 * L + 1;
    const auto ham = [&](double k) {
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            h(i, i) = std::pow(k + 2.0 * (i - L), 2) + 0.5 * c.depth;
            if (i + 1 < n) h(i, i + 1) = h(i + 1, i) = 0.25 * c.depth;
        }
        return h;
    };
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ham(0.0));
    Eigen::VectorXcd coef = es.eigenvectors().col(0).cast<std::complex<double>>();
    const double h = 2.5e-4;

    const double sigma_k = 0.005;
    const auto psi = prepare_ground_state(c, GridSpec{}, 0.5 / sigma_k);
    EvolveOptions eo;
    eo.t_final = 3.0;
    eo.sample_every = 0.25;
    const auto tr = evolve(psi, c, ForceSchedule{0.0, 0.0, F}, eo).trace;

    double t = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        while (t < tr.t[i] - 1e-12) {
            es.compute(ham(F * (t + 0.5 * h)));
            const Eigen::VectorXcd phase =
                (es.eigenvalues() * std::complex<double>(0.0, -h)).array().exp().matrix();
            coef = es.eigenvectors() * phase.asDiagonal() * (es.eigenvectors().transpose() * coef);
            t += h;
        }
        std::complex<double> e2{};
        double v = 0.0;
        for (int j = 0; j < n; ++j) {
            v += (F * t + 2.0 * (j - L)) * std::norm(coef(j));
            if (j + 1 < n) e2 += std::conj(coef(j + 1)) * coef(j);
        }
        const double a = F + c.depth * e2.imag();
        CHECK(std::abs(tr.v[i] - v) < 2e-4);
        CHECK(std::abs(tr.a[i] - a) < 2e-3 * F);
    }
}

TEST_CASE("velocity agrees with the first-order oracle") {
    const auto r = oracle_run(11.7, 0.02, 300e-6);
    CHECK(rms_diff(r.prop.v, r.pert.v) < 0.03 * range(r.prop.v));
}

TEST_CASE("acceleration agrees with the first-order oracle at small force") {
    const auto c = lattice(9.4);
    const double accel = 11.7 / 4;
    const auto r = oracle_run(accel, 0.02, 300e-6);
    CHECK(rms_diff(r.prop.a, r.pert.a) < 0.03 * c.force_from_acceleration(accel));
}

// Known deviation: at 11.7 m/s^2 higher orders in F give 4.3% of F (see notes).
TEST_CASE("acceleration agrees with the first-order oracle at 11.7 m/s^2" * doctest::may_fail()) {
    const auto c = lattice(9.4);
    const auto r = oracle_run(11.7, 0.02, 300e-6);
    CHECK(rms_diff(r.prop.a, r.pert.a) < 0.03 * c.force_from_acceleration(11.7));
}

TEST_CASE("observables") {
    const auto c = lattice(9.4);
    const auto psi = prepare_ground_state(c, GridSpec{}, width_20um(c));
    SUBCASE("no force, no acceleration") {
        GroundStateOptions go;
        go.k0 = 0.25;
        const auto moving = prepare_ground_state(c, GridSpec{}, width_20um(c), go);
        const auto ob = observables(moving, c, 0.0);
        CHECK(std::abs(ob.mean_acceleration) < 1e-8 * c.force_from_acceleration(11.7));
    }
    SUBCASE("peak windows cover the distribution") {
        ObservableOptions oo;
        oo.peak_orders = {-2, -1, 0, 1};
        const auto ob4 = observables(psi, c, 0.0, oo);
        double s4 = 0.0;
        for (double p : ob4.peak_populations) s4 += p;
        // four windows miss the +4 hbar k_r order
        CHECK(s4 < 0.999);
        oo.peak_orders = {-3, -2, -1, 0, 1, 2, 3};
        const auto ob7 = observables(psi, c, 0.0, oo);
        double s7 = 0.0;
        for (double p : ob7.peak_populations) s7 += p;
        CHECK(std::abs(s7 - 1.0) < 1e-6);
        double integral = 0.0;
        for (double d : ob7.momentum_distribution) integral += d * GridSpec{}.dq();
        CHECK(integral == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("constant potential offset changes nothing observable") {
        const double F = 0.1;
        SplitStepPropagator a(c, GridSpec{}, ForceSchedule{0.0, 0.0, F}, 1.0 / 500);
        SplitStepPropagator b(c, GridSpec{}, ForceSchedule{0.0, 0.0, F}, 1.0 / 500);
        b.set_energy_offset(3.7);
        Wavefunction pa = psi, pb = psi;
        a.advance(pa, 500);
        b.advance(pb, 500);
        const auto oa = observables(pa, c, F), ob = observables(pb, c, F);
        CHECK(oa.mean_velocity == doctest::Approx(ob.mean_velocity).epsilon(1e-10));
        CHECK(oa.mean_acceleration == doctest::Approx(ob.mean_acceleration).epsilon(1e-10));
        for (std::size_t i = 0; i < oa.peak_populations.size(); ++i)
            CHECK(oa.peak_populations[i] == doctest::Approx(ob.peak_populations[i]).epsilon(1e-10));
    }
}

TEST_CASE("serial and parallel evolution agree bitwise") {
    const auto c = lattice(9.4);
    const auto psi = prepare_ground_state(c, GridSpec{}, width_20um(c));
    EvolveOptions eo;
    eo.t_final = 0.5;
    eo.sample_every = 0.1;
    eo.policy = ExecPolicy::serial;
    const auto sched = ForceSchedule{0.1, 0.1, 0.2};
    const auto rs = evolve(psi, c, sched, eo);
    eo.policy = ExecPolicy::parallel;
    const auto rp = evolve(psi, c, sched, eo);
    CHECK(rs.final_state.data() == rp.final_state.data());
    CHECK(rs.trace.v == rp.trace.v);
    CHECK(rs.trace.a == rp.trace.a);
}

TEST_CASE("snapshots and sampling cadence") {
    const auto c = lattice(5.0);
    const auto psi = prepare_ground_state(c, small_grid(), 30.0);
    EvolveOptions eo;
    eo.t_final = 1.0;
    eo.sample_every = 0.1;
    eo.snapshot_every = 0.5;
    const auto r = evolve(psi, c, ForceSchedule{0.0, 0.0, 0.05}, eo);
    CHECK(r.trace.size() == 11);
    REQUIRE(r.snapshots.size() == 3);
    CHECK(r.snapshots[1].time() == doctest::Approx(0.5));
    CHECK(r.final_state.time() == doctest::Approx(1.0));
    std::ostringstream os;
    write_trace_csv(os, r.trace);
    std::istringstream is(os.str());
    const auto tab = csv::read(is);
    CHECK(tab.rows() == 11);
    CHECK(tab.has("p_-2"));
    CHECK(tab.column("v") == r.trace.v);
}

TEST_CASE("box guard") {
    const auto c = lattice(9.4);
    const GridSpec tight{128, 16};
    const auto psi = prepare_ground_state(c, tight, width_20um(c));
    EvolveOptions eo;
    eo.t_final = 0.1;
    CHECK_THROWS_AS(evolve(psi, c, ForceSchedule{}, eo), BoxTooSmallError);
}

TEST_CASE("time of flight") {
    const auto c = lattice(9.4);
    const auto psi = prepare_ground_state(c, GridSpec{}, width_20um(c));
    const auto p = tof_expand(psi, c);
    double integral = 0.0;
    for (double d : p.density) integral += d * 1.0;
    CHECK(std::abs(integral - 1.0) < 1e-9);
    // local maxima: central order and the +-2 hbar k_r orders
    std::vector<double> peaks;
    for (std::size_t i = 1; i + 1 < p.x.size(); ++i)
        if (p.density[i] > p.density[i - 1] && p.density[i] >= p.density[i + 1] && p.density[i] > 1e-4)
            peaks.push_back(p.x[i]);
    REQUIRE(peaks.size() == 3);
    const double sep = 2.0 * c.recoil_velocity() * 20e-3 * 1e6;
    CHECK(sep == doctest::Approx(172.0).epsilon(0.005));
    CHECK(std::abs(peaks[2] - peaks[1] - sep) <= 1.0);
    CHECK(std::abs(peaks[1] - peaks[0] - sep) <= 1.0);

    const auto c0 = lattice(0.0);
    const auto free = tof_expand(prepare_ground_state(c0, GridSpec{}, width_20um(c0)), c0);
    const auto it = std::max_element(free.density.begin(), free.density.end());
    CHECK(std::abs(free.x[std::size_t(it - free.density.begin())]) <= 0.5);
}

TEST_CASE("ramped loading approaches the band-1 state") {
    const auto c = lattice(5.0);
    const auto psi = prepare_ramped_state(c, small_grid(), 30.0, 20.0, 1.0 / 500);
    CHECK(std::abs(psi.norm() - 1.0) < 1e-9);
    const auto pop = band_populations(psi, c, 4);
    CHECK(pop[0] > 0.999);
}
