// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
// Usage: acceptance [output-dir]
//
// Exit status counts failures outside `known_red` (criteria documented as
// unattainable in the notes); those still print FAIL.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "onset/analysis.hpp"
#include "onset/analytic.hpp"
#include "onset/bands.hpp"
#include "onset/csv.hpp"
#include "onset/propagator.hpp"
#include "onset/scenario.hpp"

using namespace onset;
namespace fs = std::filesystem;
using json = scenario::json;

namespace {

// tolerances
constexpr double kSumRule = 1e-6;
constexpr double kOnset = 3e-3;
constexpr double kSlope = 0.01;
constexpr double kInterceptSigmas = 2.0;
constexpr double kDynMass = 0.05;
constexpr double kEffMass = 0.08;
constexpr double kOracleRms = 0.03;
constexpr double kBlochTarget = 8.5e3, kBlochTol = 0.02;
constexpr double kPeriodTarget = 0.74e-3, kPeriodTol = 0.02;
constexpr double kGapTimeLo = 50e-6, kGapTimeHi = 200e-6;

const std::set<int> known_red = {4};

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

LatticeConfig lattice(double s) {
    LatticeConfig c;
    c.depth = s;
    return c;
}

json run_builtin(const std::string& name, const fs::path& root) {
    const auto sc = scenario::parse(scenario::builtin(name));
    scenario::RunOptions o;
    o.out = root / name;
    fs::remove_all(o.out);
    const auto b = scenario::run(sc, o);
    if (!b.failures.empty()) throw Error(name + ": " + b.failures.front());
    return b.summary;
}

csv::Table summary_table(const fs::path& root, const std::string& name) {
    return csv::read_file((root / name / "summary.csv").string());
}

// ---------------------------------------------------------------- criteria

Outcome c1_sum_rule() {
    double worst = 0.0;
    for (double s : {0.5, 1.0, 5.0, 9.4, 18.0}) {
        const auto bd = bands::solve_bands(lattice(s), bands::KGrid{-1.0, 1.0, 11});
        for (std::size_t ik = 0; ik < 11; ++ik) worst = std::max(worst, bands::sum_rule_residual(bd, 0, ik, 8));
    }
    return {worst < kSumRule, fmt("worst residual %.2e (limit %.0e), s in {0.5,1,5,9.4,18}, 11 k, 8 bands", worst, kSumRule)};
}

Outcome c2_onset() {
    Outcome o;
    std::ostringstream d;
    for (double s : {2.0, 5.0, 9.4, 15.0}) {
        const auto c = lattice(s);
        const double F = c.force_from_acceleration(11.7);
        const auto psi = propagator::prepare_ground_state(c, propagator::GridSpec{}, c.length_to_recoil(20e-6));
        propagator::EvolveOptions eo;
        eo.t_final = 0.02;
        const auto r = propagator::evolve(psi, c, propagator::ForceSchedule{0.01, 0.0, F}, eo);
        std::size_t i = 0;
        while (r.trace.t[i] < 0.01 - 1e-12) ++i;
        // the onset sample and the one a step later
        const double dev = std::max(std::abs(r.trace.a[i] / F - 1.0), std::abs(r.trace.a[i + 1] / F - 1.0));
        o.pass = o.pass && dev < kOnset;
        d << fmt("s=%g: %.2e ", s, dev);
    }
    o.detail = "|a/(F/m0) - 1| at switch-on and one step later: " + d.str() + fmt("(limit %.1e)", kOnset);
    return o;
}

Outcome c3_bloch(const fs::path& root) {
    const auto t = summary_table(root, "fig3");
    std::vector<double> F, w, sw;
    for (std::size_t i = 0; i < t.rows(); ++i)
        if (t.column("duration_us")[i] > 1000.0 && t.column("depth")[i] == 9.4) {
            F.push_back(t.column("acceleration_m_s2")[i]);
            w.push_back(t.column("omega_B_rad_s")[i]);
            sw.push_back(t.column("sigma_omega_B_rad_s")[i]);
        }
    if (F.size() != 5) return {false, "fig3 bundle lacks five force points at s = 9.4"};
    // weighted straight line
    Eigen::Matrix2d n = Eigen::Matrix2d::Zero();
    Eigen::Vector2d b = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < F.size(); ++i) {
        const double wt = 1.0 / (sw[i] * sw[i]);
        Eigen::Vector2d x(F[i], 1.0);
        n += wt * x * x.transpose();
        b += wt * w[i] * x;
    }
    const Eigen::Matrix2d cov = n.inverse();
    const Eigen::Vector2d p = cov * b;
    const double slope_theory = lattice(9.4).bloch_frequency(1.0);
    const double rel = p[0] / slope_theory - 1.0;
    const double z = p[1] / std::sqrt(cov(1, 1));
    return {std::abs(rel) < kSlope && std::abs(z) < kInterceptSigmas,
            fmt("slope %.2f vs d m0/hbar %.2f rad/s per m/s^2 (%+.2f%%), intercept %.1f rad/s", p[0],
                slope_theory, 100.0 * rel, p[1]) +
                fmt(" = %.2f sigma", z)};
}

Outcome c4_gap(const fs::path& root) {
    const auto t = summary_table(root, "fig3");
    Outcome o;
    std::ostringstream d;
    bool in_range = true, independent = true;
    std::map<double, std::vector<std::size_t>> by_depth;
    for (std::size_t i = 0; i < t.rows(); ++i)
        if (t.column("duration_us")[i] < 1000.0) by_depth[t.column("depth")[i]].push_back(i);
    if (by_depth.size() != 4) return {false, "fig3 bundle lacks the depth block"};
    for (const auto& [s, rows] : by_depth) {
        for (std::size_t i : rows) {
            const double wd = t.column("omega_d_rad_s")[i];
            in_range = in_range && wd >= t.column("gap_kr_rad_s")[i] && wd <= t.column("gap_k0_rad_s")[i];
        }
        const std::size_t a = rows.front(), c = rows.back();
        const double diff = std::abs(t.column("omega_d_rad_s")[a] - t.column("omega_d_rad_s")[c]);
        const double sig = std::hypot(t.column("sigma_omega_d_rad_s")[a], t.column("sigma_omega_d_rad_s")[c]);
        independent = independent && diff <= sig;
        d << fmt("s=%g: %.0f vs %.0f rad/s (%.1f sigma); ", s, t.column("omega_d_rad_s")[a],
                 t.column("omega_d_rad_s")[c], diff / sig);
    }
    o.pass = in_range && independent;
    o.detail = std::string("within [gap(k_r), gap(0)]: ") + (in_range ? "yes" : "no") +
               "; F 3.9 vs 11.7 m/s^2 independent within 1 combined sigma: " + (independent ? "yes" : "no") + " (" +
               d.str() + "the gap chirps as k drifts)";
    return o;
}

Outcome c5_masses(const fs::path& root) {
    const auto t = summary_table(root, "fig4");
    bool dyn = true, eff = true, bias = true;
    double worst_dyn = 0.0, worst_eff = 0.0, least_bias = -1.0;
    for (std::size_t i = 0; i < t.rows(); ++i) {
        const double s = t.column("depth")[i];
        const double md = t.column("m_dyn")[i], me = t.column("m_eff")[i], ms = t.column("m_star")[i];
        const double rel = me / ms - 1.0;
        if (s >= 2.0 && s <= 10.0) {
            worst_dyn = std::max(worst_dyn, std::abs(md - 1.0));
            worst_eff = std::max(worst_eff, std::abs(rel));
            dyn = dyn && std::abs(md - 1.0) <= kDynMass;
            eff = eff && std::abs(rel) <= kEffMass;
        } else if (s > 10.0) {
            least_bias = std::max(least_bias, rel);
            bias = bias && rel < -kEffMass && t.column("edge_flag")[i] == 1.0;
        }
    }
    return {dyn && eff && bias,
            fmt("s in [2,10]: max |m_dyn - 1| %.3f (limit %.2f), max |m_eff/m* - 1| %.3f (limit %.2f); ", worst_dyn,
                kDynMass, worst_eff, kEffMass) +
                fmt("s > 10: m_eff/m* - 1 <= %.3f with edge flag set", least_bias)};
}

Outcome c6_oracle() {
    const auto c = lattice(9.4);
    const double F = c.force_from_acceleration(11.7);
    const double T = c.time_to_recoil(300e-6);
    const double width = c.length_to_recoil(20e-6);
    propagator::EvolveOptions eo;
    eo.t_final = T;
    eo.sample_every = 0.02;
    const auto prop = propagator::evolve(propagator::prepare_ground_state(c, propagator::GridSpec{}, width), c,
                                         propagator::ForceSchedule{0.0, 0.0, F}, eo)
                          .trace;
    analytic::WavepacketSpec w;
    w.sigma_k = 0.5 / width;
    const analytic::Model m(c, w, F, T);
    const auto pert = analytic::perturbative_velocity_trace(m, prop.t);
    double ss = 0.0;
    for (std::size_t i = 0; i < prop.size(); ++i) ss += std::pow(prop.v[i] - pert.v[i], 2);
    const double rms = std::sqrt(ss / double(prop.size()));
    const auto [lo, hi] = std::minmax_element(prop.v.begin(), prop.v.end());
    const double frac = rms / (*hi - *lo);
    return {frac < kOracleRms, fmt("RMS %.2e v_r = %.2f%% of the range (limit %.0f%%)", rms, 100 * frac, 100 * kOracleRms)};
}

Outcome c7_timescales(const json& fig2) {
    const auto& ts = fig2["points"][0]["timescales"];
    const double wb = ts["bloch_frequency_rad_s"], period = ts["bloch_period_s"], tg = ts["gap_time_k0_s"];
    const double fitted = fig2["points"][0]["fits"]["bloch"]["omega_B_rad_s"]["value"];
    const bool ok = std::abs(wb / kBlochTarget - 1.0) < kBlochTol && std::abs(period / kPeriodTarget - 1.0) < kPeriodTol &&
                    tg > kGapTimeLo && tg < kGapTimeHi;
    return {ok, fmt("omega_B %.0f rad/s (fitted %.0f), period %.3f ms, h/gap(0) %.1f us", wb, fitted, period * 1e3,
                    tg * 1e6)};
}

Outcome c8_properties(const fs::path& root) {
    std::vector<std::string> failed;
    const auto require = [&](bool ok, const char* what) {
        if (!ok) failed.push_back(what);
    };
    // norm and energy conservation, static lattice
    {
        const auto c = lattice(9.4);
        const propagator::GridSpec g{256, 16};
        const auto psi0 = propagator::prepare_ground_state(c, g, 30.0);
        const double e0 = propagator::energy(psi0, c, 0.0);
        const propagator::SplitStepPropagator prop(c, g, propagator::ForceSchedule{}, 1.0 / 500);
        auto psi = psi0;
        double de = 0.0, dn = 0.0;
        for (int i = 0; i < 10; ++i) {
            prop.advance(psi, 400);
            de = std::max(de, std::abs(propagator::energy(psi, c, 0.0) - e0));
            dn = std::max(dn, std::abs(psi.norm() - 1.0));
        }
        require(de < 1e-8 && dn < 1e-9, "norm/energy conservation");
    }
    // gauge robustness
    {
        bands::SolveOptions plain, phased;
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> angle(-M_PI, M_PI);
        phased.policy = ExecPolicy::serial;
        phased.phase_hook = [&](std::span<std::complex<double>> v) {
            const auto ph = std::polar(1.0, angle(rng));
            for (auto& x : v) x *= ph;
        };
        const auto a = bands::solve_bands(lattice(9.4), bands::KGrid::brillouin_zone(65), plain);
        const auto b = bands::solve_bands(lattice(9.4), bands::KGrid::brillouin_zone(65), phased);
        bool ok = true;
        for (std::size_t ik = 0; ik < 65; ++ik)
            for (int n = 0; n < a.n_bands(); ++n) {
                ok = ok && a.energy(n, ik) == b.energy(n, ik) && a.inverse_mass(n, ik) == b.inverse_mass(n, ik);
                for (int m = 0; m < a.n_bands(); ++m) {
                    const double pa = std::abs(a.momentum(n, m, ik)), pb = std::abs(b.momentum(n, m, ik));
                    ok = ok && std::abs(pa - pb) <= 1e-13 * std::max(1.0, pa);
                }
            }
        require(ok, "gauge robustness");
    }
    // decomposition identity
    {
        const analytic::Model m(lattice(9.4), analytic::WavepacketSpec{}, 0.2128, 4.0);
        std::vector<double> t;
        for (int i = 0; i <= 40; ++i) t.push_back(0.1 * i);
        const auto d = analytic::acceleration_decomposition(m, t);
        bool ok = std::abs(d.total[0] - 1.0) < 1e-8;
        for (std::size_t i = 0; i < t.size(); ++i)
            ok = ok && std::abs(d.total[i] - (d.intra[i] + d.inter[i] + d.coherence[i])) < 1e-10;
        require(ok, "decomposition identity");
    }
    // fit self-consistency and uncertainty calibration on synthetic two-sine data
    {
        const analysis::TwoSineParams truth{0.02, 5.5, 0.3, 0.05, 0.67, -0.2};
        std::vector<double> t;
        for (int i = 0; i < 75; ++i) t.push_back(0.05097 * i);
        const double noise = 0.01 * (truth.A_d + truth.A_B);
        std::array<int, 6> covered{};
        const int trials = 200;
        for (int k = 0; k < trials; ++k) {
            const auto fit = analysis::fit_two_sine(analysis::synthesize_two_sine(truth, 0.0, t, noise, 5000 + k));
            const auto p = fit.p.array(), s = fit.sigma.array(), q = truth.array();
            for (std::size_t i = 0; i < 6; ++i) covered[i] += std::abs(p[i] - q[i]) <= s[i];
        }
        bool ok = true;
        for (int cv : covered) ok = ok && cv >= 0.60 * trials && cv <= 0.75 * trials;
        require(ok, "fit calibration");
    }
    // serial and parallel kernels, and bundle re-runs, are bitwise identical
    {
        const auto c = lattice(9.4);
        const propagator::GridSpec g{128, 16};
        const auto psi0 = propagator::prepare_ground_state(c, g, 15.0);
        propagator::EvolveOptions eo;
        eo.t_final = 0.5;
        eo.sample_every = 0.1;
        eo.edge_sites = 10;
        eo.policy = ExecPolicy::serial;
        const auto a = propagator::evolve(psi0, c, propagator::ForceSchedule{0.0, 0.0, 0.2}, eo);
        eo.policy = ExecPolicy::parallel;
        const auto b = propagator::evolve(psi0, c, propagator::ForceSchedule{0.0, 0.0, 0.2}, eo);
        require(a.trace.v == b.trace.v && a.final_state.data() == b.final_state.data(), "serial/parallel identity");

        json cfg = {{"schema_version", 1},
                    {"name", "rerun"},
                    {"lattice", {{"depth", 9.4}, {"mass", constants::rb87_mass}}},
                    {"force", {{"acceleration", 2.0}}},
                    {"propagation", {{"sites", 128}, {"duration", 100e-6}, {"envelope_width", 5e-6}, {"edge_sites", 12}}},
                    {"analysis", {{"fits", {{{"name", "gap"}, {"window", 100e-6}}}}, {"imaging", {{"noise", 0.01}}}}}};
        const auto sc = scenario::parse(cfg);
        scenario::RunOptions o1, o2;
        o1.out = root / "rerun1";
        o2.out = root / "rerun2";
        fs::remove_all(o1.out);
        fs::remove_all(o2.out);
        require(scenario::run(sc, o1).manifest == scenario::run(sc, o2).manifest, "bundle re-run identity");
    }
    if (failed.empty()) return {true, "norm/energy, gauge, decomposition, fit calibration, serial/parallel and re-run identity"};
    std::string d = "failed:";
    for (const auto& f : failed) d += " " + f + ";";
    return {false, d};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
    fs::create_directories(root);

    json fig2;
    std::string bundle_error;
    try {
        fig2 = run_builtin("fig2", root);
        run_builtin("fig3", root);
        run_builtin("fig4", root);
    } catch (const std::exception& e) {
        bundle_error = e.what();
    }

    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"sum rule", c1_sum_rule},
        {"bare-mass onset", c2_onset},
        {"Bloch frequency linear in F", [&] { return c3_bloch(root); }},
        {"gap frequency", [&] { return c4_gap(root); }},
        {"mass vs depth", [&] { return c5_masses(root); }},
        {"analytic vs propagator", c6_oracle},
        {"timescales", [&] { return c7_timescales(fig2); }},
        {"property suites", [&] { return c8_properties(root); }},
    };
    int unexpected = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = int(i) + 1;
        Outcome o;
        try {
            if (!bundle_error.empty() && (id == 3 || id == 4 || id == 5 || id == 7))
                o = {false, "bundle run failed: " + bundle_error};
            else
                o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const bool red = known_red.count(id) != 0;
        std::printf("criterion %d (%s): %s%s  %s\n", id, criteria[i].first, o.pass ? "PASS" : "FAIL",
                    !o.pass && red ? " [known, see notes]" : "", o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass && !red) ++unexpected;
    }
    return unexpected;
}
