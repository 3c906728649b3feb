#include "onset/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "onset/bands.hpp"
#include "onset/csv.hpp"
#include "onset/kernels.hpp"

namespace onset::propagator {

using constants::pi;

void GridSpec::validate() const {
    std::string problems;
    if (sites < 2) problems += " need at least 2 sites;";
    if (points_per_site < 8) problems += " need at least 8 points per lattice period;";
    const std::size_t n = size();
    if (n == 0 || (n & (n - 1)) != 0) problems += " total points " + std::to_string(n) + " is not a power of two;";
    if (!problems.empty()) throw InvalidArgument("invalid grid:" + problems);
}

double GridSpec::box_length() const { return double(sites) * pi; }
double GridSpec::dz() const { return pi / double(points_per_site); }
double GridSpec::z(std::size_t i) const { return (double(i) - double(size() / 2)) * dz(); }
double GridSpec::dq() const { return 2.0 * pi / box_length(); }
double GridSpec::q(std::size_t m) const {
    const std::size_t n = size();
    const double signed_m = m < n / 2 ? double(m) : double(m) - double(n);
    return signed_m * dq();
}

void ForceSchedule::validate() const {
    std::string problems;
    if (!(delay >= 0.0) || !std::isfinite(delay)) problems += " delay must be >= 0;";
    if (!(rise >= 0.0) || !std::isfinite(rise)) problems += " rise must be >= 0;";
    if (!std::isfinite(force)) problems += " force must be finite;";
    if (!problems.empty()) throw InvalidArgument("invalid force schedule:" + problems);
}

double ForceSchedule::at(double t) const {
    if (t < delay) return 0.0;
    if (t >= delay + rise) return force;
    return force * (t - delay) / rise;
}

ForceSchedule ForceSchedule::from_si(const LatticeConfig& cfg, double delay_s, double rise_s, double accel) {
    ForceSchedule f;
    f.delay = cfg.time_to_recoil(delay_s);
    f.rise = cfg.time_to_recoil(rise_s);
    f.force = cfg.force_from_acceleration(accel);
    f.validate();
    return f;
}

Wavefunction::Wavefunction(const GridSpec& grid) : grid_(grid) {
    grid.validate();
    psi_.assign(grid.size(), cplx(0.0, 0.0));
}

double Wavefunction::norm(ExecPolicy policy) const {
    return kernels::norm_sq(policy, {psi_.data(), psi_.size()}) * grid_.dz();
}

void Wavefunction::normalize(ExecPolicy policy) {
    const double n = norm(policy);
    if (!(n > 0.0)) throw Error("Wavefunction::normalize: zero norm");
    kernels::scale(policy, {psi_.data(), psi_.size()}, 1.0 / std::sqrt(n));
}

namespace {
// unit-norm momentum amplitudes A_m (sum |A_m|^2 = 1) in FFT order
cvec momentum_amplitudes(const Wavefunction& psi, const fft::Plan& plan) {
    const auto& g = psi.grid();
    cvec a = psi.data();
    plan.forward(a);
    const double scale = std::sqrt(g.box_length()) / double(g.size());
    for (std::size_t m = 0; m < a.size(); ++m) a[m] *= (m % 2 == 0 ? scale : -scale);
    return a;
}

std::size_t fft_index(long signed_m, std::size_t n) {
    const long ln = long(n);
    return std::size_t(((signed_m % ln) + ln) % ln);
}

const fft::Plan& plan_for(std::size_t n) {
    // one plan per length per thread; plans are cheap with FFTW_ESTIMATE
    thread_local std::vector<std::pair<std::size_t, fft::Plan>> cache;
    for (const auto& [len, p] : cache)
        if (len == n) return p;
    cache.emplace_back(n, fft::Plan(n));
    return cache.back().second;
}
}  // namespace

Wavefunction prepare_ground_state(const LatticeConfig& cfg, const GridSpec& grid, double envelope_width,
                                  const GroundStateOptions& opts) {
    cfg.validate();
    grid.validate();
    if (!(envelope_width > 0.0)) throw InvalidArgument("prepare_ground_state: envelope width must be > 0");
    const double sigma_k = 0.5 / envelope_width;
    if (std::abs(opts.k0) + 8.0 * sigma_k >= 1.0)
        throw InvalidArgument("prepare_ground_state: envelope too narrow, quasi-momentum spread sigma_k = " +
                              std::to_string(sigma_k) + " leaks to the zone edge (need |k0| + 8 sigma_k < 1)");
    const std::size_t n = grid.size();
    const double dk = grid.dq();  // quasi-momentum spacing of the box
    const long jmin = long(std::ceil((opts.k0 - 8.0 * sigma_k) / dk));
    const long jmax = long(std::floor((opts.k0 + 8.0 * sigma_k) / dk));

    bands::SolveOptions so;
    so.cutoff = opts.cutoff;
    so.n_bands = std::max(opts.band + 1, 2);
    so.policy = opts.policy;
    const std::size_t nk = std::size_t(jmax - jmin + 1);
    const auto bd = bands::solve_bands(cfg, bands::KGrid{double(jmin) * dk, double(jmax) * dk, nk}, so);

    cvec amp(n, cplx(0.0, 0.0));
    const int L = bd.cutoff();
    const long half = long(n / 2);
    double dropped = 0.0;
    for (std::size_t ik = 0; ik < nk; ++ik) {
        const long j = jmin + long(ik);
        const double k = bd.k(ik);
        const double a = std::exp(-(k - opts.k0) * (k - opts.k0) / (4.0 * sigma_k * sigma_k));
        const auto c = bd.coefficients(opts.band, ik);
        for (int l = -L; l <= L; ++l) {
            const long m = j + long(l) * long(grid.sites);
            const cplx v = a * c[std::size_t(l + L)];
            if (m < -half || m >= half) {
                dropped += std::norm(v);
                continue;
            }
            amp[fft_index(m, n)] = (m % 2 == 0) ? v : -v;
        }
    }
    double kept = 0.0;
    for (const auto& v : amp) kept += std::norm(v);
    if (dropped > 1e-12 * kept)
        throw InvalidArgument("prepare_ground_state: grid too coarse, Bloch components beyond |q| = " +
                              std::to_string(grid.q(n / 2 - 1)) + " carry relative weight " +
                              std::to_string(dropped / kept));
    plan_for(n).backward(amp);
    Wavefunction psi(grid);
    psi.data() = std::move(amp);
    psi.normalize(opts.policy);
    return psi;
}

Wavefunction prepare_ramped_state(const LatticeConfig& cfg, const GridSpec& grid, double envelope_width,
                                  double ramp_duration, double dt, ExecPolicy policy) {
    cfg.validate();
    if (!(ramp_duration > 0.0)) throw InvalidArgument("prepare_ramped_state: ramp duration must be > 0");
    check_time_step(cfg, dt);
    LatticeConfig free = cfg;
    free.depth = 0.0;
    GroundStateOptions go;
    go.policy = policy;
    Wavefunction psi = prepare_ground_state(free, grid, envelope_width, go);
    SplitStepPropagator prop(cfg, grid, ForceSchedule{}, dt, 0.0, policy);
    const double s = cfg.depth, T = ramp_duration;
    prop.set_depth_profile([=](double t) { return t >= T ? s : 0.5 * s * (1.0 - std::cos(pi * t / T)); });
    prop.advance(psi, std::size_t(std::ceil(T / dt)));
    psi.set_time(0.0);
    return psi;
}

Observables observables(const Wavefunction& psi, const LatticeConfig& cfg, double force,
                        const ObservableOptions& opts) {
    const auto& g = psi.grid();
    const std::size_t n = g.size();
    const cvec a = momentum_amplitudes(psi, plan_for(n));
    Observables out;
    out.mean_velocity = chunked_sum(n, opts.policy, [&](std::size_t m) { return g.q(m) * std::norm(a[m]); });
    const double dz = g.dz();
    const double sin2z = chunked_sum(n, opts.policy, [&](std::size_t i) {
        return std::sin(2.0 * g.z(i)) * std::norm(psi.data()[i]);
    });
    // -dV/dz = s sin 2z + F
    out.mean_acceleration = force + cfg.depth * sin2z * dz;
    const double dq = g.dq();
    if (opts.want_distribution) {
        out.q.resize(n);
        out.momentum_distribution.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t m = (i + n / 2) % n;  // ascending q
            out.q[i] = g.q(m);
            out.momentum_distribution[i] = std::norm(a[m]) / dq;
        }
    }
    out.peak_orders = opts.peak_orders;
    for (int order : opts.peak_orders) {
        const double centre = 2.0 * order;
        double p = 0.0;
        for (std::size_t m = 0; m < n; ++m)
            if (std::abs(g.q(m) - centre) < 0.5) p += std::norm(a[m]);
        out.peak_populations.push_back(p);
    }
    return out;
}

double energy(const Wavefunction& psi, const LatticeConfig& cfg, double force, double g, ExecPolicy policy) {
    const auto& gr = psi.grid();
    const std::size_t n = gr.size();
    const cvec a = momentum_amplitudes(psi, plan_for(n));
    const double kin = chunked_sum(n, policy, [&](std::size_t m) {
        const double q = gr.q(m);
        return q * q * std::norm(a[m]);
    });
    const double s = cfg.depth;
    const double pot = chunked_sum(n, policy, [&](std::size_t i) {
        const double z = gr.z(i);
        const double c = std::cos(z);
        const double rho = std::norm(psi.data()[i]);
        return (s * c * c - force * z + 0.5 * g * rho) * rho;
    });
    return kin + pot * gr.dz();
}

double edge_population(const Wavefunction& psi, std::size_t sites, ExecPolicy policy) {
    const auto& g = psi.grid();
    const std::size_t w = std::min(sites * g.points_per_site, g.size() / 2);
    const std::size_t n = g.size();
    const double s = chunked_sum(2 * w, policy, [&](std::size_t i) {
        const std::size_t idx = i < w ? i : n - 2 * w + i;
        return std::norm(psi.data()[idx]);
    });
    return s * g.dz();
}

void check_time_step(const LatticeConfig& cfg, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("time step must be > 0");
    if (dt > 1.0 / 200.0 * (1.0 + 1e-12))
        throw InvalidArgument("time step dt = " + std::to_string(dt) + " t_r exceeds t_r/200");
    if (cfg.depth * dt > 0.5)
        throw InvalidArgument("time step guard: s*dt/t_r = " + std::to_string(cfg.depth * dt) +
                              " exceeds 0.5 (reduce dt)");
}

SplitStepPropagator::SplitStepPropagator(const LatticeConfig& cfg, const GridSpec& grid,
                                         const ForceSchedule& schedule, double dt, double g, ExecPolicy policy)
    : cfg_(cfg), grid_(grid), schedule_(schedule), dt_(dt), g_(g), policy_(policy), plan_(grid.size()) {
    cfg.validate();
    grid.validate();
    schedule.validate();
    check_time_step(cfg, dt);
    if (!(g >= 0.0)) throw InvalidArgument("nonlinearity g must be >= 0");
    const std::size_t n = grid.size();
    z_.resize(n);
    half_kinetic_.resize(n);
    full_kinetic_.resize(n);
    const double inv_n = 1.0 / double(n);
    for (std::size_t i = 0; i < n; ++i) {
        z_[i] = grid.z(i);
        const double q = grid.q(i);
        half_kinetic_[i] = std::polar(inv_n, -q * q * 0.5 * dt);
        full_kinetic_[i] = std::polar(inv_n, -q * q * dt);
    }
    lattice_phase(cfg.depth, static_phase_);
}

void SplitStepPropagator::set_depth_profile(std::function<double(double)> depth) { depth_ = std::move(depth); }

void SplitStepPropagator::set_energy_offset(double offset) {
    offset_ = offset;
    lattice_phase(cfg_.depth, static_phase_);
}

void SplitStepPropagator::lattice_phase(double depth, cvec& out) const {
    out.resize(z_.size());
    for (std::size_t i = 0; i < z_.size(); ++i) {
        const double c = std::cos(z_[i]);
        out[i] = std::polar(1.0, -(depth * c * c + offset_) * dt_);
    }
}

void SplitStepPropagator::advance(Wavefunction& psi, std::size_t n) const {
    if (n == 0) return;
    if (psi.grid().size() != grid_.size()) throw InvalidArgument("SplitStepPropagator: grid mismatch");
    auto& d = psi.data();
    const std::span<cplx> view(d.data(), d.size());
    const double t0 = psi.time();
    cvec varying;
    // lattice and tilt phases combined, reused while F dt is unchanged
    cvec combined;
    double combined_f = std::numeric_limits<double>::quiet_NaN();
    const bool cacheable = !depth_ && g_ == 0.0;
    plan_.forward(d);
    kernels::multiply(policy_, view, {half_kinetic_.data(), half_kinetic_.size()});
    plan_.backward(d);
    for (std::size_t s = 0; s < n; ++s) {
        const double tm = t0 + (double(s) + 0.5) * dt_;
        const double f_dt = schedule_.at(tm) * dt_;
        if (cacheable) {
            if (!(f_dt == combined_f)) {
                combined.assign(z_.size(), cplx(1.0, 0.0));
                kernels::potential_step(policy_, {combined.data(), combined.size()},
                                        {static_phase_.data(), static_phase_.size()}, z_, f_dt, 0.0);
                combined_f = f_dt;
            }
            kernels::multiply(policy_, view, {combined.data(), combined.size()});
        } else {
            const cvec* phase = &static_phase_;
            if (depth_) {
                lattice_phase(depth_(tm), varying);
                phase = &varying;
            }
            kernels::potential_step(policy_, view, {phase->data(), phase->size()}, z_, f_dt, g_ * dt_);
        }
        plan_.forward(d);
        const cvec& k = s + 1 == n ? half_kinetic_ : full_kinetic_;
        kernels::multiply(policy_, view, {k.data(), k.size()});
        plan_.backward(d);
    }
    psi.set_time(t0 + double(n) * dt_);
}

EvolveResult evolve(Wavefunction psi, const LatticeConfig& cfg, const ForceSchedule& schedule,
                    const EvolveOptions& opts) {
    const double t0 = psi.time();
    if (!(opts.t_final >= t0)) throw InvalidArgument("evolve: t_final is before the current time");
    SplitStepPropagator prop(cfg, psi.grid(), schedule, opts.dt, opts.g, opts.policy);
    const auto total = std::size_t(std::llround((opts.t_final - t0) / opts.dt));
    const auto stride_of = [&](double every) {
        return every > 0.0 ? std::max<std::size_t>(1, std::size_t(std::llround(every / opts.dt))) : 0;
    };
    const std::size_t sample = opts.sample_every > 0.0 ? stride_of(opts.sample_every) : 1;
    const std::size_t snap = stride_of(opts.snapshot_every);

    EvolveResult out;
    out.trace.peak_orders = opts.peak_orders;
    ObservableOptions oo;
    oo.peak_orders = opts.peak_orders;
    oo.want_distribution = false;
    oo.policy = opts.policy;
    const auto record = [&](std::size_t step) {
        const double t = psi.time();
        const double edge = edge_population(psi, opts.edge_sites, opts.policy);
        if (edge > opts.edge_tolerance)
            throw BoxTooSmallError("box too small: population " + std::to_string(edge) + " within " +
                                       std::to_string(opts.edge_sites) + " sites of the boundary at t = " +
                                       std::to_string(t) + " t_r",
                                   t, edge);
        if (step % sample == 0 || step == total) {
            const auto ob = observables(psi, cfg, schedule.at(t), oo);
            out.trace.t.push_back(t);
            out.trace.v.push_back(ob.mean_velocity);
            out.trace.a.push_back(ob.mean_acceleration);
            out.trace.peaks.push_back(ob.peak_populations);
        }
        if (snap && (step % snap == 0 || step == total)) out.snapshots.push_back(psi);
    };
    record(0);
    std::size_t step = 0;
    while (step < total) {
        std::size_t next = std::min(total, (step / sample + 1) * sample);
        if (snap) next = std::min(next, (step / snap + 1) * snap);
        prop.advance(psi, next - step);
        step = next;
        psi.set_time(t0 + double(step) * opts.dt);
        record(step);
    }
    out.final_state = std::move(psi);
    return out;
}

Profile tof_expand(const Wavefunction& psi, const LatticeConfig& cfg, const TofOptions& opts) {
    if (!(opts.tof > 0.0)) throw InvalidArgument("tof_expand: time of flight must be > 0");
    if (!(opts.blur > 0.0)) throw InvalidArgument("tof_expand: blur must be > 0");
    if (!(opts.dx > 0.0)) throw InvalidArgument("tof_expand: dx must be > 0");
    const auto& g = psi.grid();
    const std::size_t n = g.size();
    const cvec a = momentum_amplitudes(psi, plan_for(n));
    const double scale = cfg.recoil_velocity() * opts.tof * 1e6;  // um per hbar k_r
    std::vector<std::pair<double, double>> comps;  // (x, weight)
    for (std::size_t m = 0; m < n; ++m) {
        const double w = std::norm(a[m]);
        if (w > 1e-18) comps.emplace_back(g.q(m) * scale, w);
    }
    if (comps.empty()) throw Error("tof_expand: empty momentum distribution");
    double lo = comps.front().first, hi = lo;
    for (const auto& c : comps) {
        lo = std::min(lo, c.first);
        hi = std::max(hi, c.first);
    }
    const double reach = 8.5 * opts.blur;
    const double x0 = opts.x_min.value_or(lo - reach);
    const double x1 = opts.x_max.value_or(hi + reach);
    if (!(x1 > x0)) throw InvalidArgument("tof_expand: empty x range");
    const auto nx = std::size_t(std::floor((x1 - x0) / opts.dx)) + 1;
    Profile p;
    p.tof = opts.tof;
    p.x.resize(nx);
    p.density.assign(nx, 0.0);
    for (std::size_t i = 0; i < nx; ++i) p.x[i] = x0 + double(i) * opts.dx;
    const double norm = 1.0 / (std::sqrt(2.0 * pi) * opts.blur);
    const double inv2s2 = 0.5 / (opts.blur * opts.blur);
    for (const auto& [xc, w] : comps) {
        const double a0 = std::max(0.0, std::ceil((xc - reach - x0) / opts.dx));
        const double a1 = std::min(double(nx - 1), std::floor((xc + reach - x0) / opts.dx));
        for (auto i = std::size_t(a0); double(i) <= a1; ++i) {
            const double d = p.x[i] - xc;
            p.density[i] += w * norm * std::exp(-d * d * inv2s2);
        }
    }
    return p;
}

std::vector<double> band_populations(const Wavefunction& psi, const LatticeConfig& cfg, int n_bands, int cutoff) {
    const auto& g = psi.grid();
    const std::size_t n = g.size();
    const cvec a = momentum_amplitudes(psi, plan_for(n));
    const long sites = long(g.sites);
    const long half = long(n / 2);
    std::vector<double> pop(std::size_t(n_bands), 0.0);
    bands::SolveOptions so;
    so.cutoff = cutoff;
    so.n_bands = n_bands;
    so.policy = ExecPolicy::serial;
    std::vector<long> js;
    for (long j = -sites / 2; j < sites - sites / 2; ++j) {
        double w = 0.0;
        for (long m = j - (half / sites + 1) * sites; m < half; m += sites)
            if (m >= -half) w += std::norm(a[fft_index(m, n)]);
        if (w > 1e-16) js.push_back(j);
    }
    std::vector<std::vector<double>> per(js.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t idx = 0; idx < js.size(); ++idx) {
        const long j = js[idx];
        const double k = double(j) * g.dq();
        const auto bd = bands::solve_bands(cfg, bands::KGrid{k, k, 1}, so);
        const int L = bd.cutoff();
        per[idx].assign(std::size_t(n_bands), 0.0);
        for (int b = 0; b < n_bands; ++b) {
            const auto c = bd.coefficients(b, 0);
            cplx acc{};
            for (int l = -L; l <= L; ++l) {
                const long m = j + long(l) * sites;
                if (m < -half || m >= half) continue;
                acc += std::conj(c[std::size_t(l + L)]) * a[fft_index(m, n)];
            }
            per[idx][std::size_t(b)] = std::norm(acc);
        }
    }
    for (const auto& p : per)
        for (int b = 0; b < n_bands; ++b) pop[std::size_t(b)] += p[std::size_t(b)];
    return pop;
}

void write_snapshot_csv(std::ostream& out, const Wavefunction& psi) {
    csv::Writer w(out, {"z", "re", "im"});
    for (std::size_t i = 0; i < psi.data().size(); ++i)
        w.row({psi.grid().z(i), psi.data()[i].real(), psi.data()[i].imag()});
}

void write_trace_csv(std::ostream& out, const VelocityTrace& trace) {
    std::vector<std::string> header{"t", "v", "a"};
    for (int n : trace.peak_orders) header.push_back("p_" + std::to_string(n));
    csv::Writer w(out, header);
    std::vector<double> row;
    for (std::size_t i = 0; i < trace.t.size(); ++i) {
        row.assign({trace.t[i], trace.v[i], trace.a.empty() ? 0.0 : trace.a[i]});
        if (!trace.peaks.empty())
            for (double p : trace.peaks[i]) row.push_back(p);
        w.row(row);
    }
}

}  // namespace onset::propagator
