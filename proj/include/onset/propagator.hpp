#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "onset/fft.hpp"
#include "onset/parallel.hpp"
#include "onset/trace.hpp"
#include "onset/units.hpp"

namespace onset::propagator {

using cplx = std::complex<double>;
using fft::cvec;

/// The wavepacket came within the guarded edge region of the periodic box.
class BoxTooSmallError : public Error {
public:
    BoxTooSmallError(const std::string& what, double t, double edge_population)
        : Error(what), t_(t), edge_(edge_population) {}
    double time() const { return t_; }
    double edge_population() const { return edge_; }

private:
    double t_, edge_;
};

/// Periodic box of `sites` lattice periods (pi in 1/k_r units each) sampled with
/// `points_per_site` points. z runs over [-L/2, L/2) with z = 0 at index size()/2.
struct GridSpec {
    std::size_t sites = 512;
    std::size_t points_per_site = 16;

    void validate() const;
    std::size_t size() const { return sites * points_per_site; }
    double box_length() const;  // 1/k_r
    double dz() const;
    double z(std::size_t i) const;
    /// momentum of FFT bin m (standard FFT ordering), hbar k_r
    double q(std::size_t m) const;
    double dq() const;  // 2 pi / box
};

/// F(t): zero before `delay`, linear ramp over `rise`, then `force`.
/// Times in t_r, force in E_r k_r.
struct ForceSchedule {
    double delay = 0.0;
    double rise = 0.0;
    double force = 0.0;

    void validate() const;
    double at(double t) const;
    double onset_end() const { return delay + rise; }

    /// From SI: delay and rise in seconds, plateau acceleration F/m0 in m/s^2.
    static ForceSchedule from_si(const LatticeConfig& cfg, double delay_s, double rise_s, double accel);
};

class Wavefunction {
public:
    Wavefunction() = default;
    explicit Wavefunction(const GridSpec& grid);

    const GridSpec& grid() const { return grid_; }
    cvec& data() { return psi_; }
    const cvec& data() const { return psi_; }
    double time() const { return t_; }
    void set_time(double t) { t_ = t; }

    /// int |psi|^2 dz
    double norm(ExecPolicy policy = ExecPolicy::serial) const;
    void normalize(ExecPolicy policy = ExecPolicy::serial);

private:
    GridSpec grid_;
    cvec psi_;
    double t_ = 0.0;
};

/// Band-N Bloch functions modulated by a Gaussian envelope centred at z = 0.
/// envelope_width is the rms width of |psi|^2 (1/k_r), so the quasi-momentum
/// spread of |c(k)|^2 is sigma_k = 1/(2 width).
struct GroundStateOptions {
    int band = 0;
    double k0 = 0.0;
    int cutoff = 32;
    ExecPolicy policy = ExecPolicy::parallel;
};

Wavefunction prepare_ground_state(const LatticeConfig& cfg, const GridSpec& grid, double envelope_width,
                                  const GroundStateOptions& opts = {});

/// Alternative loading: a Gaussian at s = 0 evolved while the depth follows
/// the raised cosine s (1 - cos(pi t / T)) / 2 for duration T (t_r).
Wavefunction prepare_ramped_state(const LatticeConfig& cfg, const GridSpec& grid, double envelope_width,
                                  double ramp_duration, double dt, ExecPolicy policy = ExecPolicy::parallel);

struct Observables {
    double mean_velocity = 0.0;      // <p>/m0, v_r
    double mean_acceleration = 0.0;  // F(t) - <dV/dz>, v_r/t_r
    std::vector<double> q;           // momentum grid (ascending), hbar k_r
    std::vector<double> momentum_distribution;  // |psi(q)|^2, integrates to 1 over q
    std::vector<int> peak_orders;
    std::vector<double> peak_populations;  // weight within |q - 2n| < 1/2
};

struct ObservableOptions {
    std::vector<int> peak_orders = {-2, -1, 0, 1, 2};
    bool want_distribution = true;
    ExecPolicy policy = ExecPolicy::serial;
};

Observables observables(const Wavefunction& psi, const LatticeConfig& cfg, double force,
                        const ObservableOptions& opts = {});

/// <H> = <q^2> + <s cos^2 z - F z> + (g/2) int |psi|^4, E_r
double energy(const Wavefunction& psi, const LatticeConfig& cfg, double force, double g = 0.0,
              ExecPolicy policy = ExecPolicy::serial);

/// Population in the outermost `sites` lattice periods on both sides.
double edge_population(const Wavefunction& psi, std::size_t sites, ExecPolicy policy = ExecPolicy::serial);

/// Strang splitting exp(-iT dt/2) exp(-iV(t + dt/2) dt) exp(-iT dt/2).
class SplitStepPropagator {
public:
    SplitStepPropagator(const LatticeConfig& cfg, const GridSpec& grid, const ForceSchedule& schedule, double dt,
                        double g = 0.0, ExecPolicy policy = ExecPolicy::parallel);

    /// depth as a function of time (t_r); default is the constant cfg.depth
    void set_depth_profile(std::function<double(double)> depth);
    /// constant added to the potential, E_r (a global phase)
    void set_energy_offset(double offset);

    /// advance by n steps, psi.time() advances by n dt
    void advance(Wavefunction& psi, std::size_t n) const;
    double dt() const { return dt_; }

private:
    void lattice_phase(double depth, cvec& out) const;

    LatticeConfig cfg_;
    GridSpec grid_;
    ForceSchedule schedule_;
    double dt_, g_;
    ExecPolicy policy_;
    fft::Plan plan_;
    std::vector<double> z_;
    cvec half_kinetic_, full_kinetic_;  // include the 1/N of the inverse transform
    cvec static_phase_;
    std::function<double(double)> depth_;
    double offset_ = 0.0;
};

struct EvolveOptions {
    double dt = 1.0 / 500.0;     // t_r
    double t_final = 0.0;        // t_r, absolute
    double g = 0.0;
    double sample_every = 0.0;   // observables cadence, t_r; 0: every step
    double snapshot_every = 0.0; // wavefunction snapshots, t_r; 0: none
    std::vector<int> peak_orders = {-2, -1, 0, 1, 2};
    std::size_t edge_sites = 50;
    double edge_tolerance = 1e-6;
    ExecPolicy policy = ExecPolicy::parallel;
};

/// Throws InvalidArgument for dt > t_r/200 or s dt > 0.5.
void check_time_step(const LatticeConfig& cfg, double dt);

struct EvolveResult {
    Wavefunction final_state;
    VelocityTrace trace;                 // t, v, a and peak populations at each sample
    std::vector<Wavefunction> snapshots; // time-stamped
};

/// Evolve from psi.time() to opts.t_final. Samples are taken on the step grid
/// at multiples of sample_every (rounded to whole steps) including both ends.
EvolveResult evolve(Wavefunction psi, const LatticeConfig& cfg, const ForceSchedule& schedule,
                    const EvolveOptions& opts);

/// Far-field density after a time of flight: each momentum component q lands at
/// x = q v_r t_tof, convolved with a Gaussian of rms `blur` (the initial cloud).
/// x in micrometres; density integrates to 1 over x.
struct Profile {
    std::vector<double> x;        // um
    std::vector<double> density;  // 1/um
    double tof = 0.0;             // s
};

struct TofOptions {
    double tof = 20e-3;   // s
    double blur = 20.0;   // um, rms
    double dx = 1.0;      // um
    std::optional<double> x_min, x_max;  // um; default covers the distribution
};

Profile tof_expand(const Wavefunction& psi, const LatticeConfig& cfg, const TofOptions& opts = {});

/// population of band n (0-based) for n < n_bands, projected over the
/// quasi-momenta of the box
std::vector<double> band_populations(const Wavefunction& psi, const LatticeConfig& cfg, int n_bands,
                                     int cutoff = 32);

/// CSV snapshot: z (1/k_r), Re psi, Im psi
void write_snapshot_csv(std::ostream& out, const Wavefunction& psi);
/// CSV trace: t, v, a, then one column per peak order (p_n)
void write_trace_csv(std::ostream& out, const VelocityTrace& trace);

}  // namespace onset::propagator
