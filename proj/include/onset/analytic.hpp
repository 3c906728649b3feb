#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "onset/band_interpolant.hpp"
#include "onset/trace.hpp"

namespace onset::analytic {

using cplx = std::complex<double>;

/// Single-band wavepacket c_N(k). By default a Gaussian in k centred at k0
/// whose probability density |c|^2 has standard deviation sigma_k (k_r units).
/// A custom amplitude may be supplied together with its support; it is
/// normalized numerically.
struct WavepacketSpec {
    int band = 0;  // N, 0-based
    double k0 = 0.0;
    double sigma_k = 0.02;
    std::function<cplx(double)> amplitude;  // optional
    double support_lo = 0.0, support_hi = 0.0;  // used with a custom amplitude

    void validate() const;
};

/// Gauss-Legendre discretization of a wavepacket over its support.
class Wavepacket {
public:
    explicit Wavepacket(const WavepacketSpec& spec, std::size_t nodes = 129);

    int band() const { return band_; }
    std::size_t size() const { return kappa_.size(); }
    double kappa(std::size_t j) const { return kappa_[j]; }
    /// quadrature weight for d(kappa)
    double weight(std::size_t j) const { return w_[j]; }
    cplx amplitude(std::size_t j) const { return c_[j]; }
    /// |c(kappa_j)|^2 times the quadrature weight; sums to 1
    double probability(std::size_t j) const { return w_[j] * std::norm(c_[j]); }
    double support_lo() const { return lo_; }
    double support_hi() const { return hi_; }
    /// int |c|^2 dk of the amplitude before renormalization
    double raw_norm() const { return raw_norm_; }

private:
    int band_;
    double lo_, hi_, raw_norm_;
    std::vector<double> kappa_, w_;
    std::vector<cplx> c_;
};

struct AnalyticOptions {
    int n_bands = 8;
    int cutoff = 32;
    std::size_t nodes = 129;
    double guard = 0.3;            // threshold on |F x_nN / E_nN|
    double phase_tol = 1e-10;      // absolute tolerance on the gamma phases
    double path_step = 1.0 / 256;  // node spacing of the band interpolant
    ExecPolicy policy = ExecPolicy::parallel;
};

struct AccelDecomposition;

/// First-order (in F) description of a single-band wavepacket under a
/// constant force F (E_r k_r), valid for 0 <= t <= t_max (t_r).
///
/// The crystal momentum drifts as k = kappa + F t. Band phases are
/// gamma_n(kappa, t) = (1/F) int_kappa^k E_n dq (E_n(kappa) t when F = 0).
class Model {
public:
    Model(const LatticeConfig& cfg, const WavepacketSpec& spec, double force, double t_max,
          const AnalyticOptions& opts = {});

    const LatticeConfig& config() const { return cfg_; }
    const bands::BandInterpolant& bands() const { return bands_; }
    const Wavepacket& packet() const { return packet_; }
    const AnalyticOptions& options() const { return opts_; }
    double force() const { return force_; }
    double t_max() const { return t_max_; }
    int band() const { return packet_.band(); }
    /// max over the drift path and bands of |F x_nN / E_nN| = 2 |F p_nN| / E_nN^2
    double guard_ratio() const { return guard_ratio_; }
    bool guard_violated() const { return guard_ratio_ > opts_.guard; }

    /// k at time t for node j
    double k_at(std::size_t j, double t) const { return packet_.kappa(j) + force_ * t; }
    /// gamma_n(kappa_j, t)
    double gamma(int n, std::size_t j, double t) const;
    /// a(t) / (F/m0): 1 plus the coherence term, summed over the nodes
    double acceleration_ratio(double t) const;
    /// same quantity in the closing form m0/m*(k) + interband sum; equal to
    /// acceleration_ratio when the sum rule holds for the interpolated data
    double closing_ratio(double t) const;
    /// directly solved band data at node j's initial momentum
    const bands::BandInterpolant::Point& node(std::size_t j) const { return node_[j]; }
    /// (1/hbar) dE_N/dk averaged over |c|^2 at t = 0, in v_r
    double initial_velocity() const;
    /// largest interband gap on the path (E_r), sets the integration step
    double max_gap() const { return max_gap_; }

private:
    LatticeConfig cfg_;
    AnalyticOptions opts_;
    Wavepacket packet_;
    double force_, t_max_;
    bands::BandInterpolant bands_;
    double guard_ratio_ = 0.0;
    double max_gap_ = 0.0;
    std::vector<bands::BandInterpolant::Point> node_;
    std::vector<double> g0_;  // [node][band]: G_n(kappa)

    struct Parts {
        double intra = 0.0, inter = 0.0, coherence = 0.0;
    };
    Parts parts(double t) const;
    friend AccelDecomposition acceleration_decomposition(const Model&, const std::vector<double>&);
};

/// Short-time bracket: m0/m*_N + sum_{n != N} 4 |p_nN|^2/Delta_nN cos(Delta_nN t),
/// averaged over |c|^2 at the initial momenta. Units of F/m0. n_terms limits the
/// sum to bands 0..n_terms-1 (0 = all bands of the model).
double short_time_acceleration(const Model& model, double t, int n_terms = 0);

/// First-order velocity trace on t_grid (t_r, ascending, starting at or after 0):
/// v(t) = v(0) + F int_0^t a dt'. Acceleration stored in v_r/t_r.
/// The guard flag is set when the first-order amplitudes exceed the threshold.
VelocityTrace perturbative_velocity_trace(const Model& model, const std::vector<double>& t_grid);

/// Amplitudes over the wavepacket nodes at one time.
struct BandAmplitudes {
    double t = 0.0;
    std::vector<double> kappa;              // initial crystal momenta (quadrature nodes)
    std::vector<double> k;                  // kappa + F t
    std::vector<double> weight;             // d(kappa) quadrature weights
    std::vector<std::vector<cplx>> amp;     // [band][node]
    bool degenerate = false;                // some |E_nN| fell below the floor (term dropped)

    /// sum_n int |amp_n|^2 d(kappa)
    double norm() const;
    double population(int n) const;
};

/// Modified-Bloch-state amplitudes: b_N = c(kappa) e^{-i gamma_N},
/// b_n = -c(kappa) F x_nN(kappa)/E_nN(kappa) e^{-i gamma_n}.
BandAmplitudes modified_bloch_amplitudes(const Model& model, double t);

/// Bloch-basis amplitudes c_N = c(kappa) e^{-i gamma_N},
/// c_n = c(kappa) [F x_nN(k)/E_nN(k) e^{-i gamma_N} - F x_nN(kappa)/E_nN(kappa) e^{-i gamma_n}].
BandAmplitudes bloch_basis_amplitudes(const Model& model, double t);

/// Acceleration split into band-N intraband, band-N interband and coherence
/// parts, each in units of F/m0. total = intra + inter + coherence.
struct AccelDecomposition {
    std::vector<double> t;
    std::vector<double> total, intra, inter, coherence;
};

AccelDecomposition acceleration_decomposition(const Model& model, const std::vector<double>& t_grid);

/// CSV: t, a_total, a_intra, a_inter, a_coh (units F/m0), v (v_r).
void write_trace_csv(std::ostream& out, const AccelDecomposition& dec, const VelocityTrace& trace);

}  // namespace onset::analytic
