#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "onset/levenberg_marquardt.hpp"
#include "onset/propagator.hpp"
#include "onset/trace.hpp"
#include "onset/units.hpp"

/// Measurement pipeline in recoil units: times in t_r, velocities in v_r,
/// angular frequencies in 1/t_r, forces in E_r k_r (so F/m0 = F in v_r/t_r).
/// Profiles keep the imaging coordinates (x in um, tof in s).
namespace onset::analysis {

using lm::FitError;

// ---------------------------------------------------------------- imaging

/// Velocity window of the imaging region: centre and full width in v_r.
struct ImagingWindow {
    double centre = -1.0;
    double width = 8.0;
};

/// TOF options cropping the far-field profile to the window.
propagator::TofOptions tof_window(const LatticeConfig& cfg, const ImagingWindow& w, double tof = 20e-3,
                                  double blur = 20.0);

/// Adds N(0, sigma^2) to every density sample (seeded, deterministic).
propagator::Profile add_noise(propagator::Profile p, double sigma, std::uint64_t seed);

// ------------------------------------------------------------ diffraction

struct DiffractionOptions {
    int n_peaks = 4;
    /// recoil velocity times tof, um per v_r; 0 derives it from cfg and the profile's tof
    double um_per_vr = 0.0;
    /// flag when the estimated weight of the next order outside the comb
    /// exceeds this fraction of the fitted total
    double edge_threshold = 0.0275;
    lm::Options lm;
};

struct DiffractionFit {
    std::vector<double> amplitude;  // peak heights, >= 0
    std::vector<double> centre;     // um, arithmetic
    std::vector<double> velocity;   // v_r
    double offset = 0.0;            // centre of the first peak, um
    double spacing = 0.0;           // um
    double width = 0.0;             // rms, um
    double residual_norm = 0.0;
    int iterations = 0;
    bool edge_flag = false;
    double edge_estimate = 0.0;     // estimated missing weight / total
    std::string note;

    double total() const;
};

/// Comb of n equal-width Gaussians with equally spaced centres.
DiffractionFit fit_diffraction(const propagator::Profile& profile, const LatticeConfig& cfg,
                               const DiffractionOptions& opts = {});

/// sum_j A_j v_j / sum_j A_j per frame; frames with zero total amplitude are
/// dropped and reported in notes.
VelocityTrace reconstruct_velocity(const std::vector<DiffractionFit>& fits, const std::vector<double>& t);

// --------------------------------------------------------------- two-sine

/// v(t) = A_d sin(w_d (t - t_ref) + phi_d) + A_B sin(w_B (t - t_ref) + phi_B)
struct TwoSineParams {
    double A_d = 0.0, w_d = 0.0, phi_d = 0.0;
    double A_B = 0.0, w_B = 0.0, phi_B = 0.0;

    std::array<double, 6> array() const { return {A_d, w_d, phi_d, A_B, w_B, phi_B}; }
    static TwoSineParams from(const double* p);
    double eval(double t, double t_ref) const;
};

struct TwoSineOptions {
    double start = 0.0;                  // window start, t_r
    double window = 0.0;                 // window length, t_r; 0: to the end of the trace
    std::optional<double> force;         // known F gives the w_B start value pi F
    double min_fast_ratio = 2.0;         // fast candidates must exceed this multiple of w_B
    int zero_pad = 16;
    lm::Options lm;
};

struct TwoSineFit {
    TwoSineParams p;
    TwoSineParams sigma;                 // 1 sigma from (J^T J)^-1 RSS/(n-6)
    std::array<std::array<double, 6>, 6> covariance{};
    double t_ref = 0.0;
    double window_start = 0.0, window_end = 0.0;
    std::size_t n_points = 0;
    double residual_norm = 0.0;
    int iterations = 0;
    std::vector<double> candidates;      // fast start frequencies tried
    std::vector<double> residuals;       // data - model on the window samples
    std::vector<std::string> notes;

    double eval(double t) const { return p.eval(t, t_ref); }
};

TwoSineFit fit_two_sine(const VelocityTrace& trace, const TwoSineOptions& opts = {});

/// Synthetic samples of the two-sine model plus N(0, noise^2) (seeded).
VelocityTrace synthesize_two_sine(const TwoSineParams& p, double t_ref, const std::vector<double>& t,
                                  double noise = 0.0, std::uint64_t seed = 0);

// ----------------------------------------------------------------- masses

class UnstableEstimateError : public Error {
public:
    using Error::Error;
};

struct MassEstimate {
    double m_eff = 0.0, m_dyn = 0.0;       // / m0
    double sigma_m_eff = 0.0, sigma_m_dyn = 0.0;
    double t0 = 0.0;                       // t_r
    double bloch_slope = 0.0;              // A_B w_B cos(w_B (t0 - t_ref) + phi_B)
    double fast_slope = 0.0;               // A_d w_d
};

/// Slopes at the zero of the fast phase t0 = t_ref - phi_d/w_d:
/// m_eff = F/(Bloch slope), m_dyn = F/(fast + Bloch slope).
/// Throws UnstableEstimateError when |cos| < min_cos.
MassEstimate extract_masses(const TwoSineFit& fit, double force, double min_cos = 0.1);

// ---------------------------------------------------------------- lowpass

/// Zero-phase 4th-order Butterworth (forward-backward, steady-state initial
/// conditions, odd extension at both ends). cutoff is an angular frequency
/// in 1/t_r; default sqrt(w_B w_d) must be supplied by the caller.
VelocityTrace lowpass_guide(const VelocityTrace& trace, double cutoff);

/// Second-order sections of a digital Butterworth lowpass, each {b0,b1,b2,a1,a2}.
std::vector<std::array<double, 5>> butterworth_sections(int order, double cutoff, double dt);

}  // namespace onset::analysis
