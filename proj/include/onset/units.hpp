#pragma once

#include <stdexcept>
#include <string>

namespace onset {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a configuration or argument violates a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

namespace constants {
inline constexpr double hbar = 1.054571817e-34;        // J s
inline constexpr double planck = 6.62607015e-34;       // J s
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double rb87_mass = 1.443160648e-25;   // kg
inline constexpr double default_wavelength = 1064e-9;  // m, gives d = 532 nm
}  // namespace constants

/// Lattice, particle and recoil scales.
///
/// Internally everything runs in recoil units: energies in E_r, momenta in
/// hbar k_r, lengths in 1/k_r, times in t_r = hbar/E_r. In these units the
/// kinetic energy of a plane wave is q^2, the lattice period is pi, and a force
/// F is measured in E_r k_r. Velocities reported to users are in v_r = hbar k_r/m0
/// (so v/v_r equals p in hbar k_r), accelerations usually as multiples of F/m0.
struct LatticeConfig {
    double depth = 0.0;                                // s = U_L / E_r
    double wavelength = constants::default_wavelength; // lambda (m)
    double bare_mass = constants::rb87_mass;           // m0 (kg)

    void validate() const;

    double lattice_constant() const { return 0.5 * wavelength; }
    double recoil_wavenumber() const;  // k_r (1/m)
    double recoil_energy() const;      // E_r (J)
    double recoil_velocity() const;    // v_r (m/s)
    double recoil_time() const;        // t_r (s)
    double recoil_length() const { return 1.0 / recoil_wavenumber(); }

    // SI <-> recoil conversions
    double time_to_recoil(double seconds) const { return seconds / recoil_time(); }
    double time_to_si(double t) const { return t * recoil_time(); }
    double length_to_recoil(double metres) const { return metres * recoil_wavenumber(); }
    double length_to_si(double z) const { return z / recoil_wavenumber(); }
    double energy_to_recoil(double joules) const { return joules / recoil_energy(); }
    double energy_to_si(double e) const { return e * recoil_energy(); }
    double velocity_to_recoil(double v) const { return v / recoil_velocity(); }
    double velocity_to_si(double v) const { return v * recoil_velocity(); }

    /// Force in E_r k_r for an acceleration F/m0 given in m/s^2.
    double force_from_acceleration(double accel) const;
    /// Inverse of force_from_acceleration.
    double acceleration_from_force(double force) const;

    /// Bloch angular frequency F d / hbar (rad/s) for F/m0 in m/s^2.
    double bloch_frequency(double accel) const;

    /// Angular frequency (rad/s) of an energy given in E_r.
    double angular_frequency(double energy) const { return energy / recoil_time(); }
};

}  // namespace onset
