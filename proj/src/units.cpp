#include "onset/units.hpp"

#include <cmath>

namespace onset {

void LatticeConfig::validate() const {
    std::string problems;
    if (!(depth >= 0.0) || !std::isfinite(depth)) problems += " depth s must be >= 0;";
    if (!(wavelength > 0.0) || !std::isfinite(wavelength)) problems += " wavelength must be > 0;";
    if (!(bare_mass > 0.0) || !std::isfinite(bare_mass)) problems += " bare mass must be > 0;";
    if (!problems.empty()) throw InvalidArgument("invalid lattice config:" + problems);
}

double LatticeConfig::recoil_wavenumber() const { return 2.0 * constants::pi / wavelength; }

double LatticeConfig::recoil_energy() const {
    const double k = recoil_wavenumber();
    return constants::hbar * constants::hbar * k * k / (2.0 * bare_mass);
}

double LatticeConfig::recoil_velocity() const {
    return constants::hbar * recoil_wavenumber() / bare_mass;
}

double LatticeConfig::recoil_time() const { return constants::hbar / recoil_energy(); }

double LatticeConfig::force_from_acceleration(double accel) const {
    return accel * bare_mass / (recoil_energy() * recoil_wavenumber());
}

double LatticeConfig::acceleration_from_force(double force) const {
    return force * recoil_energy() * recoil_wavenumber() / bare_mass;
}

double LatticeConfig::bloch_frequency(double accel) const {
    return accel * bare_mass * lattice_constant() / constants::hbar;
}

}  // namespace onset
