#pragma once

#include <numbers>

namespace ioncouple::units {

inline constexpr double pi = std::numbers::pi;

// CODATA 2018 exact / recommended values.
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg

inline constexpr double amu(double m) { return m * atomic_mass_unit; }
// Cyclic frequency in Hz to angular frequency in rad/s.
inline constexpr double hz(double f) { return 2.0 * pi * f; }
inline constexpr double khz(double f) { return hz(f * 1e3); }
inline constexpr double mhz(double f) { return hz(f * 1e6); }
inline constexpr double to_mhz(double w) { return w / (2.0 * pi * 1e6); }
inline constexpr double us(double t) { return t * 1e-6; }

// e^2 / (4 pi eps0), J m
inline constexpr double coulomb_constant_e2 =
    elementary_charge * elementary_charge / (4.0 * pi * vacuum_permittivity);

}  // namespace ioncouple::units
