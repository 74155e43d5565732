#pragma once

#include <numbers>

// Physical constants (CODATA 2018) and the unit conversions used at the
// file/config boundary. Everything inside the library is SI: m, s, rad/s.
namespace jch::units {

inline constexpr double elementary_charge = 1.602176634e-19;     // C
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m
inline constexpr double atomic_mass_unit = 1.66053906660e-27;    // kg
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// e^2 / (4 pi eps0), N m^2
inline constexpr double coulomb_constant =
    elementary_charge * elementary_charge / (4.0 * std::numbers::pi * vacuum_permittivity);

inline constexpr double yb171_mass = 171.0 * atomic_mass_unit;

constexpr double khz_to_angular(double khz) { return two_pi * khz * 1e3; }
constexpr double mhz_to_angular(double mhz) { return two_pi * mhz * 1e6; }
constexpr double angular_to_khz(double w) { return w / two_pi * 1e-3; }
constexpr double angular_to_mhz(double w) { return w / two_pi * 1e-6; }
constexpr double um_to_m(double um) { return um * 1e-6; }
constexpr double m_to_um(double m) { return m * 1e6; }
constexpr double us_to_s(double us) { return us * 1e-6; }
constexpr double s_to_us(double s) { return s * 1e6; }

}  // namespace jch::units
