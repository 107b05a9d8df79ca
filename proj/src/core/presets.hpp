#pragma once

#include "crystal.hpp"
#include "units.hpp"

namespace ioncouple::presets {

inline constexpr double beryllium9_amu = 9.0121831;
inline constexpr double magnesium25_amu = 24.98583696;

// Single 9Be+ axial frequency that puts the BMB Stretch mode at 3.38 MHz.
inline constexpr double bmb_axial_mhz = 1.951;
inline constexpr double bmb_radial_x_mhz = 9.0;
inline constexpr double bmb_radial_y_mhz = 10.0;

inline crystal::CrystalConfig bmb_crystal() {
    crystal::CrystalConfig c;
    const auto be = crystal::IonSpecies::from_amu("Be9", beryllium9_amu);
    const auto mg = crystal::IonSpecies::from_amu("Mg25", magnesium25_amu);
    c.ions = {be, mg, be};
    c.trap = crystal::TrapPotential::from_frequencies(be.mass, 1, units::mhz(bmb_radial_x_mhz),
                                                      units::mhz(bmb_radial_y_mhz), units::mhz(bmb_axial_mhz));
    return c;
}

inline crystal::CrystalConfig equal_ions(int n, double mass_amu, double wz, double wr) {
    crystal::CrystalConfig c;
    const auto ion = crystal::IonSpecies::from_amu("ion", mass_amu);
    c.ions.assign(n, ion);
    c.trap = crystal::TrapPotential::from_frequencies(ion.mass, 1, wr, 1.1 * wr, wz);
    return c;
}

// Axial mode indices of the BMB crystal in ascending-frequency order.
inline constexpr int bmb_in_phase = 0;
inline constexpr int bmb_stretch = 1;
inline constexpr int bmb_alternating = 2;

}  // namespace ioncouple::presets
