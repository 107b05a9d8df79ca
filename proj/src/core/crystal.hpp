#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

#include "polynomial.hpp"

namespace ioncouple::crystal {

enum class Axis { X = 0, Y = 1, Z = 2 };

char axis_name(Axis a);
Axis axis_from_char(char c);

struct IonSpecies {
    double mass = 0.0;  // kg
    int charge = 1;     // multiples of e
    std::string label;

    static IonSpecies from_amu(std::string label, double mass_amu, int charge = 1);
    void validate() const;
    bool operator==(const IonSpecies &) const = default;
};

// Static potential energy per unit charge, U0(r) in volts. The harmonic part
// is U0 = (kx x^2 + ky y^2 + kz z^2) / 2, higher terms up to quartic order.
struct TrapPotential {
    Polynomial3 u0;

    static TrapPotential harmonic(double kx, double ky, double kz);
    // Curvatures chosen so a single ion of the given mass and charge has the
    // angular frequencies (wx, wy, wz).
    static TrapPotential from_frequencies(double mass, int charge, double wx, double wy, double wz);

    double curvature(Axis a) const;
    void validate() const;
    bool operator==(const TrapPotential &) const = default;
};

struct PhysicalConstants {
    double elementary_charge;
    double vacuum_permittivity;
    double atomic_mass_unit;

    static PhysicalConstants codata2018();
    double coulomb_e2() const;
    bool operator==(const PhysicalConstants &) const = default;
};

struct CrystalConfig {
    std::vector<IonSpecies> ions;  // ordered along +z
    TrapPotential trap;
    PhysicalConstants constants = PhysicalConstants::codata2018();

    void validate() const;
    bool operator==(const CrystalConfig &) const = default;
};

struct AxisModes {
    Eigen::VectorXd frequencies;    // rad/s, ascending
    Eigen::MatrixXd participation;  // rows = ions, columns = modes
};

struct CrystalSolution {
    std::vector<Eigen::Vector3d> positions;  // m
    std::array<AxisModes, 3> axes;
    std::vector<double> masses;
    std::vector<int> charges;
    // Largest mass-weighted Hessian entry coupling different axes, relative to
    // the largest diagonal entry. Zero for an axis-aligned potential.
    double cross_axis_coupling = 0.0;

    const AxisModes &axis(Axis a) const { return axes[static_cast<int>(a)]; }
    int ion_count() const { return static_cast<int>(positions.size()); }
};

struct SolverOptions {
    int max_iterations = 200;
    double tolerance = 1e-12;  // relative to e^2 / (4 pi eps0 d^2)
};

Eigen::VectorXd potential_gradient(const CrystalConfig &config, const std::vector<Eigen::Vector3d> &r);
Eigen::MatrixXd potential_hessian(const CrystalConfig &config, const std::vector<Eigen::Vector3d> &r);
double force_scale(const CrystalConfig &config, const std::vector<Eigen::Vector3d> &r);
double characteristic_length(const CrystalConfig &config);

std::vector<Eigen::Vector3d> equilibrium_positions(const CrystalConfig &config, const SolverOptions &options = {});
CrystalSolution normal_modes(const CrystalConfig &config, const std::vector<Eigen::Vector3d> &positions);
CrystalSolution solve(const CrystalConfig &config, const SolverOptions &options = {});

double participation(const CrystalSolution &s, int ion, Axis axis, int mode);
double frequency(const CrystalSolution &s, Axis axis, int mode);

// Applies the sign convention (largest-magnitude entry positive, first index
// wins among ties) to each column.
void fix_signs(Eigen::MatrixXd &vectors);

}  // namespace ioncouple::crystal
