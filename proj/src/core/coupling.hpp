#pragma once

#include <Eigen/Dense>
#include <vector>

#include "crystal.hpp"
#include "polynomial.hpp"

namespace ioncouple::coupling {

using crystal::Axis;

// Spatial part of the oscillating drive potential, volts, up to cubic order.
struct DrivePolynomial {
    Polynomial3 u;
    double beta = 1.0;

    static DrivePolynomial cubic_z(double u0, double beta = 1.0);
    void validate() const;
    bool operator==(const DrivePolynomial &) const = default;
};

// sin^2 ramp of length `ramp`, flat top of length `flat`, mirrored ramp down.
struct PulseEnvelope {
    double ramp = 0.0;
    double flat = 0.0;

    // Envelope whose area equals `area`, using the nominal ramp when it fits and
    // a shortened ramp with no flat top otherwise.
    static PulseEnvelope for_area(double area, double nominal_ramp);
    static PulseEnvelope square(double duration) { return {0.0, duration}; }

    double ramp_frequency() const;  // f = 1 / (4 ramp), Hz
    double duration() const { return 2.0 * ramp + flat; }
    void validate() const;
    bool operator==(const PulseEnvelope &) const = default;
};

double envelope_value(const PulseEnvelope &env, double t);
double envelope_area(const PulseEnvelope &env);

struct ModeRef {
    Axis axis = Axis::Z;
    int index = 0;
    bool operator==(const ModeRef &) const = default;
};

struct CouplingDrive {
    DrivePolynomial polynomial;
    double frequency = 0.0;  // rad/s
    double phase = 0.0;      // rad
    PulseEnvelope envelope;
    ModeRef a;  // higher-frequency mode
    ModeRef b;

    void validate() const;
    bool operator==(const CouplingDrive &) const = default;
};

double curvature_at(const DrivePolynomial &poly, const Eigen::Vector3d &position, Axis ia, Axis ib);

struct CouplingStrength {
    double g0 = 0.0;            // rad/s
    std::vector<double> per_ion;  // rad/s, sums to g0
};

CouplingStrength coupling_strength(const crystal::CrystalSolution &s, const CouplingDrive &drive);
double exchange_rate(double g0);
// delta = omega - (omega_a - omega_b); requires omega_a > omega_b.
double detuning(const crystal::CrystalSolution &s, const CouplingDrive &drive);
double resonance(const crystal::CrystalSolution &s, const ModeRef &a, const ModeRef &b);

// Factor by which the drive polynomial must be scaled to reach g0 = target.
double scale_for_coupling(const crystal::CrystalSolution &s, const CouplingDrive &drive, double target_g0);

}  // namespace ioncouple::coupling
