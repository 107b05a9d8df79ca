#include "coupling.hpp"

#include <cmath>

#include "errors.hpp"
#include "units.hpp"

namespace ioncouple::coupling {

DrivePolynomial DrivePolynomial::cubic_z(double u0, double beta) {
    DrivePolynomial d;
    d.u.add(0, 0, 3, u0);
    d.beta = beta;
    return d;
}

void DrivePolynomial::validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ArgumentError("drive amplitude scale beta must lie in [0, 1]");
    if (u.max_degree() > 3) throw ConfigError("drive polynomial terms beyond cubic order are not supported");
    bool coupling_term = false;
    for (const auto &t : u.terms()) {
        if (!std::isfinite(t.coefficient)) throw ArgumentError("drive polynomial coefficient is not finite");
        if (t.coefficient == 0.0) continue;
        const int distinct = (t.power[0] > 0) + (t.power[1] > 0) + (t.power[2] > 0);
        if (t.degree() == 3 || (t.degree() == 2 && distinct == 2)) coupling_term = true;
    }
    if (!coupling_term) throw ArgumentError("drive polynomial needs a nonzero mixed or cubic coefficient");
}

PulseEnvelope PulseEnvelope::for_area(double area, double nominal_ramp) {
    if (area < 0.0 || nominal_ramp < 0.0) throw ArgumentError("pulse area and ramp must be non-negative");
    if (area >= nominal_ramp) return {nominal_ramp, area - nominal_ramp};
    return {area, 0.0};
}

double PulseEnvelope::ramp_frequency() const { return ramp > 0.0 ? 1.0 / (4.0 * ramp) : 0.0; }

void PulseEnvelope::validate() const {
    if (!(ramp >= 0.0) || !(flat >= 0.0) || !std::isfinite(ramp) || !std::isfinite(flat))
        throw ArgumentError("envelope ramp and flat times must be non-negative");
}

double envelope_value(const PulseEnvelope &env, double t) {
    if (t < 0.0) throw ArgumentError("envelope evaluated at negative time");
    const double end = env.duration();
    if (t > end) return 0.0;
    if (t < env.ramp) {
        const double s = std::sin(2.0 * units::pi * env.ramp_frequency() * t);
        return s * s;
    }
    if (t <= env.ramp + env.flat) return 1.0;
    const double s = std::sin(2.0 * units::pi * env.ramp_frequency() * (end - t));
    return s * s;
}

double envelope_area(const PulseEnvelope &env) { return env.ramp + env.flat; }

void CouplingDrive::validate() const {
    polynomial.validate();
    envelope.validate();
    if (!(frequency > 0.0)) throw ArgumentError("drive frequency must be positive");
    if (a == b) throw ArgumentError("coupling needs two distinct modes");
}

double curvature_at(const DrivePolynomial &poly, const Eigen::Vector3d &position, Axis ia, Axis ib) {
    return poly.beta * poly.u.hessian(position)(static_cast<int>(ia), static_cast<int>(ib));
}

CouplingStrength coupling_strength(const crystal::CrystalSolution &s, const CouplingDrive &drive) {
    if (drive.a == drive.b) throw ArgumentError("coupling needs two distinct modes");
    const double wa = crystal::frequency(s, drive.a.axis, drive.a.index);
    const double wb = crystal::frequency(s, drive.b.axis, drive.b.index);
    const double root = std::sqrt(wa * wb);
    CouplingStrength out;
    out.per_ion.resize(s.ion_count());
    for (int n = 0; n < s.ion_count(); ++n) {
        const double alpha = curvature_at(drive.polynomial, s.positions[n], drive.a.axis, drive.b.axis);
        const double q = s.charges[n] * units::elementary_charge;
        const double xa = crystal::participation(s, n, drive.a.axis, drive.a.index);
        const double xb = crystal::participation(s, n, drive.b.axis, drive.b.index);
        out.per_ion[n] = q * alpha / (4.0 * s.masses[n] * root) * xa * xb;
        out.g0 += out.per_ion[n];
    }
    return out;
}

double exchange_rate(double g0) { return 2.0 * g0; }

double resonance(const crystal::CrystalSolution &s, const ModeRef &a, const ModeRef &b) {
    const double wa = crystal::frequency(s, a.axis, a.index);
    const double wb = crystal::frequency(s, b.axis, b.index);
    if (!(wa > wb)) throw ArgumentError("mode a must have the higher frequency");
    return wa - wb;
}

double detuning(const crystal::CrystalSolution &s, const CouplingDrive &drive) {
    return drive.frequency - resonance(s, drive.a, drive.b);
}

double scale_for_coupling(const crystal::CrystalSolution &s, const CouplingDrive &drive, double target_g0) {
    const double g = coupling_strength(s, drive).g0;
    if (g == 0.0) throw ArgumentError("drive does not couple the selected modes; cannot rescale");
    return target_g0 / g;
}

}  // namespace ioncouple::coupling
