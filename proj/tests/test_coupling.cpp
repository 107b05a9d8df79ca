#include <gtest/gtest.h>

#include <cmath>

#include "coupling.hpp"
#include "errors.hpp"
#include "presets.hpp"
#include "units.hpp"

using namespace ioncouple;
using coupling::Axis;
using coupling::ModeRef;

namespace {

coupling::CouplingDrive bmb_drive(const coupling::DrivePolynomial &p, int a = presets::bmb_alternating,
                                  int b = presets::bmb_stretch) {
    coupling::CouplingDrive d;
    d.polynomial = p;
    d.frequency = units::mhz(0.283);
    d.a = {Axis::Z, a};
    d.b = {Axis::Z, b};
    return d;
}

double max_abs(const std::vector<double> &v) {
    double m = 0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST(coupling, cubic_curvature) {
    auto p = coupling::DrivePolynomial::cubic_z(3.0e9, 0.5);
    const double z0 = 4e-6;
    EXPECT_DOUBLE_EQ(coupling::curvature_at(p, {0, 0, z0}, Axis::Z, Axis::Z), 6 * 3.0e9 * z0 * 0.5);
    EXPECT_DOUBLE_EQ(coupling::curvature_at(p, {0, 0, -z0}, Axis::Z, Axis::Z),
                     -coupling::curvature_at(p, {0, 0, z0}, Axis::Z, Axis::Z));
    coupling::DrivePolynomial twist;
    twist.u.add(1, 0, 1, 7.0);
    twist.beta = 0.25;
    EXPECT_DOUBLE_EQ(coupling::curvature_at(twist, {1e-6, 2e-6, 3e-6}, Axis::X, Axis::Z), 7.0 * 0.25);
}

TEST(coupling, drive_polynomial_invariants) {
    coupling::DrivePolynomial p;
    p.u.add(0, 0, 2, 1.0);
    EXPECT_THROW(p.validate(), ArgumentError);
    p.u.add(0, 1, 1, 1.0);
    EXPECT_NO_THROW(p.validate());
    p.beta = 1.5;
    EXPECT_THROW(p.validate(), ArgumentError);
}

TEST(coupling, two_ion_symmetric_curvature_vanishes) {
    auto s = crystal::solve(presets::equal_ions(2, 9.0, units::mhz(1.0), units::mhz(4.0)));
    coupling::CouplingDrive d;
    d.polynomial.u.add(1, 0, 1, 1e7);  // alpha_xz identical at both ions
    d.frequency = 1.0;
    d.a = {Axis::X, 0};  // radial tilt mode is the lower x mode
    d.b = {Axis::Z, 0};
    auto g = coupling::coupling_strength(s, d);
    EXPECT_GT(max_abs(g.per_ion), 0.0);
    EXPECT_LT(std::abs(g.g0), 1e-12 * max_abs(g.per_ion));
}

TEST(coupling, two_ion_antisymmetric_curvature_adds) {
    auto s = crystal::solve(presets::equal_ions(2, 9.0, units::mhz(1.0), units::mhz(4.0)));
    coupling::CouplingDrive d;
    d.polynomial.u.add(1, 0, 2, 1e12);  // alpha_xz = 2 c z, opposite at the two ions
    d.frequency = 1.0;
    d.a = {Axis::X, 0};  // radial tilt mode is the lower x mode
    d.b = {Axis::Z, 0};
    auto g = coupling::coupling_strength(s, d);
    EXPECT_NEAR(g.g0, 2.0 * g.per_ion[0], 1e-12 * std::abs(g.g0));
    EXPECT_NEAR(g.per_ion[0], g.per_ion[1], 1e-12 * std::abs(g.g0));
}

TEST(coupling, bmb_selection_rules) {
    auto s = crystal::solve(presets::bmb_crystal());
    auto cubic = bmb_drive(coupling::DrivePolynomial::cubic_z(1e10));
    auto g = coupling::coupling_strength(s, cubic);
    EXPECT_LT(std::abs(g.per_ion[1]), 1e-12 * std::abs(g.g0));
    EXPECT_GT(std::abs(g.g0), 0.0);
    double sum = 0;
    for (double x : g.per_ion) sum += x;
    EXPECT_NEAR(sum, g.g0, 1e-12 * std::abs(g.g0));

    // Odd drive between two even modes (in-phase and alternating).
    auto same = bmb_drive(coupling::DrivePolynomial::cubic_z(1e10), presets::bmb_alternating, presets::bmb_in_phase);
    auto gs = coupling::coupling_strength(s, same);
    EXPECT_LT(std::abs(gs.g0), 1e-12 * max_abs(gs.per_ion));

    // Even drive between opposite-parity modes.
    coupling::DrivePolynomial even;
    even.u.add(0, 0, 2, 1e7);
    even.u.add(1, 1, 0, 1e7);
    auto ge = coupling::coupling_strength(s, bmb_drive(even));
    EXPECT_GT(max_abs(ge.per_ion), 0.0);
    EXPECT_LT(std::abs(ge.g0), 1e-12 * max_abs(ge.per_ion));
}

TEST(coupling, beta_linearity_and_exchange_rate) {
    auto s = crystal::solve(presets::bmb_crystal());
    auto d = bmb_drive(coupling::DrivePolynomial::cubic_z(1e10, 0.5));
    const double g_half = coupling::coupling_strength(s, d).g0;
    d.polynomial.beta = 1.0;
    const double g_full = coupling::coupling_strength(s, d).g0;
    EXPECT_NEAR(g_full, 2.0 * g_half, 1e-15 * std::abs(g_full));
    EXPECT_DOUBLE_EQ(coupling::exchange_rate(units::khz(2.55)), units::khz(5.1));
    EXPECT_EQ(coupling::exchange_rate(0.0), 0.0);
}

TEST(coupling, rescaling_reaches_target_rate) {
    auto s = crystal::solve(presets::bmb_crystal());
    auto d = bmb_drive(coupling::DrivePolynomial::cubic_z(1e10));
    const double target = units::khz(2.55);
    const double f = coupling::scale_for_coupling(s, d, target);
    d.polynomial.u = Polynomial3({{{0, 0, 3}, 1e10 * f}});
    EXPECT_NEAR(coupling::coupling_strength(s, d).g0, target, 1e-12 * target);
}

TEST(coupling, identical_modes_rejected) {
    auto s = crystal::solve(presets::bmb_crystal());
    auto d = bmb_drive(coupling::DrivePolynomial::cubic_z(1e10), 1, 1);
    EXPECT_THROW(coupling::coupling_strength(s, d), ArgumentError);
}

TEST(coupling, detuning_convention) {
    auto s = crystal::solve(presets::bmb_crystal());
    auto d = bmb_drive(coupling::DrivePolynomial::cubic_z(1e10));
    const double w0 = coupling::resonance(s, d.a, d.b);
    d.frequency = w0 + 10.0;
    EXPECT_NEAR(coupling::detuning(s, d), 10.0, 1e-6);
    EXPECT_NEAR(units::to_mhz(w0), 0.2815343147307522, 1e-9);
}

TEST(coupling, envelope_shape) {
    coupling::PulseEnvelope env{units::us(20), units::us(80)};
    EXPECT_DOUBLE_EQ(env.ramp_frequency(), 12.5e3);
    EXPECT_EQ(coupling::envelope_value(env, 0.0), 0.0);
    EXPECT_NEAR(coupling::envelope_value(env, env.ramp), 1.0, 1e-15);
    EXPECT_NEAR(coupling::envelope_value(env, env.ramp / 2), 0.5, 1e-15);
    EXPECT_NEAR(coupling::envelope_area(env), units::us(100), 1e-18);
    EXPECT_EQ(coupling::envelope_value(env, env.duration() + 1e-9), 0.0);
    EXPECT_NEAR(coupling::envelope_value(env, env.duration() - env.ramp / 2), 0.5, 1e-12);
}

TEST(coupling, envelope_area_quadrature) {
    coupling::PulseEnvelope env{units::us(20), units::us(37)};
    const int n = 200000;
    const double h = env.duration() / n;
    double area = 0.0, prev = coupling::envelope_value(env, 0.0);
    for (int i = 1; i <= n; ++i) {
        const double v = coupling::envelope_value(env, std::min(i * h, env.duration()));
        EXPECT_LE(v, 1.0);
        EXPECT_GE(v, 0.0);
        EXPECT_LT(std::abs(v - prev), 1e-3);
        area += 0.5 * h * (v + prev);
        prev = v;
    }
    EXPECT_NEAR(area / coupling::envelope_area(env), 1.0, 1e-9);
}

TEST(coupling, envelope_for_short_area) {
    auto e = coupling::PulseEnvelope::for_area(units::us(10), units::us(20));
    EXPECT_DOUBLE_EQ(coupling::envelope_area(e), units::us(10));
    auto f = coupling::PulseEnvelope::for_area(units::us(98), units::us(20));
    EXPECT_DOUBLE_EQ(f.ramp, units::us(20));
    EXPECT_NEAR(coupling::envelope_area(f), units::us(98), 1e-18);
}
