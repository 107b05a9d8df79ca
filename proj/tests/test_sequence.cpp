#include <gtest/gtest.h>

#include <cmath>

#include "errors.hpp"
#include "sequence.hpp"
#include "units.hpp"

using namespace ioncouple;
using namespace ioncouple::sequence;
using hilbert::SpaceLayout;

namespace {

const double pi = units::pi;

SpaceLayout mode_mode_spin(int cutoff = 4) {
    return SpaceLayout({SpaceLayout::mode("A", cutoff), SpaceLayout::mode("S", cutoff), SpaceLayout::spin("M")});
}

Context ideal() {
    Context c;
    c.sideband_infidelity = 0.0;
    return c;
}

ExchangeSetup setup(double g0 = units::khz(2.55), double ramp = 0.0) {
    ExchangeSetup s;
    s.g0 = g0;
    s.ramp = ramp;
    s.context = ideal();
    return s;
}

ExchangeSetup noisy(double heat_a = 60.0, double heat_s = 1.0) {
    auto s = setup(units::khz(2.55), 20e-6);
    s.context.noise.set_heating(0, heat_a);
    s.context.noise.set_heating(1, heat_s);
    return s;
}

double p(const JointState &s, std::vector<int> lv) { return hilbert::populations(s)[s.layout.index(lv)]; }

// Dense exp(-i H t) for a Hermitian H, used as an independent propagator oracle.
hilbert::Matrix propagator(const hilbert::Matrix &h, double t) {
    Eigen::SelfAdjointEigenSolver<hilbert::Matrix> es(h);
    Eigen::VectorXcd ph(h.rows());
    for (int i = 0; i < h.rows(); ++i) ph[i] = std::polar(1.0, -es.eigenvalues()[i] * t);
    return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

std::vector<double> grid(double lo, double hi, int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back(lo + (hi - lo) * i / (n - 1));
    return v;
}

}  // namespace

TEST(sequence, sideband_pi_moves_one_quantum) {
    auto l = mode_mode_spin();
    auto s = apply_event(JointState::basis(l, {1, 0, 0}), Sideband{2, 0, pi, 0.3, -1}, ideal());
    EXPECT_NEAR(p(s, {0, 0, 1}), 1.0, 1e-12);
    auto add = apply_event(JointState::basis(l, {0, 0, 0}), Sideband{2, 1, pi, 0.0, +1}, ideal());
    EXPECT_NEAR(p(add, {0, 1, 1}), 1.0, 1e-12);
    // n = 2 sees angle pi sqrt(2).
    auto two = apply_event(JointState::basis(l, {2, 0, 0}), Sideband{2, 0, pi, 0.0, -1}, ideal());
    EXPECT_NEAR(p(two, {1, 0, 1}), std::pow(std::sin(pi * std::sqrt(2.0) / 2), 2), 1e-12);
}

TEST(sequence, mss_two_pi_flips_sign_of_one_quantum) {
    auto l = mode_mode_spin();
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(l.dimension());
    psi[l.index({0, 0, 0})] = 1.0;
    psi[l.index({1, 0, 0})] = 1.0;
    const auto u = sideband_unitary(l, Sideband{2, 0, 2 * pi, 0.0, -1});
    const Eigen::VectorXcd out = u * psi;
    EXPECT_NEAR(std::abs(out[l.index({0, 0, 0})] - 1.0), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(out[l.index({1, 0, 0})] + 1.0), 0.0, 1e-12);
}

TEST(sequence, carrier_leaves_motion_alone) {
    auto l = mode_mode_spin();
    auto s = apply_event(hilbert::thermal_state(l, 0, 0.2), Carrier{2, pi, 0.0}, ideal());
    EXPECT_NEAR(hilbert::marginal_populations(s, 2)[1], 1.0, 1e-12);
    EXPECT_NEAR(hilbert::mean_occupation(s, 0), hilbert::mean_occupation(hilbert::thermal_state(l, 0, 0.2), 0), 1e-12);
    EXPECT_THROW(apply_event(s, Carrier{0, pi, 0.0}, ideal()), ArgumentError);
}

TEST(sequence, sideband_infidelity_is_a_mixture) {
    auto l = mode_mode_spin();
    Context c;
    c.sideband_infidelity = 0.03;
    auto s = apply_event(JointState::basis(l, {1, 0, 0}), Sideband{2, 0, pi, 0.0, -1}, c);
    EXPECT_NEAR(p(s, {0, 0, 1}), 0.97, 1e-12);
    EXPECT_NEAR(p(s, {1, 0, 0}), 0.03, 1e-12);
}

TEST(sequence, rap_transfer_channel) {
    auto l = mode_mode_spin();
    RapTransfer r{2, 0, RapDirection::Subtract, 0.95};
    for (int n = 1; n <= 3; ++n) {
        auto s = apply_event(JointState::basis(l, {n, 0, 0}), r, ideal());
        EXPECT_NEAR(p(s, {n - 1, 0, 1}), 0.95, 1e-12);
        EXPECT_NEAR(p(s, {n, 0, 0}), 0.05, 1e-12);
        EXPECT_NEAR(s.trace(), 1.0, 1e-12);
    }
    auto v = apply_event(JointState::basis(l, {0, 0, 0}), r, ideal());
    EXPECT_NEAR(p(v, {0, 0, 0}), 1.0, 1e-12);
    EXPECT_THROW(apply_event(v, RapTransfer{2, 0, RapDirection::Subtract, 1.2}, ideal()), ArgumentError);
}

TEST(sequence, scatter_recoil_follows_participation) {
    auto l = mode_mode_spin(6);
    Context c = ideal();
    c.recoil_kappa = 4e-6;
    c.participation = {{0.5854, 0.7071}, {-0.5609, 0.0}, {0.5854, -0.7071}};
    auto s = apply_event(JointState::basis(l, {0, 0, 0}), Scatter{1, 3000.0}, c);
    EXPECT_EQ(hilbert::mean_occupation(s, 1), 0.0);
    const double want = 4e-6 * 3000.0 * 0.5609 * 0.5609;
    EXPECT_NEAR(hilbert::mean_occupation(s, 0) / want, 1.0, 1e-6);
    auto b = apply_event(JointState::basis(l, {0, 0, 0}), Scatter{0, 3000.0}, c);
    EXPECT_NEAR(hilbert::mean_occupation(b, 1) / (4e-6 * 3000.0 * 0.7071 * 0.7071), 1.0, 1e-6);
}

TEST(sequence, recool_replaces_marginal) {
    auto l = mode_mode_spin(5);
    auto s = apply_event(JointState::basis(l, {3, 2, 1}), Recool{0, 0.023}, ideal());
    EXPECT_NEAR(hilbert::mean_occupation(s, 0), 0.023, 1e-3);
    EXPECT_NEAR(hilbert::mean_occupation(s, 1), 2.0, 1e-14);
    EXPECT_NEAR(hilbert::marginal_populations(s, 2)[1], 1.0, 1e-14);
}

TEST(sequence, duration_scan_noise_free_is_sin_squared) {
    auto st = setup(units::khz(2.55), 20e-6);
    const auto taus = grid(0, 400e-6, 21);
    auto series = scan_duration(st, taus);
    const auto ps = series.marginal_s(1);
    for (size_t i = 0; i < taus.size(); ++i) EXPECT_NEAR(ps[i], std::pow(std::sin(st.g0 * taus[i]), 2), 1e-6);
    for (const auto &pt : series.points) EXPECT_NEAR(pt.p.sum() + pt.outside, 1.0, 1e-8);
}

TEST(sequence, frequency_scan_peaks_on_resonance) {
    auto st = setup();
    const double ts = pi / (2 * st.g0);
    const double w0 = units::mhz(0.283);
    std::vector<double> w = {w0 - units::khz(200), w0, w0 + units::khz(3)};
    auto series = scan_frequency(st, w, w0, ts);
    const auto pa = series.marginal_a(1), ps = series.marginal_s(1);
    EXPECT_NEAR(ps[1], 1.0, 1e-8);
    EXPECT_GT(pa[0], 0.999);
    EXPECT_LT(ps[2], ps[1]);
}

TEST(sequence, noise_free_scans_keep_quantum_number_blocks) {
    auto st = setup(units::khz(2.55), 20e-6);
    auto series = hom_interference(st, 1, HomScan::Duration, grid(0, 300e-6, 13));
    for (const auto &pt : series.points) {
        double off = 0.0;
        for (int a = 0; a <= 2; ++a)
            for (int b = 0; b <= 2; ++b)
                if (a + b != 2) off += pt.at(a, b);
        EXPECT_LT(off, 1e-8);
    }
}

TEST(sequence, hom_dip_at_beamsplitter_time) {
    auto st = setup();
    auto series = hom_interference(st, 1, HomScan::Duration, {pi / (4 * st.g0)});
    EXPECT_NEAR(series.points[0].at(2, 0), 0.5, 1e-8);
    EXPECT_NEAR(series.points[0].at(0, 2), 0.5, 1e-8);
    EXPECT_NEAR(series.points[0].at(1, 1), 0.0, 1e-8);
}

TEST(sequence, hom_phase_scan_matches_propagator_oracle) {
    auto st = setup();
    const auto phis = grid(0, 2 * pi, 17);
    auto single = hom_interference(st, 0, HomScan::Phase, phis);
    auto pair = hom_interference(st, 1, HomScan::Phase, phis);
    SpaceLayout l({SpaceLayout::mode("A", 5), SpaceLayout::mode("S", 5)});
    const double tbs = pi / (4 * st.g0);
    const auto u1 = propagator(hilbert::coupling_hamiltonian(l, {st.g0, 0.0, 0.0, 0, 1}), tbs);
    double lo10 = 1, hi10 = 0;
    for (size_t i = 0; i < phis.size(); ++i) {
        const auto u2 = propagator(hilbert::coupling_hamiltonian(l, {st.g0, phis[i], 0.0, 0, 1}), tbs);
        const Eigen::VectorXcd a = u2 * u1 * Eigen::VectorXcd::Unit(l.dimension(), l.index({1, 0}));
        const Eigen::VectorXcd b = u2 * u1 * Eigen::VectorXcd::Unit(l.dimension(), l.index({1, 1}));
        EXPECT_NEAR(single.points[i].at(0, 1), std::norm(a[l.index({0, 1})]), 1e-8);
        EXPECT_NEAR(pair.points[i].at(1, 1), std::norm(b[l.index({1, 1})]), 1e-8);
        lo10 = std::min(lo10, single.points[i].at(0, 1));
        hi10 = std::max(hi10, single.points[i].at(0, 1));
    }
    EXPECT_NEAR(hi10 - lo10, 1.0, 1e-8);
    // Fringe frequency doubling: P(1,1)(phi) has period pi, P(0,1)(phi) period 2 pi.
    EXPECT_NEAR(pair.points[0].at(1, 1), pair.points[8].at(1, 1), 1e-8);
    EXPECT_NEAR(single.points[0].at(0, 1) + single.points[8].at(0, 1), 1.0, 1e-8);
    fitting::Series s2;
    for (size_t i = 0; i < phis.size(); ++i) {
        s2.x.push_back(2 * phis[i]);
        s2.y.push_back(pair.points[i].at(1, 1));
    }
    EXPECT_LT(fitting::fit(s2, fitting::Model::Fringe).residual_norm, 1e-7);
}

TEST(sequence, ramsey_variants_ideal) {
    auto st = setup(units::khz(2.55), 20e-6);
    st.cutoff = 3;
    const auto phis = grid(0, 2 * pi, 21);
    auto delay = ramsey_experiment(st, RamseyVariant::Delay, phis);
    auto swap = ramsey_experiment(st, RamseyVariant::Swap, phis);
    auto dbl = ramsey_experiment(st, RamseyVariant::DoubleSwap, phis);
    auto fd = fitting::fit({delay.phi, delay.p_down}, fitting::Model::Fringe);
    auto fs = fitting::fit({swap.phi, swap.p_down}, fitting::Model::Fringe);
    auto f2 = fitting::fit({dbl.phi, dbl.p_down}, fitting::Model::Fringe);
    EXPECT_NEAR(fd.value("contrast"), 1.0, 1e-8);
    EXPECT_LT(std::abs(fs.value("contrast")), 0.02);
    const double dphi = std::remainder(f2.value("phi_f") - fd.value("phi_f"), 2 * pi);
    EXPECT_NEAR(std::abs(dphi), pi, 0.05);
}

TEST(sequence, ramsey_double_swap_beats_delay_when_stretch_is_quieter) {
    auto st = noisy(600.0, 10.0);
    st.cutoff = 4;
    const auto phis = grid(0, 2 * pi, 13);
    auto fd = fitting::fit({phis, ramsey_experiment(st, RamseyVariant::Delay, phis).p_down}, fitting::Model::Fringe);
    auto f2 = fitting::fit({phis, ramsey_experiment(st, RamseyVariant::DoubleSwap, phis).p_down}, fitting::Model::Fringe);
    EXPECT_GE(f2.value("contrast"), fd.value("contrast"));
    EXPECT_LT(fd.value("contrast"), 0.99);
}

TEST(sequence, first_swap_error_with_heating) {
    auto st = noisy();
    const double ts = pi / (2 * st.g0);
    auto series = scan_duration(st, {ts});
    const double err = 1.0 - series.points[0].at(0, 1);
    EXPECT_GE(err, 0.005);
    EXPECT_LE(err, 0.02);
}

TEST(sequence, duration_fit_recovers_exchange_rate) {
    auto st = noisy();
    st.g0 = units::khz(5.1) / 2;
    const auto taus = grid(0, 600e-6, 31);
    auto series = scan_duration(st, taus);
    auto r = fitting::fit({taus, series.marginal_s(1)}, fitting::Model::Exchange);
    EXPECT_NEAR(r.value("OmegaC") / units::khz(5.1), 1.0, 0.005);
}

TEST(sequence, swap_fidelity_decay) {
    auto quiet = setup(pi / (2 * 100e-6), 20e-6);
    EXPECT_LT(swap_fidelity_decay(quiet, 15).epsilon, 1e-6);
    double prev = -1.0;
    for (double heat : {30.0, 60.0, 120.0}) {
        auto st = noisy(heat, 1.0);
        st.g0 = pi / (2 * 100e-6);
        const auto d = swap_fidelity_decay(st, 15);
        if (heat == 60.0) {
            EXPECT_GE(d.epsilon, 0.005);
            EXPECT_LE(d.epsilon, 0.015);
        }
        EXPECT_GE(d.epsilon, prev);
        prev = d.epsilon;
    }
}
