// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "coupling.hpp"
#include "crystal.hpp"
#include "electrodes.hpp"
#include "errors.hpp"
#include "fitting.hpp"
#include "hilbert.hpp"
#include "presets.hpp"
#include "qnd.hpp"
#include "readout.hpp"
#include "sequence.hpp"
#include "units.hpp"

using namespace ioncouple;
using crystal::Axis;
using hilbert::cd;
using hilbert::JointState;
using hilbert::SpaceLayout;

namespace {

const double pi = units::pi;

struct Verdict {
    bool pass = true;
    std::string detail;

    void check(bool ok, const char *fmt, ...) __attribute__((format(printf, 3, 4))) {
        char buf[512];
        va_list ap;
        va_start(ap, fmt);
        std::vsnprintf(buf, sizeof buf, fmt, ap);
        va_end(ap);
        if (!detail.empty()) detail += "; ";
        detail += buf;
        if (!ok) {
            detail += " [x]";
            pass = false;
        }
    }
};

// ---- 1 -------------------------------------------------------------------

Verdict mode_structure() {
    Verdict v;
    const double wz = units::mhz(1.0);
    const auto s = crystal::solve(presets::equal_ions(3, 40.0, wz, units::mhz(5.0)));
    const auto &f = s.axis(Axis::Z).frequencies;
    const double expected[3] = {1.0, std::sqrt(3.0), std::sqrt(29.0 / 5.0)};
    double worst = 0.0;
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(f[k] / f[0] - expected[k]) / expected[k]);
    worst = std::max(worst, std::abs(f[0] / wz - 1.0));
    v.check(worst < 1e-9, "max relative ratio error %.2e (< 1e-9)", worst);

    const auto bmb = crystal::solve(presets::bmb_crystal());
    const double xi = crystal::participation(bmb, 1, Axis::Z, presets::bmb_stretch);
    v.check(std::abs(xi) < 1e-10, "BMB stretch xi_Mg = %.1e (< 1e-10)", xi);
    return v;
}

// ---- 2 -------------------------------------------------------------------

double max_abs(const std::vector<double> &x) {
    double m = 0.0;
    for (double y : x) m = std::max(m, std::abs(y));
    return m;
}

Verdict selection_rules() {
    Verdict v;
    const auto two = crystal::solve(presets::equal_ions(2, 9.0, units::mhz(1.0), units::mhz(4.0)));
    coupling::CouplingDrive d;
    d.frequency = 1.0;
    d.a = {Axis::X, 0};  // radial tilt, odd under reflection
    d.b = {Axis::Z, 0};  // axial centre of mass, even

    d.polynomial.u.add(1, 0, 1, 1e7);  // uniform xz curvature
    const auto sym = coupling::coupling_strength(two, d);
    v.check(max_abs(sym.per_ion) > 0.0 && std::abs(sym.g0) < 1e-12 * max_abs(sym.per_ion),
            "symmetric curvature: |g0|/max|g_n| = %.1e", std::abs(sym.g0) / max_abs(sym.per_ion));

    d.polynomial.u = {};
    d.polynomial.u.add(1, 0, 2, 1e12);  // xz curvature odd in z
    const auto anti = coupling::coupling_strength(two, d);
    const double rel = std::abs(anti.g0 - 2.0 * anti.per_ion[0]) / std::abs(anti.g0);
    v.check(anti.g0 != 0.0 && rel < 1e-12, "antisymmetric curvature: |g0 - 2 g1|/|g0| = %.1e", rel);

    // Three-ion BMB: even drive on the opposite-parity Alternating/Stretch pair.
    const auto bmb = crystal::solve(presets::bmb_crystal());
    coupling::CouplingDrive e;
    e.frequency = 1.0;
    e.a = {Axis::Z, presets::bmb_alternating};
    e.b = {Axis::Z, presets::bmb_stretch};
    e.polynomial.u.add(0, 0, 2, 1e7);
    e.polynomial.u.add(1, 1, 0, 1e7);
    const auto even = coupling::coupling_strength(bmb, e);
    v.check(std::abs(even.g0) < 1e-12 * max_abs(even.per_ion), "BMB even drive: |g0|/max|g_n| = %.1e",
            std::abs(even.g0) / max_abs(even.per_ion));
    e.polynomial = coupling::DrivePolynomial::cubic_z(1e10);
    const auto odd = coupling::coupling_strength(bmb, e);
    v.check(std::abs(odd.g0) > 1e3, "BMB cubic drive couples: g0 = %.0f rad/s", odd.g0);
    return v;
}

// ---- 3 -------------------------------------------------------------------

const double g0 = units::khz(2.55);

// exp(-i H t) on the span of |p, N - p>, with H = g0 (e^{i phi} a b^dag + e^{-i phi} a^dag b).
Eigen::VectorXcd subspace_propagation(int n, int m, double phase, double t) {
    const int total = n + m;
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(total + 1, total + 1);
    for (int p = 1; p <= total; ++p) {
        // a b^dag |p, N-p> = sqrt(p) sqrt(N-p+1) |p-1, N-p+1>
        const cd el = g0 * std::polar(1.0, phase) * std::sqrt(double(p) * double(total - p + 1));
        h(p - 1, p) = el;
        h(p, p - 1) = std::conj(el);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
    const Eigen::MatrixXcd u = es.eigenvectors() *
                               (es.eigenvalues().unaryExpr([&](double w) { return std::polar(1.0, -w * t); })).asDiagonal() *
                               es.eigenvectors().adjoint();
    return u.col(n);  // coefficient of |p, N-p> in row p
}

Verdict integrator_vs_closed_form() {
    Verdict v;
    const SpaceLayout l({SpaceLayout::mode("A", 5), SpaceLayout::mode("S", 5)});
    const double tmax = 2.0 * pi / g0;
    const int chunks = 32;
    double worst = 0.0, worst_closed = 0.0;
    int checks = 0;
    for (int n = 0; n <= 4; ++n)
        for (int m = 0; n + m <= 4; ++m)
            for (double phase : {0.0, 0.9}) {
                JointState s = JointState::basis(l, {n, m});
                hilbert::CouplingGenerator gen{g0, phase, 0.0, 0, 1};
                for (int c = 1; c <= chunks; ++c) {
                    const double t = tmax * c / chunks;
                    s = hilbert::evolve(s, gen, {}, coupling::PulseEnvelope::square(tmax / chunks), tmax / chunks);
                    const auto amp = subspace_propagation(n, m, phase, t);
                    const Eigen::MatrixXcd closed = hilbert::analytic_exchange(n, m, g0, phase, t);
                    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(l.dimension());
                    for (int p = 0; p <= n + m; ++p) {
                        psi[l.index({p, n + m - p})] = amp[p];
                        worst_closed = std::max(worst_closed, std::abs(closed(p, n + m - p) - amp[p]));
                    }
                    worst = std::max(worst, (s.rho - psi * psi.adjoint()).cwiseAbs().maxCoeff());
                    ++checks;
                }
            }
    v.check(worst < 1e-7, "%d states x grid: max |rho - rho_exact| = %.1e (< 1e-7)", checks, worst);
    v.check(worst_closed < 1e-10, "closed form vs subspace exponential %.1e", worst_closed);
    return v;
}

// ---- 4 -------------------------------------------------------------------

JointState run_exchange(const JointState &s, double t) {
    return hilbert::evolve(s, {g0, 0.0, 0.0, 0, 1}, {}, coupling::PulseEnvelope::square(t), t);
}

Verdict swap_ideals() {
    Verdict v;
    const SpaceLayout l({SpaceLayout::mode("A", 5), SpaceLayout::mode("S", 5)});
    auto pop = [&](const JointState &s, int a, int b) { return s.rho(l.index({a, b}), l.index({a, b})).real(); };
    const auto swapped = run_exchange(JointState::basis(l, {1, 0}), pi / (2 * g0));
    v.check(std::abs(pop(swapped, 0, 1) - 1.0) < 1e-8, "P(swap) - 1 = %.1e", pop(swapped, 0, 1) - 1.0);
    const auto hom = run_exchange(JointState::basis(l, {1, 1}), pi / (4 * g0));
    v.check(std::abs(pop(hom, 1, 1)) < 1e-8, "HOM P(1,1) = %.1e", pop(hom, 1, 1));
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(l.dimension());
    psi[l.index({0, 0})] = psi[l.index({1, 0})] = 1.0 / std::sqrt(2.0);
    const auto twice = run_exchange(JointState::from_pure(l, psi), pi / g0);
    const double phase = std::arg(twice.rho(l.index({1, 0}), l.index({0, 0})));
    const double err = std::abs(std::remainder(phase - pi, 2 * pi));
    v.check(err < 1e-6, "double-swap relative phase %.9f rad, |phase - pi| = %.1e", phase, err);
    return v;
}

// ---- 5 -------------------------------------------------------------------

sequence::ExchangeSetup quiet_setup(double coupling) {
    sequence::ExchangeSetup s;
    s.g0 = coupling;
    s.ramp = 0.0;
    s.cutoff = 5;
    s.context.sideband_infidelity = 0.0;
    return s;
}

Verdict heating_limited_swap() {
    Verdict v;
    auto s = quiet_setup(pi / (2 * 100e-6));
    s.context.noise.set_heating(0, 60.0);
    s.context.noise.set_heating(1, 1.0);
    const auto swap = sequence::swap_fidelity_decay(s, 15);
    const auto delay = sequence::swap_fidelity_decay(s, 15, true);
    v.check(swap.epsilon >= 0.005 && swap.epsilon <= 0.015, "swap epsilon = %.3f%% +- %.3f%% (in [0.5%%, 1.5%%])",
            100 * swap.epsilon, 100 * swap.fit.error("epsilon"));
    v.check(true, "delay-only epsilon = %.3f%%", 100 * delay.epsilon);
    return v;
}

// ---- 6 -------------------------------------------------------------------

std::vector<double> grid(double lo, double hi, int n) {
    std::vector<double> x;
    for (int i = 0; i < n; ++i) x.push_back(lo + (hi - lo) * i / (n - 1));
    return x;
}

Verdict fit_recovery() {
    Verdict v;
    const double omega_c = units::khz(5.1), w0 = units::mhz(0.283);
    const auto s = quiet_setup(omega_c / 2);

    const auto taus = grid(0.0, 600e-6, 41);
    const auto time_scan = sequence::scan_duration(s, taus);
    try {
        const auto f = fitting::fit({taus, time_scan.marginal_s(1)}, fitting::Model::Exchange);
        const double e = std::abs(f.value("OmegaC") / omega_c - 1.0);
        v.check(e < 5e-3, "exchange fit OmegaC/2pi = %.2f Hz (rel %.1e)", f.value("OmegaC") / (2 * pi), e);
    } catch (const NumericalError &e) {
        v.check(false, "exchange fit failed: %s", e.what());
    }

    fitting::FitOptions o;
    o.pulse_duration = pi / omega_c;  // swap pulse on resonance
    std::vector<double> w;
    for (double x : grid(-4 * omega_c, 4 * omega_c, 41)) w.push_back(w0 + x);
    const auto freq_scan = sequence::scan_frequency(s, w, w0, o.pulse_duration);
    try {
        const auto f = fitting::fit({w, freq_scan.marginal_s(1)}, fitting::Model::Lineshape, o);
        const double e1 = std::abs(f.value("omega0") / w0 - 1.0), e2 = std::abs(f.value("Omega0") / omega_c - 1.0);
        v.check(e1 < 5e-3, "lineshape omega0/2pi = %.2f Hz (rel %.1e)", f.value("omega0") / (2 * pi), e1);
        v.check(e2 < 5e-3, "lineshape Omega0/2pi = %.2f Hz (rel %.1e)", f.value("Omega0") / (2 * pi), e2);
    } catch (const NumericalError &e) {
        v.check(false, "lineshape fit failed: %s", e.what());
    }
    return v;
}

// ---- 7 -------------------------------------------------------------------

double poisson_tail_above(int cut, double mean) {
    double below = 0.0;  // P(k <= cut)
    for (int k = 0; k <= cut; ++k) below += std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
    return 1.0 - below;
}

Verdict readout_inference() {
    Verdict v;
    const long long trials = 100000;
    std::mt19937_64 rng(2024);
    struct Case {
        readout::FluorescenceModel model;
        readout::Thresholds cuts;
        std::vector<double> truth;
    };
    const Case cases[2] = {{readout::FluorescenceModel::beryllium(), readout::Thresholds::beryllium_pair(), {0.2, 0.5, 0.3}},
                           {readout::FluorescenceModel::magnesium(), readout::Thresholds::magnesium(), {0.4, 0.6}}};
    for (const auto &c : cases) {
        const int comps = static_cast<int>(c.truth.size());
        std::discrete_distribution<int> pick(c.truth.begin(), c.truth.end());
        std::vector<int> counts;
        std::vector<long long> classes(c.cuts.cuts.size() + 1, 0);
        for (long long t = 0; t < trials; ++t) {
            const int k = readout::sample_counts(c.model, pick(rng), rng);
            counts.push_back(k);
            ++classes[readout::classify(k, c.cuts)];
        }
        std::vector<double> means;
        for (int n = 0; n < comps; ++n) means.push_back(c.model.mean(n));
        const auto fit = readout::mle_bright_probs(readout::make_histogram(counts), means);
        double worst_sigma = 0.0;
        for (int n = 0; n < comps; ++n) worst_sigma = std::max(worst_sigma, std::abs(fit.weights[n] - c.truth[n]) / fit.errors[n]);
        v.check(worst_sigma < 3.0, "%s MLE worst deviation %.2f sigma", c.model.label.c_str(), worst_sigma);

        // Threshold classes: library tail sums against local ones, and sampled fractions.
        double tail_err = 0.0, class_sigma = 0.0;
        for (int n = 0; n < comps; ++n) {
            const auto p = readout::class_probabilities(c.model, n, c.cuts);
            double prev = 1.0;
            for (size_t j = 0; j < c.cuts.cuts.size(); ++j) {
                const double above = poisson_tail_above(c.cuts.cuts[j], c.model.mean(n));
                tail_err = std::max(tail_err, std::abs(p[j] - (prev - above)));
                prev = above;
            }
            tail_err = std::max(tail_err, std::abs(p.back() - prev));
        }
        for (size_t j = 0; j < classes.size(); ++j) {
            double expect = 0.0;
            for (int n = 0; n < comps; ++n) expect += c.truth[n] * readout::class_probabilities(c.model, n, c.cuts)[j];
            const double frac = double(classes[j]) / trials;
            class_sigma = std::max(class_sigma, std::abs(frac - expect) / std::sqrt(expect * (1 - expect) / trials));
        }
        v.check(tail_err < 1e-12 && class_sigma < 3.0, "%s thresholds: tail error %.1e, class fractions within %.2f sigma",
                c.model.label.c_str(), tail_err, class_sigma);
    }
    const std::array<double, 3> pb{0.5, 0.3, 0.2};
    const auto conv = readout::infer_number_populations(pb);
    const double p1 = 0.3 / 0.942, p2 = 0.2 / 0.889;
    const double err = std::max({std::abs(conv.p[1] - p1), std::abs(conv.p[2] - p2), std::abs(conv.p[0] - (1 - p1 - p2))});
    v.check(err <= 1e-15 && !conv.clamped, "0.942/0.889 conversion error %.1e", err);
    return v;
}

// ---- 8 -------------------------------------------------------------------

Verdict qnd_statistics() {
    Verdict v;
    const auto bmb = crystal::solve(presets::bmb_crystal());
    qnd::Protocol p;
    p.noise = qnd::QndNoise::calibrated(crystal::participation(bmb, 1, Axis::Z, presets::bmb_alternating));

    std::vector<qnd::ConditionedNbar> herald;
    for (int rounds = 1; rounds <= 3; ++rounds) {
        qnd::RepeatOptions o;
        o.rounds = rounds;
        o.trials = 20000;
        o.seed = 1;
        o.point = static_cast<std::uint64_t>(rounds);
        const auto series = qnd::run_repeated(p, o);
        const auto s = qnd::post_select(series);
        if (rounds == 1)
            v.check(std::abs(s.p_all_d - 0.960) <= 0.015, "N=1 p({d}) = %.4f +- %.4f", s.p_all_d, s.p_all_d_error);
        if (rounds == 2) v.check(std::abs(s.discard - 0.078) <= 0.03, "N=2 discard = %.4f", s.discard);
        herald.push_back(qnd::conditioned_nbar(series, std::string(rounds, 'd')));
    }
    for (int k = 0; k + 1 < 3; ++k) {
        const double slack = 3.0 * std::hypot(herald[k].error, herald[k + 1].error);
        v.check(herald[k + 1].nbar <= herald[k].nbar + slack, "nbar{%s} = %.4f(%.0f) vs nbar{%s} = %.4f(%.0f)",
                std::string(k + 1, 'd').c_str(), herald[k].nbar, 1e4 * herald[k].error, std::string(k + 2, 'd').c_str(),
                herald[k + 1].nbar, 1e4 * herald[k + 1].error);
    }

    // Noise-free: a state on {|0>, |1>} is heralded identically by two rounds.
    qnd::Protocol ideal;
    const auto l = qnd::motional_layout(ideal.timing.cutoff);
    JointState s{l, hilbert::Matrix::Zero(l.dimension(), l.dimension())};
    s.rho(l.index({0, 0}), l.index({0, 0})) = 0.7;
    s.rho(l.index({1, 0}), l.index({1, 0})) = 0.3;
    std::mt19937_64 g(7);
    long long agree = 0;
    const long long pairs = 20000;
    for (long long t = 0; t < pairs; ++t) {
        const auto r1 = qnd::run_round(s, ideal, g);
        agree += r1.outcome == qnd::run_round(r1.state, ideal, g).outcome;
    }
    const auto first = qnd::expand_round(s, ideal);
    const double p_same = first.p_lit * qnd::expand_round(first.lit, ideal).p_lit +
                          (1 - first.p_lit) * (1 - qnd::expand_round(first.dark, ideal).p_lit);
    v.check(agree == pairs && std::abs(1.0 - p_same) < 1e-12, "noise-free P(o2=o1) = %lld/%lld sampled, 1 - %.1e exact",
            agree, pairs, 1.0 - p_same);
    return v;
}

// ---- 9 -------------------------------------------------------------------

Verdict thermometry() {
    Verdict v;
    double worst = 0.0;
    for (double nbar : {0.01, 0.023, 0.1, 0.5, 2.0}) {
        const double q = nbar / (1 + nbar);
        const int cutoff = 900;
        Eigen::VectorXd pn(cutoff);
        for (int n = 0; n < cutoff; ++n) pn[n] = (1 - q) * std::pow(q, n);
        for (auto probe : {readout::Probe::PiPulse, readout::Probe::Weak}) {
            const auto s = readout::sideband_probe(pn, probe);
            worst = std::max(worst, std::abs(readout::sideband_ratio_nbar(s.mss, s.mas) - nbar) / std::max(1.0, nbar));
        }
    }
    v.check(worst < 1e-9, "thermal states, both probes: max error %.1e", worst);
    worst = 0.0;
    for (double p1 : {0.0, 0.02, 0.3, 0.7}) {
        Eigen::VectorXd pn = Eigen::VectorXd::Zero(6);
        pn[0] = 1 - p1;
        pn[1] = p1;
        const auto s = readout::sideband_probe(pn, readout::Probe::Weak);
        worst = std::max(worst, std::abs(readout::sideband_ratio_nbar(s.mss, s.mas) - p1));
    }
    v.check(worst < 1e-9, "{|0>,|1>} states, weak probe: max error %.1e", worst);
    return v;
}

// ---- 10 ------------------------------------------------------------------

Verdict electrode_solver() {
    Verdict v;
    using namespace electrodes;
    auto single = [](double gx, double zz) {
        FieldRecord r;
        r.gradient = {gx, 0.0, 0.0};
        r.curvature(2, 2) = zz;
        return std::vector<FieldRecord>{r};
    };
    // [a b; c d] v = [e; f] with gradient x and curvature zz rows.
    const double a = 0.8, b = -0.2, c = 0.3, d = 0.5, e = 0.1, f = 0.25;
    ElectrodeBasis basis{{"A", "B"}, {single(a, c), single(b, d)}};
    TargetSpec spec;
    spec.desired = {{0, Quantity::Curvature, 2, 2, f, 1.0}};
    spec.nulls = {{0, Quantity::Gradient, 0, 0, e, 1.0}};
    const auto sol = solve_amplitudes(basis, spec);
    const double det = a * d - b * c;
    const double v1 = (e * d - b * f) / det, v2 = (a * f - c * e) / det;
    const double err = std::max(std::abs(sol.amplitudes[0] - v1), std::abs(sol.amplitudes[1] - v2));
    v.check(err < 1e-12 && sol.feasible, "2x2 oracle error %.1e", err);

    // Synthetic basis: fields against the point-source formulas, then the projected gradient.
    const std::vector<double> ion_z{-0.5, 0.0, 0.5};
    const auto syn = synthetic_basis(ion_z);
    double field_err = 0.0;
    for (int k = 0; k < 12; ++k) {
        const Eigen::Vector3d src(k < 6 ? 2.5 : -2.5, 4.0, 3.0 * (k % 6 - 2.5));
        for (int i = 0; i < 3; ++i) {
            const Eigen::Vector3d r = Eigen::Vector3d(0, 0, ion_z[i]) - src;
            const double n = r.norm();
            const Eigen::Vector3d grad = -r / std::pow(n, 3);
            const Eigen::Matrix3d hess = (3.0 * r * r.transpose() - n * n * Eigen::Matrix3d::Identity()) / std::pow(n, 5);
            field_err = std::max({field_err, (syn.fields[k][i].gradient - grad).cwiseAbs().maxCoeff() / grad.norm(),
                                  (syn.fields[k][i].curvature - hess).cwiseAbs().maxCoeff() / hess.norm()});
        }
    }
    v.check(field_err < 1e-12, "synthetic fields vs 1/r sources %.1e", field_err);

    const auto target = synthetic_target();
    const auto s = solve_amplitudes(syn, target);
    auto row = [&](const Term &t) {
        Eigen::RowVectorXd r(12);
        for (int k = 0; k < 12; ++k)
            r[k] = t.quantity == Quantity::Gradient ? syn.fields[k][t.ion].gradient[t.i] : syn.fields[k][t.ion].curvature(t.i, t.j);
        return r;
    };
    Eigen::MatrixXd hard(target.desired.size(), 12), soft(target.nulls.size(), 12);
    Eigen::VectorXd th(hard.rows()), ts(soft.rows()), w(soft.rows());
    for (size_t k = 0; k < target.desired.size(); ++k) {
        hard.row(k) = row(target.desired[k]);
        th[k] = target.desired[k].value;
    }
    for (size_t k = 0; k < target.nulls.size(); ++k) {
        soft.row(k) = row(target.nulls[k]);
        ts[k] = target.nulls[k].value;
        w[k] = target.nulls[k].weight;
    }
    const double hard_err = (hard * s.amplitudes - th).cwiseAbs().maxCoeff();
    const Eigen::VectorXd grad = 2.0 * soft.transpose() * w.asDiagonal() * (soft * s.amplitudes - ts);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(hard);
    const Eigen::MatrixXd null = lu.kernel();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(null);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(12, null.cols());
    const double scale = 2.0 * soft.norm() * soft.norm() * s.amplitudes.norm() + 2.0 * soft.norm() * ts.norm();
    const double projected = (q.transpose() * grad).norm() / scale;
    v.check(hard_err < 1e-12 * std::max(1.0, th.cwiseAbs().maxCoeff()), "hard constraints error %.1e", hard_err);
    v.check(null.cols() == 9 && projected < 1e-10, "projected gradient on %ld-dim null space %.1e (relative)",
            static_cast<long>(null.cols()), projected);
    return v;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char *name;
        double limit_s;  // 0 = no runtime bound
        std::function<Verdict()> run;
    };
    const std::vector<Criterion> all = {
        {1, "mode-structure oracle", 1.0, mode_structure},
        {2, "selection rules", 1.0, selection_rules},
        {3, "integrator vs closed form", 30.0, integrator_vs_closed_form},
        {4, "swap and beamsplitter ideals", 10.0, swap_ideals},
        {5, "heating-limited swap error", 120.0, heating_limited_swap},
        {6, "lineshape and exchange fit recovery", 60.0, fit_recovery},
        {7, "readout inference", 60.0, readout_inference},
        {8, "QND statistics", 300.0, qnd_statistics},
        {9, "thermometry identity", 0.0, thermometry},
        {10, "electrode solver", 1.0, electrode_solver},
    };
    int failed = 0;
    for (const auto &c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception &e) {
            v.check(false, "threw: %s", e.what());
        }
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit_s > 0.0) v.check(dt < c.limit_s, "runtime %.2f s (< %.0f s)", dt, c.limit_s);
        else v.check(true, "runtime %.2f s", dt);
        std::printf("%s  %2d %s: %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str());
        std::fflush(stdout);
        failed += !v.pass;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
    return failed ? 1 : 0;
}
