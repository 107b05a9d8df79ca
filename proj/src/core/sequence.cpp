#include "sequence.hpp"

#include <cmath>
#include <numbers>

#include "errors.hpp"

namespace ioncouple::sequence {

using hilbert::cd;
using hilbert::Matrix;
using hilbert::SpaceLayout;

namespace {

constexpr double pi = std::numbers::pi;
const cd I1(0.0, 1.0);
// Scatter kicks are integrated as a short heating burst; only rate x time matters at g = 0.
constexpr double kick_time = 1e-5;

void require_spin(const SpaceLayout &l, int s, std::pair<int, int> levels) {
    if (s < 0 || s >= l.size() || l[s].is_mode()) throw ArgumentError("event targets a subsystem that is not a spin");
    const int d = l[s].levels;
    if (levels.first < 0 || levels.second < 0 || levels.first >= d || levels.second >= d || levels.first == levels.second)
        throw ArgumentError("spin levels out of range for '" + l[s].name + "'");
}

void require_mode(const SpaceLayout &l, int m) {
    if (m < 0 || m >= l.size() || !l[m].is_mode()) throw ArgumentError("event targets a subsystem that is not a mode");
}

void require_finite(double v, const char *what) {
    if (!std::isfinite(v)) throw ArgumentError(std::string(what) + " must be finite");
}

std::pair<int, int> first_two_modes(const SpaceLayout &l) {
    std::vector<int> modes;
    for (int i = 0; i < l.size(); ++i)
        if (l[i].is_mode()) modes.push_back(i);
    if (modes.size() < 2) throw ArgumentError("free evolution needs a layout with two modes");
    return {modes[0], modes[1]};
}

JointState free_evolution(const JointState &s, const hilbert::NoiseModel &noise, double duration,
                          const hilbert::EvolveOptions &opt, hilbert::EvolveReport *rep) {
    if (duration == 0.0 || noise.silent()) return s;
    const auto [a, b] = first_two_modes(s.layout);
    hilbert::CouplingGenerator idle{0.0, 0.0, 0.0, a, b};
    return hilbert::evolve(s, idle, noise, coupling::PulseEnvelope::square(0.0), duration, opt, rep);
}

JointState mix_with_identity(const JointState &s, const Matrix &u, double p) {
    JointState out = hilbert::apply_unitary(s, u);
    if (p > 0.0) out.rho = (1.0 - p) * out.rho + p * s.rho;
    return out;
}

struct Applier {
    const JointState &state;
    const Context &ctx;
    hilbert::EvolveReport *report;

    JointState operator()(const Carrier &c) const { return hilbert::apply_unitary(state, carrier_unitary(state.layout, c)); }

    JointState operator()(const Sideband &s) const {
        if (!(ctx.sideband_infidelity >= 0.0 && ctx.sideband_infidelity <= 1.0))
            throw ArgumentError("sideband infidelity must lie in [0, 1]");
        return mix_with_identity(state, sideband_unitary(state.layout, s), ctx.sideband_infidelity);
    }

    JointState operator()(const RapTransfer &r) const {
        const auto &l = state.layout;
        require_spin(l, r.spin, r.levels);
        require_mode(l, r.mode);
        if (!(r.fidelity >= 0.0 && r.fidelity <= 1.0)) throw ArgumentError("RAP fidelity must lie in [0, 1]");
        const int ds = l[r.spin].levels, dm = l[r.mode].levels;
        Matrix move = Matrix::Zero(ds * dm, ds * dm);
        Matrix stay = Matrix::Identity(ds * dm, ds * dm);
        const int lo = r.levels.first, hi = r.levels.second;
        for (int n = 0; n < dm; ++n) {
            const int target = r.direction == RapDirection::Subtract ? n - 1 : n + 1;
            if (target < 0 || target >= dm) continue;
            move(hi * dm + target, lo * dm + n) = std::sqrt(r.fidelity);
            stay(lo * dm + n, lo * dm + n) = std::sqrt(1.0 - r.fidelity);
        }
        return hilbert::apply_kraus(state, {hilbert::embed_pair(l, move, r.spin, r.mode),
                                            hilbert::embed_pair(l, stay, r.spin, r.mode)});
    }

    JointState operator()(const CouplingPulse &p) const {
        require_finite(p.generator.g0, "coupling strength");
        require_finite(p.generator.phase, "coupling phase");
        require_finite(p.generator.detuning, "coupling detuning");
        const double duration = p.duration > 0.0 ? p.duration : p.envelope.duration();
        hilbert::NoiseModel noise = ctx.noise;
        if (ctx.drive_heating > 0.0)
            for (int k = 0; k < state.layout.size(); ++k)
                if (state.layout[k].is_mode()) noise.set_heating(k, noise.at(k).heating + ctx.drive_heating);
        return hilbert::evolve(state, p.generator, noise, p.envelope, duration, ctx.evolve, report);
    }

    JointState operator()(const Delay &d) const {
        if (!(d.duration >= 0.0)) throw ArgumentError("delay duration must be non-negative");
        return free_evolution(state, ctx.noise, d.duration, ctx.evolve, report);
    }

    JointState operator()(const Scatter &s) const {
        if (!(s.photons >= 0.0)) throw ArgumentError("photon count must be non-negative");
        hilbert::NoiseModel kick;
        for (int k = 0; k < state.layout.size(); ++k) {
            if (!state.layout[k].is_mode()) continue;
            const double xi = ctx.participation_of(s.ion, k);
            const double dn = ctx.recoil_kappa * s.photons * xi * xi;
            if (dn > 0.0) kick.set_heating(k, dn / kick_time);
        }
        return free_evolution(state, kick, kick_time, ctx.evolve, report);
    }

    JointState operator()(const Recool &r) const {
        require_mode(state.layout, r.mode);
        const int d = state.layout[r.mode].levels;
        const Matrix tau = hilbert::thermal_distribution(d, r.nbar).cast<cd>().asDiagonal();
        return hilbert::replace_subsystem(state, r.mode, tau);
    }
};

}  // namespace

std::string event_name(const PulseEvent &e) {
    static const char *names[] = {"carrier", "sideband", "rap", "coupling", "delay", "scatter", "recool"};
    return names[e.index()];
}

double Context::participation_of(int ion, int subsystem) const {
    if (ion < 0 || ion >= static_cast<int>(participation.size()))
        throw ArgumentError("scatter ion index has no participation entry");
    const auto &row = participation[ion];
    if (subsystem < 0 || subsystem >= static_cast<int>(row.size())) return 0.0;
    return row[subsystem];
}

Matrix carrier_unitary(const SpaceLayout &layout, const Carrier &c) {
    require_spin(layout, c.spin, c.levels);
    require_finite(c.theta, "rotation angle");
    require_finite(c.phi, "rotation phase");
    const int d = layout[c.spin].levels;
    hilbert::Sparse u(d, d);
    std::vector<Eigen::Triplet<cd>> trip;
    const int lo = c.levels.first, hi = c.levels.second;
    const double co = std::cos(c.theta / 2), si = std::sin(c.theta / 2);
    for (int k = 0; k < d; ++k)
        if (k != lo && k != hi) trip.emplace_back(k, k, 1.0);
    trip.emplace_back(lo, lo, co);
    trip.emplace_back(hi, hi, co);
    trip.emplace_back(hi, lo, -I1 * std::polar(1.0, c.phi) * si);
    trip.emplace_back(lo, hi, -I1 * std::polar(1.0, -c.phi) * si);
    u.setFromTriplets(trip.begin(), trip.end());
    return Matrix(layout.embed(u, c.spin));
}

Matrix sideband_unitary(const SpaceLayout &layout, const Sideband &s) {
    require_spin(layout, s.spin, s.levels);
    require_mode(layout, s.mode);
    require_finite(s.theta, "rotation angle");
    require_finite(s.phi, "rotation phase");
    if (s.order != -1 && s.order != 1) throw ArgumentError("sideband order must be -1 or +1");
    const int ds = layout[s.spin].levels, dm = layout[s.mode].levels;
    const int lo = s.levels.first, hi = s.levels.second;
    Matrix u = Matrix::Identity(ds * dm, ds * dm);
    for (int n = 0; n < dm; ++n) {
        const int m = n + s.order;  // motional level paired with |up>
        if (m < 0 || m >= dm) continue;
        const double angle = s.theta * std::sqrt(static_cast<double>(std::max(n, m)));
        const int down = lo * dm + n, up = hi * dm + m;
        const double co = std::cos(angle / 2), si = std::sin(angle / 2);
        u(down, down) = co;
        u(up, up) = co;
        u(up, down) = -I1 * std::polar(1.0, s.phi) * si;
        u(down, up) = -I1 * std::polar(1.0, -s.phi) * si;
    }
    return hilbert::embed_pair(layout, u, s.spin, s.mode);
}

JointState apply_event(const JointState &state, const PulseEvent &event, const Context &ctx,
                       hilbert::EvolveReport *report) {
    return std::visit(Applier{state, ctx, report}, event);
}

JointState apply_events(const JointState &state, const std::vector<PulseEvent> &events, const Context &ctx,
                        std::vector<std::string> *warnings) {
    JointState s = state;
    for (const auto &e : events) {
        hilbert::EvolveReport rep;
        s = apply_event(s, e, ctx, &rep);
        if (warnings)
            for (const auto &w : rep.warnings) warnings->push_back(event_name(e) + ": " + w);
    }
    return s;
}

JointState run_script(const ExperimentScript &script, const Context &ctx, std::vector<std::string> *warnings) {
    return apply_events(script.initial, script.events, ctx, warnings);
}

JointPopulations joint_populations(const JointState &state, int mode_a, int mode_b, int nmax) {
    require_mode(state.layout, mode_a);
    require_mode(state.layout, mode_b);
    if (nmax < 0) throw ArgumentError("nmax must be non-negative");
    JointPopulations out;
    out.nmax = nmax;
    out.p = Eigen::VectorXd::Zero((nmax + 1) * (nmax + 1));
    double total = 0.0;
    for (int i = 0; i < state.layout.dimension(); ++i) {
        const double p = state.rho(i, i).real();
        total += p;
        const auto lv = state.layout.levels_of(i);
        if (lv[mode_a] <= nmax && lv[mode_b] <= nmax) out.p[lv[mode_a] * (nmax + 1) + lv[mode_b]] += p;
    }
    out.outside = total - out.p.sum();
    return out;
}

std::vector<double> ScanSeries::column(int na, int ns) const {
    std::vector<double> out;
    for (const auto &p : points) out.push_back(p.at(na, ns));
    return out;
}

std::vector<double> ScanSeries::marginal_a(int n) const {
    std::vector<double> out;
    for (const auto &p : points) {
        double s = 0.0;
        for (int k = 0; k <= p.nmax; ++k) s += p.at(n, k);
        out.push_back(s);
    }
    return out;
}

std::vector<double> ScanSeries::marginal_s(int n) const {
    std::vector<double> out;
    for (const auto &p : points) {
        double s = 0.0;
        for (int k = 0; k <= p.nmax; ++k) s += p.at(k, n);
        out.push_back(s);
    }
    return out;
}

namespace {

SpaceLayout exchange_layout(const ExchangeSetup &s) {
    return SpaceLayout({SpaceLayout::mode("A", s.cutoff), SpaceLayout::mode("S", s.cutoff)});
}

CouplingPulse pulse(const ExchangeSetup &s, double area, double phase, double detuning = 0.0) {
    CouplingPulse p;
    p.generator = {s.g0, phase, detuning, 0, 1};
    p.envelope = coupling::PulseEnvelope::for_area(area, s.ramp);
    return p;
}

double swap_area(const ExchangeSetup &s) {
    if (!(s.g0 > 0.0)) throw ArgumentError("exchange experiments need a positive coupling strength");
    return pi / (2.0 * s.g0);
}

void record(ScanSeries &out, double x, const JointState &s, const std::vector<std::string> &w) {
    out.x.push_back(x);
    out.points.push_back(joint_populations(s, 0, 1));
    out.warnings.insert(out.warnings.end(), w.begin(), w.end());
}

}  // namespace

ScanSeries scan_frequency(const ExchangeSetup &setup, const std::vector<double> &frequencies, double resonance,
                          double duration, const JointState *initial) {
    const auto layout = exchange_layout(setup);
    const JointState start = initial ? *initial : JointState::basis(layout, {1, 0});
    ScanSeries out;
    out.x_name = "omega";
    for (double w : frequencies) {
        std::vector<std::string> warn;
        const auto s = apply_events(start, {pulse(setup, duration, setup.phase, w - resonance)}, setup.context, &warn);
        record(out, w, s, warn);
    }
    return out;
}

ScanSeries scan_duration(const ExchangeSetup &setup, const std::vector<double> &areas, const JointState *initial) {
    const auto layout = exchange_layout(setup);
    const JointState start = initial ? *initial : JointState::basis(layout, {1, 0});
    ScanSeries out;
    out.x_name = "tau";
    for (double tau : areas) {
        std::vector<std::string> warn;
        const auto s = tau > 0.0 ? apply_events(start, {pulse(setup, tau, setup.phase)}, setup.context, &warn) : start;
        record(out, tau, s, warn);
    }
    return out;
}

ScanSeries hom_interference(const ExchangeSetup &setup, int initial_s, HomScan scan, const std::vector<double> &values) {
    if (initial_s != 0 && initial_s != 1) throw ArgumentError("HOM input must be |1,0> or |1,1>");
    if (setup.cutoff < 3) throw ArgumentError("HOM experiments need a Fock cutoff of at least 3");
    const auto layout = exchange_layout(setup);
    const JointState start = JointState::basis(layout, {1, initial_s});
    if (scan == HomScan::Duration) {
        auto out = scan_duration(setup, values, &start);
        return out;
    }
    const double bs = swap_area(setup) / 2.0;
    ScanSeries out;
    out.x_name = "phi";
    std::vector<std::string> warn;
    const JointState half = apply_events(start, {pulse(setup, bs, setup.phase)}, setup.context, &warn);
    for (double phi : values) {
        std::vector<std::string> w = warn;
        const auto s = apply_events(half, {pulse(setup, bs, setup.phase + phi)}, setup.context, &w);
        record(out, phi, s, w);
    }
    return out;
}

std::string ramsey_name(RamseyVariant v) {
    switch (v) {
        case RamseyVariant::Delay: return "delay";
        case RamseyVariant::Swap: return "swap";
        case RamseyVariant::DoubleSwap: return "double-swap";
    }
    return "unknown";
}

RamseyVariant ramsey_from_name(const std::string &name) {
    for (auto v : {RamseyVariant::Delay, RamseyVariant::Swap, RamseyVariant::DoubleSwap})
        if (ramsey_name(v) == name) return v;
    throw ArgumentError("unknown Ramsey variant '" + name + "'");
}

RamseySeries ramsey_experiment(const ExchangeSetup &setup, RamseyVariant variant, const std::vector<double> &phis) {
    const double ts = swap_area(setup);
    SpaceLayout layout({SpaceLayout::mode("A", setup.cutoff), SpaceLayout::mode("S", setup.cutoff), SpaceLayout::spin("M")});
    const int spin = 2;
    // Carrier pi/2 then MSS pi leaves the spin in |down> and mode A in (|0> - |1>)/sqrt2.
    std::vector<PulseEvent> prep = {Carrier{spin, pi / 2, 0.0}, Sideband{spin, 0, pi, 0.0, -1}};
    const double total = 2.0 * ts + setup.ramp;
    switch (variant) {
        case RamseyVariant::Delay: prep.push_back(Delay{total}); break;
        case RamseyVariant::Swap:
            prep.push_back(pulse(setup, ts, setup.phase));
            prep.push_back(Delay{total - (ts + setup.ramp)});
            break;
        case RamseyVariant::DoubleSwap: prep.push_back(pulse(setup, 2.0 * ts, setup.phase)); break;
    }
    RamseySeries out;
    out.variant = variant;
    const JointState mid = apply_events(JointState::basis(layout, {0, 0, 0}), prep, setup.context, &out.warnings);
    for (double phi : phis) {
        const auto s = apply_events(mid, {Sideband{spin, 0, pi, phi, -1}, Carrier{spin, pi / 2, 0.0}}, setup.context);
        out.phi.push_back(phi);
        out.p_down.push_back(hilbert::marginal_populations(s, spin)[0]);
    }
    return out;
}

SwapDecay swap_fidelity_decay(const ExchangeSetup &setup, int m_max, bool delay_only) {
    if (m_max < 1) throw ArgumentError("swap decay needs at least one swap");
    if (setup.cutoff < 3) throw ArgumentError("swap decay needs a Fock cutoff of at least 3");
    const double ts = swap_area(setup);
    const auto layout = exchange_layout(setup);
    JointState s = JointState::basis(layout, {1, 0});
    const PulseEvent step = delay_only ? PulseEvent(Delay{ts + setup.ramp}) : PulseEvent(pulse(setup, ts, setup.phase));
    SwapDecay out;
    out.delay_only = delay_only;
    fitting::Series series;
    for (int m = 0; m <= m_max; ++m) {
        if (m > 0) s = apply_event(s, step, setup.context);
        const auto jp = joint_populations(s, 0, 1);
        const double norm = jp.p.sum();
        const bool swapped = !delay_only && (m % 2 == 1);
        const double f = (swapped ? jp.at(0, 1) : jp.at(1, 0)) / norm;
        out.m.push_back(m);
        out.fidelity.push_back(f);
    }
    series.x = out.m;
    series.y = out.fidelity;
    out.fit = fitting::fit(series, fitting::Model::Decay);
    out.epsilon = out.fit.value("epsilon");
    return out;
}

}  // namespace ioncouple::sequence
