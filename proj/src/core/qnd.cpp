#include "qnd.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

#include "errors.hpp"
#include "rng.hpp"
#include "sequence.hpp"

namespace ioncouple::qnd {

using hilbert::cd;
using hilbert::Matrix;
using hilbert::SpaceLayout;

namespace {

constexpr double pi = units::pi;
// Branches lighter than this are not propagated further.
constexpr double negligible = 1e-15;

sequence::Context make_context(const Protocol &p) {
    sequence::Context ctx;
    ctx.noise.set_heating(0, p.noise.heating_a);
    ctx.noise.set_heating(1, p.noise.heating_s);
    ctx.drive_heating = p.noise.drive_heating;
    ctx.recoil_kappa = p.noise.recoil_kappa;
    ctx.participation = {{p.noise.xi_alternating, p.noise.xi_residual}};
    return ctx;
}

bool coherent_swap_only(const sequence::Context &ctx) { return ctx.noise.silent() && ctx.drive_heating == 0.0; }

// Exact swap permutation |n, m> -> phase |m, n>, phases from the closed form.
Matrix exact_swap(const SpaceLayout &l, const RoundTiming &t) {
    const int c = l[0].levels;
    Matrix u = Matrix::Zero(l.dimension(), l.dimension());
    for (int n = 0; n < c; ++n)
        for (int m = 0; m < c; ++m) {
            const cd amp = hilbert::analytic_exchange(n, m, t.g0, t.swap_phase, t.swap_area())(m, n);
            u(l.index({m, n}), l.index({n, m})) = amp / std::abs(amp);
        }
    return u;
}

JointState swap(const JointState &s, const Protocol &p, const sequence::Context &ctx,
                std::vector<std::string> *warnings) {
    if (coherent_swap_only(ctx)) return hilbert::apply_unitary(s, exact_swap(s.layout, p.timing));
    sequence::CouplingPulse pulse;
    pulse.generator = {p.timing.g0, p.timing.swap_phase, 0.0, 0, 1};
    pulse.envelope = coupling::PulseEnvelope::for_area(p.timing.swap_area(), p.timing.ramp);
    hilbert::EvolveReport rep;
    auto out = sequence::apply_event(s, pulse, ctx, &rep);
    if (warnings)
        for (auto &w : rep.warnings) warnings->push_back(w);
    return out;
}

// Spin-diagonal block of a (motion x spin) state, spin last.
JointState spin_block(const JointState &full, const SpaceLayout &motional, const std::vector<int> &levels) {
    const int d = motional.dimension();
    JointState out{motional, Matrix::Zero(d, d)};
    for (int l : levels)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) out.rho(i, j) += full.rho(i * spin_levels + l, j * spin_levels + l);
    return out;
}

JointState normalised(JointState s, double p) {
    s.rho /= p;
    return s;
}

// Swap, recoil if lit, detection hold, recool of the Alternating slot, swap back.
JointState finish_round(const JointState &s, bool lit, const Protocol &p, const sequence::Context &ctx,
                        std::vector<std::string> *warnings) {
    JointState x = swap(s, p, ctx, warnings);
    if (lit && p.noise.photons > 0.0) x = sequence::apply_event(x, sequence::Scatter{0, p.noise.photons}, ctx);
    x = sequence::apply_event(x, sequence::Delay{p.timing.hold_duration}, ctx);
    x = sequence::apply_event(x, sequence::Recool{0, p.timing.recool_nbar}, ctx);
    return swap(x, p, ctx, warnings);
}

}  // namespace

bool MappingVariant::zero_is_dark() const { return std::cos(phi2) >= 0.0; }

void MappingVariant::validate() const {
    if (!(phi2 >= 0.0 && phi2 < 2.0 * pi)) throw ArgumentError("phi2 must lie in [0, 2 pi)");
}

Matrix cz_unitary(const SpaceLayout &layout, int mode, int spin, double phi2) {
    if (spin < 0 || spin >= layout.size() || layout[spin].is_mode() || layout[spin].levels < spin_levels)
        throw ArgumentError("CZ mapping needs a three-level spin subsystem");
    const sequence::Carrier first{spin, pi / 2, 0.0, {level_bright, level_dark}};
    const sequence::Sideband loop{spin, mode, 2.0 * pi, 0.0, -1, {level_bright, level_aux}};
    const sequence::Carrier last{spin, pi / 2, phi2, {level_bright, level_dark}};
    return sequence::carrier_unitary(layout, last) * sequence::sideband_unitary(layout, loop) *
           sequence::carrier_unitary(layout, first);
}

JointState cz_map(const JointState &state, const MappingVariant &variant, int mode, int spin,
                  std::vector<std::string> *warnings) {
    if (mode < 0 || mode >= state.layout.size() || !state.layout[mode].is_mode())
        throw ArgumentError("CZ mapping needs a mode subsystem");
    const auto pop = hilbert::marginal_populations(state, mode);
    const double outside = 1.0 - pop[0] - (pop.size() > 1 ? pop[1] : 0.0);
    if (warnings && outside > 1e-12) {
        std::ostringstream s;
        s << "CZ mapping acts on population " << outside << " outside {|0>, |1>}";
        warnings->push_back(s.str());
    }
    return hilbert::apply_unitary(state, cz_unitary(state.layout, mode, spin, variant.phi2));
}

double bright_probability(const JointState &state, int spin) {
    const auto p = hilbert::marginal_populations(state, spin);
    double b = p[level_bright];
    if (p.size() > level_aux) b += p[level_aux];
    return b;
}

std::vector<double> cz_fringe(const std::vector<double> &phi2) {
    const SpaceLayout l({SpaceLayout::mode("A", 2), SpaceLayout::spin("Mg", spin_levels)});
    std::vector<double> out;
    for (double phi : phi2) {
        auto s = JointState::basis(l, {0, level_bright});
        out.push_back(bright_probability(hilbert::apply_unitary(s, cz_unitary(l, 0, 1, phi)), 1));
    }
    return out;
}

QndNoise QndNoise::none() {
    QndNoise n;
    n.heating_a = n.heating_s = n.drive_heating = 0.0;
    n.readout_flip = 0.0;
    n.ideal_detection = true;
    n.photons = 0.0;
    return n;
}

double calibrated_kappa(double xi_alt, double photons, double recoil_dn) {
    if (!(xi_alt != 0.0 && photons > 0.0)) throw ArgumentError("recoil calibration needs xi != 0 and photons > 0");
    return recoil_dn / (photons * xi_alt * xi_alt);
}

QndNoise QndNoise::calibrated(double xi_alt, double recoil_dn) {
    QndNoise n;
    n.xi_alternating = xi_alt;
    n.recoil_kappa = calibrated_kappa(xi_alt, n.photons, recoil_dn);
    return n;
}

void QndNoise::validate() const {
    for (double v : {heating_a, heating_s, drive_heating, photons, recoil_kappa})
        if (!(v >= 0.0 && std::isfinite(v))) throw ArgumentError("QND noise rates must be finite and >= 0");
    if (!(readout_flip >= 0.0 && readout_flip <= 0.5)) throw ArgumentError("readout flip must lie in [0, 0.5]");
    if (!std::isfinite(xi_alternating) || !std::isfinite(xi_residual)) throw ArgumentError("participation must be finite");
    mg.validate();
    threshold.validate();
}

void RoundTiming::validate() const {
    if (!(g0 > 0.0 && std::isfinite(g0))) throw ArgumentError("swap coupling g0 must be positive");
    for (double v : {ramp, cz_duration, hold_duration, recool_nbar})
        if (!(v >= 0.0 && std::isfinite(v))) throw ArgumentError("QND stage durations must be finite and >= 0");
    if (cutoff < 2) throw ArgumentError("QND cutoff must be at least 2");
}

SpaceLayout motional_layout(int cutoff) {
    return SpaceLayout({SpaceLayout::mode("A", cutoff), SpaceLayout::mode("S", cutoff)});
}

JointState initial_state(const Protocol &p, double nbar_a, double nbar_s) {
    const int c = p.timing.cutoff;
    const auto layout = motional_layout(c);
    return hilbert::product_state(layout, {hilbert::thermal_distribution(c, nbar_a).cast<cd>().asDiagonal(),
                                           hilbert::thermal_distribution(c, nbar_s).cast<cd>().asDiagonal()});
}

std::pair<double, double> detection_likelihoods(const QndNoise &noise) {
    if (noise.ideal_detection) return {1.0 - noise.readout_flip, noise.readout_flip};
    const double lit = readout::class_probabilities(noise.mg, 1, noise.threshold).back();
    const double dark = readout::class_probabilities(noise.mg, 0, noise.threshold).back();
    const double e = noise.readout_flip;
    return {(1.0 - e) * lit + e * (1.0 - lit), (1.0 - e) * dark + e * (1.0 - dark)};
}

char sample_outcome(bool lit, const QndNoise &noise, std::mt19937_64 &g) {
    bool bright = lit;
    if (!noise.ideal_detection)
        bright = readout::classify(readout::sample_counts(noise.mg, lit ? 1 : 0, g), noise.threshold) >= 1;
    if (noise.readout_flip > 0.0 && rng::uniform(g) < noise.readout_flip) bright = !bright;
    return bright ? 'b' : 'd';
}

double RoundBranches::p_outcome_bright(const QndNoise &noise) const {
    const auto [l, d] = detection_likelihoods(noise);
    return p_lit * l + (1.0 - p_lit) * d;
}

JointState RoundBranches::conditioned(char outcome, const QndNoise &noise) const {
    auto [l, d] = detection_likelihoods(noise);
    if (outcome == 'd') {
        l = 1.0 - l;
        d = 1.0 - d;
    } else if (outcome != 'b') {
        throw ArgumentError("outcome must be 'd' or 'b'");
    }
    const double wl = p_lit * l, wd = (1.0 - p_lit) * d;
    if (wl + wd <= 0.0) throw UndefinedStatistics("outcome has zero probability");
    JointState out = wl >= wd ? lit : dark;
    out.rho = (wl * lit.rho + wd * dark.rho) / (wl + wd);
    return out;
}

RoundBranches expand_round(const JointState &motional, const Protocol &p, std::vector<std::string> *warnings) {
    p.timing.validate();
    p.noise.validate();
    p.variant.validate();
    const auto ctx = make_context(p);
    const SpaceLayout &ml = motional.layout;
    if (ml.size() != 2 || !ml[0].is_mode() || !ml[1].is_mode())
        throw ArgumentError("QND rounds act on an (Alternating, Stretch) motional state");

    JointState heated = sequence::apply_event(motional, sequence::Delay{p.timing.cz_duration}, ctx);
    const SpaceLayout full_layout({ml[0], ml[1], SpaceLayout::spin("Mg", spin_levels)});
    JointState full{full_layout, Matrix::Zero(full_layout.dimension(), full_layout.dimension())};
    for (int i = 0; i < ml.dimension(); ++i)
        for (int j = 0; j < ml.dimension(); ++j)
            full.rho(i * spin_levels + level_bright, j * spin_levels + level_bright) = heated.rho(i, j);
    full = cz_map(full, p.variant, 0, 2, warnings);

    const JointState lit = spin_block(full, ml, {level_bright, level_aux});
    const JointState dark = spin_block(full, ml, {level_dark});
    RoundBranches out;
    out.p_lit = std::clamp(lit.trace(), 0.0, 1.0);
    const double p_dark = 1.0 - out.p_lit;
    out.lit = out.p_lit > negligible ? finish_round(normalised(lit, lit.trace()), true, p, ctx, warnings) : lit;
    out.dark = p_dark > negligible ? finish_round(normalised(dark, dark.trace()), false, p, ctx, warnings) : dark;
    return out;
}

RoundResult run_round(const JointState &motional, const Protocol &p, std::mt19937_64 &g) {
    const auto br = expand_round(motional, p);
    RoundResult r;
    r.lit = rng::uniform(g) < br.p_lit;
    r.outcome = sample_outcome(r.lit, p.noise, g);
    r.state = br.conditioned(r.outcome, p.noise);
    return r;
}

double OutcomeSeries::exact_probability(const std::string &pattern) const {
    double s = 0.0;
    for (const auto &[k, leaf] : leaves)
        if (matches(k, pattern)) s += leaf.probability;
    return s;
}

namespace {

// Branch-tree rounds repeat the same diagnostics with different numbers; keep the largest per message.
std::vector<std::string> worst_of(const std::vector<std::string> &warnings) {
    static const std::regex number(R"([0-9]+\.?[0-9]*(e[-+]?[0-9]+)?)");
    struct Entry {
        std::string head, tail;
        double worst = 0.0;
        int count = 0;
    };
    std::vector<Entry> out;
    std::vector<std::string> plain;
    for (const auto &w : warnings) {
        std::smatch m;
        if (!std::regex_search(w, m, number)) {
            if (std::find(plain.begin(), plain.end(), w) == plain.end()) plain.push_back(w);
            continue;
        }
        const std::string head = m.prefix(), tail = m.suffix();
        const double x = std::stod(m.str());
        auto it = std::find_if(out.begin(), out.end(), [&](const Entry &e) { return e.head == head && e.tail == tail; });
        if (it == out.end()) {
            out.push_back({head, tail, x, 1});
        } else {
            it->worst = std::max(it->worst, x);
            ++it->count;
        }
    }
    for (const auto &e : out) {
        std::ostringstream s;
        s << e.head << e.worst << e.tail;
        if (e.count > 1) s << " (largest of " << e.count << " branches)";
        plain.push_back(s.str());
    }
    return plain;
}

}  // namespace

OutcomeSeries run_repeated(const Protocol &p, const RepeatOptions &o) {
    if (o.rounds < 1 || o.rounds > 12) throw ArgumentError("rounds must lie in 1..12");
    if (o.trials < 1) throw ArgumentError("need at least one trial");
    OutcomeSeries series;
    series.rounds = o.rounds;
    series.variant = p.variant;

    // Exact branch tree over outcome prefixes.
    struct Node {
        double probability = 0.0;
        JointState state;
        RoundBranches branches;
        bool expanded = false;
    };
    std::map<std::string, Node> nodes;
    nodes[""] = {1.0, initial_state(p, o.nbar_a, o.nbar_s), {}, false};
    std::vector<std::string> frontier{""};
    for (int round = 0; round < o.rounds; ++round) {
        std::vector<std::string> next;
        for (const auto &key : frontier) {
            Node &node = nodes[key];
            node.branches = expand_round(node.state, p, &series.warnings);
            node.expanded = true;
            const double pb = node.branches.p_outcome_bright(p.noise);
            for (char c : {'d', 'b'}) {
                const double po = c == 'b' ? pb : 1.0 - pb;
                Node child;
                child.probability = node.probability * po;
                child.state = po > negligible ? node.branches.conditioned(c, p.noise) : node.state;
                nodes[key + c] = std::move(child);
                next.push_back(key + c);
            }
        }
        frontier = std::move(next);
    }
    series.warnings = worst_of(series.warnings);
    for (const auto &key : frontier) {
        const Node &n = nodes[key];
        Leaf leaf;
        leaf.probability = n.probability;
        leaf.populations = hilbert::marginal_populations(n.state, 0);
        const auto probe = readout::sideband_probe(leaf.populations, readout::Probe::PiPulse);
        leaf.p_mas = probe.mas;
        leaf.p_mss = probe.mss;
        leaf.nbar_direct = hilbert::mean_occupation(n.state, 0);
        series.leaves[key] = leaf;
    }

    // Trials walk the tree with their own streams: spin projection, photon counts, flip, probe.
    series.trials.reserve(static_cast<size_t>(o.trials));
    for (long long t = 0; t < o.trials; ++t) {
        auto g = rng::stream(o.seed, o.point, static_cast<std::uint64_t>(t));
        Trial trial;
        for (int round = 0; round < o.rounds; ++round) {
            const Node &node = nodes[trial.outcomes];
            const bool lit = rng::uniform(g) < node.branches.p_lit;
            trial.outcomes.push_back(sample_outcome(lit, p.noise, g));
        }
        const Leaf &leaf = series.leaves[trial.outcomes];
        trial.probe_mss = (t % 2) == 1;
        trial.flip = rng::uniform(g) < (trial.probe_mss ? leaf.p_mss : leaf.p_mas);
        series.trials.push_back(std::move(trial));
    }
    return series;
}

bool matches(const std::string &outcomes, const std::string &pattern) {
    if (pattern == "*" || pattern.empty()) return true;
    if (pattern == "majority-d" || pattern == "majority-b") {
        const char want = pattern.back();
        const auto n = std::count(outcomes.begin(), outcomes.end(), want);
        return 2 * n > static_cast<long>(outcomes.size());
    }
    if (pattern.size() != outcomes.size()) return false;
    for (size_t i = 0; i < pattern.size(); ++i) {
        const char c = pattern[i];
        if (c != '.' && c != 'd' && c != 'b') throw ArgumentError("outcome pattern may contain only d, b and .");
        if (c != '.' && c != outcomes[i]) return false;
    }
    return true;
}

PostSelectionStats post_select(double p_all_d, double p_all_b, bool zero_is_dark) {
    if (!(p_all_d >= 0.0 && p_all_b >= 0.0 && p_all_d + p_all_b <= 1.0 + 1e-12))
        throw ArgumentError("outcome class probabilities must be non-negative and sum to at most 1");
    if (p_all_d + p_all_b <= 0.0) throw UndefinedStatistics("no retained trials");
    PostSelectionStats s;
    s.p_all_d = p_all_d;
    s.p_all_b = p_all_b;
    s.p0 = (zero_is_dark ? p_all_d : p_all_b) / (p_all_d + p_all_b);
    s.p1 = 1.0 - s.p0;
    s.discard = std::max(0.0, 1.0 - p_all_d - p_all_b);
    return s;
}

PostSelectionStats post_select(const OutcomeSeries &series) {
    if (series.trials.empty()) throw UndefinedStatistics("empty outcome series");
    const std::string all_d(series.rounds, 'd'), all_b(series.rounds, 'b');
    long long nd = 0, nb = 0, maj_d = 0, maj_b = 0;
    for (const auto &t : series.trials) {
        nd += t.outcomes == all_d;
        nb += t.outcomes == all_b;
        maj_d += matches(t.outcomes, "majority-d");
        maj_b += matches(t.outcomes, "majority-b");
    }
    const double n = static_cast<double>(series.trials.size());
    auto s = post_select(nd / n, nb / n, series.variant.zero_is_dark());
    s.rounds = series.rounds;
    s.trials = static_cast<long long>(series.trials.size());
    s.p_all_d_error = std::sqrt(s.p_all_d * (1.0 - s.p_all_d) / n);
    s.p_all_b_error = std::sqrt(s.p_all_b * (1.0 - s.p_all_b) / n);
    if (series.rounds >= 3) {
        s.majority_d = maj_d / n;
        s.majority_b = maj_b / n;
    }
    return s;
}

ConditionedNbar conditioned_nbar(const OutcomeSeries &series, const std::string &pattern) {
    ConditionedNbar out;
    long long mas_n = 0, mas_k = 0, mss_n = 0, mss_k = 0;
    for (const auto &t : series.trials) {
        if (!matches(t.outcomes, pattern)) continue;
        ++out.trials;
        if (t.probe_mss) {
            ++mss_n;
            mss_k += t.flip;
        } else {
            ++mas_n;
            mas_k += t.flip;
        }
    }
    if (mas_n == 0 || mss_n == 0) throw UndefinedStatistics("outcome class '" + pattern + "' has no probed trials");
    double pm = 0.0, pmas = 0.0, pmss = 0.0, direct = 0.0;
    for (const auto &[k, leaf] : series.leaves) {
        if (!matches(k, pattern)) continue;
        pm += leaf.probability;
        pmas += leaf.probability * leaf.p_mas;
        pmss += leaf.probability * leaf.p_mss;
        direct += leaf.probability * leaf.nbar_direct;
    }
    if (pm <= 0.0) throw UndefinedStatistics("outcome class '" + pattern + "' has zero probability");
    out.probability = pm;
    out.nbar_direct = direct / pm;
    out.nbar_exact = readout::sideband_ratio_nbar(pmss / pm, pmas / pm);

    const double a = static_cast<double>(mas_k) / mas_n, b = static_cast<double>(mss_k) / mss_n;
    out.nbar = readout::sideband_ratio_nbar(b, a);
    // Delta method on n = r / (1 - r), r = P_MSS / P_MAS, with a floor of one count per probe.
    const double va = std::max(a * (1.0 - a), 1.0 / mas_n) / mas_n;
    const double vb = std::max(b * (1.0 - b), 1.0 / mss_n) / mss_n;
    const double r = b / a;
    const double vr = vb / (a * a) + (b * b) * va / (a * a * a * a);
    out.error = std::sqrt(vr) / ((1.0 - r) * (1.0 - r));
    return out;
}

}  // namespace ioncouple::qnd
