#include "runner.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <random>

#include "errors.hpp"
#include "fitting.hpp"
#include "presets.hpp"
#include "rng.hpp"
#include "units.hpp"

#ifndef IONCOUPLE_VERSION
#define IONCOUPLE_VERSION "0.0.0"
#endif

namespace ioncouple::runner {

namespace {

using config::Dim;
using config::Document;

const std::map<std::string, double> &species_masses() {
    static const std::map<std::string, double> m = {
        {"Be9", presets::beryllium9_amu}, {"Mg24", 23.985041697}, {"Mg25", presets::magnesium25_amu},
        {"Mg26", 25.982592968},           {"Ca40", 39.962590863}, {"Ca43", 42.958766430},
    };
    return m;
}

std::vector<double> linspace(double a, double b, long long n) {
    std::vector<double> x;
    if (n == 1) return {a};
    for (long long i = 0; i < n; ++i) x.push_back(a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
    return x;
}

std::string fmt17(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// Monomial powers from the letters after "term_", e.g. term_xxz -> (2, 0, 1).
std::array<int, 3> monomial(const std::string &key) {
    std::array<int, 3> p{0, 0, 0};
    const auto letters = key.substr(5);
    for (char c : letters) {
        if (c < 'x' || c > 'z') throw ConfigError("polynomial key '" + key + "' may only use the letters x, y and z");
        ++p[c - 'x'];
    }
    if (letters.size() > 4) throw ConfigError("polynomial key '" + key + "' exceeds quartic order");
    return p;
}

Polynomial3 polynomial(const Document &d, const std::string &section) {
    Polynomial3 poly;
    for (const auto &k : d.keys_with_prefix(section, "term_")) {
        const auto p = monomial(k);
        poly.add(p[0], p[1], p[2], d.number(section, k, 0.0));
    }
    return poly;
}

int positive_int(const Document &d, const std::string &s, const std::string &k, long long fallback, long long lo = 1) {
    const long long v = d.integer(s, k, fallback);
    if (v < lo || v > std::numeric_limits<int>::max())
        throw ConfigError("[" + s + "] " + k + " must be at least " + std::to_string(lo));
    return static_cast<int>(v);
}

void require(const Document &d, const std::string &section, Experiment e) {
    if (!d.has_section(section))
        throw ConfigError("experiment '" + experiment_name(e) + "' needs a [" + section + "] section");
}

bool stochastic(const Document &d, Experiment e) {
    return e == Experiment::Qnd || d.integer("experiment", "shots", 0) > 0;
}

// Scan grid from [experiment]; the suffixes of start/stop must match `dim`.
std::vector<double> scan_grid(const Document &d, Dim dim, double start, double stop, long long points) {
    for (const char *k : {"start", "stop"}) {
        const auto *v = d.find("experiment", k);
        if (v && v->dim != dim && v->dim != Dim::None)
            throw config::ParseError("unit mismatch: [experiment] " + std::string(k) + " is a " + config::dim_name(v->dim) +
                                         ", this experiment scans a " + config::dim_name(dim),
                                     k, v->line);
    }
    const long long n = d.integer("experiment", "points", points);
    if (n < 1 || n > 1000000) throw ConfigError("[experiment] points must be between 1 and 1e6");
    return linspace(d.number("experiment", "start", start), d.number("experiment", "stop", stop), n);
}

sequence::HomScan hom_scan(const Document &d) {
    const auto v = d.text("experiment", "variant", "duration");
    if (v == "duration") return sequence::HomScan::Duration;
    if (v == "phase") return sequence::HomScan::Phase;
    throw ConfigError("hom variant must be 'duration' or 'phase', got '" + v + "'");
}

struct Builder {
    ResultBundle &b;

    Table &table(const std::string &name, std::vector<Column> cols) {
        b.tables.push_back({name, std::move(cols), {}});
        return b.tables.back();
    }
    void scalar(const std::string &name, const std::string &unit, double v, double err = -1.0) {
        b.scalars.push_back({name, unit, v, err});
    }
    void warn(const std::vector<std::string> &w) { b.warnings.insert(b.warnings.end(), w.begin(), w.end()); }
    void warn(const std::string &w) { b.warnings.push_back(w); }
};

void add_fit(Builder &out, const fitting::FitResult &f, const std::map<std::string, std::string> &units) {
    auto &t = out.table("fit", {{"parameter", ""}, {"value", "param"}, {"error", "param"}, {"unit", ""}});
    for (size_t i = 0; i < f.names.size(); ++i) {
        const auto it = units.find(f.names[i]);
        const std::string unit = it == units.end() ? "1" : it->second;
        t.rows.push_back({f.names[i], f.params[static_cast<Eigen::Index>(i)], f.errors[static_cast<Eigen::Index>(i)], unit});
        out.scalar("fit_" + f.names[i], unit, f.params[static_cast<Eigen::Index>(i)], f.errors[static_cast<Eigen::Index>(i)]);
    }
    for (const auto &[k, v] : f.derived) {
        const auto e = f.derived_errors.count(k) ? f.derived_errors.at(k) : -1.0;
        const auto it = units.find(k);
        const std::string unit = it == units.end() ? "1" : it->second;
        t.rows.push_back({k, v, e, unit});
        out.scalar("fit_" + k, unit, v, e);
    }
    out.scalar("fit_residual_norm", "1", f.residual_norm);
    if (!f.converged) out.warn(fitting::model_name(f.model) + " fit did not converge");
    for (const auto &fl : f.flags) out.warn(fitting::model_name(f.model) + " fit: " + fl);
}

template <class F>
void try_fit(Builder &out, F &&f, const std::map<std::string, std::string> &units) {
    try {
        add_fit(out, f(), units);
    } catch (const fitting::FitFailure &e) {
        out.warn(std::string("fit failed: ") + e.what());
        add_fit(out, e.best(), units);
    } catch (const NumericalError &e) {
        out.warn(std::string("fit failed: ") + e.what());
    }
}

// Joint population columns p_jk for j, k <= 2, the A and S marginals and the outside weight.
std::vector<Column> population_columns(const std::string &x, const std::string &unit) {
    std::vector<Column> c = {{x, unit}};
    for (int a = 0; a <= 2; ++a)
        for (int s = 0; s <= 2; ++s) c.push_back({"p_" + std::to_string(a) + std::to_string(s), "1"});
    c.push_back({"p_outside", "1"});
    c.push_back({"p_a1", "1"});
    c.push_back({"p_s1", "1"});
    return c;
}

std::vector<Cell> population_row(double x, const sequence::JointPopulations &p, double pa1, double ps1) {
    std::vector<Cell> r = {x};
    for (int i = 0; i < p.p.size(); ++i) r.push_back(p.p[i]);
    r.push_back(p.outside);
    r.push_back(pa1);
    r.push_back(ps1);
    return r;
}

void fill_scan(Builder &out, Table &t, const sequence::ScanSeries &s) {
    const auto a1 = s.marginal_a(1), s1 = s.marginal_s(1);
    for (size_t i = 0; i < s.x.size(); ++i) t.rows.push_back(population_row(s.x[i], s.points[i], a1[i], s1[i]));
    out.warn(s.warnings);
}

// Binomial projection-noise estimate of `p` with `shots`, one stream per scan point.
std::vector<double> sampled(const std::vector<double> &p, long long shots, std::uint64_t seed) {
    std::vector<double> f;
    for (size_t i = 0; i < p.size(); ++i) {
        auto g = rng::stream(seed, i, 0);
        std::binomial_distribution<long long> bin(shots, std::clamp(p[i], 0.0, 1.0));
        f.push_back(static_cast<double>(bin(g)) / static_cast<double>(shots));
    }
    return f;
}

// Appends the sampled column when [experiment] shots > 0 and returns the series to fit.
std::vector<double> with_shots(const Document &d, Table &t, const std::vector<double> &p, const std::string &name) {
    const long long shots = d.integer("experiment", "shots", 0);
    if (shots <= 0) return p;
    const auto f = sampled(p, shots, *d.seed());
    t.columns.push_back({name, "1"});
    for (size_t i = 0; i < f.size(); ++i) t.rows[i].push_back(f[i]);
    return f;
}

sequence::JointState initial_pair(const sequence::ExchangeSetup &s, const Document &d) {
    const int na = positive_int(d, "experiment", "initial_a", 1, 0), ns = positive_int(d, "experiment", "initial_s", 0, 0);
    if (na >= s.cutoff || ns >= s.cutoff) throw ConfigError("initial Fock state exceeds the [modes] cutoff");
    const hilbert::SpaceLayout l({hilbert::SpaceLayout::mode("A", s.cutoff), hilbert::SpaceLayout::mode("S", s.cutoff)});
    return hilbert::JointState::basis(l, {na, ns});
}

void run_modes(const Document &d, Builder &out) {
    const auto cfg = crystal_config(d);
    const auto sol = crystal::solve(cfg);
    const int n = sol.ion_count();
    for (auto axis : {crystal::Axis::Z, crystal::Axis::X, crystal::Axis::Y}) {
        std::vector<Column> cols = {{"mode", "1"}, {"omega", "rad/s"}, {"f", "Hz"}};
        for (int i = 0; i < n; ++i) cols.push_back({"xi_" + std::to_string(i), "1"});
        auto &t = out.table(axis == crystal::Axis::Z ? "axial" : std::string("radial_") + crystal::axis_name(axis), cols);
        const auto &m = sol.axis(axis);
        for (int k = 0; k < m.frequencies.size(); ++k) {
            std::vector<Cell> r = {static_cast<double>(k), m.frequencies[k], m.frequencies[k] / (2.0 * units::pi)};
            for (int i = 0; i < n; ++i) r.push_back(m.participation(i, k));
            t.rows.push_back(r);
        }
    }
    auto &p = out.table("positions", {{"ion", "1"}, {"species", ""}, {"x", "m"}, {"y", "m"}, {"z", "m"}});
    for (int i = 0; i < n; ++i)
        p.rows.push_back({static_cast<double>(i), cfg.ions[i].label, sol.positions[i].x(), sol.positions[i].y(), sol.positions[i].z()});
    out.scalar("cross_axis_coupling", "1", sol.cross_axis_coupling);
}

void run_couple(const Document &d, Builder &out) {
    const auto ds = drive_setup(d);
    const auto sol = crystal::solve(crystal_config(d));
    const auto strength = coupling::coupling_strength(sol, ds.drive);
    auto &t = out.table("coupling", {{"g0", "rad/s"},
                                     {"g0_cyclic", "Hz"},
                                     {"exchange_rate", "rad/s"},
                                     {"resonance", "rad/s"},
                                     {"drive_frequency", "rad/s"},
                                     {"detuning", "rad/s"},
                                     {"scale", "1"}});
    const double det = coupling::detuning(sol, ds.drive);
    t.rows.push_back({strength.g0, strength.g0 / (2.0 * units::pi), coupling::exchange_rate(std::abs(strength.g0)), ds.resonance,
                      ds.drive.frequency, det, ds.scale});
    auto &ion = out.table("per_ion", {{"ion", "1"}, {"g", "rad/s"}});
    for (size_t i = 0; i < strength.per_ion.size(); ++i) ion.rows.push_back({static_cast<double>(i), strength.per_ion[i]});
    out.scalar("g0", "rad/s", strength.g0);
    out.scalar("exchange_rate", "rad/s", coupling::exchange_rate(std::abs(strength.g0)));
    out.scalar("resonance", "rad/s", ds.resonance);
    out.scalar("detuning", "rad/s", det);
    out.scalar("scale", "1", ds.scale);
}

void run_scan_freq(const Document &d, Builder &out) {
    const auto ds = drive_setup(d);
    const auto setup = exchange_setup(d, ds);
    const double width = 4.0 * ds.g0;
    const auto detunings = scan_grid(d, Dim::Frequency, -width, width, 41);
    const double duration = d.number("experiment", "pulse_duration", units::pi / (2.0 * ds.g0));
    if (!(duration > 0.0)) throw ConfigError("[experiment] pulse_duration must be positive");
    std::vector<double> w;
    for (double x : detunings) w.push_back(ds.resonance + x);
    const auto init = initial_pair(setup, d);
    const auto s = sequence::scan_frequency(setup, w, ds.resonance, duration, &init);
    auto &t = out.table("scan", population_columns("omega", "rad/s"));
    t.columns.insert(t.columns.begin() + 1, {"detuning", "rad/s"});
    fill_scan(out, t, s);
    for (size_t i = 0; i < t.rows.size(); ++i) t.rows[i].insert(t.rows[i].begin() + 1, detunings[i]);
    const auto y = with_shots(d, t, s.marginal_s(1), "f_s1");
    out.scalar("pulse_duration", "s", duration);
    if (d.flag("experiment", "fit", true) && w.size() >= 6) {
        fitting::FitOptions fo;
        fo.pulse_duration = duration;
        try_fit(out, [&] { return fitting::fit({w, y}, fitting::Model::Lineshape, fo); },
                {{"Omega0", "rad/s"}, {"omega0", "rad/s"}});
    }
}

void run_scan_time(const Document &d, Builder &out) {
    const auto ds = drive_setup(d);
    const auto setup = exchange_setup(d, ds);
    const auto taus = scan_grid(d, Dim::Time, 0.0, 2.0 * units::pi / ds.g0, 41);
    for (double t : taus)
        if (t < 0.0) throw ConfigError("scan-time areas must be non-negative");
    const auto init = initial_pair(setup, d);
    const auto s = sequence::scan_duration(setup, taus, &init);
    auto &t = out.table("scan", population_columns("tau", "s"));
    fill_scan(out, t, s);
    t.columns.push_back({"swap_ideal", "1"});
    for (size_t i = 0; i < taus.size(); ++i) t.rows[i].push_back(std::pow(std::sin(ds.g0 * taus[i]), 2));
    const auto y = with_shots(d, t, s.marginal_s(1), "f_s1");
    if (d.flag("experiment", "fit", true) && taus.size() >= 8)
        try_fit(out, [&] { return fitting::fit({taus, y}, fitting::Model::Exchange); },
                {{"OmegaC", "rad/s"}, {"phi_c", "rad"}, {"gamma", "1/s"}, {"tau_c", "s"}});
}

void run_hom(const Document &d, Builder &out) {
    const auto ds = drive_setup(d);
    const auto setup = exchange_setup(d, ds);
    const auto scan = hom_scan(d);
    const auto values = scan == sequence::HomScan::Duration ? scan_grid(d, Dim::Time, 0.0, units::pi / ds.g0, 41)
                                                            : scan_grid(d, Dim::Angle, 0.0, 2.0 * units::pi, 41);
    const int ns = positive_int(d, "experiment", "initial_s", 1, 0);
    const auto s = sequence::hom_interference(setup, ns, scan, values);
    auto &t = out.table("scan", population_columns(scan == sequence::HomScan::Duration ? "tau" : "phi",
                                                   scan == sequence::HomScan::Duration ? "s" : "rad"));
    fill_scan(out, t, s);
    const auto p11 = s.column(1, 1);
    with_shots(d, t, p11, "f_11");
    double lo = 1.0;
    for (double v : p11) lo = std::min(lo, v);
    out.scalar("min_p_11", "1", lo);
}

void run_ramsey(const Document &d, Builder &out) {
    const auto ds = drive_setup(d);
    const auto setup = exchange_setup(d, ds);
    const auto variant = sequence::ramsey_from_name(d.text("experiment", "variant", "delay"));
    const auto phis = scan_grid(d, Dim::Angle, 0.0, 2.0 * units::pi, 25);
    const auto r = sequence::ramsey_experiment(setup, variant, phis);
    auto &t = out.table("fringe", {{"phi", "rad"}, {"p_down", "1"}});
    for (size_t i = 0; i < phis.size(); ++i) t.rows.push_back({phis[i], r.p_down[i]});
    out.warn(r.warnings);
    const auto y = with_shots(d, t, r.p_down, "f_down");
    if (d.flag("experiment", "fit", true) && phis.size() >= 4)
        try_fit(out, [&] { return fitting::fit({phis, y}, fitting::Model::Fringe); }, {{"phi_f", "rad"}});
}

void run_swap_decay(const Document &d, Builder &out) {
    const auto ds = drive_setup(d);
    const auto setup = exchange_setup(d, ds);
    const int m_max = positive_int(d, "experiment", "m_max", 15);
    const auto r = sequence::swap_fidelity_decay(setup, m_max, d.flag("experiment", "delay_only", false));
    auto &t = out.table("decay", {{"m", "1"}, {"fidelity", "1"}});
    for (size_t i = 0; i < r.m.size(); ++i) t.rows.push_back({r.m[i], r.fidelity[i]});
    out.scalar("epsilon", "1", r.epsilon, r.fit.error("epsilon"));
    add_fit(out, r.fit, {});
}

void run_qnd(const Document &d, Builder &out) {
    const auto q = qnd_setup(d);
    const auto series = qnd::run_repeated(q.protocol, q.options);
    out.warn(series.warnings);
    auto &t = out.table("classes", {{"pattern", ""},
                                    {"probability", "1"},
                                    {"fraction", "1"},
                                    {"nbar", "quanta"},
                                    {"nbar_error", "quanta"},
                                    {"nbar_exact", "quanta"},
                                    {"nbar_direct", "quanta"},
                                    {"trials", "1"}});
    for (const auto &pat : q.patterns) {
        const double exact = series.exact_probability(pat);
        long long hits = 0;
        for (const auto &tr : series.trials) hits += qnd::matches(tr.outcomes, pat);
        const double frac = static_cast<double>(hits) / static_cast<double>(series.trials.size());
        const double nan = std::numeric_limits<double>::quiet_NaN();
        try {
            const auto c = qnd::conditioned_nbar(series, pat);
            t.rows.push_back({pat, exact, frac, c.nbar, c.error, c.nbar_exact, c.nbar_direct, static_cast<double>(c.trials)});
        } catch (const Error &e) {
            // Outside the thermal model, e.g. a class heralding |1>: keep the direct mean.
            double w = 0.0, n = 0.0;
            for (const auto &[k, leaf] : series.leaves)
                if (qnd::matches(k, pat)) {
                    w += leaf.probability;
                    n += leaf.probability * leaf.nbar_direct;
                }
            out.warn("class '" + pat + "': " + e.what());
            t.rows.push_back({pat, exact, frac, nan, nan, nan, w > 0.0 ? n / w : nan, static_cast<double>(hits)});
        }
    }
    auto &leaves = out.table("leaves", {{"outcomes", ""}, {"probability", "1"}, {"p_mas", "1"}, {"p_mss", "1"}, {"nbar_direct", "quanta"}});
    for (const auto &[k, leaf] : series.leaves) leaves.rows.push_back({k, leaf.probability, leaf.p_mas, leaf.p_mss, leaf.nbar_direct});
    try {
        const auto s = qnd::post_select(series);
        out.scalar("p_all_d", "1", s.p_all_d, s.p_all_d_error);
        out.scalar("p_all_b", "1", s.p_all_b, s.p_all_b_error);
        out.scalar("p0_heralded", "1", s.p0);
        out.scalar("p1_heralded", "1", s.p1);
        out.scalar("discard", "1", s.discard);
        if (s.rounds >= 3) {
            out.scalar("majority_d", "1", s.majority_d);
            out.scalar("majority_b", "1", s.majority_b);
        }
    } catch (const UndefinedStatistics &e) {
        out.warn(std::string("post-selection: ") + e.what());
    }
    out.scalar("rounds", "1", q.options.rounds);
    out.scalar("trials", "1", static_cast<double>(q.options.trials));
    out.scalar("phi2", "rad", q.protocol.variant.phi2);
    out.scalar("xi_alternating", "1", q.protocol.noise.xi_alternating);
    out.scalar("xi_residual", "1", q.protocol.noise.xi_residual);
    out.scalar("recoil_kappa", "quanta", q.protocol.noise.recoil_kappa);
}

void run_design(const Document &d, Builder &out) {
    const auto p = electrode_problem(d);
    const auto s = electrodes::solve_amplitudes(p.basis, p.target, p.options);
    const auto rep = electrodes::evaluate_solution(p.basis, s.amplitudes, p.target, p.options);
    auto &a = out.table("amplitudes", {{"electrode", ""}, {"amplitude", "V"}});
    for (int e = 0; e < p.basis.electrodes(); ++e)
        a.rows.push_back({p.basis.names.empty() ? "E" + std::to_string(e + 1) : p.basis.names[e], s.amplitudes[e]});
    auto &t = out.table("terms", {{"term", ""}, {"achieved", "basis"}, {"desired", "basis"}, {"weight", "1"}, {"hard", "1"}});
    for (const auto &r : rep.terms) t.rows.push_back({r.label, r.achieved, r.desired, r.weight, r.hard ? 1.0 : 0.0});
    out.warn(s.warnings);
    out.scalar("objective", "basis^2", s.objective);
    out.scalar("feasible", "1", s.feasible ? 1.0 : 0.0);
    out.scalar("hard_residual", "basis", s.hard_residual);
    out.scalar("max_hard_error", "basis", rep.max_hard_error);
    out.scalar("rank", "1", s.rank);
    out.scalar("hard_rank", "1", s.hard_rank);
    out.scalar("hard_condition", "1", s.hard_condition);
    out.scalar("reduced_condition", "1", s.reduced_condition);
    out.scalar("worst_null_leakage", "basis", rep.worst_null_leakage);
    out.scalar("amplitude_norm", "V", s.amplitudes.norm());
}

std::string timestamp() {
    std::time_t t = std::time(nullptr);
    if (const char *e = std::getenv("SOURCE_DATE_EPOCH")) {
        char *end = nullptr;
        const long long v = std::strtoll(e, &end, 10);
        if (end && *end == '\0' && end != e) t = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string csv_cell(const Cell &c) {
    if (const double *x = std::get_if<double>(&c)) return fmt17(*x);
    const auto &s = std::get<std::string>(c);
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
}

nlohmann::ordered_json json_number(double x) {
    if (!std::isfinite(x)) return nullptr;
    return x;
}

}  // namespace

std::string experiment_name(Experiment e) {
    switch (e) {
        case Experiment::Modes: return "modes";
        case Experiment::Couple: return "couple";
        case Experiment::ScanFreq: return "scan-freq";
        case Experiment::ScanTime: return "scan-time";
        case Experiment::Hom: return "hom";
        case Experiment::Ramsey: return "ramsey";
        case Experiment::SwapDecay: return "swap-decay";
        case Experiment::Qnd: return "qnd";
        case Experiment::DesignVoltages: return "design-voltages";
    }
    return "?";
}

const std::vector<Experiment> &all_experiments() {
    static const std::vector<Experiment> e = {Experiment::Modes,  Experiment::Couple,    Experiment::ScanFreq,
                                              Experiment::ScanTime, Experiment::Hom,     Experiment::Ramsey,
                                              Experiment::SwapDecay, Experiment::Qnd,    Experiment::DesignVoltages};
    return e;
}

Experiment experiment_from_name(const std::string &name) {
    for (auto e : all_experiments())
        if (experiment_name(e) == name) return e;
    throw ConfigError("unknown experiment '" + name + "'");
}

const Table &ResultBundle::table(const std::string &name) const {
    for (const auto &t : tables)
        if (t.name == name) return t;
    throw ArgumentError("result has no table '" + name + "'");
}

const Scalar &ResultBundle::scalar(const std::string &name) const {
    for (const auto &s : scalars)
        if (s.name == name) return s;
    throw ArgumentError("result has no scalar '" + name + "'");
}

bool ResultBundle::has_scalar(const std::string &name) const {
    for (const auto &s : scalars)
        if (s.name == name) return true;
    return false;
}

std::vector<double> ResultBundle::column(const std::string &tname, const std::string &cname) const {
    const auto &t = table(tname);
    for (size_t c = 0; c < t.columns.size(); ++c) {
        if (t.columns[c].name != cname) continue;
        std::vector<double> out;
        for (const auto &r : t.rows) {
            const double *x = std::get_if<double>(&r[c]);
            if (!x) throw ArgumentError("column '" + cname + "' is not numeric");
            out.push_back(*x);
        }
        return out;
    }
    throw ArgumentError("table '" + tname + "' has no column '" + cname + "'");
}

crystal::CrystalConfig crystal_config(const Document &d) {
    if (!d.has_section("crystal")) throw ConfigError("missing [crystal] section");
    const auto ions = d.strings("crystal", "ions");
    if (ions.empty()) throw ConfigError("[crystal] ions must list at least one species");
    auto masses = d.numbers("crystal", "masses");
    const auto charges = d.numbers("crystal", "charges");
    if (!masses.empty() && masses.size() != ions.size()) throw ConfigError("[crystal] masses must have one entry per ion");
    if (!charges.empty() && charges.size() != ions.size()) throw ConfigError("[crystal] charges must have one entry per ion");
    crystal::CrystalConfig c;
    for (size_t i = 0; i < ions.size(); ++i) {
        double m = 0.0;
        if (!masses.empty()) {
            m = masses[i];
        } else {
            const auto it = species_masses().find(ions[i]);
            if (it == species_masses().end())
                throw ConfigError("[crystal] species '" + ions[i] + "' is not built in; give masses explicitly");
            m = units::amu(it->second);
        }
        const int q = charges.empty() ? 1 : static_cast<int>(std::lround(charges[i]));
        if (!charges.empty() && q != charges[i]) throw ConfigError("[crystal] charges must be integers");
        c.ions.push_back({m, q, ions[i]});
    }
    for (const char *k : {"axial", "radial_x", "radial_y"})
        if (!d.has("crystal", k)) throw ConfigError(std::string("[crystal] needs '") + k + "'");
    const long long ref = d.integer("crystal", "reference_ion", 0);
    if (ref < 0 || ref >= static_cast<long long>(c.ions.size())) throw ConfigError("[crystal] reference_ion out of range");
    const auto &r = c.ions[static_cast<size_t>(ref)];
    c.trap = crystal::TrapPotential::from_frequencies(r.mass, r.charge, d.number("crystal", "radial_x", 0.0),
                                                      d.number("crystal", "radial_y", 0.0), d.number("crystal", "axial", 0.0));
    const auto extra = polynomial(d, "crystal");
    for (const auto &t : extra.terms()) c.trap.u0.add(t.power[0], t.power[1], t.power[2], t.coefficient);
    try {
        c.validate();
    } catch (const ArgumentError &e) {
        throw ConfigError(std::string("[crystal] ") + e.what());
    }
    return c;
}

std::vector<coupling::ModeRef> mode_refs(const Document &d) {
    const auto axis_text = d.text("drive", "axis", "z");
    if (axis_text.size() != 1) throw ConfigError("[drive] axis must be x, y or z");
    crystal::Axis axis;
    try {
        axis = crystal::axis_from_char(axis_text[0]);
    } catch (const Error &) {
        throw ConfigError("[drive] axis must be x, y or z");
    }
    const int a = positive_int(d, "drive", "mode_a", presets::bmb_alternating, 0);
    const int b = positive_int(d, "drive", "mode_b", presets::bmb_stretch, 0);
    if (a == b) throw ConfigError("[drive] mode_a and mode_b must differ");
    return {{axis, a}, {axis, b}};
}

DriveSetup drive_setup(const Document &d) {
    if (!d.has_section("drive")) throw ConfigError("missing [drive] section");
    DriveSetup s;
    const auto refs = mode_refs(d);
    s.drive.a = refs[0];
    s.drive.b = refs[1];
    s.drive.polynomial.u = polynomial(d, "drive");
    s.drive.polynomial.beta = d.number("drive", "beta", 1.0);
    s.drive.phase = d.number("drive", "phase", 0.0);
    const double ramp = d.number("drive", "ramp", 0.0);
    if (ramp < 0.0) throw ConfigError("[drive] ramp must be non-negative");
    s.drive.envelope = {ramp, 0.0};
    const auto g0 = d.maybe_number("drive", "g0");
    const auto res = d.maybe_number("modes", "resonance");
    const bool need_crystal = !g0 || !res || d.has_section("crystal");
    std::optional<crystal::CrystalSolution> sol;
    if (need_crystal) {
        sol = crystal::solve(crystal_config(d));
        for (const auto &m : refs)
            if (m.index >= sol->ion_count()) throw ConfigError("[drive] mode index exceeds the number of modes");
    }
    s.resonance = res ? *res : coupling::resonance(*sol, s.drive.a, s.drive.b);
    if (!(s.resonance > 0.0)) throw ConfigError("coupling needs mode_a above mode_b in frequency");
    s.drive.frequency = s.resonance + d.number("drive", "detuning", 0.0);
    if (g0) {
        if (!(*g0 > 0.0)) throw ConfigError("[drive] g0 must be positive");
        s.g0 = *g0;
        if (sol && !s.drive.polynomial.u.terms().empty()) {
            s.scale = coupling::scale_for_coupling(*sol, s.drive, *g0);
            Polynomial3 scaled;
            for (const auto &t : s.drive.polynomial.u.terms()) scaled.add(t.power[0], t.power[1], t.power[2], t.coefficient * s.scale);
            s.drive.polynomial.u = scaled;
        }
    } else {
        if (s.drive.polynomial.u.terms().empty()) throw ConfigError("[drive] needs polynomial terms or g0");
        s.g0 = std::abs(coupling::coupling_strength(*sol, s.drive).g0);
        if (!(s.g0 > 0.0)) throw ConfigError("[drive] polynomial gives no coupling between the selected modes");
    }
    return s;
}

sequence::ExchangeSetup exchange_setup(const Document &d, const DriveSetup &drive) {
    sequence::ExchangeSetup s;
    s.g0 = drive.g0;
    s.phase = drive.drive.phase;
    s.ramp = drive.drive.envelope.ramp;
    s.cutoff = positive_int(d, "modes", "cutoff", 5, 2);
    auto &ctx = s.context;
    ctx.noise.set_heating(0, d.number("noise", "heating_a", 0.0));
    ctx.noise.set_heating(1, d.number("noise", "heating_s", 0.0));
    ctx.noise.set_dephasing(0, d.number("noise", "dephasing_a", 0.0));
    ctx.noise.set_dephasing(1, d.number("noise", "dephasing_s", 0.0));
    ctx.drive_heating = d.number("noise", "drive_heating", 0.0);
    ctx.sideband_infidelity = d.number("noise", "sideband_infidelity", 0.0);
    ctx.recoil_kappa = d.number("noise", "recoil_kappa", 0.0);
    try {
        ctx.noise.validate();
    } catch (const ArgumentError &e) {
        throw ConfigError(std::string("[noise] ") + e.what());
    }
    if (ctx.drive_heating < 0.0) throw ConfigError("[noise] drive_heating must be non-negative");
    if (ctx.sideband_infidelity < 0.0 || ctx.sideband_infidelity > 1.0)
        throw ConfigError("[noise] sideband_infidelity must lie in [0, 1]");
    return s;
}

QndSetup qnd_setup(const Document &d) {
    if (!d.has_section("qnd")) throw ConfigError("missing [qnd] section");
    QndSetup q;
    auto &p = q.protocol;
    auto &t = p.timing;
    t.g0 = d.number("qnd", "g0", t.g0);
    t.ramp = d.number("qnd", "ramp", t.ramp);
    t.cz_duration = d.number("qnd", "cz_duration", t.cz_duration);
    t.hold_duration = d.number("qnd", "hold_duration", t.hold_duration);
    t.recool_nbar = d.number("qnd", "recool_nbar", t.recool_nbar);
    t.cutoff = positive_int(d, "qnd", "cutoff", t.cutoff, 2);

    const auto variant = d.text("qnd", "variant", "m1");
    if (d.has("qnd", "phi2")) {
        if (d.has("qnd", "variant")) throw ConfigError("[qnd] give either variant or phi2, not both");
        p.variant.phi2 = d.number("qnd", "phi2", 0.0);
    } else if (variant == "m1") {
        p.variant = qnd::MappingVariant::m1();
    } else if (variant == "m2") {
        p.variant = qnd::MappingVariant::m2();
    } else {
        throw ConfigError("[qnd] variant must be m1 or m2, got '" + variant + "'");
    }

    auto &n = p.noise;
    n = qnd::QndNoise::none();
    n.heating_a = d.number("noise", "heating_a", 0.0);
    n.heating_s = d.number("noise", "heating_s", 0.0);
    n.drive_heating = d.number("noise", "drive_heating", 0.0);
    n.readout_flip = d.number("noise", "readout_flip", 0.0);
    n.ideal_detection = d.flag("qnd", "ideal_detection", false);
    n.photons = d.number("qnd", "photons", 3000.0);

    const auto cfg = crystal_config(d);
    const auto sol = crystal::solve(cfg);
    const auto refs = mode_refs(d);
    const long long ion = d.integer("qnd", "ion", 1);
    if (ion < 0 || ion >= sol.ion_count()) throw ConfigError("[qnd] ion out of range");
    for (const auto &m : refs)
        if (m.index >= sol.ion_count()) throw ConfigError("[drive] mode index exceeds the number of modes");
    n.xi_alternating = crystal::participation(sol, static_cast<int>(ion), refs[0].axis, refs[0].index);
    const auto xi_res = d.maybe_number("qnd", "xi_residual");
    n.xi_residual = xi_res ? *xi_res : crystal::participation(sol, static_cast<int>(ion), refs[1].axis, refs[1].index);
    const auto dn = d.maybe_number("qnd", "recoil_dn");
    if (dn && d.has("noise", "recoil_kappa")) throw ConfigError("give either [qnd] recoil_dn or [noise] recoil_kappa, not both");
    n.recoil_kappa = dn ? qnd::calibrated_kappa(n.xi_alternating, n.photons, *dn) : d.number("noise", "recoil_kappa", 0.0);

    auto &o = q.options;
    o.rounds = positive_int(d, "qnd", "rounds", 2);
    if (o.rounds > 8) throw ConfigError("[qnd] rounds above 8 are not supported");
    o.trials = positive_int(d, "qnd", "trials", 20000);
    o.seed = d.seed().value_or(0);
    o.nbar_a = d.number("qnd", "nbar_a", 0.023);
    o.nbar_s = d.number("qnd", "nbar_s", 0.023);
    q.patterns = d.strings("qnd", "patterns");
    if (q.patterns.empty()) q.patterns = {"*", std::string(o.rounds, 'd'), std::string(o.rounds, 'b')};
    for (const auto &pat : q.patterns) {
        try {
            qnd::matches(std::string(o.rounds, 'd'), pat);
        } catch (const ArgumentError &e) {
            throw ConfigError("[qnd] pattern '" + pat + "': " + e.what());
        }
        if (pat != "*" && pat.rfind("majority-", 0) != 0 && static_cast<int>(pat.size()) != o.rounds)
            throw ConfigError("[qnd] pattern '" + pat + "' must have one character per round");
    }
    try {
        t.validate();
        n.validate();
        p.variant.validate();
    } catch (const ArgumentError &e) {
        throw ConfigError(std::string("[qnd] ") + e.what());
    }
    return q;
}

electrodes::Term parse_term(const std::string &text, bool value_required) {
    electrodes::Term t;
    const auto at = text.find('@');
    if (at == std::string::npos || at == 0 || at > 2) throw ConfigError("term '" + text + "' must look like zz@1:value");
    const auto q = text.substr(0, at);
    for (char c : q)
        if (c < 'x' || c > 'z') throw ConfigError("term '" + text + "' uses an axis other than x, y, z");
    t.quantity = q.size() == 1 ? electrodes::Quantity::Gradient : electrodes::Quantity::Curvature;
    t.i = q[0] - 'x';
    t.j = q.size() == 2 ? q[1] - 'x' : t.i;
    std::vector<std::string> parts;
    size_t pos = at + 1;
    while (true) {
        const auto c = text.find(':', pos);
        parts.push_back(text.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
        if (c == std::string::npos) break;
        pos = c + 1;
    }
    if (parts.size() > 3) throw ConfigError("term '" + text + "' has too many fields");
    try {
        size_t used = 0;
        t.ion = std::stoi(parts[0], &used);
        if (used != parts[0].size()) throw std::invalid_argument("ion");
        if (parts.size() >= 2) t.value = config::parse_quantity(parts[1], Dim::None);
        if (parts.size() == 3) t.weight = config::parse_quantity(parts[2], Dim::None);
    } catch (const std::exception &) {
        throw ConfigError("term '" + text + "' has a malformed ion, value or weight");
    }
    if (value_required && parts.size() < 2) throw ConfigError("desired term '" + text + "' needs a value");
    return t;
}

ElectrodeProblem electrode_problem(const Document &d) {
    if (!d.has_section("electrodes")) throw ConfigError("missing [electrodes] section");
    if (!d.has_section("target")) throw ConfigError("missing [target] section");
    ElectrodeProblem p;
    const auto fields = d.keys_with_prefix("electrodes", "field_");
    if (d.flag("electrodes", "synthetic", false)) {
        if (!fields.empty()) throw ConfigError("[electrodes] synthetic basis cannot be combined with field_ entries");
        const auto z = d.numbers("electrodes", "ion_z");
        p.basis = z.empty() ? electrodes::synthetic_basis() : electrodes::synthetic_basis(z);
    } else {
        if (fields.empty()) throw ConfigError("[electrodes] needs synthetic = true or field_<name> entries");
        for (const auto &k : fields) {
            const auto v = d.numbers("electrodes", k);
            if (v.empty() || v.size() % 9 != 0)
                throw ConfigError("[electrodes] " + k + " needs 9 numbers per ion (gx gy gz xx yy zz xy xz yz)");
            std::vector<electrodes::FieldRecord> recs;
            for (size_t i = 0; i < v.size(); i += 9) {
                electrodes::FieldRecord r;
                r.gradient = {v[i], v[i + 1], v[i + 2]};
                r.curvature << v[i + 3], v[i + 6], v[i + 7], v[i + 6], v[i + 4], v[i + 8], v[i + 7], v[i + 8], v[i + 5];
                recs.push_back(r);
            }
            p.basis.names.push_back(k.substr(6));
            p.basis.fields.push_back(recs);
        }
    }
    if (d.flag("target", "synthetic", false)) {
        if (d.has("target", "desired") || d.has("target", "nulls"))
            throw ConfigError("[target] synthetic target cannot be combined with desired or nulls");
        p.target = electrodes::synthetic_target(d.number("target", "alpha", 2e-3), p.basis.ions());
    } else {
        for (const auto &s : d.strings("target", "desired")) p.target.desired.push_back(parse_term(s, true));
        for (const auto &s : d.strings("target", "nulls")) p.target.nulls.push_back(parse_term(s, false));
    }
    p.options.hard_desired = d.flag("target", "hard_desired", true);
    try {
        p.basis.validate();
        p.target.validate(p.basis.ions());
    } catch (const ArgumentError &e) {
        throw ConfigError(e.what());
    }
    return p;
}

void check(const Document &d, Experiment e) {
    const auto named = d.text("experiment", "name", "");
    if (!named.empty() && named != experiment_name(e))
        throw ConfigError("config describes experiment '" + named + "' but '" + experiment_name(e) + "' was requested");
    if (stochastic(d, e) && !d.seed()) throw ConfigError("experiment '" + experiment_name(e) + "' is stochastic and needs a seed");
    if (d.integer("experiment", "shots", 0) < 0) throw ConfigError("[experiment] shots must be non-negative");
    for (const char *k : {"rap_fidelity_mg", "rap_fidelity_be"})
        if (const auto f = d.maybe_number("noise", k); f && !(*f > 0.0 && *f <= 1.0))
            throw ConfigError(std::string("[noise] ") + k + " must be in (0, 1]");
    switch (e) {
        case Experiment::Modes: require(d, "crystal", e); crystal_config(d); break;
        case Experiment::Couple:
            require(d, "crystal", e);
            require(d, "drive", e);
            break;
        case Experiment::Qnd:
            require(d, "crystal", e);
            require(d, "qnd", e);
            qnd_setup(d);
            break;
        case Experiment::DesignVoltages:
            require(d, "electrodes", e);
            require(d, "target", e);
            electrode_problem(d);
            break;
        default: {
            require(d, "drive", e);
            if (!d.has("drive", "g0") || !d.has("modes", "resonance")) require(d, "crystal", e);
            const auto ds = drive_setup(d);
            exchange_setup(d, ds);
            if (e == Experiment::Hom) hom_scan(d);
            if (e == Experiment::Ramsey) sequence::ramsey_from_name(d.text("experiment", "variant", "delay"));
            break;
        }
    }
}

ResultBundle run(const Document &d, Experiment e) {
    check(d, e);
    ResultBundle b;
    b.experiment = e;
    b.metadata = {{"experiment", experiment_name(e)},
                  {"config_hash", config::config_hash(d)},
                  {"version", library_version()},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"timestamp", timestamp()}};
    if (const auto s = d.seed()) b.metadata.push_back({"seed", std::to_string(*s)});
    Builder out{b};
    // Only the readout mapping channel uses transfer fidelities, and no experiment here runs it.
    for (const char *k : {"rap_fidelity_mg", "rap_fidelity_be"})
        if (d.has("noise", k)) out.warn(std::string("[noise] ") + k + " has no effect on " + experiment_name(e));
    switch (e) {
        case Experiment::Modes: run_modes(d, out); break;
        case Experiment::Couple: run_couple(d, out); break;
        case Experiment::ScanFreq: run_scan_freq(d, out); break;
        case Experiment::ScanTime: run_scan_time(d, out); break;
        case Experiment::Hom: run_hom(d, out); break;
        case Experiment::Ramsey: run_ramsey(d, out); break;
        case Experiment::SwapDecay: run_swap_decay(d, out); break;
        case Experiment::Qnd: run_qnd(d, out); break;
        case Experiment::DesignVoltages: run_design(d, out); break;
    }
    return b;
}

std::string emit_csv(const ResultBundle &b, const std::string &name) {
    if (b.tables.empty()) throw ArgumentError("result has no tables");
    const Table &t = name.empty() ? b.tables.front() : b.table(name);
    std::string out;
    for (size_t c = 0; c < t.columns.size(); ++c) {
        out += c ? "," : "";
        out += t.columns[c].name;
        if (!t.columns[c].unit.empty()) out += "[" + t.columns[c].unit + "]";
    }
    out += "\n";
    for (const auto &r : t.rows) {
        for (size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + csv_cell(r[c]);
        out += "\n";
    }
    return out;
}

std::string emit_json(const ResultBundle &b) {
    nlohmann::ordered_json j;
    j["experiment"] = experiment_name(b.experiment);
    auto &meta = j["metadata"] = nlohmann::ordered_json::object();
    for (const auto &[k, v] : b.metadata) meta[k] = v;
    auto &sc = j["scalars"] = nlohmann::ordered_json::object();
    for (const auto &s : b.scalars) {
        nlohmann::ordered_json e;
        e["value"] = json_number(s.value);
        e["unit"] = s.unit;
        if (s.error >= 0.0) e["error"] = json_number(s.error);
        sc[s.name] = e;
    }
    auto &tabs = j["tables"] = nlohmann::ordered_json::array();
    for (const auto &t : b.tables) {
        nlohmann::ordered_json jt;
        jt["name"] = t.name;
        jt["columns"] = nlohmann::ordered_json::array();
        for (const auto &c : t.columns) jt["columns"].push_back({{"name", c.name}, {"unit", c.unit}});
        jt["rows"] = nlohmann::ordered_json::array();
        for (const auto &r : t.rows) {
            auto row = nlohmann::ordered_json::array();
            for (const auto &c : r) {
                if (const double *x = std::get_if<double>(&c))
                    row.push_back(json_number(*x));
                else
                    row.push_back(std::get<std::string>(c));
            }
            jt["rows"].push_back(row);
        }
        tabs.push_back(jt);
    }
    j["warnings"] = b.warnings;
    return j.dump(2) + "\n";
}

std::vector<std::string> write(const ResultBundle &b, const std::string &directory, const std::string &format,
                               const std::string &prefix) {
    namespace fs = std::filesystem;
    if (format != "csv" && format != "json") throw ConfigError("output format must be csv or json, got '" + format + "'");
    std::error_code ec;
    fs::create_directories(directory, ec);
    if (ec) throw IoError("cannot create output directory '" + directory + "': " + ec.message());
    std::vector<std::string> written;
    auto put = [&](const fs::path &path, const std::string &text) {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write '" + path.string() + "'");
        f << text;
        written.push_back(path.string());
    };
    if (format == "json") {
        put(fs::path(directory) / (prefix + ".json"), emit_json(b));
    } else {
        for (size_t i = 0; i < b.tables.size(); ++i) {
            const auto file = i == 0 ? prefix + ".csv" : prefix + "_" + b.tables[i].name + ".csv";
            put(fs::path(directory) / file, emit_csv(b, b.tables[i].name));
        }
    }
    return written;
}

std::string library_version() { return IONCOUPLE_VERSION; }

}  // namespace ioncouple::runner
