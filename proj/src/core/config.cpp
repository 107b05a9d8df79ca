#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "units.hpp"

namespace ioncouple::config {

namespace {

using K = Kind;

const std::map<std::string, std::vector<KeySpec>> &schema() {
    static const std::map<std::string, std::vector<KeySpec>> s = {
        {"crystal",
         {{"ions", K::StringList},
          {"masses", K::NumberList, Dim::Mass},
          {"charges", K::NumberList},
          {"axial", K::Number, Dim::Frequency},
          {"radial_x", K::Number, Dim::Frequency},
          {"radial_y", K::Number, Dim::Frequency},
          {"reference_ion", K::Integer},
          {"term_*", K::Number}}},
        {"drive",
         {{"term_*", K::Number},
          {"beta", K::Number},
          {"g0", K::Number, Dim::Frequency},
          {"detuning", K::Number, Dim::Frequency},
          {"phase", K::Number, Dim::Angle},
          {"ramp", K::Number, Dim::Time},
          {"axis", K::String},
          {"mode_a", K::Integer},
          {"mode_b", K::Integer}}},
        {"modes", {{"cutoff", K::Integer}, {"resonance", K::Number, Dim::Frequency}}},
        {"noise",
         {{"heating_a", K::Number, Dim::Rate},
          {"heating_s", K::Number, Dim::Rate},
          {"dephasing_a", K::Number, Dim::Rate},
          {"dephasing_s", K::Number, Dim::Rate},
          {"drive_heating", K::Number, Dim::Rate},
          {"recoil_kappa", K::Number},
          {"rap_fidelity_mg", K::Number},
          {"rap_fidelity_be", K::Number},
          {"readout_flip", K::Number},
          {"sideband_infidelity", K::Number}}},
        {"experiment",
         {{"name", K::String},
          {"start", K::Number, Dim::Any},
          {"stop", K::Number, Dim::Any},
          {"points", K::Integer},
          {"pulse_duration", K::Number, Dim::Time},
          {"variant", K::String},
          {"initial_a", K::Integer},
          {"initial_s", K::Integer},
          {"m_max", K::Integer},
          {"delay_only", K::Bool},
          {"shots", K::Integer},
          {"fit", K::Bool},
          {"seed", K::Unsigned}}},
        {"output", {{"format", K::String}, {"directory", K::String}, {"prefix", K::String}}},
        {"qnd",
         {{"variant", K::String},
          {"phi2", K::Number, Dim::Angle},
          {"rounds", K::Integer},
          {"trials", K::Integer},
          {"ion", K::Integer},
          {"patterns", K::StringList},
          {"nbar_a", K::Number},
          {"nbar_s", K::Number},
          {"cz_duration", K::Number, Dim::Time},
          {"hold_duration", K::Number, Dim::Time},
          {"recool_nbar", K::Number},
          {"photons", K::Number},
          {"recoil_dn", K::Number},
          {"xi_residual", K::Number},
          {"ideal_detection", K::Bool},
          {"g0", K::Number, Dim::Frequency},
          {"ramp", K::Number, Dim::Time},
          {"cutoff", K::Integer}}},
        {"electrodes", {{"synthetic", K::Bool}, {"ion_z", K::NumberList}, {"field_*", K::NumberList}}},
        {"target",
         {{"synthetic", K::Bool},
          {"alpha", K::Number},
          {"desired", K::StringList},
          {"nulls", K::StringList},
          {"hard_desired", K::Bool}}},
    };
    return s;
}

struct Unit {
    const char *suffix;
    double scale;
};

const std::vector<Unit> &units_for(Dim d) {
    static const std::vector<Unit> none = {{"", 1.0}};
    static const std::vector<Unit> freq = {{"", 1.0},
                                           {"rad/s", 1.0},
                                           {"Hz", 2.0 * units::pi},
                                           {"kHz", 2.0 * units::pi * 1e3},
                                           {"MHz", 2.0 * units::pi * 1e6},
                                           {"GHz", 2.0 * units::pi * 1e9}};
    static const std::vector<Unit> time = {{"", 1.0}, {"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"\xC2\xB5s", 1e-6}, {"ns", 1e-9}};
    static const std::vector<Unit> mass = {{"", 1.0}, {"kg", 1.0}, {"amu", units::atomic_mass_unit}, {"u", units::atomic_mass_unit}};
    static const std::vector<Unit> angle = {{"", 1.0}, {"rad", 1.0}, {"deg", units::pi / 180.0}, {"pi", units::pi}};
    static const std::vector<Unit> rate = {{"", 1.0}, {"/s", 1.0}, {"1/s", 1.0}, {"quanta/s", 1.0}};
    switch (d) {
        case Dim::Frequency: return freq;
        case Dim::Time: return time;
        case Dim::Mass: return mass;
        case Dim::Angle: return angle;
        case Dim::Rate: return rate;
        default: return none;
    }
}

const char *si_suffix(Dim d) {
    switch (d) {
        case Dim::Frequency: return " rad/s";
        case Dim::Time: return " s";
        case Dim::Mass: return " kg";
        case Dim::Angle: return " rad";
        case Dim::Rate: return " /s";
        default: return "";
    }
}

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string &line) {
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (!quoted && (line[i] == '#' || line[i] == ';')) return line.substr(0, i);
    }
    return line;
}

std::string unquote(const std::string &raw) {
    const auto s = trim(raw);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    if (s.find('"') != std::string::npos) throw ConfigError("unbalanced quote in '" + s + "'");
    return s;
}

std::vector<std::string> split_list(const std::string &raw) {
    auto s = trim(raw);
    if (!s.empty() && s.front() == '[') {
        if (s.back() != ']') throw ConfigError("list is missing its closing ']'");
        s = s.substr(1, s.size() - 2);
    }
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::string cur;
    bool quoted = false;
    for (char c : s) {
        if (c == '"') quoted = !quoted;
        if (c == ',' && !quoted) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    for (const auto &e : out)
        if (e.empty()) throw ConfigError("empty list element");
    return out;
}

const KeySpec *lookup(const std::string &section, const std::string &key) {
    const auto it = schema().find(section);
    if (it == schema().end()) return nullptr;
    for (const auto &k : it->second) {
        if (k.name.back() == '*') {
            const auto prefix = k.name.substr(0, k.name.size() - 1);
            if (key.size() > prefix.size() && key.compare(0, prefix.size(), prefix) == 0) return &k;
        } else if (k.name == key) {
            return &k;
        }
    }
    return nullptr;
}

bool valid_key(const std::string &k) {
    if (k.empty()) return false;
    return std::all_of(k.begin(), k.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

Value parse_value(const KeySpec &spec, const std::string &raw) {
    Value v;
    v.kind = spec.kind;
    v.dim = spec.dim;
    const auto s = trim(raw);
    if (s.empty()) throw ConfigError("missing value");
    switch (spec.kind) {
        case K::Number: v.number = parse_quantity(s, spec.dim, &v.dim); break;
        case K::Integer: {
            const auto r = std::from_chars(s.data(), s.data() + s.size(), v.integer);
            if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("expected an integer, got '" + s + "'");
            break;
        }
        case K::Unsigned: {
            const auto r = std::from_chars(s.data(), s.data() + s.size(), v.unsigned_value);
            if (r.ec != std::errc() || r.ptr != s.data() + s.size())
                throw ConfigError("expected an unsigned 64-bit integer, got '" + s + "'");
            break;
        }
        case K::Bool:
            if (s == "true" || s == "yes" || s == "on")
                v.flag = true;
            else if (s == "false" || s == "no" || s == "off")
                v.flag = false;
            else
                throw ConfigError("expected true or false, got '" + s + "'");
            break;
        case K::String: v.text = unquote(s); break;
        case K::NumberList: {
            Dim resolved = spec.dim;
            for (const auto &e : split_list(s)) {
                v.numbers.push_back(parse_quantity(e, spec.dim, &resolved));
                if (v.numbers.size() == 1) v.dim = resolved;
                else if (resolved != v.dim) throw ConfigError("list mixes units of different dimensions");
            }
            break;
        }
        case K::StringList:
            for (const auto &e : split_list(s)) v.strings.push_back(unquote(e));
            break;
    }
    return v;
}

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string emit_value(const Value &v) {
    switch (v.kind) {
        case K::Number: return fmt17(v.number) + si_suffix(v.dim);
        case K::Integer: return std::to_string(v.integer);
        case K::Unsigned: return std::to_string(v.unsigned_value);
        case K::Bool: return v.flag ? "true" : "false";
        case K::String: return "\"" + v.text + "\"";
        case K::NumberList: {
            std::string s = "[";
            for (size_t i = 0; i < v.numbers.size(); ++i) s += (i ? ", " : "") + fmt17(v.numbers[i]) + si_suffix(v.dim);
            return s + "]";
        }
        case K::StringList: {
            std::string s = "[";
            for (size_t i = 0; i < v.strings.size(); ++i) s += (i ? ", \"" : "\"") + v.strings[i] + "\"";
            return s + "]";
        }
    }
    return "";
}

const Value *typed(const Document &d, const std::string &s, const std::string &key, Kind kind) {
    const Value *v = d.find(s, key);
    if (v && v->kind != kind) throw ConfigError("key '" + s + "." + key + "' has the wrong type");
    return v;
}

}  // namespace

bool Value::operator==(const Value &o) const {
    if (kind != o.kind || dim != o.dim) return false;
    switch (kind) {
        case K::Number: return number == o.number;
        case K::Integer: return integer == o.integer;
        case K::Unsigned: return unsigned_value == o.unsigned_value;
        case K::Bool: return flag == o.flag;
        case K::String: return text == o.text;
        case K::NumberList: return numbers == o.numbers;
        case K::StringList: return strings == o.strings;
    }
    return false;
}

const std::vector<std::string> &section_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto &[k, v] : schema()) n.push_back(k);
        return n;
    }();
    return names;
}

const std::vector<KeySpec> &section_schema(const std::string &section) {
    const auto it = schema().find(section);
    if (it == schema().end()) throw ConfigError("unknown section [" + section + "]");
    return it->second;
}

std::string dim_name(Dim d) {
    switch (d) {
        case Dim::None: return "dimensionless";
        case Dim::Frequency: return "frequency";
        case Dim::Time: return "time";
        case Dim::Mass: return "mass";
        case Dim::Angle: return "angle";
        case Dim::Rate: return "rate";
        case Dim::Any: return "frequency, time or angle";
    }
    return "?";
}

double parse_quantity(const std::string &text, Dim dim, Dim *resolved) {
    const auto s = trim(text);
    double x = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc()) throw ConfigError("expected a number, got '" + s + "'");
    const auto suffix = trim(std::string(r.ptr, s.data() + s.size()));
    if (!std::isfinite(x)) throw ConfigError("non-finite number '" + s + "'");
    const std::vector<Dim> candidates =
        dim == Dim::Any ? std::vector<Dim>{Dim::Frequency, Dim::Time, Dim::Angle} : std::vector<Dim>{dim};
    if (suffix.empty()) {
        if (resolved) *resolved = dim == Dim::Any ? Dim::None : dim;
        return x;
    }
    for (Dim c : candidates)
        for (const auto &u : units_for(c))
            if (suffix == u.suffix) {
                if (resolved) *resolved = c;
                return x * u.scale;
            }
    throw ConfigError("unit '" + suffix + "' does not fit a " + dim_name(dim) + " value");
}

bool Document::has(const std::string &s, const std::string &key) const { return find(s, key) != nullptr; }

const Value *Document::find(const std::string &s, const std::string &key) const {
    const auto it = sections_.find(s);
    if (it == sections_.end()) return nullptr;
    const auto jt = it->second.find(key);
    return jt == it->second.end() ? nullptr : &jt->second;
}

std::vector<std::string> Document::keys_with_prefix(const std::string &s, const std::string &prefix) const {
    std::vector<std::string> out;
    const auto it = sections_.find(s);
    if (it == sections_.end()) return out;
    for (const auto &[k, v] : it->second)
        if (k.compare(0, prefix.size(), prefix) == 0) out.push_back(k);
    return out;
}

double Document::number(const std::string &s, const std::string &key, double fallback) const {
    const Value *v = typed(*this, s, key, K::Number);
    return v ? v->number : fallback;
}

std::optional<double> Document::maybe_number(const std::string &s, const std::string &key) const {
    const Value *v = typed(*this, s, key, K::Number);
    if (!v) return std::nullopt;
    return v->number;
}

long long Document::integer(const std::string &s, const std::string &key, long long fallback) const {
    const Value *v = typed(*this, s, key, K::Integer);
    return v ? v->integer : fallback;
}

bool Document::flag(const std::string &s, const std::string &key, bool fallback) const {
    const Value *v = typed(*this, s, key, K::Bool);
    return v ? v->flag : fallback;
}

std::string Document::text(const std::string &s, const std::string &key, const std::string &fallback) const {
    const Value *v = typed(*this, s, key, K::String);
    return v ? v->text : fallback;
}

std::vector<double> Document::numbers(const std::string &s, const std::string &key) const {
    const Value *v = typed(*this, s, key, K::NumberList);
    return v ? v->numbers : std::vector<double>{};
}

std::vector<std::string> Document::strings(const std::string &s, const std::string &key) const {
    const Value *v = typed(*this, s, key, K::StringList);
    return v ? v->strings : std::vector<std::string>{};
}

std::optional<std::uint64_t> Document::seed() const {
    const Value *v = typed(*this, "experiment", "seed", K::Unsigned);
    if (!v) return std::nullopt;
    return v->unsigned_value;
}

void Document::set(const std::string &s, const std::string &key, Value v) {
    const KeySpec *spec = lookup(s, key);
    if (!spec) throw ConfigError("unknown key '" + key + "' in [" + s + "]");
    if (spec->kind != v.kind) throw ConfigError("key '" + s + "." + key + "' has the wrong type");
    sections_[s][key] = std::move(v);
}

void Document::set_seed(std::uint64_t seed) {
    Value v;
    v.kind = K::Unsigned;
    v.unsigned_value = seed;
    set("experiment", "seed", v);
}

Document parse(const std::string &text) {
    Document doc;
    std::istringstream in(text);
    std::string raw, section;
    std::set<std::string> seen;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("malformed section header on line " + std::to_string(line_no), "", line_no);
            section = trim(line.substr(1, line.size() - 2));
            if (!schema().count(section))
                throw ParseError("unknown section [" + section + "] on line " + std::to_string(line_no), section, line_no);
            if (!seen.insert(section).second)
                throw ParseError("section [" + section + "] repeated on line " + std::to_string(line_no), section, line_no);
            doc.add_section(section);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("expected 'key = value' on line " + std::to_string(line_no), line, line_no);
        const auto key = trim(line.substr(0, eq));
        if (section.empty())
            throw ParseError("key '" + key + "' on line " + std::to_string(line_no) + " is outside any section", key, line_no);
        const KeySpec *spec = valid_key(key) ? lookup(section, key) : nullptr;
        if (!spec)
            throw ParseError("unknown key '" + key + "' in [" + section + "] on line " + std::to_string(line_no), key, line_no);
        if (doc.has(section, key))
            throw ParseError("key '" + key + "' repeated on line " + std::to_string(line_no), key, line_no);
        Value v;
        try {
            v = parse_value(*spec, line.substr(eq + 1));
        } catch (const ConfigError &e) {
            throw ParseError("key '" + key + "' on line " + std::to_string(line_no) + ": " + e.what(), key, line_no);
        }
        v.line = line_no;
        doc.set(section, key, v);
    }
    return doc;
}

Document load(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

std::string canonical(const Document &doc) {
    std::string out;
    for (const auto &[s, keys] : doc.sections()) {
        out += "[" + s + "]\n";
        for (const auto &[k, v] : keys) out += k + " = " + emit_value(v) + "\n";
    }
    return out;
}

std::uint64_t fnv1a64(const std::string &bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string config_hash(const Document &doc) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical(doc))));
    return buf;
}

}  // namespace ioncouple::config
