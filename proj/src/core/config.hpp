#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "errors.hpp"

namespace ioncouple::config {

// Physical dimension of a numeric key. Values are stored in SI (rad/s, s, kg, rad, 1/s).
enum class Dim {
    None,
    Frequency,  // Hz, kHz, MHz, GHz are cyclic and scaled by 2 pi; rad/s as is
    Time,       // s, ms, us, ns
    Mass,       // amu, kg
    Angle,      // rad, deg, pi
    Rate,       // /s
    Any,        // start/stop of a scan: Frequency, Time or Angle, checked by the experiment
};

enum class Kind { Number, Integer, Unsigned, Bool, String, NumberList, StringList };

struct Value {
    Kind kind = Kind::Number;
    Dim dim = Dim::None;  // for Dim::Any keys, the dimension the suffix implied
    double number = 0.0;
    long long integer = 0;
    std::uint64_t unsigned_value = 0;
    bool flag = false;
    std::string text;
    std::vector<double> numbers;
    std::vector<std::string> strings;
    int line = 0;

    bool operator==(const Value &o) const;
};

class ParseError : public ConfigError {
  public:
    ParseError(const std::string &what, std::string key, int line)
        : ConfigError(what), key_(std::move(key)), line_(line) {}
    const std::string &key() const { return key_; }
    int line() const { return line_; }

  private:
    std::string key_;
    int line_;
};

struct KeySpec {
    std::string name;  // a trailing '*' makes it a prefix pattern
    Kind kind;
    Dim dim = Dim::None;
};

const std::vector<std::string> &section_names();
const std::vector<KeySpec> &section_schema(const std::string &section);

// Parsed configuration: typed values keyed by section and key, SI units.
class Document {
  public:
    bool has_section(const std::string &s) const { return sections_.count(s) > 0; }
    bool has(const std::string &s, const std::string &key) const;
    const Value *find(const std::string &s, const std::string &key) const;
    // Keys of a section beginning with `prefix`, sorted.
    std::vector<std::string> keys_with_prefix(const std::string &s, const std::string &prefix) const;

    double number(const std::string &s, const std::string &key, double fallback) const;
    std::optional<double> maybe_number(const std::string &s, const std::string &key) const;
    long long integer(const std::string &s, const std::string &key, long long fallback) const;
    bool flag(const std::string &s, const std::string &key, bool fallback) const;
    std::string text(const std::string &s, const std::string &key, const std::string &fallback) const;
    std::vector<double> numbers(const std::string &s, const std::string &key) const;
    std::vector<std::string> strings(const std::string &s, const std::string &key) const;
    std::optional<std::uint64_t> seed() const;

    void add_section(const std::string &s) { sections_[s]; }
    void set(const std::string &s, const std::string &key, Value v);
    void set_seed(std::uint64_t seed);

    const std::map<std::string, std::map<std::string, Value>> &sections() const { return sections_; }
    bool operator==(const Document &o) const { return sections_ == o.sections_; }

  private:
    std::map<std::string, std::map<std::string, Value>> sections_;
};

Document parse(const std::string &text);
Document load(const std::string &path);

// Sorted sections and keys, numbers as %.17g with their SI unit spelled out.
std::string canonical(const Document &doc);
std::uint64_t fnv1a64(const std::string &bytes);
std::string config_hash(const Document &doc);  // 16 hex digits of fnv1a64(canonical)

// Number with an optional unit suffix converted to SI, for values outside a document.
double parse_quantity(const std::string &text, Dim dim, Dim *resolved = nullptr);
std::string dim_name(Dim d);

}  // namespace ioncouple::config
