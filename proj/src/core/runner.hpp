#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "config.hpp"
#include "coupling.hpp"
#include "crystal.hpp"
#include "electrodes.hpp"
#include "qnd.hpp"
#include "sequence.hpp"

namespace ioncouple::runner {

enum class Experiment { Modes, Couple, ScanFreq, ScanTime, Hom, Ramsey, SwapDecay, Qnd, DesignVoltages };

std::string experiment_name(Experiment e);
Experiment experiment_from_name(const std::string &name);  // ConfigError for unknown names
const std::vector<Experiment> &all_experiments();

using Cell = std::variant<double, std::string>;

struct Column {
    std::string name;
    std::string unit;  // "1" for dimensionless numbers, empty for text columns
};

struct Table {
    std::string name;
    std::vector<Column> columns;
    std::vector<std::vector<Cell>> rows;
};

struct Scalar {
    std::string name;
    std::string unit;
    double value = 0.0;
    double error = -1.0;  // negative when no uncertainty applies
};

struct ResultBundle {
    Experiment experiment = Experiment::Modes;
    std::vector<std::pair<std::string, std::string>> metadata;
    std::vector<Table> tables;  // the first is the primary series
    std::vector<Scalar> scalars;
    std::vector<std::string> warnings;

    const Table &table(const std::string &name) const;
    const Scalar &scalar(const std::string &name) const;
    bool has_scalar(const std::string &name) const;
    std::vector<double> column(const std::string &table, const std::string &column) const;
};

// Builders from a parsed document, exposed for tests and for the C API.
crystal::CrystalConfig crystal_config(const config::Document &doc);
std::vector<coupling::ModeRef> mode_refs(const config::Document &doc);  // {a, b}

struct DriveSetup {
    coupling::CouplingDrive drive;
    double g0 = 0.0;
    double resonance = 0.0;  // [modes] resonance when given, otherwise from the crystal
    double scale = 1.0;      // applied to the polynomial to reach [drive] g0
};

DriveSetup drive_setup(const config::Document &doc);
sequence::ExchangeSetup exchange_setup(const config::Document &doc, const DriveSetup &drive);

struct QndSetup {
    qnd::Protocol protocol;
    qnd::RepeatOptions options;
    std::vector<std::string> patterns;
};
QndSetup qnd_setup(const config::Document &doc);

// "<q>@<ion>[:value[:weight]]", q one axis letter (gradient) or two (curvature).
electrodes::Term parse_term(const std::string &text, bool value_required);
struct ElectrodeProblem {
    electrodes::ElectrodeBasis basis;
    electrodes::TargetSpec target;
    electrodes::SolveOptions options;
};
ElectrodeProblem electrode_problem(const config::Document &doc);

// Checks that the document carries what the experiment needs. Throws ConfigError.
void check(const config::Document &doc, Experiment e);
ResultBundle run(const config::Document &doc, Experiment e);

std::string emit_csv(const ResultBundle &b, const std::string &table = "");
std::string emit_json(const ResultBundle &b);
// Primary table as <prefix>.csv, others as <prefix>_<table>.csv, or a single <prefix>.json.
std::vector<std::string> write(const ResultBundle &b, const std::string &directory, const std::string &format,
                               const std::string &prefix);

std::string library_version();

}  // namespace ioncouple::runner
