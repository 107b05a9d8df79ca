#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fitting.hpp"
#include "hilbert.hpp"

namespace ioncouple::sequence {

using hilbert::JointState;

// Spin levels: `levels.first` is the bright level |down>, `levels.second` the dark |up>.
struct Carrier {
    int spin = 0;
    double theta = 0.0;
    double phi = 0.0;
    std::pair<int, int> levels{0, 1};
};

// order -1 (motion subtracting): |down,n> <-> |up,n-1> with angle theta sqrt(n).
// order +1 (motion adding):      |down,n> <-> |up,n+1> with angle theta sqrt(n+1).
struct Sideband {
    int spin = 0;
    int mode = 0;
    double theta = 0.0;
    double phi = 0.0;
    int order = -1;
    std::pair<int, int> levels{0, 1};
};

enum class RapDirection { Subtract, Add };

// Incoherent transfer |down,n> -> |up,n-/+1> with the given fidelity.
struct RapTransfer {
    int spin = 0;
    int mode = 0;
    RapDirection direction = RapDirection::Subtract;
    double fidelity = 1.0;
    std::pair<int, int> levels{0, 1};
};

struct CouplingPulse {
    hilbert::CouplingGenerator generator;
    coupling::PulseEnvelope envelope;
    double duration = 0.0;  // defaults to the envelope duration when zero
};

struct Delay {
    double duration = 0.0;
};

// Photon recoil from `photons` scattered by ion `ion`.
struct Scatter {
    int ion = 0;
    double photons = 0.0;
};

struct Recool {
    int mode = 0;
    double nbar = 0.0;
};

using PulseEvent = std::variant<Carrier, Sideband, RapTransfer, CouplingPulse, Delay, Scatter, Recool>;

std::string event_name(const PulseEvent &e);

struct Context {
    hilbert::NoiseModel noise;
    hilbert::EvolveOptions evolve;
    // Probability that a sideband pulse leaves the state untouched (contrast loss).
    double sideband_infidelity = 0.03;
    // Extra heating on every mode while a coupling pulse is applied, quanta/s.
    double drive_heating = 0.0;
    // Recoil: delta nbar per scattered photon per unit squared participation.
    double recoil_kappa = 0.0;
    // participation[ion][subsystem]; entries for spins are ignored.
    std::vector<std::vector<double>> participation;

    double participation_of(int ion, int subsystem) const;
};

JointState apply_event(const JointState &state, const PulseEvent &event, const Context &ctx,
                       hilbert::EvolveReport *report = nullptr);
JointState apply_events(const JointState &state, const std::vector<PulseEvent> &events, const Context &ctx,
                        std::vector<std::string> *warnings = nullptr);

// Local unitaries, exposed for the QND module and for tests.
hilbert::Matrix carrier_unitary(const hilbert::SpaceLayout &layout, const Carrier &c);
hilbert::Matrix sideband_unitary(const hilbert::SpaceLayout &layout, const Sideband &s);

struct ExperimentScript {
    JointState initial;
    std::vector<PulseEvent> events;
};

JointState run_script(const ExperimentScript &script, const Context &ctx, std::vector<std::string> *warnings = nullptr);

// Populations of |nA, nS> for nA, nS <= nmax (row-major in nA), plus what lies outside.
struct JointPopulations {
    int nmax = 2;
    Eigen::VectorXd p;
    double outside = 0.0;
    double at(int na, int ns) const { return p[na * (nmax + 1) + ns]; }
};

JointPopulations joint_populations(const JointState &state, int mode_a, int mode_b, int nmax = 2);

// Two-mode exchange experiments between mode A (higher frequency, subsystem 0)
// and mode S (subsystem 1).
struct ExchangeSetup {
    double g0 = 0.0;     // rad/s
    double phase = 0.0;  // rad
    double ramp = 0.0;   // envelope ramp time, s
    int cutoff = 5;
    Context context;
};

struct ScanSeries {
    std::string x_name;
    std::vector<double> x;
    std::vector<JointPopulations> points;
    std::vector<std::string> warnings;

    std::vector<double> column(int na, int ns) const;
    std::vector<double> marginal_a(int n) const;
    std::vector<double> marginal_s(int n) const;
};

// Fixed pulse area `duration` at each drive frequency; `resonance` is omega_a - omega_b.
ScanSeries scan_frequency(const ExchangeSetup &setup, const std::vector<double> &frequencies, double resonance,
                          double duration, const JointState *initial = nullptr);
// Resonant pulse with area tau for each tau.
ScanSeries scan_duration(const ExchangeSetup &setup, const std::vector<double> &areas,
                         const JointState *initial = nullptr);

enum class HomScan { Duration, Phase };
// initial |1,0> or |1,1>; phase scan applies BS(0), then BS(phi).
ScanSeries hom_interference(const ExchangeSetup &setup, int initial_s, HomScan scan, const std::vector<double> &values);

enum class RamseyVariant { Delay, Swap, DoubleSwap };
std::string ramsey_name(RamseyVariant v);
RamseyVariant ramsey_from_name(const std::string &name);

struct RamseySeries {
    RamseyVariant variant = RamseyVariant::Delay;
    std::vector<double> phi;
    std::vector<double> p_down;
    std::vector<std::string> warnings;
};

// Superposition (|0>+|1>)/sqrt2 in mode A via carrier pi/2 and MSS pi on a helper spin,
// wait/swap/double-swap for 2 t_s, then MSS pi with phase phi, carrier pi/2, read P(down).
RamseySeries ramsey_experiment(const ExchangeSetup &setup, RamseyVariant variant, const std::vector<double> &phis);

struct SwapDecay {
    bool delay_only = false;
    std::vector<double> m;
    std::vector<double> fidelity;
    fitting::FitResult fit;
    double epsilon = 0.0;
};

// M back-to-back swaps from |1,0>; fidelity of the normalised 9-state diagonal
// mixture to the ideally swapped reference, fit to (1 - eps)^M.
SwapDecay swap_fidelity_decay(const ExchangeSetup &setup, int m_max, bool delay_only = false);

}  // namespace ioncouple::sequence
