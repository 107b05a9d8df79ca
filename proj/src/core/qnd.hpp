#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "hilbert.hpp"
#include "readout.hpp"
#include "units.hpp"

namespace ioncouple::qnd {

using hilbert::JointState;

// Mg+ levels used by the mapping: 0 bright |down>, 1 dark |up>, 2 auxiliary
// target of the 2 pi sideband (fluoresces like level 0).
inline constexpr int level_bright = 0;
inline constexpr int level_dark = 1;
inline constexpr int level_aux = 2;
inline constexpr int spin_levels = 3;

struct MappingVariant {
    double phi2 = 0.0;

    static MappingVariant m1() { return {0.0}; }
    static MappingVariant m2() { return {units::pi}; }
    // True when |0> is heralded by a dark outcome (M1-like).
    bool zero_is_dark() const;
    void validate() const;
};

// Carrier pi/2, MSS 2 pi to the auxiliary level (angle 2 pi sqrt(n)), carrier pi/2 at phase phi2.
hilbert::Matrix cz_unitary(const hilbert::SpaceLayout &layout, int mode, int spin, double phi2);
JointState cz_map(const JointState &state, const MappingVariant &variant, int mode, int spin,
                  std::vector<std::string> *warnings = nullptr);
double bright_probability(const JointState &state, int spin);
// P(b) of |0> against the final-pulse phase.
std::vector<double> cz_fringe(const std::vector<double> &phi2);

struct QndNoise {
    double heating_a = 60.0;  // quanta/s
    double heating_s = 2.8;
    double drive_heating = 66.0;  // added to both modes while the swap drive is on
    double readout_flip = 0.02;
    bool ideal_detection = false;  // classify the spin projection directly, no photon counts
    double photons = 3000.0;       // scattered per bright detection
    double recoil_kappa = 0.0;     // delta nbar per photon per unit squared participation
    double xi_alternating = 0.0;   // Mg+ participation in the Alternating mode
    double xi_residual = 0.0;      // Mg+ participation left in the Stretch mode
    readout::FluorescenceModel mg = readout::FluorescenceModel::magnesium();
    readout::Thresholds threshold = readout::Thresholds::magnesium();

    static QndNoise none();
    // Defaults with kappa chosen so one detection adds `recoil_dn` to a mode with participation xi_alt.
    static QndNoise calibrated(double xi_alt, double recoil_dn = 0.012);
    void validate() const;
};

double calibrated_kappa(double xi_alt, double photons, double recoil_dn = 0.012);

struct RoundTiming {
    double g0 = units::khz(2.55);  // rad/s
    double swap_phase = 0.0;
    double ramp = 10e-6;
    double cz_duration = 83.3e-6;  // CZ mapping sequence
    double hold_duration = 3.6e-3;  // Mg detection plus cooling of the other modes
    double recool_nbar = 0.023;
    int cutoff = 5;

    double swap_area() const { return units::pi / (2.0 * g0); }
    void validate() const;
};

struct Protocol {
    RoundTiming timing;
    QndNoise noise = QndNoise::none();
    MappingVariant variant = MappingVariant::m1();
};

// Motional layout (Alternating, Stretch) carried between rounds.
hilbert::SpaceLayout motional_layout(int cutoff);
JointState initial_state(const Protocol &p, double nbar_a, double nbar_s);

// One round expanded over the spin projection. Both states are normalised and
// already carried through swap, detection hold, recool and swap back.
struct RoundBranches {
    double p_lit = 0.0;
    JointState lit, dark;
    double p_outcome_bright(const QndNoise &noise) const;
    // Post-measurement motional state given the recorded outcome.
    JointState conditioned(char outcome, const QndNoise &noise) const;
};

RoundBranches expand_round(const JointState &motional, const Protocol &p, std::vector<std::string> *warnings = nullptr);

// P(outcome b | spin lit) and P(b | spin dark) under the detection model.
std::pair<double, double> detection_likelihoods(const QndNoise &noise);
char sample_outcome(bool lit, const QndNoise &noise, std::mt19937_64 &rng);

struct RoundResult {
    char outcome = 'd';
    bool lit = false;
    JointState state;
};

RoundResult run_round(const JointState &motional, const Protocol &p, std::mt19937_64 &rng);

struct Leaf {
    double probability = 0.0;
    double p_mas = 0.0;  // pi-pulse probe on the Alternating mode
    double p_mss = 0.0;
    double nbar_direct = 0.0;
    Eigen::VectorXd populations;  // Alternating marginal
};

struct Trial {
    std::string outcomes;
    bool probe_mss = false;  // even trials probe MAS, odd trials MSS
    bool flip = false;
};

struct OutcomeSeries {
    int rounds = 1;
    MappingVariant variant;
    std::vector<Trial> trials;
    std::map<std::string, Leaf> leaves;  // keyed by outcome tuple, exact
    std::vector<std::string> warnings;

    double exact_probability(const std::string &pattern) const;
};

struct RepeatOptions {
    int rounds = 1;
    long long trials = 20000;
    std::uint64_t seed = 1;
    std::uint64_t point = 0;
    double nbar_a = 0.023;
    double nbar_s = 0.023;
};

OutcomeSeries run_repeated(const Protocol &p, const RepeatOptions &options);

struct PostSelectionStats {
    int rounds = 1;
    double p_all_d = 0.0;
    double p_all_b = 0.0;
    double p0 = 0.0;  // heralded |0> among retained
    double p1 = 0.0;
    double discard = 0.0;
    double p_all_d_error = 0.0;
    double p_all_b_error = 0.0;
    double majority_d = 0.0;  // N >= 3 only
    double majority_b = 0.0;
    long long trials = 0;
};

PostSelectionStats post_select(double p_all_d, double p_all_b, bool zero_is_dark = true);
PostSelectionStats post_select(const OutcomeSeries &series);

// Pattern grammar: "*" matches every trial, "majority-d" / "majority-b" the
// majority classes, otherwise one character per round from {d, b, .} with '.' a wildcard.
bool matches(const std::string &outcomes, const std::string &pattern);

struct ConditionedNbar {
    double nbar = 0.0;  // sideband-ratio estimate from the sampled probe flips
    double error = 0.0;
    double nbar_exact = 0.0;   // same estimator on exact class-averaged probe probabilities
    double nbar_direct = 0.0;  // <n> of the class-averaged state
    double probability = 0.0;
    long long trials = 0;
};

ConditionedNbar conditioned_nbar(const OutcomeSeries &series, const std::string &pattern);

}  // namespace ioncouple::qnd
