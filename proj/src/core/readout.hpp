#pragma once

#include <Eigen/Dense>
#include <array>
#include <random>
#include <string>
#include <vector>

namespace ioncouple::readout {

struct FluorescenceModel {
    double bright = 30.0;     // counts per bright ion per detection
    double background = 2.0;  // counts with every ion dark
    std::string label;

    static FluorescenceModel beryllium() { return {30.0, 2.0, "Be"}; }
    static FluorescenceModel magnesium() { return {30.0, 1.0, "Mg"}; }

    double mean(int n_bright) const { return n_bright * bright + background; }
    void validate() const;
};

// Strictly increasing cut points; counts c with c > cuts[k] count as at least k + 1 bright ions.
struct Thresholds {
    std::vector<int> cuts;

    static Thresholds beryllium_pair() { return {{13, 46}}; }
    static Thresholds magnesium() { return {{9}}; }
    void validate() const;
};

int sample_counts(const FluorescenceModel &model, int n_bright, std::mt19937_64 &rng);
int classify(int counts, const Thresholds &thresholds);

double poisson_pmf(int k, double mean);
// P(count <= k)
double poisson_cdf(int k, double mean);
// Probability that a detection with `n_bright` ions lands in each threshold class.
std::vector<double> class_probabilities(const FluorescenceModel &model, int n_bright, const Thresholds &thresholds);

// histogram[c] = number of detections with c counts.
using Histogram = std::vector<long long>;
Histogram make_histogram(const std::vector<int> &counts);

struct MixtureFit {
    std::vector<double> means;
    Eigen::VectorXd weights;
    Eigen::VectorXd errors;
    double log_likelihood = 0.0;
    double gradient_norm = 0.0;
    long long trials = 0;
    int iterations = 0;
    bool on_boundary = false;
};

// Weights of a Poisson mixture with fixed component means, maximised over the simplex.
MixtureFit mle_bright_probs(const Histogram &histogram, const std::vector<double> &means);
MixtureFit mle_bright_probs(const Histogram &histogram, const FluorescenceModel &model, int max_bright = 2);

// Component means estimated from reference detections with known bright-ion number.
FluorescenceModel calibrate(const std::vector<int> &dark_reference, const std::vector<int> &one_bright_reference,
                            const std::string &label = {});

struct SidebandMap {
    double one = 0.942;
    double two = 0.889;
    void validate() const;
};

struct NumberPopulations {
    std::array<double, 3> p{};
    std::array<double, 3> raw{};
    bool clamped = false;
    std::vector<std::string> warnings;
};

NumberPopulations infer_number_populations(const std::array<double, 3> &bright_probs, const SidebandMap &map = {});

double sideband_ratio_nbar(double p_mss, double p_mas);

// Sideband excitation probe acting on a number distribution.
enum class Probe {
    PiPulse,  // pulse calibrated as a pi pulse on |0> -> |1>, angle scales as sqrt(n)
    Weak,     // short pulse, excitation linear in the matrix element squared
};

struct SidebandSignal {
    double mss = 0.0;
    double mas = 0.0;
};

SidebandSignal sideband_probe(const Eigen::VectorXd &number_distribution, Probe probe = Probe::PiPulse);

// Motion-to-spin mapping of a two-mode (Alternating, Stretch) state.
struct MappingChannel {
    double mg_rap_fidelity = 1.0;
    double be_rap_fidelity = 1.0;
    FluorescenceModel be = FluorescenceModel::beryllium();
    FluorescenceModel mg = FluorescenceModel::magnesium();
    Thresholds be_cuts = Thresholds::beryllium_pair();
    Thresholds mg_cuts = Thresholds::magnesium();

    // Probability that Mg ends bright for an Alternating number n under mapping `target`.
    double mg_bright_probability(int n, int target) const;
    // Distribution over the number of bright Be ions (0, 1, 2) for a Stretch number m.
    std::array<double, 3> be_bright_distribution(int m) const;
};

struct MappingOutcome {
    int be_bright = 0;  // classified bright Be ions
    bool mg_bright = false;
    int be_lit = 0;  // Be ions left bright by the mapping, before detection
    bool mg_lit = false;
};

// p is a row-major joint number distribution p[nA * cutoff + nS].
MappingOutcome sample_mapping(const Eigen::VectorXd &joint, int cutoff, int target, const MappingChannel &channel,
                              std::mt19937_64 &rng);

struct JointEstimate {
    std::array<double, 9> raw{};  // P_i^(0), index nA * 3 + nS
    std::array<double, 9> p{};
    std::array<double, 9> error{};
    long long repetitions = 0;  // per mapping
};

// Repeats each of the three mappings `repetitions` times and applies the counting estimator.
JointEstimate estimate_joint_populations(const Eigen::VectorXd &joint, int cutoff, const MappingChannel &channel,
                                         long long repetitions, std::mt19937_64 &rng);
// Probabilities of the declared outcome (nA, nS) per mapping, enumerated exactly.
std::array<double, 9> exact_declared_probabilities(const Eigen::VectorXd &joint, int cutoff,
                                                   const MappingChannel &channel);

}  // namespace ioncouple::readout
