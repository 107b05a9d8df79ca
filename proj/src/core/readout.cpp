#include "readout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "errors.hpp"

namespace ioncouple::readout {

void FluorescenceModel::validate() const {
    if (!(std::isfinite(bright) && std::isfinite(background)) || background < 0.0 || bright <= 0.0)
        throw ArgumentError("fluorescence model needs bright > 0 and background >= 0");
}

void Thresholds::validate() const {
    if (cuts.empty()) throw ArgumentError("thresholds need at least one cut point");
    for (size_t i = 1; i < cuts.size(); ++i)
        if (cuts[i] <= cuts[i - 1]) throw ArgumentError("threshold cut points must be strictly increasing");
}

int sample_counts(const FluorescenceModel &model, int n_bright, std::mt19937_64 &rng) {
    if (n_bright < 0) throw ArgumentError("negative bright-ion number");
    const double mu = model.mean(n_bright);
    if (mu <= 0.0) return 0;
    std::poisson_distribution<int> d(mu);
    return d(rng);
}

int classify(int counts, const Thresholds &thresholds) {
    if (counts < 0) throw ArgumentError("negative photon count");
    int n = 0;
    for (int cut : thresholds.cuts)
        if (counts > cut) ++n;
    return n;
}

double poisson_pmf(int k, double mean) {
    if (k < 0) return 0.0;
    if (mean <= 0.0) return k == 0 ? 1.0 : 0.0;
    return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

double poisson_cdf(int k, double mean) {
    double s = 0.0;
    for (int i = 0; i <= k; ++i) s += poisson_pmf(i, mean);
    return std::min(s, 1.0);
}

std::vector<double> class_probabilities(const FluorescenceModel &model, int n_bright, const Thresholds &thresholds) {
    thresholds.validate();
    const double mu = model.mean(n_bright);
    std::vector<double> p;
    double below = 0.0;
    for (int cut : thresholds.cuts) {
        const double c = poisson_cdf(cut, mu);
        p.push_back(c - below);
        below = c;
    }
    p.push_back(1.0 - below);
    return p;
}

Histogram make_histogram(const std::vector<int> &counts) {
    Histogram h;
    for (int c : counts) {
        if (c < 0) throw ArgumentError("negative photon count");
        if (static_cast<size_t>(c) >= h.size()) h.resize(c + 1, 0);
        ++h[c];
    }
    return h;
}

namespace {

struct MixtureProblem {
    std::vector<int> bins;  // occupied count values
    std::vector<double> h;  // occupancy
    Eigen::MatrixXd pmf;    // bins x components
    double n = 0.0;

    Eigen::VectorXd mix(const Eigen::VectorXd &w) const { return pmf * w; }

    double log_likelihood(const Eigen::VectorXd &w) const {
        const Eigen::VectorXd m = mix(w);
        double ll = 0.0;
        for (size_t i = 0; i < h.size(); ++i) {
            if (m[i] <= 0.0) return -std::numeric_limits<double>::infinity();
            ll += h[i] * std::log(m[i]);
        }
        return ll;
    }

    // dL/dw_k
    Eigen::VectorXd gradient(const Eigen::VectorXd &w) const {
        const Eigen::VectorXd m = mix(w);
        Eigen::VectorXd g = Eigen::VectorXd::Zero(w.size());
        for (size_t i = 0; i < h.size(); ++i) g += h[i] / m[i] * pmf.row(i).transpose();
        return g;
    }

    // -d2L/dw_k dw_l
    Eigen::MatrixXd information(const Eigen::VectorXd &w) const {
        const Eigen::VectorXd m = mix(w);
        Eigen::MatrixXd f = Eigen::MatrixXd::Zero(w.size(), w.size());
        for (size_t i = 0; i < h.size(); ++i) {
            const Eigen::VectorXd r = pmf.row(i).transpose();
            f += h[i] / (m[i] * m[i]) * r * r.transpose();
        }
        return f;
    }
};

Eigen::VectorXd em(const MixtureProblem &prob, Eigen::VectorXd w, int &iterations) {
    for (int it = 0; it < 20000; ++it) {
        const Eigen::VectorXd next = w.cwiseProduct(prob.gradient(w)) / prob.n;
        const double change = (next - w).cwiseAbs().maxCoeff();
        w = next;
        ++iterations;
        if (change < 1e-14) break;
    }
    return w;
}

// Newton ascent on the face of the simplex spanned by `support`.
// Returns false when the face has no finite likelihood; `stationary` reports an interior optimum.
bool newton_on_face(const MixtureProblem &prob, const std::vector<int> &support, Eigen::VectorXd &w,
                    int &iterations, bool &stationary) {
    const int k = static_cast<int>(w.size());
    const int s = static_cast<int>(support.size());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
    double total = 0.0;
    for (int j : support) total += std::max(w[j], 1e-3);
    for (int j : support) x[j] = std::max(w[j], 1e-3) / total;
    stationary = false;
    if (s == 1) {
        w = x;
        stationary = true;
        return std::isfinite(prob.log_likelihood(w));
    }
    const int last = support.back();
    double ll = prob.log_likelihood(x);
    for (int it = 0; it < 200; ++it) {
        ++iterations;
        const Eigen::VectorXd g = prob.gradient(x);
        const Eigen::MatrixXd f = prob.information(x);
        Eigen::VectorXd d(s - 1);
        Eigen::MatrixXd hr(s - 1, s - 1);
        for (int a = 0; a < s - 1; ++a) {
            const int i = support[a];
            d[a] = g[i] - g[last];
            for (int b = 0; b < s - 1; ++b) {
                const int j = support[b];
                hr(a, b) = f(i, j) - f(i, last) - f(last, j) + f(last, last);
            }
        }
        if (d.cwiseAbs().maxCoeff() / prob.n < 1e-13) {
            stationary = true;
            break;
        }
        const Eigen::VectorXd step = hr.ldlt().solve(d);
        Eigen::VectorXd full = Eigen::VectorXd::Zero(k);
        for (int a = 0; a < s - 1; ++a) {
            full[support[a]] = step[a];
            full[last] -= step[a];
        }
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            const Eigen::VectorXd trial = x + t * full;
            bool inside = true;
            for (int j : support) inside = inside && trial[j] > 0.0;
            if (!inside) continue;
            const double lt = prob.log_likelihood(trial);
            if (lt >= ll) {
                x = trial;
                ll = lt;
                moved = true;
                break;
            }
        }
        if (!moved || t * full.cwiseAbs().maxCoeff() < 1e-16) break;
    }
    if (!stationary) {
        const Eigen::VectorXd g = prob.gradient(x) / prob.n;
        stationary = true;
        for (int j : support) stationary = stationary && std::abs(g[j] - 1.0) < 1e-11;
    }
    w = x;
    return std::isfinite(ll);
}

double projected_gradient_norm(const MixtureProblem &prob, const Eigen::VectorXd &w) {
    const Eigen::VectorXd g = prob.gradient(w) / prob.n;
    double s = 0.0;
    for (int j = 0; j < w.size(); ++j) {
        const double r = g[j] - 1.0;
        if (w[j] > 0.0) s += r * r;
        else if (r > 0.0) s += r * r;
    }
    return std::sqrt(s);
}

}  // namespace

MixtureFit mle_bright_probs(const Histogram &histogram, const std::vector<double> &means) {
    const int k = static_cast<int>(means.size());
    if (k < 1 || k > 12) throw ArgumentError("mixture needs between 1 and 12 components");
    for (int i = 0; i < k; ++i) {
        if (!std::isfinite(means[i]) || means[i] < 0.0) throw ArgumentError("Poisson means must be finite and >= 0");
        for (int j = 0; j < i; ++j)
            if (std::abs(means[i] - means[j]) <= 1e-12 * std::max(1.0, std::abs(means[i])))
                throw ArgumentError("degenerate Poisson means");
    }
    MixtureProblem prob;
    for (size_t c = 0; c < histogram.size(); ++c) {
        if (histogram[c] < 0) throw ArgumentError("negative histogram entry");
        if (histogram[c] == 0) continue;
        prob.bins.push_back(static_cast<int>(c));
        prob.h.push_back(static_cast<double>(histogram[c]));
        prob.n += static_cast<double>(histogram[c]);
    }
    if (prob.n <= 0.0) throw ArgumentError("empty histogram");
    prob.pmf.resize(prob.bins.size(), k);
    for (size_t i = 0; i < prob.bins.size(); ++i)
        for (int j = 0; j < k; ++j) prob.pmf(i, j) = poisson_pmf(prob.bins[i], means[j]);

    MixtureFit out;
    out.means = means;
    out.trials = static_cast<long long>(prob.n);
    const Eigen::VectorXd start = em(prob, Eigen::VectorXd::Constant(k, 1.0 / k), out.iterations);

    // The likelihood is concave, so the optimum is the face whose interior
    // stationary point also satisfies the sign conditions on the excluded weights.
    double best_ll = -std::numeric_limits<double>::infinity(), kkt_ll = best_ll;
    Eigen::VectorXd best = start, kkt = start;
    for (unsigned mask = 1; mask < (1u << k); ++mask) {
        std::vector<int> support;
        for (int j = 0; j < k; ++j)
            if (mask & (1u << j)) support.push_back(j);
        Eigen::VectorXd w = start;
        bool stationary = false;
        if (!newton_on_face(prob, support, w, out.iterations, stationary)) continue;
        const double ll = prob.log_likelihood(w);
        if (ll > best_ll) {
            best_ll = ll;
            best = w;
        }
        if (stationary && projected_gradient_norm(prob, w) < 1e-10 && ll > kkt_ll) {
            kkt_ll = ll;
            kkt = w;
        }
    }
    if (std::isfinite(kkt_ll)) {
        best = kkt;
        best_ll = kkt_ll;
    }
    out.weights = best;
    out.log_likelihood = best_ll;
    out.gradient_norm = projected_gradient_norm(prob, best);

    std::vector<int> support;
    for (int j = 0; j < k; ++j) {
        if (best[j] > 0.0) support.push_back(j);
        else out.on_boundary = true;
    }
    out.errors = Eigen::VectorXd::Zero(k);
    const int s = static_cast<int>(support.size());
    if (s > 1) {
        const Eigen::MatrixXd f = prob.information(best);
        const int last = support.back();
        Eigen::MatrixXd hr(s - 1, s - 1);
        for (int a = 0; a < s - 1; ++a)
            for (int b = 0; b < s - 1; ++b) {
                const int i = support[a], j = support[b];
                hr(a, b) = f(i, j) - f(i, last) - f(last, j) + f(last, last);
            }
        const Eigen::MatrixXd cov = hr.inverse();
        for (int a = 0; a < s - 1; ++a) out.errors[support[a]] = std::sqrt(std::max(cov(a, a), 0.0));
        out.errors[last] = std::sqrt(std::max(cov.sum(), 0.0));
    }
    return out;
}

MixtureFit mle_bright_probs(const Histogram &histogram, const FluorescenceModel &model, int max_bright) {
    model.validate();
    std::vector<double> means;
    for (int n = 0; n <= max_bright; ++n) means.push_back(model.mean(n));
    return mle_bright_probs(histogram, means);
}

FluorescenceModel calibrate(const std::vector<int> &dark_reference, const std::vector<int> &one_bright_reference,
                            const std::string &label) {
    if (dark_reference.empty() || one_bright_reference.empty())
        throw ArgumentError("calibration needs dark and bright reference detections");
    auto mean = [](const std::vector<int> &v) {
        return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    FluorescenceModel m;
    m.background = mean(dark_reference);
    m.bright = mean(one_bright_reference) - m.background;
    m.label = label;
    m.validate();
    return m;
}

void SidebandMap::validate() const {
    if (!(one > 0.0 && one <= 1.0 && two > 0.0 && two <= 1.0))
        throw ArgumentError("sideband conversion factors must lie in (0, 1]");
}

NumberPopulations infer_number_populations(const std::array<double, 3> &bright_probs, const SidebandMap &map) {
    map.validate();
    for (double v : bright_probs)
        if (!std::isfinite(v) || v < -1e-12 || v > 1.0 + 1e-12)
            throw ArgumentError("bright probabilities must lie in [0, 1]");
    NumberPopulations out;
    out.raw[1] = bright_probs[1] / map.one;
    out.raw[2] = bright_probs[2] / map.two;
    out.raw[0] = 1.0 - out.raw[1] - out.raw[2];
    if (out.raw[1] + out.raw[2] > 1.05) {
        std::ostringstream s;
        s << "sideband conversion inconsistent: P(1) = " << out.raw[1] << ", P(2) = " << out.raw[2]
          << " sum above 1";
        out.warnings.push_back(s.str());
    }
    double total = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double c = std::clamp(out.raw[i], 0.0, 1.0);
        if (c != out.raw[i]) out.clamped = true;
        out.p[i] = c;
        total += c;
    }
    for (double &v : out.p) v /= total;
    return out;
}

double sideband_ratio_nbar(double p_mss, double p_mas) {
    if (!(std::isfinite(p_mss) && std::isfinite(p_mas)) || p_mss < 0.0 || p_mas > 1.0)
        throw ArgumentError("sideband probabilities must lie in [0, 1]");
    if (p_mas <= 0.0) throw UndefinedStatistics("sideband ratio undefined for P_MAS = 0");
    const double r = p_mss / p_mas;
    if (r >= 1.0) throw ArgumentError("sideband ratio r >= 1 lies outside the thermal model");
    return r / (1.0 - r);
}

SidebandSignal sideband_probe(const Eigen::VectorXd &p, Probe probe) {
    SidebandSignal s;
    for (int n = 0; n < p.size(); ++n) {
        if (probe == Probe::PiPulse) {
            s.mss += p[n] * std::pow(std::sin(0.5 * std::numbers::pi * std::sqrt(double(n))), 2);
            s.mas += p[n] * std::pow(std::sin(0.5 * std::numbers::pi * std::sqrt(n + 1.0)), 2);
        } else {
            // Small-area pulse: excitation proportional to the squared matrix element.
            constexpr double scale = 1e-3;
            s.mss += scale * p[n] * n;
            s.mas += scale * p[n] * (n + 1);
        }
    }
    return s;
}

double MappingChannel::mg_bright_probability(int n, int target) const {
    const double f = mg_rap_fidelity;
    switch (target) {
        case 0: return n == 0 ? 1.0 : 1.0 - f;
        case 1: return n == 0 ? 0.0 : (n == 1 ? f : f * (1.0 - f));
        case 2: return n >= 2 ? f * f : 0.0;
        default: throw ArgumentError("mapping target must be 0, 1 or 2");
    }
}

std::array<double, 3> MappingChannel::be_bright_distribution(int m) const {
    // Each of min(m, 2) Be ions is flipped dark with the RAP fidelity.
    const int flips = std::min(m, 2);
    const double f = be_rap_fidelity;
    std::array<double, 3> out{};
    for (int k = 0; k <= flips; ++k) {
        const double binom = (flips == 2 && k == 1) ? 2.0 : 1.0;
        out[2 - k] = binom * std::pow(f, k) * std::pow(1.0 - f, flips - k);
    }
    return out;
}

namespace {

void check_joint(const Eigen::VectorXd &joint, int cutoff, const MappingChannel &channel) {
    if (cutoff < 3) throw ArgumentError("joint mapping needs a cutoff of at least 3");
    if (joint.size() != cutoff * cutoff) throw ArgumentError("joint distribution size does not match cutoff");
    for (double f : {channel.mg_rap_fidelity, channel.be_rap_fidelity})
        if (!(f >= 0.0 && f <= 1.0)) throw ArgumentError("RAP fidelity must lie in [0, 1]");
    channel.be.validate();
    channel.mg.validate();
    channel.be_cuts.validate();
    channel.mg_cuts.validate();
}

}  // namespace

MappingOutcome sample_mapping(const Eigen::VectorXd &joint, int cutoff, int target, const MappingChannel &channel,
                              std::mt19937_64 &rng) {
    check_joint(joint, cutoff, channel);
    std::discrete_distribution<int> pick(joint.data(), joint.data() + joint.size());
    const int idx = pick(rng);
    const int na = idx / cutoff, ns = idx % cutoff;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const bool mg = u(rng) < channel.mg_bright_probability(na, target);
    int be_dark = 0;
    for (int i = 0; i < std::min(ns, 2); ++i)
        if (u(rng) < channel.be_rap_fidelity) ++be_dark;
    MappingOutcome out;
    out.mg_lit = mg;
    out.be_lit = 2 - be_dark;
    out.mg_bright = classify(sample_counts(channel.mg, mg ? 1 : 0, rng), channel.mg_cuts) >= 1;
    out.be_bright = classify(sample_counts(channel.be, 2 - be_dark, rng), channel.be_cuts);
    return out;
}

JointEstimate estimate_joint_populations(const Eigen::VectorXd &joint, int cutoff, const MappingChannel &channel,
                                         long long repetitions, std::mt19937_64 &rng) {
    check_joint(joint, cutoff, channel);
    if (repetitions < 1) throw ArgumentError("need at least one repetition per mapping");
    std::array<long long, 9> n{};
    for (int target = 0; target < 3; ++target)
        for (long long r = 0; r < repetitions; ++r) {
            const auto o = sample_mapping(joint, cutoff, target, channel, rng);
            if (o.mg_bright) ++n[target * 3 + (2 - std::min(o.be_bright, 2))];
        }
    JointEstimate e;
    e.repetitions = repetitions;
    double total = 0.0;
    for (int i = 0; i < 9; ++i) {
        e.raw[i] = static_cast<double>(n[i]) / static_cast<double>(repetitions);
        total += e.raw[i];
    }
    if (total <= 0.0) throw UndefinedStatistics("no successful mapping repetitions");
    for (int i = 0; i < 9; ++i) {
        e.p[i] = e.raw[i] / total;
        e.error[i] = std::sqrt(e.p[i] * (1.0 - e.p[i]) / static_cast<double>(repetitions));
    }
    return e;
}

std::array<double, 9> exact_declared_probabilities(const Eigen::VectorXd &joint, int cutoff,
                                                   const MappingChannel &channel) {
    check_joint(joint, cutoff, channel);
    const auto mg_dark = class_probabilities(channel.mg, 0, channel.mg_cuts);
    const auto mg_lit = class_probabilities(channel.mg, 1, channel.mg_cuts);
    std::array<std::vector<double>, 3> be;
    for (int b = 0; b < 3; ++b) be[b] = class_probabilities(channel.be, b, channel.be_cuts);
    std::array<double, 9> out{};
    for (int target = 0; target < 3; ++target)
        for (int na = 0; na < cutoff; ++na)
            for (int ns = 0; ns < cutoff; ++ns) {
                const double p = joint[na * cutoff + ns];
                if (p == 0.0) continue;
                const double pb = channel.mg_bright_probability(na, target);
                const double declared = pb * (1.0 - mg_lit[0]) + (1.0 - pb) * (1.0 - mg_dark[0]);
                const auto bright = channel.be_bright_distribution(ns);
                for (int b = 0; b < 3; ++b)
                    for (int cls = 0; cls < 3; ++cls)
                        out[target * 3 + (2 - cls)] += p * declared * bright[b] * be[b][cls];
            }
    return out;
}

}  // namespace ioncouple::readout
