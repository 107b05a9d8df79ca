#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "errors.hpp"
#include "hilbert.hpp"
#include "readout.hpp"

using namespace ioncouple;
using namespace ioncouple::readout;

namespace {

// Plain Poisson tail by recurrence, independent of the library's lgamma form.
double tail_above(int cut, double mu) {
    double term = std::exp(-mu), cdf = 0.0;
    for (int k = 0; k <= cut; ++k) {
        cdf += term;
        term *= mu / (k + 1);
    }
    return 1.0 - cdf;
}

Histogram draw_mixture(const std::vector<double> &means, const std::vector<double> &weights, int trials,
                       unsigned seed) {
    std::mt19937_64 rng(seed);
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    std::vector<int> counts;
    for (int i = 0; i < trials; ++i) counts.push_back(std::poisson_distribution<int>(means[pick(rng)])(rng));
    return make_histogram(counts);
}

}  // namespace

TEST(readout, sample_means) {
    const auto be = FluorescenceModel::beryllium();
    EXPECT_DOUBLE_EQ(be.mean(2), 62.0);
    EXPECT_DOUBLE_EQ(be.mean(0), 2.0);
    std::mt19937_64 rng(11);
    const int n = 100000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += sample_counts(be, 2, rng);
    EXPECT_LT(std::abs(s / n - 62.0), 3.0 * std::sqrt(62.0 / n));
}

TEST(readout, classify_boundaries) {
    const auto be = Thresholds::beryllium_pair();
    EXPECT_EQ(classify(47, be), 2);
    EXPECT_EQ(classify(46, be), 1);
    EXPECT_EQ(classify(14, be), 1);
    EXPECT_EQ(classify(13, be), 0);
    EXPECT_EQ(classify(0, be), 0);
    const auto mg = Thresholds::magnesium();
    EXPECT_EQ(classify(10, mg), 1);
    EXPECT_EQ(classify(9, mg), 0);
    int last = 0;
    for (int c = 0; c < 200; ++c) {
        const int k = classify(c, be);
        EXPECT_GE(k, last);
        last = k;
    }
    EXPECT_THROW(classify(-1, be), ArgumentError);
    EXPECT_THROW((Thresholds{{13, 13}}.validate()), ArgumentError);
}

TEST(readout, class_probabilities_match_tail_sums) {
    const auto mg = FluorescenceModel::magnesium();
    const auto p = class_probabilities(mg, 1, Thresholds::magnesium());
    EXPECT_NEAR(p[1], tail_above(9, 31.0), 1e-14);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
}

TEST(readout, mle_pure_components) {
    const auto be = FluorescenceModel::beryllium();
    const std::vector<double> means{be.mean(0), be.mean(1), be.mean(2)};
    auto one = mle_bright_probs(draw_mixture(means, {0, 1, 0}, 20000, 3), means);
    EXPECT_LE(std::abs(one.weights[1] - 1.0), std::max(2.0 * one.errors[1], 1e-12));
    EXPECT_LT(one.gradient_norm, 1e-10);
    auto dark = mle_bright_probs(draw_mixture(means, {1, 0, 0}, 20000, 4), means);
    EXPECT_LE(std::abs(dark.weights[0] - 1.0), std::max(2.0 * dark.errors[0], 1e-12));
    EXPECT_LT(dark.gradient_norm, 1e-10);
}

TEST(readout, mle_even_mixture_and_fisher_errors) {
    const std::vector<double> means{1.0, 31.0};
    const int n = 40000;
    auto fit = mle_bright_probs(draw_mixture(means, {0.5, 0.5}, n, 5), means);
    EXPECT_LT(fit.gradient_norm, 1e-10);
    EXPECT_LT(std::abs(fit.weights[0] - 0.5), 2.0 * fit.errors[0]);
    EXPECT_NEAR(fit.weights.sum(), 1.0, 1e-12);
    // Nearly separated components: the Fisher error approaches the binomial one.
    EXPECT_NEAR(fit.errors[0] / std::sqrt(0.25 / n), 1.0, 0.01);
    EXPECT_NEAR(fit.errors[0], fit.errors[1], 1e-12);
}

TEST(readout, mle_three_components_large_sample) {
    const auto be = FluorescenceModel::beryllium();
    const std::vector<double> means{be.mean(0), be.mean(1), be.mean(2)};
    const std::vector<double> truth{0.2, 0.5, 0.3};
    auto fit = mle_bright_probs(draw_mixture(means, truth, 100000, 6), means);
    for (int k = 0; k < 3; ++k) EXPECT_LT(std::abs(fit.weights[k] - truth[k]), 3.0 * fit.errors[k]);
    EXPECT_LT(fit.gradient_norm, 1e-10);
}

TEST(readout, mle_validation) {
    EXPECT_THROW(mle_bright_probs(Histogram{1, 2}, std::vector<double>{3.0, 3.0}), ArgumentError);
    EXPECT_THROW(mle_bright_probs(Histogram{0, 0}, std::vector<double>{1.0, 3.0}), ArgumentError);
}

TEST(readout, calibration_from_reference) {
    std::mt19937_64 rng(8);
    const auto truth = FluorescenceModel::magnesium();
    std::vector<int> dark, bright;
    for (int i = 0; i < 50000; ++i) {
        dark.push_back(sample_counts(truth, 0, rng));
        bright.push_back(sample_counts(truth, 1, rng));
    }
    const auto m = calibrate(dark, bright, "Mg");
    EXPECT_NEAR(m.background, 1.0, 4 * std::sqrt(1.0 / 50000));
    EXPECT_NEAR(m.bright, 30.0, 4 * std::sqrt(32.0 / 50000));
}

TEST(readout, number_population_conversion) {
    auto a = infer_number_populations({0.058, 0.942, 0.0});
    EXPECT_NEAR(a.p[0], 0.0, 1e-12);
    EXPECT_NEAR(a.p[1], 1.0, 1e-12);
    auto b = infer_number_populations({0.111, 0.0, 0.889});
    EXPECT_NEAR(b.p[2], 1.0, 1e-12);
    auto c = infer_number_populations({1.0, 0.0, 0.0});
    EXPECT_EQ(c.p[0], 1.0);
    EXPECT_FALSE(c.clamped);
    EXPECT_EQ(a.raw[1], 0.942 / 0.942);
    auto d = infer_number_populations({0.0, 0.6, 0.4});
    EXPECT_TRUE(d.clamped);
    EXPECT_FALSE(d.warnings.empty());
    EXPECT_NEAR(d.p[0] + d.p[1] + d.p[2], 1.0, 1e-15);
}

TEST(readout, sideband_ratio) {
    EXPECT_EQ(sideband_ratio_nbar(0.0, 0.5), 0.0);
    EXPECT_NEAR(sideband_ratio_nbar(0.048, 0.924), 0.055, 0.001);
    EXPECT_THROW(sideband_ratio_nbar(0.1, 0.0), UndefinedStatistics);
    EXPECT_THROW(sideband_ratio_nbar(0.5, 0.5), ArgumentError);
}

TEST(readout, thermometry_identity) {
    for (double nbar : {0.023, 0.1, 0.5}) {
        const auto p = hilbert::thermal_distribution(400, nbar);
        for (Probe probe : {Probe::PiPulse, Probe::Weak}) {
            const auto s = sideband_probe(p, probe);
            EXPECT_NEAR(s.mss / s.mas, nbar / (1.0 + nbar), 1e-12);
            EXPECT_NEAR(sideband_ratio_nbar(s.mss, s.mas), nbar, 1e-9);
        }
    }
    for (double p1 : {0.0, 0.03, 0.3}) {
        Eigen::VectorXd p = Eigen::VectorXd::Zero(5);
        p[0] = 1.0 - p1;
        p[1] = p1;
        const auto s = sideband_probe(p, Probe::Weak);
        EXPECT_NEAR(sideband_ratio_nbar(s.mss, s.mas), p1, 1e-9);
    }
}

TEST(readout, be_flip_distribution) {
    MappingChannel ch;
    ch.be_rap_fidelity = 0.9;
    const auto d = ch.be_bright_distribution(2);
    EXPECT_NEAR(d[0], 0.81, 1e-15);
    EXPECT_NEAR(d[1], 0.18, 1e-15);
    EXPECT_NEAR(d[2], 0.01, 1e-15);
    EXPECT_NEAR(ch.be_bright_distribution(1)[1], 0.9, 1e-15);
    EXPECT_EQ(ch.be_bright_distribution(0)[2], 1.0);
}

TEST(readout, ideal_mapping_is_deterministic) {
    MappingChannel ch;
    std::mt19937_64 rng(9);
    const int c = 3;
    Eigen::VectorXd s11 = Eigen::VectorXd::Zero(c * c), s00 = Eigen::VectorXd::Zero(c * c);
    s11[1 * c + 1] = 1.0;
    s00[0] = 1.0;
    int two_seen = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) {
        const auto a = sample_mapping(s11, c, 1, ch, rng);
        EXPECT_TRUE(a.mg_lit);
        EXPECT_EQ(a.be_lit, 1);
        const auto b = sample_mapping(s00, c, 0, ch, rng);
        EXPECT_TRUE(b.mg_lit);
        EXPECT_EQ(b.be_lit, 2);
        two_seen += b.be_bright == 2;
    }
    // Detection itself misclassifies two bright ions as one at the Poisson overlap.
    const double overlap = 1.0 - tail_above(46, 62.0);
    EXPECT_NEAR(1.0 - double(two_seen) / n, overlap, 3 * std::sqrt(overlap / n));
    EXPECT_THROW(sample_mapping(Eigen::VectorXd::Ones(4) / 4, 2, 0, ch, rng), ArgumentError);
}

TEST(readout, joint_estimator_against_enumerated_channel) {
    MappingChannel ch;
    ch.mg_rap_fidelity = 0.95;
    ch.be_rap_fidelity = 0.94;
    const int c = 4;
    Eigen::VectorXd joint = Eigen::VectorXd::Zero(c * c);
    joint[0 * c + 1] = 0.45;
    joint[1 * c + 0] = 0.40;
    joint[1 * c + 1] = 0.05;
    joint[2 * c + 0] = 0.06;
    joint[0 * c + 2] = 0.04;

    // Oracle: the mapping diagrams enumerated by hand, per (nA, nS, mapping).
    auto mg_lit = [&](int na, int target) {
        const double f = 0.95;
        double pb = 0.0;
        if (target == 0) pb = na == 0 ? 1.0 : 1.0 - f;
        if (target == 1) pb = na == 1 ? f : (na >= 2 ? f * (1.0 - f) : 0.0);
        if (target == 2) pb = na >= 2 ? f * f : 0.0;
        return pb * tail_above(9, 31.0) + (1.0 - pb) * tail_above(9, 1.0);
    };
    auto be_class = [&](int ns, int cls) {
        const double f = 0.94;
        const int m = std::min(ns, 2);
        double out = 0.0;
        for (int dark = 0; dark <= m; ++dark) {
            const double w = (m == 2 && dark == 1 ? 2.0 : 1.0) * std::pow(f, dark) * std::pow(1.0 - f, m - dark);
            const double mu = 30.0 * (2 - dark) + 2.0;
            const double above13 = tail_above(13, mu), above46 = tail_above(46, mu);
            const double pc = cls == 2 ? above46 : (cls == 1 ? above13 - above46 : 1.0 - above13);
            out += w * pc;
        }
        return out;
    };
    std::array<double, 9> oracle{};
    for (int t = 0; t < 3; ++t)
        for (int na = 0; na < c; ++na)
            for (int ns = 0; ns < c; ++ns)
                for (int cls = 0; cls < 3; ++cls)
                    oracle[t * 3 + (2 - cls)] += joint[na * c + ns] * mg_lit(na, t) * be_class(ns, cls);

    const auto exact = exact_declared_probabilities(joint, c, ch);
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(exact[i], oracle[i], 1e-12) << i;

    std::mt19937_64 rng(10);
    const long long reps = 1000;
    const auto est = estimate_joint_populations(joint, c, ch, reps, rng);
    for (int i = 0; i < 9; ++i) {
        const double sigma = std::sqrt(std::max(oracle[i] * (1.0 - oracle[i]), 1e-6) / reps);
        EXPECT_LT(std::abs(est.raw[i] - oracle[i]), 3.0 * sigma + 1e-12) << i;
    }
    double total = 0.0;
    for (double v : est.p) total += v;
    EXPECT_NEAR(total, 1.0, 1e-12);
}
