#include "polynomial.hpp"

#include <algorithm>
#include <stdexcept>

namespace ioncouple {

namespace {

double ipow(double x, int p) {
    double r = 1.0;
    for (int i = 0; i < p; ++i) r *= x;
    return r;
}

// d^k/dx^k of x^p evaluated at x.
double dpow(double x, int p, int k) {
    if (k > p) return 0.0;
    double f = 1.0;
    for (int i = 0; i < k; ++i) f *= static_cast<double>(p - i);
    return f * ipow(x, p - k);
}

}  // namespace

Polynomial3::Polynomial3(std::vector<Monomial> terms) : terms_(std::move(terms)) {
    for (const auto &t : terms_) {
        if (std::any_of(t.power.begin(), t.power.end(), [](int p) { return p < 0; }))
            throw std::invalid_argument("negative monomial power");
    }
}

void Polynomial3::add(int px, int py, int pz, double c) {
    if (px < 0 || py < 0 || pz < 0) throw std::invalid_argument("negative monomial power");
    for (auto &t : terms_) {
        if (t.power == std::array<int, 3>{px, py, pz}) {
            t.coefficient += c;
            return;
        }
    }
    terms_.push_back({{px, py, pz}, c});
}

double Polynomial3::value(const Eigen::Vector3d &r) const {
    double v = 0.0;
    for (const auto &t : terms_)
        v += t.coefficient * ipow(r[0], t.power[0]) * ipow(r[1], t.power[1]) * ipow(r[2], t.power[2]);
    return v;
}

Eigen::Vector3d Polynomial3::gradient(const Eigen::Vector3d &r) const {
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    for (const auto &t : terms_) {
        for (int a = 0; a < 3; ++a) {
            double term = t.coefficient;
            for (int b = 0; b < 3; ++b) term *= dpow(r[b], t.power[b], a == b ? 1 : 0);
            g[a] += term;
        }
    }
    return g;
}

Eigen::Matrix3d Polynomial3::hessian(const Eigen::Vector3d &r) const {
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (const auto &t : terms_) {
        for (int a = 0; a < 3; ++a) {
            for (int b = a; b < 3; ++b) {
                double term = t.coefficient;
                for (int c = 0; c < 3; ++c) term *= dpow(r[c], t.power[c], (a == c) + (b == c));
                h(a, b) += term;
            }
        }
    }
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < a; ++b) h(a, b) = h(b, a);
    return h;
}

int Polynomial3::max_degree() const {
    int d = 0;
    for (const auto &t : terms_)
        if (t.coefficient != 0.0) d = std::max(d, t.degree());
    return d;
}

}  // namespace ioncouple
