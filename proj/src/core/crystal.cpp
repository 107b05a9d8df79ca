#include "crystal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "errors.hpp"
#include "units.hpp"

namespace ioncouple::crystal {

char axis_name(Axis a) { return "xyz"[static_cast<int>(a)]; }

Axis axis_from_char(char c) {
    switch (c) {
        case 'x': case 'X': return Axis::X;
        case 'y': case 'Y': return Axis::Y;
        case 'z': case 'Z': return Axis::Z;
    }
    throw ArgumentError(std::string("unknown axis '") + c + "'");
}

IonSpecies IonSpecies::from_amu(std::string label, double mass_amu, int charge) {
    IonSpecies s{units::amu(mass_amu), charge, std::move(label)};
    s.validate();
    return s;
}

void IonSpecies::validate() const {
    if (!(mass > 0.0) || !std::isfinite(mass)) throw ArgumentError("ion '" + label + "': mass must be positive");
    if (charge < 1) throw ArgumentError("ion '" + label + "': charge must be at least 1");
}

TrapPotential TrapPotential::harmonic(double kx, double ky, double kz) {
    TrapPotential t;
    t.u0.add(2, 0, 0, 0.5 * kx);
    t.u0.add(0, 2, 0, 0.5 * ky);
    t.u0.add(0, 0, 2, 0.5 * kz);
    return t;
}

TrapPotential TrapPotential::from_frequencies(double mass, int charge, double wx, double wy, double wz) {
    const double q = charge * units::elementary_charge;
    return harmonic(mass * wx * wx / q, mass * wy * wy / q, mass * wz * wz / q);
}

double TrapPotential::curvature(Axis a) const {
    return u0.hessian(Eigen::Vector3d::Zero())(static_cast<int>(a), static_cast<int>(a));
}

void TrapPotential::validate() const {
    if (u0.max_degree() > 4)
        throw ConfigError("trap potential terms beyond quartic order are not supported");
    if (!(curvature(Axis::Z) > 0.0)) throw ConfigError("axial harmonic curvature must be positive");
    for (const auto &t : u0.terms())
        if (!std::isfinite(t.coefficient)) throw ConfigError("trap potential coefficient is not finite");
}

PhysicalConstants PhysicalConstants::codata2018() {
    return {units::elementary_charge, units::vacuum_permittivity, units::atomic_mass_unit};
}

double PhysicalConstants::coulomb_e2() const {
    return elementary_charge * elementary_charge / (4.0 * units::pi * vacuum_permittivity);
}

void CrystalConfig::validate() const {
    if (ions.empty()) throw ConfigError("crystal needs at least one ion");
    for (const auto &ion : ions) ion.validate();
    trap.validate();
}

Eigen::VectorXd potential_gradient(const CrystalConfig &config, const std::vector<Eigen::Vector3d> &r) {
    const int n = static_cast<int>(r.size());
    const double e = config.constants.elementary_charge;
    const double k = config.constants.coulomb_e2();
    Eigen::VectorXd g(3 * n);
    for (int i = 0; i < n; ++i) {
        Eigen::Vector3d gi = config.ions[i].charge * e * config.trap.u0.gradient(r[i]);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const Eigen::Vector3d d = r[i] - r[j];
            const double dist = d.norm();
            gi -= k * config.ions[i].charge * config.ions[j].charge * d / (dist * dist * dist);
        }
        g.segment<3>(3 * i) = gi;
    }
    return g;
}

Eigen::MatrixXd potential_hessian(const CrystalConfig &config, const std::vector<Eigen::Vector3d> &r) {
    const int n = static_cast<int>(r.size());
    const double e = config.constants.elementary_charge;
    const double k = config.constants.coulomb_e2();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    for (int i = 0; i < n; ++i) {
        h.block<3, 3>(3 * i, 3 * i) += config.ions[i].charge * e * config.trap.u0.hessian(r[i]);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const Eigen::Vector3d d = r[i] - r[j];
            const double d2 = d.squaredNorm();
            const double d5 = d2 * d2 * std::sqrt(d2);
            const Eigen::Matrix3d t = (3.0 * d * d.transpose() - d2 * Eigen::Matrix3d::Identity()) / d5;
            const double qq = k * config.ions[i].charge * config.ions[j].charge;
            h.block<3, 3>(3 * i, 3 * i) += qq * t;
            h.block<3, 3>(3 * i, 3 * j) -= qq * t;
        }
    }
    return h;
}

double characteristic_length(const CrystalConfig &config) {
    const double kz = config.trap.curvature(Axis::Z);
    return std::cbrt(config.constants.coulomb_e2() / (config.constants.elementary_charge * kz));
}

double force_scale(const CrystalConfig &config, const std::vector<Eigen::Vector3d> &r) {
    double d = characteristic_length(config);
    if (r.size() > 1) {
        d = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < r.size(); ++i)
            for (size_t j = i + 1; j < r.size(); ++j) d = std::min(d, (r[i] - r[j]).norm());
    }
    return config.constants.coulomb_e2() / (d * d);
}

namespace {

std::vector<Eigen::Vector3d> unpack(const Eigen::VectorXd &x) {
    std::vector<Eigen::Vector3d> r(x.size() / 3);
    for (size_t i = 0; i < r.size(); ++i) r[i] = x.segment<3>(3 * i);
    return r;
}

Eigen::VectorXd pack(const std::vector<Eigen::Vector3d> &r) {
    Eigen::VectorXd x(3 * r.size());
    for (size_t i = 0; i < r.size(); ++i) x.segment<3>(3 * i) = r[i];
    return x;
}

bool ordered(const std::vector<Eigen::Vector3d> &r) {
    for (size_t i = 1; i < r.size(); ++i)
        if (!(r[i][2] > r[i - 1][2])) return false;
    return true;
}

double residual(const CrystalConfig &c, const std::vector<Eigen::Vector3d> &r) {
    return potential_gradient(c, r).lpNorm<Eigen::Infinity>() / force_scale(c, r);
}

// Axial force balance of ion i with every other coordinate frozen; strictly
// increasing in z between its neighbours.
double axial_gradient(const CrystalConfig &c, const std::vector<Eigen::Vector3d> &r, size_t i, double z) {
    Eigen::Vector3d p = r[i];
    p[2] = z;
    const double k = c.constants.coulomb_e2();
    double g = c.ions[i].charge * c.constants.elementary_charge * c.trap.u0.gradient(p)[2];
    for (size_t j = 0; j < r.size(); ++j) {
        if (j == i) continue;
        const Eigen::Vector3d d = p - r[j];
        const double dist = d.norm();
        g -= k * c.ions[i].charge * c.ions[j].charge * d[2] / (dist * dist * dist);
    }
    return g;
}

// Gauss-Seidel sweeps of 1D bisection on the string axis. Slow but cannot
// diverge; used only to hand Newton a better starting point.
void axial_relaxation(const CrystalConfig &c, std::vector<Eigen::Vector3d> &r, double scale) {
    const size_t n = r.size();
    for (int sweep = 0; sweep < 5000; ++sweep) {
        double moved = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double lo = i > 0 ? r[i - 1][2] : r[i][2] - scale;
            double hi = i + 1 < n ? r[i + 1][2] : r[i][2] + scale;
            if (i == 0) {
                while (axial_gradient(c, r, i, lo) > 0.0) lo -= scale;
            } else {
                lo += 1e-9 * (hi - lo);
            }
            if (i + 1 == n) {
                while (axial_gradient(c, r, i, hi) < 0.0) hi += scale;
            } else {
                hi -= 1e-9 * (hi - lo);
            }
            for (int it = 0; it < 200 && hi - lo > 1e-16 * scale; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (axial_gradient(c, r, i, mid) > 0.0) hi = mid; else lo = mid;
            }
            const double z = 0.5 * (lo + hi);
            moved = std::max(moved, std::abs(z - r[i][2]));
            r[i][2] = z;
        }
        if (moved < 1e-14 * scale) break;
    }
}

// Returns true on convergence.
bool damped_newton(const CrystalConfig &c, std::vector<Eigen::Vector3d> &r, const SolverOptions &opt) {
    for (int it = 0; it < opt.max_iterations; ++it) {
        const double res = residual(c, r);
        if (res < opt.tolerance) return true;
        const Eigen::VectorXd g = potential_gradient(c, r);
        const Eigen::MatrixXd h = potential_hessian(c, r);
        Eigen::VectorXd step = h.fullPivLu().solve(-g);
        if (!step.allFinite()) return false;
        const Eigen::VectorXd x = pack(r);
        double lambda = 1.0;
        bool accepted = false;
        for (int k = 0; k < 40; ++k, lambda *= 0.5) {
            auto trial = unpack(x + lambda * step);
            if (!ordered(trial)) continue;
            if (residual(c, trial) < res) {
                r = std::move(trial);
                accepted = true;
                break;
            }
        }
        if (!accepted) return residual(c, r) < opt.tolerance;
    }
    return residual(c, r) < opt.tolerance;
}

void check_radial_stability(const CrystalConfig &c, const std::vector<Eigen::Vector3d> &r) {
    const Eigen::MatrixXd h = potential_hessian(c, r);
    const int n = static_cast<int>(r.size());
    for (int a : {0, 1}) {
        Eigen::MatrixXd block(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                block(i, j) = h(3 * i + a, 3 * j + a) / std::sqrt(c.ions[i].mass * c.ions[j].mass);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block, Eigen::EigenvaluesOnly);
        if (es.eigenvalues()[0] <= 0.0) {
            std::ostringstream msg;
            msg << "linear string is unstable along " << "xyz"[a]
                << " (negative radial curvature " << es.eigenvalues()[0] << " s^-2); the crystal would zigzag";
            throw LinearityViolation(msg.str());
        }
    }
}

}  // namespace

std::vector<Eigen::Vector3d> equilibrium_positions(const CrystalConfig &config, const SolverOptions &options) {
    config.validate();
    const size_t n = config.ions.size();
    const double ell = characteristic_length(config);
    // Minimum spacing of an equal-ion string scales as 2.018 N^-0.559 in units of ell.
    const double spacing = n > 1 ? 2.018 * std::pow(static_cast<double>(n), -0.559) * ell : 0.0;
    std::vector<Eigen::Vector3d> r(n, Eigen::Vector3d::Zero());
    for (size_t i = 0; i < n; ++i) r[i][2] = (static_cast<double>(i) - 0.5 * (n - 1)) * spacing;

    bool ok = damped_newton(config, r, options);
    if (!ok) {
        axial_relaxation(config, r, ell);
        ok = damped_newton(config, r, options);
    }
    const double res = residual(config, r);
    if (!ok || !(res < options.tolerance)) {
        std::ostringstream msg;
        msg << "equilibrium search did not converge; relative residual " << res;
        throw SolverFailure(msg.str(), res);
    }
    if (n > 1) check_radial_stability(config, r);
    return r;
}

void fix_signs(Eigen::MatrixXd &v) {
    for (int c = 0; c < v.cols(); ++c) {
        const double mx = v.col(c).cwiseAbs().maxCoeff();
        for (int i = 0; i < v.rows(); ++i) {
            if (std::abs(v(i, c)) >= mx * (1.0 - 1e-9)) {
                if (v(i, c) < 0.0) v.col(c) *= -1.0;
                break;
            }
        }
    }
}

namespace {

// Replaces each degenerate block of eigenvectors by the Gram-Schmidt
// orthonormalised projections of the ion unit vectors onto that block.
void canonicalize_degenerate(const Eigen::VectorXd &lambda, Eigen::MatrixXd &v) {
    const int n = static_cast<int>(lambda.size());
    int start = 0;
    while (start < n) {
        int end = start + 1;
        while (end < n && std::abs(lambda[end] - lambda[end - 1]) < 1e-9 * std::abs(lambda[end])) ++end;
        const int k = end - start;
        if (k > 1) {
            const Eigen::MatrixXd basis = v.middleCols(start, k);
            Eigen::MatrixXd out(n, k);
            int found = 0;
            for (int unit = 0; unit < n && found < k; ++unit) {
                Eigen::VectorXd p = basis * basis.row(unit).transpose();
                for (int j = 0; j < found; ++j) p -= out.col(j).dot(p) * out.col(j);
                const double norm = p.norm();
                if (norm > 1e-8) out.col(found++) = p / norm;
            }
            if (found == k) v.middleCols(start, k) = out;
        }
        start = end;
    }
}

}  // namespace

CrystalSolution normal_modes(const CrystalConfig &config, const std::vector<Eigen::Vector3d> &positions) {
    config.validate();
    if (positions.size() != config.ions.size())
        throw ArgumentError("position count does not match ion count");
    const int n = static_cast<int>(positions.size());
    const Eigen::MatrixXd h = potential_hessian(config, positions);
    Eigen::MatrixXd hm(3 * n, 3 * n);
    for (int i = 0; i < 3 * n; ++i)
        for (int j = 0; j < 3 * n; ++j)
            hm(i, j) = h(i, j) / std::sqrt(config.ions[i / 3].mass * config.ions[j / 3].mass);

    CrystalSolution s;
    s.positions = positions;
    for (const auto &ion : config.ions) {
        s.masses.push_back(ion.mass);
        s.charges.push_back(ion.charge);
    }
    double diag = 0.0, cross = 0.0;
    for (int i = 0; i < 3 * n; ++i) {
        diag = std::max(diag, std::abs(hm(i, i)));
        for (int j = 0; j < 3 * n; ++j)
            if (i % 3 != j % 3) cross = std::max(cross, std::abs(hm(i, j)));
    }
    s.cross_axis_coupling = diag > 0.0 ? cross / diag : 0.0;

    for (int a = 0; a < 3; ++a) {
        Eigen::MatrixXd block(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) block(i, j) = hm(3 * i + a, 3 * j + a);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block);
        if (es.info() != Eigen::Success)
            throw NumericalError(std::string("eigen decomposition failed on axis ") + "xyz"[a]);
        const Eigen::VectorXd lambda = es.eigenvalues();
        if (lambda[0] <= 0.0) {
            std::ostringstream msg;
            msg << "non-positive mode eigenvalue " << lambda[0] << " s^-2 on axis " << "xyz"[a];
            throw InstabilityError(msg.str(), "xyz"[a]);
        }
        Eigen::MatrixXd v = es.eigenvectors();
        canonicalize_degenerate(lambda, v);
        fix_signs(v);
        s.axes[a].frequencies = lambda.cwiseSqrt();
        s.axes[a].participation = v;
    }
    return s;
}

CrystalSolution solve(const CrystalConfig &config, const SolverOptions &options) {
    return normal_modes(config, equilibrium_positions(config, options));
}

double participation(const CrystalSolution &s, int ion, Axis axis, int mode) {
    const auto &m = s.axis(axis).participation;
    if (ion < 0 || ion >= m.rows()) throw ArgumentError("ion index out of range");
    if (mode < 0 || mode >= m.cols()) throw ArgumentError("mode index out of range");
    return m(ion, mode);
}

double frequency(const CrystalSolution &s, Axis axis, int mode) {
    const auto &f = s.axis(axis).frequencies;
    if (mode < 0 || mode >= f.size()) throw ArgumentError("mode index out of range");
    return f[mode];
}

}  // namespace ioncouple::crystal
