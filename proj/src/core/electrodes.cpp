#include "electrodes.hpp"

#include <cmath>
#include <cstdio>

#include "errors.hpp"

namespace ioncouple::electrodes {

namespace {

const char axis_char[3] = {'x', 'y', 'z'};

void check_axis(int a, const std::string &what) {
    if (a < 0 || a > 2) throw ArgumentError(what + ": axis index must be 0, 1 or 2");
}

void check_term(const Term &t, int ions, const char *kind) {
    if (t.ion < 0 || t.ion >= ions) throw ArgumentError(std::string(kind) + " term " + t.label() + " refers to a missing ion");
    check_axis(t.i, t.label());
    if (t.quantity == Quantity::Curvature) check_axis(t.j, t.label());
    if (!std::isfinite(t.value)) throw ArgumentError(std::string(kind) + " term " + t.label() + " has a non-finite value");
    if (!(t.weight >= 0.0) || !std::isfinite(t.weight))
        throw ArgumentError(std::string(kind) + " term " + t.label() + " needs a finite non-negative weight");
}

struct Svd {
    Eigen::MatrixXd u, v;
    Eigen::VectorXd s;
    int rank = 0;
    double condition = 0.0;
};

Svd decompose(const Eigen::MatrixXd &a, double rel_tol, bool full_v) {
    Svd out;
    if (a.rows() == 0 || a.cols() == 0) {
        out.v = Eigen::MatrixXd::Identity(a.cols(), a.cols());
        out.u = Eigen::MatrixXd::Zero(a.rows(), 0);
        return out;
    }
    const unsigned flags = full_v ? (Eigen::ComputeThinU | Eigen::ComputeFullV) : (Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, flags);
    out.u = svd.matrixU();
    out.v = svd.matrixV();
    out.s = svd.singularValues();
    const double smax = out.s.size() ? out.s[0] : 0.0;
    for (int k = 0; k < out.s.size(); ++k)
        if (smax > 0.0 && out.s[k] > rel_tol * smax) ++out.rank;
    if (out.rank > 0) out.condition = smax / out.s[out.rank - 1];
    return out;
}

// Minimum-norm least-squares solution using the leading `rank` singular triplets.
Eigen::VectorXd pinv_solve(const Svd &d, const Eigen::VectorXd &b, Eigen::Index cols) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(cols);
    for (int k = 0; k < d.rank; ++k) x += d.v.col(k) * (d.u.col(k).dot(b) / d.s[k]);
    return x;
}

struct Split {
    std::vector<Term> hard, soft;
};

Split split_terms(const TargetSpec &t, const SolveOptions &o) {
    Split s;
    (o.hard_desired ? s.hard : s.soft) = t.desired;
    s.soft.insert(s.soft.end(), t.nulls.begin(), t.nulls.end());
    return s;
}

Eigen::VectorXd values(const std::vector<Term> &terms) {
    Eigen::VectorXd v(terms.size());
    for (size_t k = 0; k < terms.size(); ++k) v[k] = terms[k].value;
    return v;
}

Eigen::VectorXd sqrt_weights(const std::vector<Term> &terms) {
    Eigen::VectorXd w(terms.size());
    for (size_t k = 0; k < terms.size(); ++k) w[k] = std::sqrt(terms[k].weight);
    return w;
}

}  // namespace

std::string Term::label() const {
    std::string s;
    if (quantity == Quantity::Gradient) {
        s = "dU/d";
        s += (i >= 0 && i < 3) ? axis_char[i] : '?';
    } else {
        const char a = (i >= 0 && i < 3) ? axis_char[i] : '?';
        const char b = (j >= 0 && j < 3) ? axis_char[j] : '?';
        s = "d2U/";
        if (i == j) {
            s += 'd';
            s += a;
            s += '2';
        } else {
            s += 'd';
            s += a;
            s += 'd';
            s += b;
        }
    }
    return s + "@" + std::to_string(ion);
}

void ElectrodeBasis::validate() const {
    if (fields.empty()) throw ArgumentError("electrode basis is empty");
    if (!names.empty() && names.size() != fields.size())
        throw ArgumentError("electrode basis has " + std::to_string(names.size()) + " names for " +
                            std::to_string(fields.size()) + " electrodes");
    const size_t n = fields.front().size();
    if (n == 0) throw ArgumentError("electrode basis has no ion positions");
    for (size_t e = 0; e < fields.size(); ++e) {
        if (fields[e].size() != n) throw ArgumentError("electrode " + std::to_string(e) + " has an inconsistent ion count");
        for (const auto &f : fields[e]) {
            if (!f.gradient.allFinite() || !f.curvature.allFinite())
                throw ArgumentError("electrode " + std::to_string(e) + " has non-finite field entries");
            if ((f.curvature - f.curvature.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + f.curvature.cwiseAbs().maxCoeff()))
                throw ArgumentError("electrode " + std::to_string(e) + " curvature is not symmetric");
        }
    }
}

void TargetSpec::validate(int ions) const {
    if (desired.empty()) throw ArgumentError("target needs at least one desired value");
    for (const auto &t : desired) check_term(t, ions, "desired");
    for (const auto &t : nulls) check_term(t, ions, "null");
}

Eigen::RowVectorXd design_row(const ElectrodeBasis &basis, const Term &term) {
    Eigen::RowVectorXd row(basis.electrodes());
    for (int e = 0; e < basis.electrodes(); ++e) {
        const auto &f = basis.fields[e].at(term.ion);
        row[e] = term.quantity == Quantity::Gradient ? f.gradient[term.i] : f.curvature(term.i, term.j);
    }
    return row;
}

Eigen::MatrixXd design_matrix(const ElectrodeBasis &basis, const std::vector<Term> &terms) {
    Eigen::MatrixXd a(terms.size(), basis.electrodes());
    for (size_t k = 0; k < terms.size(); ++k) a.row(k) = design_row(basis, terms[k]);
    return a;
}

VoltageSolution solve_amplitudes(const ElectrodeBasis &basis, const TargetSpec &target, const SolveOptions &options) {
    basis.validate();
    target.validate(basis.ions());
    if (!(options.rank_tolerance > 0.0) || !(options.feasibility_tolerance > 0.0))
        throw ArgumentError("solver tolerances must be positive");

    const auto split = split_terms(target, options);
    const Eigen::Index m = basis.electrodes();
    const Eigen::MatrixXd ah = design_matrix(basis, split.hard);
    const Eigen::VectorXd th = values(split.hard);
    const Eigen::VectorXd w = sqrt_weights(split.soft);
    const Eigen::MatrixXd as = w.asDiagonal() * design_matrix(basis, split.soft);
    const Eigen::VectorXd ts = w.asDiagonal() * values(split.soft);

    VoltageSolution sol;
    const Svd hd = decompose(ah, options.rank_tolerance, true);
    sol.hard_rank = hd.rank;
    sol.hard_condition = hd.condition;
    const Eigen::VectorXd vp = pinv_solve(hd, th, m);
    if (ah.rows() > 0) {
        sol.hard_residual = (ah * vp - th).norm();
        const double scale = std::max(1.0, th.norm());
        if (sol.hard_residual > options.feasibility_tolerance * scale) {
            sol.feasible = false;
            char buf[160];
            std::snprintf(buf, sizeof buf, "desired values are not reachable; closest achievable leaves residual %.6g",
                          sol.hard_residual);
            sol.warnings.emplace_back(buf);
        }
    }

    // Columns of V beyond the hard rank span null(A_h).
    const Eigen::MatrixXd n = hd.v.rightCols(m - hd.rank);
    Eigen::VectorXd v = vp;
    int reduced_rank = 0;
    if (n.cols() > 0 && as.rows() > 0) {
        const Eigen::MatrixXd reduced = as * n;
        const Svd rd = decompose(reduced, options.rank_tolerance, false);
        reduced_rank = rd.rank;
        sol.reduced_condition = rd.condition;
        v += n * pinv_solve(rd, ts - as * vp, n.cols());
    }
    sol.rank = hd.rank + reduced_rank;
    if (sol.rank < m) {
        sol.rank_deficient = true;
        sol.warnings.push_back("design has rank " + std::to_string(sol.rank) + " for " + std::to_string(m) +
                               " electrodes; minimum-norm amplitudes returned");
    }

    sol.amplitudes = v;
    std::vector<Term> all = target.desired;
    all.insert(all.end(), target.nulls.begin(), target.nulls.end());
    const auto report = evaluate_solution(basis, v, target, options);
    sol.achieved.resize(all.size());
    for (size_t k = 0; k < all.size(); ++k) sol.achieved[k] = report.terms[k].achieved;
    sol.target = values(all);
    sol.residual = sol.achieved - sol.target;
    sol.objective = report.objective;
    return sol;
}

ResidualReport evaluate_solution(const ElectrodeBasis &basis, const Eigen::VectorXd &amplitudes, const TargetSpec &target,
                                 const SolveOptions &options) {
    if (amplitudes.size() != basis.electrodes())
        throw ArgumentError("amplitude vector has " + std::to_string(amplitudes.size()) + " entries for " +
                            std::to_string(basis.electrodes()) + " electrodes");
    ResidualReport r;
    auto add = [&](const Term &t, bool hard) {
        TermReport e;
        e.label = t.label();
        e.achieved = design_row(basis, t).dot(amplitudes);
        e.desired = t.value;
        e.weight = t.weight;
        e.hard = hard;
        const double d = e.achieved - e.desired;
        if (hard)
            r.max_hard_error = std::max(r.max_hard_error, std::abs(d));
        else
            r.objective += t.weight * d * d;
        r.terms.push_back(e);
    };
    for (const auto &t : target.desired) add(t, options.hard_desired);
    for (size_t k = 0; k < target.nulls.size(); ++k) {
        add(target.nulls[k], false);
        const double leak = std::abs(r.terms.back().achieved - r.terms.back().desired);
        if (r.worst_null < 0 || leak > r.worst_null_leakage) {
            r.worst_null_leakage = leak;
            r.worst_null = static_cast<int>(k);
        }
    }
    return r;
}

double objective(const ElectrodeBasis &basis, const Eigen::VectorXd &amplitudes, const TargetSpec &target,
                 const SolveOptions &options) {
    return evaluate_solution(basis, amplitudes, target, options).objective;
}

ElectrodeBasis synthetic_basis(const std::vector<double> &ion_z) {
    if (ion_z.empty()) throw ArgumentError("synthetic basis needs at least one ion");
    ElectrodeBasis b;
    const double row_x[2] = {2.5, -2.5};
    const double row_y = 4.0;
    const double pitch = 3.0;
    for (int r = 0; r < 2; ++r) {
        for (int k = 0; k < 6; ++k) {
            const Eigen::Vector3d at(row_x[r], row_y, pitch * (k - 2.5));
            b.names.push_back(std::string(r == 0 ? "L" : "R") + std::to_string(k + 1));
            std::vector<FieldRecord> f;
            for (double z : ion_z) {
                // Unit point source: U = 1 / |r - at|.
                const Eigen::Vector3d d = Eigen::Vector3d(0.0, 0.0, z) - at;
                const double r2 = d.squaredNorm();
                const double rn = std::sqrt(r2);
                FieldRecord rec;
                rec.gradient = -d / (r2 * rn);
                rec.curvature = (3.0 * d * d.transpose() - r2 * Eigen::Matrix3d::Identity()) / (r2 * r2 * rn);
                f.push_back(rec);
            }
            b.fields.push_back(std::move(f));
        }
    }
    return b;
}

TargetSpec synthetic_target(double alpha, int ions) {
    if (ions < 2) throw ArgumentError("synthetic target needs at least two ions");
    TargetSpec t;
    for (int n = 0; n < ions; ++n) {
        const double profile = -1.0 + 2.0 * n / (ions - 1);
        t.desired.push_back({n, Quantity::Curvature, 2, 2, alpha * profile, 1.0});
        for (int a = 0; a < 3; ++a) t.nulls.push_back({n, Quantity::Gradient, a, a, 0.0, 1.0});
        t.nulls.push_back({n, Quantity::Curvature, 0, 2, 0.0, 1.0});
        t.nulls.push_back({n, Quantity::Curvature, 1, 2, 0.0, 1.0});
    }
    return t;
}

}  // namespace ioncouple::electrodes
