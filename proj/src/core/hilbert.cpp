#include "hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "errors.hpp"

namespace ioncouple::hilbert {

namespace {

const cd I1(0.0, 1.0);

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

double factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

// Max column sum and max row sum of a sparse matrix.
double norm1(const Sparse &m) {
    Eigen::VectorXd col = Eigen::VectorXd::Zero(m.cols());
    for (int k = 0; k < m.outerSize(); ++k)
        for (Sparse::InnerIterator it(m, k); it; ++it) col[it.col()] += std::abs(it.value());
    return m.cols() ? col.maxCoeff() : 0.0;
}

double norm_inf(const Sparse &m) {
    double best = 0.0;
    for (int k = 0; k < m.outerSize(); ++k) {
        double row = 0.0;
        for (Sparse::InnerIterator it(m, k); it; ++it) row += std::abs(it.value());
        best = std::max(best, row);
    }
    return best;
}

// Coordinate list used by the integrator's hand-rolled products.
struct Coo {
    std::vector<int> row, col;
    std::vector<cd> val;
};

Coo to_coo(const Sparse &m) {
    Coo c;
    for (int k = 0; k < m.outerSize(); ++k)
        for (Sparse::InnerIterator it(m, k); it; ++it) {
            c.row.push_back(static_cast<int>(it.row()));
            c.col.push_back(static_cast<int>(it.col()));
            c.val.push_back(it.value());
        }
    return c;
}

// out += scale * A x, with the complex arithmetic spelled out so it vectorises.
void add_left(Matrix &out, const Coo &a, const Matrix &x, double scale) {
    const size_t nz = a.val.size();
    const Eigen::Index n = x.rows();
    for (size_t k = 0; k < nz; ++k) {
        const double vr = scale * a.val[k].real(), vi = scale * a.val[k].imag();
        const double *xs = reinterpret_cast<const double *>(x.data()) + 2 * a.col[k];
        double *os = reinterpret_cast<double *>(out.data()) + 2 * a.row[k];
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double xr = xs[2 * c * n], xi = xs[2 * c * n + 1];
            os[2 * c * n] += vr * xr - vi * xi;
            os[2 * c * n + 1] += vr * xi + vi * xr;
        }
    }
}

// out += t A^dagger
void add_right_adjoint(Matrix &out, const Matrix &t, const Coo &a) {
    const Eigen::Index n = t.rows();
    for (size_t k = 0; k < a.val.size(); ++k) {
        const double vr = a.val[k].real(), vi = -a.val[k].imag();
        const double *ts = reinterpret_cast<const double *>(t.data()) + 2 * n * a.col[k];
        double *os = reinterpret_cast<double *>(out.data()) + 2 * n * a.row[k];
        for (Eigen::Index r = 0; r < n; ++r) {
            const double tr = ts[2 * r], ti = ts[2 * r + 1];
            os[2 * r] += vr * tr - vi * ti;
            os[2 * r + 1] += vr * ti + vi * tr;
        }
    }
}

void require_mode(const SpaceLayout &layout, int subsystem) {
    if (subsystem < 0 || subsystem >= layout.size()) throw ArgumentError("subsystem index out of range");
    if (!layout[subsystem].is_mode())
        throw ArgumentError("subsystem '" + layout[subsystem].name + "' is a spin, not a motional mode");
}

// For every full index: level of `subsystem` and compound index of the rest.
void split_indices(const SpaceLayout &layout, int subsystem, std::vector<int> &level, std::vector<int> &rest) {
    const int d = layout.dimension();
    const int stride = layout.stride(subsystem);
    const int dk = layout[subsystem].levels;
    level.resize(d);
    rest.resize(d);
    for (int i = 0; i < d; ++i) {
        const int s = (i / stride) % dk;
        const int hi = i / (stride * dk);
        const int lo = i % stride;
        level[i] = s;
        rest[i] = hi * stride + lo;
    }
}

}  // namespace

SpaceLayout::SpaceLayout(std::vector<Subsystem> subsystems, int cap) : subs_(std::move(subsystems)) {
    if (subs_.empty()) throw ArgumentError("layout needs at least one subsystem");
    long long d = 1;
    for (const auto &s : subs_) {
        if (s.is_mode() && s.levels < 2) throw ArgumentError("mode '" + s.name + "' needs a cutoff of at least 2");
        if (!s.is_mode() && s.levels < 2) throw ArgumentError("spin '" + s.name + "' needs at least 2 levels");
        d *= s.levels;
        if (d > cap) {
            std::ostringstream msg;
            msg << "Hilbert-space dimension exceeds the cap of " << cap;
            throw ConfigError(msg.str());
        }
    }
    dim_ = static_cast<int>(d);
    strides_.assign(subs_.size(), 1);
    for (int i = static_cast<int>(subs_.size()) - 2; i >= 0; --i) strides_[i] = strides_[i + 1] * subs_[i + 1].levels;
}

Subsystem SpaceLayout::mode(std::string name, int cutoff) { return {Subsystem::Kind::Mode, cutoff, std::move(name)}; }
Subsystem SpaceLayout::spin(std::string name, int levels) { return {Subsystem::Kind::Spin, levels, std::move(name)}; }

int SpaceLayout::find(const std::string &name) const {
    for (int i = 0; i < size(); ++i)
        if (subs_[i].name == name) return i;
    throw ArgumentError("layout has no subsystem named '" + name + "'");
}

int SpaceLayout::index(const std::vector<int> &levels) const {
    if (static_cast<int>(levels.size()) != size()) throw ArgumentError("level list does not match layout");
    int idx = 0;
    for (int i = 0; i < size(); ++i) {
        if (levels[i] < 0 || levels[i] >= subs_[i].levels) throw ArgumentError("level out of range");
        idx += levels[i] * strides_[i];
    }
    return idx;
}

std::vector<int> SpaceLayout::levels_of(int index) const {
    std::vector<int> out(size());
    for (int i = 0; i < size(); ++i) out[i] = (index / strides_[i]) % subs_[i].levels;
    return out;
}

Sparse SpaceLayout::embed(const Sparse &local, int subsystem) const {
    const int dk = subs_.at(subsystem).levels;
    if (local.rows() != dk || local.cols() != dk) throw ArgumentError("local operator has the wrong dimension");
    const int right = strides_[subsystem];
    const int left = dim_ / (right * dk);
    std::vector<Eigen::Triplet<cd>> trip;
    trip.reserve(static_cast<size_t>(local.nonZeros()) * left * right);
    for (int l = 0; l < left; ++l)
        for (int k = 0; k < local.outerSize(); ++k)
            for (Sparse::InnerIterator it(local, k); it; ++it)
                for (int r = 0; r < right; ++r)
                    trip.emplace_back((l * dk + it.row()) * right + r, (l * dk + it.col()) * right + r, it.value());
    Sparse out(dim_, dim_);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

JointState JointState::from_pure(const SpaceLayout &layout, const Eigen::VectorXcd &psi) {
    if (psi.size() != layout.dimension()) throw ArgumentError("state vector has the wrong dimension");
    const Eigen::VectorXcd v = psi / psi.norm();
    return {layout, v * v.adjoint()};
}

JointState JointState::basis(const SpaceLayout &layout, const std::vector<int> &levels) {
    Matrix rho = Matrix::Zero(layout.dimension(), layout.dimension());
    const int i = layout.index(levels);
    rho(i, i) = 1.0;
    return {layout, rho};
}

void JointState::validate(double tol) const {
    if (rho.rows() != layout.dimension() || rho.cols() != layout.dimension())
        throw NumericalError("density matrix does not match its layout");
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol) throw NumericalError("density matrix is not Hermitian");
    if (std::abs(trace() - 1.0) > tol) throw NumericalError("density matrix trace deviates from 1");
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol) throw NumericalError("density matrix has a negative eigenvalue");
}

Sparse local_annihilation(int cutoff) {
    Sparse a(cutoff, cutoff);
    std::vector<Eigen::Triplet<cd>> trip;
    for (int n = 1; n < cutoff; ++n) trip.emplace_back(n - 1, n, std::sqrt(static_cast<double>(n)));
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
}

Ladder ladder_operators(const SpaceLayout &layout, int subsystem) {
    require_mode(layout, subsystem);
    const Sparse a = local_annihilation(layout[subsystem].levels);
    Ladder out;
    out.a = layout.embed(a, subsystem);
    out.adag = Sparse(out.a.adjoint());
    out.n = Sparse(out.adag * out.a);
    return out;
}

ModeNoise NoiseModel::at(int subsystem) const {
    if (subsystem >= 0 && subsystem < static_cast<int>(modes.size())) return modes[subsystem];
    return {};
}

void NoiseModel::set_heating(int subsystem, double rate) {
    if (subsystem >= static_cast<int>(modes.size())) modes.resize(subsystem + 1);
    modes[subsystem].heating = rate;
}

void NoiseModel::set_dephasing(int subsystem, double rate) {
    if (subsystem >= static_cast<int>(modes.size())) modes.resize(subsystem + 1);
    modes[subsystem].dephasing = rate;
}

void NoiseModel::validate() const {
    for (const auto &m : modes)
        if (!(m.heating >= 0.0) || !(m.dephasing >= 0.0)) throw ArgumentError("noise rates must be non-negative");
}

bool NoiseModel::silent() const {
    return std::all_of(modes.begin(), modes.end(), [](const ModeNoise &m) { return m.heating == 0 && m.dephasing == 0; });
}

Sparse coupling_hamiltonian_sparse(const SpaceLayout &layout, const CouplingGenerator &gen) {
    require_mode(layout, gen.mode_a);
    require_mode(layout, gen.mode_b);
    if (gen.mode_a == gen.mode_b) throw ArgumentError("coupling needs two distinct modes");
    const Ladder la = ladder_operators(layout, gen.mode_a);
    const Ladder lb = ladder_operators(layout, gen.mode_b);
    const cd e = std::polar(1.0, gen.phase);
    Sparse h = Sparse(gen.g0 * e * (la.a * lb.adag)) + Sparse(gen.g0 * std::conj(e) * (la.adag * lb.a));
    if (gen.detuning != 0.0) h += gen.detuning * lb.n;
    h.prune(cd(0.0, 0.0));
    return h;
}

Matrix coupling_hamiltonian(const SpaceLayout &layout, const CouplingGenerator &gen) {
    return Matrix(coupling_hamiltonian_sparse(layout, gen));
}

JointState evolve(const JointState &state, const CouplingGenerator &gen, const NoiseModel &noise,
                  const coupling::PulseEnvelope &envelope, double duration, const EvolveOptions &options,
                  EvolveReport *report) {
    if (!(duration >= 0.0)) throw ArgumentError("evolution duration must be non-negative");
    noise.validate();
    envelope.validate();
    const SpaceLayout &layout = state.layout;
    const int d = layout.dimension();

    CouplingGenerator coupling_only = gen;
    coupling_only.detuning = 0.0;
    const Sparse hc = coupling_hamiltonian_sparse(layout, coupling_only);
    const Sparse nb = ladder_operators(layout, gen.mode_b).n;

    std::vector<Sparse> jumps, jumps_adj;
    Sparse k(d, d);
    for (int s = 0; s < layout.size(); ++s) {
        if (!layout[s].is_mode()) continue;
        const ModeNoise m = noise.at(s);
        if (m.heating == 0.0 && m.dephasing == 0.0) continue;
        const Ladder l = ladder_operators(layout, s);
        if (m.heating > 0.0) {
            jumps.push_back(std::sqrt(m.heating) * l.a);
            jumps.push_back(std::sqrt(m.heating) * l.adag);
        }
        if (m.dephasing > 0.0) jumps.push_back(std::sqrt(2.0 * m.dephasing) * l.n);
    }
    for (const auto &j : jumps) {
        jumps_adj.emplace_back(j.adjoint());
        k += Sparse(jumps_adj.back() * j);
    }
    const Sparse gc = Sparse(cd(0.0, -1.0) * hc);
    const Sparse g0 = Sparse(cd(0.0, -gen.detuning) * nb) - Sparse(0.5 * k);

    double bound = 2.0 * (norm1(hc) + std::abs(gen.detuning) * norm1(nb)) + norm1(k);
    for (const auto &j : jumps) bound += norm1(j) * norm_inf(j);

    double hmax = 1e-6;
    if (gen.g0 != 0.0) hmax = std::min(hmax, 1.0 / (50.0 * std::abs(gen.g0)));
    if (gen.detuning != 0.0) hmax = std::min(hmax, 1.0 / (50.0 * std::abs(gen.detuning)));
    if (bound > 0.0) hmax = std::min(hmax, options.accuracy / bound);

    const double t_env = envelope.duration();
    const Coo gc_coo = to_coo(gc), g0_coo = to_coo(g0);
    std::vector<Coo> jump_coo;
    for (const auto &j : jumps) jump_coo.push_back(to_coo(j));
    Matrix w(d, d), tl(d, d);
    auto rhs = [&](double t, const Matrix &rho, bool in_pulse, Matrix &out) {
        const double amp = in_pulse ? coupling::envelope_value(envelope, std::min(t, t_env)) : 0.0;
        w.setZero();
        add_left(w, g0_coo, rho, 1.0);
        if (amp != 0.0) add_left(w, gc_coo, rho, amp);
        out = w + w.adjoint();
        for (const auto &j : jump_coo) {
            tl.setZero();
            add_left(tl, j, rho, 1.0);
            add_right_adjoint(out, tl, j);
        }
    };

    // Integrate piecewise so step boundaries land on the envelope kinks.
    std::vector<std::pair<double, double>> segments;
    const double marks[] = {0.0, envelope.ramp, envelope.ramp + envelope.flat, t_env};
    for (int i = 0; i < 3; ++i) {
        const double a = std::min(marks[i], duration), b = std::min(marks[i + 1], duration);
        if (b > a) segments.emplace_back(a, b);
    }
    if (duration > t_env) segments.emplace_back(t_env, duration);

    Matrix rho = state.rho;
    Matrix k1(d, d), k2(d, d), k3(d, d), k4(d, d), probe(d, d);
    long long total_steps = 0;
    double max_step = 0.0;
    for (const auto &[a, b] : segments) {
        const bool in_pulse = a < t_env;
        const double len = b - a;
        const double needed = std::ceil(len / hmax);
        if (needed > static_cast<double>(options.max_steps))
            throw ConfigError("integrator step size underflow: the requested evolution needs more than the allowed number of steps");
        const long long steps = std::max<long long>(1, static_cast<long long>(needed));
        const double h = len / static_cast<double>(steps);
        max_step = std::max(max_step, h);
        for (long long s = 0; s < steps; ++s) {
            const double t = a + h * static_cast<double>(s);
            rhs(t, rho, in_pulse, k1);
            probe = rho + (0.5 * h) * k1;
            rhs(t + 0.5 * h, probe, in_pulse, k2);
            probe = rho + (0.5 * h) * k2;
            rhs(t + 0.5 * h, probe, in_pulse, k3);
            probe = rho + h * k3;
            rhs(t + h, probe, in_pulse, k4);
            rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        total_steps += steps;
    }
    rho = 0.5 * (rho + rho.adjoint()).eval();

    JointState out{layout, rho};
    if (report) {
        report->steps = total_steps;
        report->max_step = max_step;
        for (int s = 0; s < layout.size(); ++s) {
            if (!layout[s].is_mode()) continue;
            const double leak = leakage(out, s);
            report->max_leakage = std::max(report->max_leakage, leak);
            if (leak > options.leakage_warning) {
                std::ostringstream msg;
                msg << "population " << leak << " at the Fock cutoff of mode '" << layout[s].name << "'";
                report->warnings.push_back(msg.str());
            }
        }
    }
    return out;
}

Eigen::MatrixXcd analytic_exchange(int n, int m, double g0, double phase, double t, double detuning) {
    if (detuning != 0.0) throw UnsupportedError("closed-form exchange requires zero detuning");
    if (n < 0 || m < 0) throw ArgumentError("Fock numbers must be non-negative");
    const int total = n + m;
    // Schroedinger-picture images of the creation operators under exp(-iHt).
    const double c = std::cos(g0 * t), s = std::sin(g0 * t);
    const cd sa = -I1 * std::polar(1.0, phase) * s;   // a+ -> c a+ + sa b+
    const cd sb = -I1 * std::polar(1.0, -phase) * s;  // b+ -> c b+ + sb a+
    Eigen::MatrixXcd amp = Eigen::MatrixXcd::Zero(total + 1, total + 1);
    const double norm = 1.0 / std::sqrt(factorial(n) * factorial(m));
    for (int j = 0; j <= n; ++j) {
        for (int k = 0; k <= m; ++k) {
            const int p = n - j + k, q = j + m - k;
            const cd coef = binomial(n, j) * binomial(m, k) * std::pow(c, n - j) * std::pow(sa, j) *
                            std::pow(c, m - k) * std::pow(sb, k);
            amp(p, q) += coef * norm * std::sqrt(factorial(p) * factorial(q));
        }
    }
    return amp;
}

double fidelity(const Matrix &rho, const Matrix &sigma) {
    if (rho.rows() != sigma.rows() || rho.cols() != sigma.cols())
        throw ArgumentError("fidelity needs states of equal dimension");
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
    const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Matrix sq = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().adjoint();
    const Matrix inner = sq * sigma * sq;
    Eigen::SelfAdjointEigenSolver<Matrix> es2(0.5 * (inner + inner.adjoint()), Eigen::EigenvaluesOnly);
    const double tr = es2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    return std::clamp(tr * tr, 0.0, 1.0);
}

double fidelity(const JointState &rho, const JointState &sigma) {
    if (!(rho.layout == sigma.layout)) throw ArgumentError("fidelity needs states on the same layout");
    return fidelity(rho.rho, sigma.rho);
}

Eigen::VectorXd thermal_distribution(int cutoff, double nbar) {
    if (!(nbar >= 0.0) || !std::isfinite(nbar)) throw ArgumentError("mean occupation must be non-negative");
    Eigen::VectorXd p = Eigen::VectorXd::Zero(cutoff);
    const double q = nbar / (1.0 + nbar);
    double w = 1.0;
    for (int n = 0; n < cutoff; ++n, w *= q) p[n] = w;
    return p / p.sum();
}

JointState product_state(const SpaceLayout &layout, const std::vector<Matrix> &locals) {
    if (static_cast<int>(locals.size()) != layout.size()) throw ArgumentError("need one local state per subsystem");
    Matrix rho = Matrix::Ones(1, 1);
    for (int i = 0; i < layout.size(); ++i) {
        const Matrix &l = locals[i];
        if (l.rows() != layout[i].levels || l.cols() != layout[i].levels)
            throw ArgumentError("local state has the wrong dimension");
        Matrix next(rho.rows() * l.rows(), rho.cols() * l.cols());
        for (int r = 0; r < rho.rows(); ++r)
            for (int c = 0; c < rho.cols(); ++c)
                next.block(r * l.rows(), c * l.cols(), l.rows(), l.cols()) = rho(r, c) * l;
        rho = std::move(next);
    }
    return {layout, rho};
}

JointState thermal_state(const SpaceLayout &layout, int mode, double nbar) {
    require_mode(layout, mode);
    std::vector<Matrix> locals;
    for (int i = 0; i < layout.size(); ++i) {
        Matrix l = Matrix::Zero(layout[i].levels, layout[i].levels);
        if (i == mode) l.diagonal() = thermal_distribution(layout[i].levels, nbar).cast<cd>();
        else l(0, 0) = 1.0;
        locals.push_back(l);
    }
    return product_state(layout, locals);
}

Eigen::VectorXd populations(const JointState &state) { return state.rho.diagonal().real(); }

Matrix reduced_density(const JointState &state, int subsystem) {
    if (subsystem < 0 || subsystem >= state.layout.size()) throw ArgumentError("subsystem index out of range");
    std::vector<int> level, rest;
    split_indices(state.layout, subsystem, level, rest);
    const int dk = state.layout[subsystem].levels;
    Matrix out = Matrix::Zero(dk, dk);
    const int d = state.layout.dimension();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (rest[i] == rest[j]) out(level[i], level[j]) += state.rho(i, j);
    return out;
}

Eigen::VectorXd marginal_populations(const JointState &state, int subsystem) {
    if (subsystem < 0 || subsystem >= state.layout.size()) throw ArgumentError("subsystem index out of range");
    const int stride = state.layout.stride(subsystem);
    const int dk = state.layout[subsystem].levels;
    Eigen::VectorXd p = Eigen::VectorXd::Zero(dk);
    for (int i = 0; i < state.layout.dimension(); ++i) p[(i / stride) % dk] += state.rho(i, i).real();
    return p;
}

double mean_occupation(const JointState &state, int mode) {
    require_mode(state.layout, mode);
    const Eigen::VectorXd p = marginal_populations(state, mode);
    double n = 0.0;
    for (int i = 0; i < p.size(); ++i) n += i * p[i];
    return n;
}

double leakage(const JointState &state, int mode) {
    require_mode(state.layout, mode);
    const Eigen::VectorXd p = marginal_populations(state, mode);
    return p[p.size() - 1];
}

JointState replace_subsystem(const JointState &state, int subsystem, const Matrix &tau) {
    const int dk = state.layout[subsystem].levels;
    if (tau.rows() != dk || tau.cols() != dk) throw ArgumentError("replacement state has the wrong dimension");
    std::vector<int> level, rest;
    split_indices(state.layout, subsystem, level, rest);
    const int d = state.layout.dimension();
    const int dr = d / dk;
    Matrix r = Matrix::Zero(dr, dr);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (level[i] == level[j]) r(rest[i], rest[j]) += state.rho(i, j);
    Matrix out(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out(i, j) = tau(level[i], level[j]) * r(rest[i], rest[j]);
    return {state.layout, out};
}

JointState apply_unitary(const JointState &state, const Matrix &u) {
    return {state.layout, u * state.rho * u.adjoint()};
}

JointState apply_kraus(const JointState &state, const std::vector<Matrix> &kraus) {
    Matrix out = Matrix::Zero(state.rho.rows(), state.rho.cols());
    for (const auto &k : kraus) out += k * state.rho * k.adjoint();
    return {state.layout, out};
}

Matrix embed_pair(const SpaceLayout &layout, const Matrix &local, int first, int second) {
    const int d1 = layout[first].levels, d2 = layout[second].levels;
    if (local.rows() != d1 * d2 || local.cols() != d1 * d2) throw ArgumentError("pair operator has the wrong dimension");
    if (first == second) throw ArgumentError("pair operator needs two distinct subsystems");
    const int d = layout.dimension();
    const int s1 = layout.stride(first), s2 = layout.stride(second);
    Matrix out = Matrix::Zero(d, d);
    for (int col = 0; col < d; ++col) {
        const int l1 = (col / s1) % d1, l2 = (col / s2) % d2;
        const int base = col - l1 * s1 - l2 * s2;
        const int lc = l1 * d2 + l2;
        for (int r1 = 0; r1 < d1; ++r1)
            for (int r2 = 0; r2 < d2; ++r2) {
                const cd v = local(r1 * d2 + r2, lc);
                if (v != cd(0.0, 0.0)) out(base + r1 * s1 + r2 * s2, col) = v;
            }
    }
    return out;
}

}  // namespace ioncouple::hilbert
