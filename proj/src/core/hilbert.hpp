#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <complex>
#include <string>
#include <vector>

#include "coupling.hpp"

namespace ioncouple::hilbert {

using cd = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Sparse = Eigen::SparseMatrix<cd, Eigen::RowMajor>;

struct Subsystem {
    enum class Kind { Mode, Spin };
    Kind kind = Kind::Mode;
    int levels = 2;  // Fock cutoff (number of levels) for modes
    std::string name;

    bool is_mode() const { return kind == Kind::Mode; }
    bool operator==(const Subsystem &) const = default;
};

// Tensor-product layout; the first subsystem is the most significant index.
class SpaceLayout {
  public:
    static constexpr int default_cap = 4096;

    SpaceLayout() = default;
    explicit SpaceLayout(std::vector<Subsystem> subsystems, int cap = default_cap);

    static Subsystem mode(std::string name, int cutoff);
    static Subsystem spin(std::string name, int levels = 2);

    int dimension() const { return dim_; }
    int size() const { return static_cast<int>(subs_.size()); }
    const Subsystem &operator[](int i) const { return subs_.at(i); }
    const std::vector<Subsystem> &subsystems() const { return subs_; }
    int find(const std::string &name) const;

    int index(const std::vector<int> &levels) const;
    std::vector<int> levels_of(int index) const;
    int stride(int subsystem) const { return strides_.at(subsystem); }

    // Lifts an operator on one subsystem to the full space.
    Sparse embed(const Sparse &local, int subsystem) const;

    bool operator==(const SpaceLayout &o) const { return subs_ == o.subs_; }

  private:
    std::vector<Subsystem> subs_;
    std::vector<int> strides_;
    int dim_ = 1;
};

struct JointState {
    SpaceLayout layout;
    Matrix rho;

    static JointState from_pure(const SpaceLayout &layout, const Eigen::VectorXcd &psi);
    static JointState basis(const SpaceLayout &layout, const std::vector<int> &levels);

    double trace() const { return rho.trace().real(); }
    // Throws NumericalError when Hermiticity, trace or positivity is violated.
    void validate(double tol = 1e-9) const;
};

struct Ladder {
    Sparse a, adag, n;
};

Ladder ladder_operators(const SpaceLayout &layout, int subsystem);
Sparse local_annihilation(int cutoff);

struct ModeNoise {
    double heating = 0.0;    // quanta / s
    double dephasing = 0.0;  // 1/s, decay rate of rho_{n,n+1}
    bool operator==(const ModeNoise &) const = default;
};

// Indexed by subsystem; entries for spins are ignored.
struct NoiseModel {
    std::vector<ModeNoise> modes;

    static NoiseModel none() { return {}; }
    ModeNoise at(int subsystem) const;
    void set_heating(int subsystem, double rate);
    void set_dephasing(int subsystem, double rate);
    void validate() const;
    bool silent() const;
};

struct CouplingGenerator {
    double g0 = 0.0;        // rad/s
    double phase = 0.0;     // rad
    double detuning = 0.0;  // rad/s, folded onto mode b
    int mode_a = 0;         // subsystem indices
    int mode_b = 1;
};

Matrix coupling_hamiltonian(const SpaceLayout &layout, const CouplingGenerator &gen);
Sparse coupling_hamiltonian_sparse(const SpaceLayout &layout, const CouplingGenerator &gen);

struct EvolveOptions {
    // Step is further limited so that (generator norm bound) x step stays below this.
    double accuracy = 0.02;
    long long max_steps = 50'000'000;
    double leakage_warning = 1e-4;
};

struct EvolveReport {
    long long steps = 0;
    double max_step = 0.0;
    double max_leakage = 0.0;
    std::vector<std::string> warnings;
};

// Integrates the master equation for `duration` seconds with g(t) = A(t) g0.
JointState evolve(const JointState &state, const CouplingGenerator &gen, const NoiseModel &noise,
                  const coupling::PulseEnvelope &envelope, double duration, const EvolveOptions &options = {},
                  EvolveReport *report = nullptr);

// Pure-state closed form for an initial product |n>_a |m>_b. Entry (p, q) of
// the returned matrix is the amplitude of |p>_a |q>_b; p + q = n + m.
Eigen::MatrixXcd analytic_exchange(int n, int m, double g0, double phase, double t, double detuning = 0.0);

double fidelity(const JointState &rho, const JointState &sigma);
double fidelity(const Matrix &rho, const Matrix &sigma);

Eigen::VectorXd thermal_distribution(int cutoff, double nbar);
JointState thermal_state(const SpaceLayout &layout, int mode, double nbar);

// Density matrix of independent subsystems, one local matrix per subsystem.
JointState product_state(const SpaceLayout &layout, const std::vector<Matrix> &locals);

Eigen::VectorXd populations(const JointState &state);
Eigen::VectorXd marginal_populations(const JointState &state, int subsystem);
Matrix reduced_density(const JointState &state, int subsystem);
double mean_occupation(const JointState &state, int mode);
double leakage(const JointState &state, int mode);

// rho -> tau (x) Tr_subsystem(rho), with tau placed back into the same slot.
JointState replace_subsystem(const JointState &state, int subsystem, const Matrix &tau);
JointState apply_unitary(const JointState &state, const Matrix &u);
JointState apply_kraus(const JointState &state, const std::vector<Matrix> &kraus);
// Lifts a local matrix acting jointly on two subsystems (first index major).
Matrix embed_pair(const SpaceLayout &layout, const Matrix &local, int first, int second);

}  // namespace ioncouple::hilbert
