#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace ioncouple::electrodes {

// Field of one electrode at one ion, per unit drive amplitude.
struct FieldRecord {
    Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
    Eigen::Matrix3d curvature = Eigen::Matrix3d::Zero();  // symmetric
};

struct ElectrodeBasis {
    std::vector<std::string> names;
    std::vector<std::vector<FieldRecord>> fields;  // [electrode][ion]

    int electrodes() const { return static_cast<int>(fields.size()); }
    int ions() const { return fields.empty() ? 0 : static_cast<int>(fields.front().size()); }
    void validate() const;
};

enum class Quantity { Gradient, Curvature };

// One scalar derivative of U at one ion. Gradients use axis `i` only.
struct Term {
    int ion = 0;
    Quantity quantity = Quantity::Curvature;
    int i = 2;
    int j = 2;
    double value = 0.0;
    double weight = 1.0;

    std::string label() const;  // e.g. "d2U/dxdz@1"
};

struct TargetSpec {
    std::vector<Term> desired;
    std::vector<Term> nulls;  // value is normally 0

    void validate(int ions) const;
};

struct SolveOptions {
    bool hard_desired = true;
    double rank_tolerance = 1e-12;  // relative to the largest singular value
    double feasibility_tolerance = 1e-9;  // relative to max(1, |t_hard|)
};

struct VoltageSolution {
    Eigen::VectorXd amplitudes;
    Eigen::VectorXd achieved;  // desired terms first, then nulls
    Eigen::VectorXd target;
    Eigen::VectorXd residual;  // achieved - target
    double objective = 0.0;    // weighted sum over the soft terms
    bool feasible = true;
    double hard_residual = 0.0;
    int hard_rank = 0;
    int rank = 0;  // of the whole design, hard plus reduced soft block
    bool rank_deficient = false;
    double hard_condition = 0.0;
    double reduced_condition = 0.0;
    std::vector<std::string> warnings;
};

// Row of the design matrix: the term evaluated for every electrode.
Eigen::RowVectorXd design_row(const ElectrodeBasis &basis, const Term &term);
Eigen::MatrixXd design_matrix(const ElectrodeBasis &basis, const std::vector<Term> &terms);

// Least squares with the desired values as equality constraints (null-space
// elimination) and weighted soft nulls; minimum-norm amplitudes among minimisers.
VoltageSolution solve_amplitudes(const ElectrodeBasis &basis, const TargetSpec &target, const SolveOptions &options = {});

struct TermReport {
    std::string label;
    double achieved = 0.0;
    double desired = 0.0;
    double weight = 0.0;
    bool hard = false;
};

struct ResidualReport {
    std::vector<TermReport> terms;
    double objective = 0.0;
    double worst_null_leakage = 0.0;
    int worst_null = -1;  // index into TargetSpec::nulls
    double max_hard_error = 0.0;
};

ResidualReport evaluate_solution(const ElectrodeBasis &basis, const Eigen::VectorXd &amplitudes, const TargetSpec &target,
                                 const SolveOptions &options = {});
double objective(const ElectrodeBasis &basis, const Eigen::VectorXd &amplitudes, const TargetSpec &target,
                 const SolveOptions &options = {});

// Twelve point-source electrodes in two rows of six beside the trap axis,
// lengths in units of 10 um.
ElectrodeBasis synthetic_basis(const std::vector<double> &ion_z = {-0.5, 0.0, 0.5});
// d2U/dz2 = alpha * (-1, 0, 1) over three ions, nulling the gradient and the
// x-z and y-z curvatures at every ion.
TargetSpec synthetic_target(double alpha = 2e-3, int ions = 3);

}  // namespace ioncouple::electrodes
