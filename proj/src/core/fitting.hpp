#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "errors.hpp"

namespace ioncouple::fitting {

// lineshape: A Omega0 sin^2(Omega T/2) / Omega^2 + P0, Omega = sqrt(Omega0^2 + (w - w0)^2)
// exchange:  A sin(OmegaC t + phi_c) exp(-gamma t) + y0, gamma = 1/tau_c >= 0
// fringe:    B sin(phi + phi_f) + y0
// decay:     (1 - epsilon)^M
enum class Model { Lineshape, Exchange, Fringe, Decay };

std::string model_name(Model m);
Model model_from_name(const std::string &name);
std::vector<std::string> parameter_names(Model m);

struct Series {
    std::vector<double> x;
    std::vector<double> y;
};

struct FitOptions {
    double pulse_duration = 0.0;  // T of the lineshape model, s
    int max_iterations = 500;
    double step_tolerance = 1e-8;
};

struct FitResult {
    Model model = Model::Fringe;
    std::vector<std::string> names;
    Eigen::VectorXd params;
    Eigen::VectorXd errors;  // 1 sigma from the residual-scaled covariance
    double residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<std::string> flags;
    // tau_c for exchange (infinite when gamma vanishes), contrast B/y0 for fringe.
    std::map<std::string, double> derived;
    std::map<std::string, double> derived_errors;

    double value(const std::string &name) const;
    double error(const std::string &name) const;
    bool flagged(const std::string &flag) const;
};

class FitFailure : public NumericalError {
  public:
    FitFailure(const std::string &what, FitResult best) : NumericalError(what), best_(std::move(best)) {}
    const FitResult &best() const { return best_; }

  private:
    FitResult best_;
};

double evaluate(Model m, const Eigen::VectorXd &params, double x, const FitOptions &options = {});

// Coarse grid seed followed by Levenberg-Marquardt refinement.
FitResult fit(const Series &data, Model m, const FitOptions &options = {});

}  // namespace ioncouple::fitting
