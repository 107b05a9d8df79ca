#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

namespace ioncouple {

// Sparse polynomial in (x, y, z). Used for the static trap potential and the
// spatial part of the coupling drive, both in volts with lengths in meters.
struct Monomial {
    std::array<int, 3> power{0, 0, 0};
    double coefficient = 0.0;
    int degree() const { return power[0] + power[1] + power[2]; }
};

class Polynomial3 {
  public:
    Polynomial3() = default;
    explicit Polynomial3(std::vector<Monomial> terms);

    void add(int px, int py, int pz, double c);

    double value(const Eigen::Vector3d &r) const;
    Eigen::Vector3d gradient(const Eigen::Vector3d &r) const;
    Eigen::Matrix3d hessian(const Eigen::Vector3d &r) const;

    int max_degree() const;
    const std::vector<Monomial> &terms() const { return terms_; }
    bool operator==(const Polynomial3 &) const = default;

  private:
    std::vector<Monomial> terms_;
};

}  // namespace ioncouple
