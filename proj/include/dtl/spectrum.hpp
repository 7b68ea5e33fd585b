#pragma once

#include <array>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace dtl {

// (n0 + n1 z + n2 z^2 + n3 z^3) / (c0 + c1 z)^power, power in {0, 1, 2}.
struct Rational {
    std::array<double, 4> num{0, 0, 0, 0};
    double c0 = 1.0;
    double c1 = 0.0;
    int power = 0;

    double operator()(double z) const;
    static Rational monomial(int degree, double coef = 1.0);
};

struct Density {
    std::vector<double> grid;    // strictly increasing
    std::vector<double> values;  // non-negative, piecewise linear between grid points
};

class SpectralMeasure {
public:
    SpectralMeasure() = default;
    SpectralMeasure(std::vector<std::pair<double, double>> atoms, std::optional<Density> density = std::nullopt);

    static SpectralMeasure delta(double location = 1.0);

    const std::vector<std::pair<double, double>>& atoms() const { return atoms_; }
    const std::optional<Density>& density() const { return density_; }

    double support_min() const;
    double support_max() const;
    double moment(int k) const;  // integral of z^k
    bool is_delta_one() const;

    double integrate(const Rational& f) const;
    // f must be smooth on the support; no pole checks.
    double integrate(const std::function<double(double)>& f) const;

private:
    void validate() const;

    std::vector<std::pair<double, double>> atoms_{{1.0, 1.0}};
    std::optional<Density> density_;
};

// Limiting spectrum of F F^T / d for F in R^{k x d} with N(0, variance) entries and gamma = k / d:
// an atom of mass max(0, 1 - 1/gamma) at zero plus a density on
// [variance (sqrt(gamma) - 1)^2, variance (sqrt(gamma) + 1)^2].
struct MarchenkoPastur {
    double gamma = 1.0;
    double variance = 1.0;

    double lower_edge() const;
    double upper_edge() const;
    double atom_mass() const;
    double density(double s) const;
};

struct StieltjesValue {
    double g;        // integral of 1 / (s - z)
    double g_prime;  // integral of 1 / (s - z)^2
    double h;        // integral of s / (s - z) = 1 + z g
    double h_prime;  // integral of s / (s - z)^2
    double k;        // integral of s^2 / (s - z)^2
};

// Transforms of the law at z below the support; h, h_prime and k avoid the
// cancellation of the forms written through g when |z| is large.
StieltjesValue mp_stieltjes(const MarchenkoPastur& mp, double z);

}  // namespace dtl
