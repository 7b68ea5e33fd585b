#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dtl {

enum class ActivationTag { TanhScale, ErfScale, Sign, ShiftedRelu, Identity, Tabulated };

class TabulatedCurve;

struct Activation {
    ActivationTag tag = ActivationTag::Identity;
    double scale = 1.0;  // TanhScale / ErfScale slope
    std::shared_ptr<const TabulatedCurve> table;

    static Activation tanh_scale(double a);
    static Activation erf_scale(double a);
    static Activation sign();
    static Activation shifted_relu();
    static Activation identity();
    // Monotone piecewise-cubic interpolation through (x, sigma(x)) pairs.
    static Activation tabulated(std::vector<std::pair<double, double>> nodes);

    bool is_odd() const;
    std::string name() const;
    // Sorted nodes of a Tabulated activation, empty otherwise.
    std::vector<std::pair<double, double>> nodes() const;
};

enum class MomentWeight { Plain, TimesZ, Square };

// sigma(x); Tabulated outside its node range throws DomainError.
double eval(const Activation& act, double x);

// Applies sigma elementwise in place.
void apply(const Activation& act, Eigen::Ref<Eigen::MatrixXd> m);

// E_{z~N(0,r)}[w(z)] with w in {sigma, z*sigma, sigma^2}.
double gaussian_moment(const Activation& act, double r, MomentWeight weight, int order = 201);

bool zero_mean_at(const Activation& act, double r);

// Parses names such as "tanh:2", "erf:2", "sign", "shifted_relu", "identity".
Activation parse_activation(const std::string& text);

}  // namespace dtl
