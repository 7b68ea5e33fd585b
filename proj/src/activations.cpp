#include "dtl/activations.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <math.h>

#include <boost/math/interpolators/pchip.hpp>
#include <unsupported/Eigen/SpecialFunctions>
#include <boost/math/quadrature/gauss.hpp>

#include "dtl/error.hpp"
#include "dtl/quadrature.hpp"

namespace dtl {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Gaussian tail beyond which a tabulated curve must cover the integration range.
constexpr double kTabulatedCover = 7.5;

}  // namespace

class TabulatedCurve {
public:
    explicit TabulatedCurve(std::vector<std::pair<double, double>> nodes) {
        if (nodes.size() < 4) throw DomainError("tabulated activation needs at least 4 nodes");
        std::sort(nodes.begin(), nodes.end());
        std::vector<double> x, y;
        for (auto& [a, b] : nodes) {
            if (!std::isfinite(a) || !std::isfinite(b)) throw DomainError("tabulated activation: non-finite node");
            if (!x.empty() && a <= x.back()) throw DomainError("tabulated activation: duplicate abscissa");
            x.push_back(a);
            y.push_back(b);
        }
        nodes_ = nodes;
        lo_ = x.front();
        hi_ = x.back();
        knots_ = x;
        interp_ = std::make_shared<boost::math::interpolators::pchip<std::vector<double>>>(std::move(x), std::move(y));
    }
    double operator()(double x) const {
        if (!(x >= lo_ && x <= hi_))
            throw DomainError("tabulated activation: input " + std::to_string(x) + " outside node range");
        return (*interp_)(x);
    }
    double lo() const { return lo_; }
    double hi() const { return hi_; }
    const std::vector<double>& knots() const { return knots_; }
    const std::vector<std::pair<double, double>>& nodes() const { return nodes_; }

private:
    double lo_, hi_;
    std::vector<double> knots_;
    std::vector<std::pair<double, double>> nodes_;
    std::shared_ptr<boost::math::interpolators::pchip<std::vector<double>>> interp_;
};

Activation Activation::tanh_scale(double a) {
    if (!(a > 0)) throw DomainError("TanhScale requires a > 0");
    return {ActivationTag::TanhScale, a, nullptr};
}
Activation Activation::erf_scale(double a) {
    if (!(a > 0)) throw DomainError("ErfScale requires a > 0");
    return {ActivationTag::ErfScale, a, nullptr};
}
Activation Activation::sign() { return {ActivationTag::Sign, 1.0, nullptr}; }
Activation Activation::shifted_relu() { return {ActivationTag::ShiftedRelu, 1.0, nullptr}; }
Activation Activation::identity() { return {ActivationTag::Identity, 1.0, nullptr}; }
Activation Activation::tabulated(std::vector<std::pair<double, double>> nodes) {
    return {ActivationTag::Tabulated, 1.0, std::make_shared<const TabulatedCurve>(std::move(nodes))};
}

bool Activation::is_odd() const {
    return tag == ActivationTag::TanhScale || tag == ActivationTag::ErfScale || tag == ActivationTag::Sign ||
           tag == ActivationTag::Identity;
}

std::vector<std::pair<double, double>> Activation::nodes() const {
    if (tag != ActivationTag::Tabulated || !table) return {};
    return table->nodes();
}

std::string Activation::name() const {
    std::ostringstream os;
    switch (tag) {
        case ActivationTag::TanhScale: os << "tanh:" << scale; break;
        case ActivationTag::ErfScale: os << "erf:" << scale; break;
        case ActivationTag::Sign: os << "sign"; break;
        case ActivationTag::ShiftedRelu: os << "shifted_relu"; break;
        case ActivationTag::Identity: os << "identity"; break;
        case ActivationTag::Tabulated: os << "tabulated"; break;
    }
    return os.str();
}

double eval(const Activation& act, double x) {
    switch (act.tag) {
        case ActivationTag::TanhScale: return std::tanh(act.scale * x);
        case ActivationTag::ErfScale: return std::erf(act.scale * x);
        case ActivationTag::Sign: return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
        case ActivationTag::ShiftedRelu: return std::max(x, 0.0) - kInvSqrt2Pi;
        case ActivationTag::Identity: return x;
        case ActivationTag::Tabulated: return (*act.table)(x);
    }
    return x;
}

void apply(const Activation& act, Eigen::Ref<Eigen::MatrixXd> m) {
    switch (act.tag) {
        case ActivationTag::TanhScale: m = (act.scale * m.array()).tanh().matrix(); return;
        case ActivationTag::ErfScale: m = (act.scale * m.array()).erf().matrix(); return;
        case ActivationTag::Identity: return;
        default:
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = eval(act, m(i, j));
    }
}

namespace {

double closed_form(const Activation& act, double r, MomentWeight w, bool& ok) {
    ok = true;
    switch (act.tag) {
        case ActivationTag::Identity:
            return w == MomentWeight::Plain ? 0.0 : r;
        case ActivationTag::Sign:
            if (w == MomentWeight::Plain) return 0.0;
            if (w == MomentWeight::TimesZ) return std::sqrt(2.0 * r / std::numbers::pi);
            return 1.0;
        case ActivationTag::ShiftedRelu: {
            const double mean_relu = std::sqrt(r) * kInvSqrt2Pi;
            if (w == MomentWeight::Plain) return mean_relu - kInvSqrt2Pi;
            if (w == MomentWeight::TimesZ) return 0.5 * r;
            return 0.5 * r - 2.0 * kInvSqrt2Pi * mean_relu + kInvSqrt2Pi * kInvSqrt2Pi;
        }
        default: ok = false; return 0.0;
    }
}

double weight_fn(MomentWeight w, double z, double s) {
    switch (w) {
        case MomentWeight::Plain: return s;
        case MomentWeight::TimesZ: return z * s;
        case MomentWeight::Square: return s * s;
    }
    return s;
}

double hermite_moment(const Activation& act, double r, MomentWeight w, int order) {
    const GaussRule& rule = gauss_hermite(order);
    const double sd = std::sqrt(r);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double z = sd * rule.nodes[i];
        acc += rule.weights[i] * weight_fn(w, z, eval(act, z));
    }
    return acc;
}

// Adaptive Gauss-Kronrod on [-12 sqrt(r), 12 sqrt(r)] split at the origin, for integrands
// whose complex singularities sit too close to the real axis for Gauss-Hermite.
double adaptive_moment(const Activation& act, double r, MomentWeight w) {
    const double sd = std::sqrt(r);
    auto f = [&](double z) { return std::exp(-0.5 * z * z / r) * weight_fn(w, z, eval(act, z)); };
    double v = 0.0;
    try {
        v = integrate_gk(f, -12.0 * sd, 0.0, 1e-13 * sd, 1e-13) + integrate_gk(f, 0.0, 12.0 * sd, 1e-13 * sd, 1e-13);
    } catch (const NumericalError&) {
        throw NumericalError("gaussian_moment: quadrature did not stabilise for " + act.name());
    }
    return v * kInvSqrt2Pi / sd;
}

// Composite Gauss-Legendre between consecutive knots; the curve is cubic on each panel.
double tabulated_moment(const Activation& act, double r, MomentWeight w) {
    const TabulatedCurve& t = *act.table;
    const double sd = std::sqrt(r);
    if (t.lo() > -kTabulatedCover * sd || t.hi() < kTabulatedCover * sd)
        throw DomainError("tabulated activation: node range does not cover the Gaussian at r = " + std::to_string(r));
    const auto& k = t.knots();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < k.size(); ++i) {
        auto f = [&](double z) {
            return std::exp(-0.5 * z * z / r) * weight_fn(w, z, t(std::clamp(z, t.lo(), t.hi())));
        };
        acc += boost::math::quadrature::gauss<double, 20>::integrate(f, k[i], k[i + 1]);
    }
    return acc * kInvSqrt2Pi / sd;
}

}  // namespace

double gaussian_moment(const Activation& act, double r, MomentWeight weight, int order) {
    if (!(r > 0) || !std::isfinite(r)) throw DomainError("gaussian_moment: variance r must be positive");
    bool ok = false;
    const double c = closed_form(act, r, weight, ok);
    if (ok) return c;
    if (act.tag == ActivationTag::Tabulated) return tabulated_moment(act, r, weight);
    const double a = hermite_moment(act, r, weight, order);
    const double b = hermite_moment(act, r, weight, 2 * order);
    if (std::abs(a - b) < 1e-10) return b;
    const double c4 = hermite_moment(act, r, weight, 4 * order);
    if (std::abs(b - c4) < 1e-10) return c4;
    return adaptive_moment(act, r, weight);
}

bool zero_mean_at(const Activation& act, double r) {
    return std::abs(gaussian_moment(act, r, MomentWeight::Plain)) < 1e-10;
}

Activation parse_activation(const std::string& text) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    double arg = 1.0;
    if (colon != std::string::npos) {
        try {
            arg = std::stod(text.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("activation: bad parameter in '" + text + "'");
        }
    }
    if (head == "tanh") return Activation::tanh_scale(arg);
    if (head == "erf") return Activation::erf_scale(arg);
    if (head == "sign") return Activation::sign();
    if (head == "shifted_relu") return Activation::shifted_relu();
    if (head == "identity" || head == "linear") return Activation::identity();
    throw ConfigError("activation: unknown kind '" + text + "'");
}

}  // namespace dtl
