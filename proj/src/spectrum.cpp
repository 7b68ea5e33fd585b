#include "dtl/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "dtl/error.hpp"
#include "dtl/quadrature.hpp"

namespace dtl {

double Rational::operator()(double z) const {
    const double n = num[0] + z * (num[1] + z * (num[2] + z * num[3]));
    if (power == 0) return n;
    const double d = c0 + c1 * z;
    return power == 1 ? n / d : n / (d * d);
}

Rational Rational::monomial(int degree, double coef) {
    if (degree < 0 || degree > 3) throw DomainError("Rational: degree must be in [0, 3]");
    Rational r;
    r.num[degree] = coef;
    return r;
}

SpectralMeasure::SpectralMeasure(std::vector<std::pair<double, double>> atoms, std::optional<Density> density)
    : atoms_(std::move(atoms)), density_(std::move(density)) {
    validate();
}

SpectralMeasure SpectralMeasure::delta(double location) { return SpectralMeasure({{location, 1.0}}); }

void SpectralMeasure::validate() const {
    double mass = 0.0;
    for (auto [loc, m] : atoms_) {
        if (!(loc >= 0) || !std::isfinite(loc)) throw DomainError("spectrum: atom location must be non-negative");
        if (!(m > 0) || !std::isfinite(m)) throw DomainError("spectrum: atom mass must be positive");
        mass += m;
    }
    if (density_) {
        const auto& g = density_->grid;
        const auto& v = density_->values;
        if (g.size() < 2 || g.size() != v.size()) throw DomainError("spectrum: density grid and values mismatch");
        if (g.front() < 0) throw DomainError("spectrum: density support must be non-negative");
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!(v[i] >= 0) || !std::isfinite(v[i])) throw DomainError("spectrum: density must be non-negative");
            if (i > 0 && !(g[i] > g[i - 1])) throw DomainError("spectrum: density grid must increase");
        }
        for (std::size_t i = 0; i + 1 < g.size(); ++i) mass += 0.5 * (v[i] + v[i + 1]) * (g[i + 1] - g[i]);
    }
    if (atoms_.empty() && !density_) throw DomainError("spectrum: empty measure");
    if (std::abs(mass - 1.0) > 1e-10) {
        std::ostringstream os;
        os << "spectrum: total mass " << mass << " differs from 1";
        throw DomainError(os.str());
    }
    if (!(moment(1) > 0)) throw DomainError("spectrum: first moment must be positive");
}

double SpectralMeasure::support_min() const {
    double lo = std::numeric_limits<double>::infinity();
    for (auto [loc, m] : atoms_) lo = std::min(lo, loc);
    if (density_) lo = std::min(lo, density_->grid.front());
    return lo;
}

double SpectralMeasure::support_max() const {
    double hi = -std::numeric_limits<double>::infinity();
    for (auto [loc, m] : atoms_) hi = std::max(hi, loc);
    if (density_) hi = std::max(hi, density_->grid.back());
    return hi;
}

double SpectralMeasure::moment(int k) const {
    return integrate([k](double z) { return std::pow(z, k); });
}

bool SpectralMeasure::is_delta_one() const {
    return !density_ && atoms_.size() == 1 && atoms_[0].first == 1.0;
}

double SpectralMeasure::integrate(const std::function<double(double)>& f) const {
    double acc = 0.0;
    for (auto [loc, m] : atoms_) acc += m * f(loc);
    if (density_) {
        const auto& g = density_->grid;
        const auto& v = density_->values;
        for (std::size_t i = 0; i + 1 < g.size(); ++i) {
            const double a = g[i], b = g[i + 1], va = v[i], vb = v[i + 1];
            auto h = [&](double z) { return f(z) * (va + (vb - va) * (z - a) / (b - a)); };
            acc += integrate_gk(h, a, b, 1e-14, 1e-11);
        }
    }
    return acc;
}

double SpectralMeasure::integrate(const Rational& f) const {
    if (f.power > 0) {
        auto near_pole = [&](double z) { return std::abs(f.c0 + f.c1 * z) <= 1e-12 * std::max(1.0, std::abs(f.c1)); };
        bool bad = false;
        double pole = f.c1 != 0.0 ? -f.c0 / f.c1 : std::numeric_limits<double>::infinity();
        if (f.c1 == 0.0 && std::abs(f.c0) <= 1e-12) bad = true;
        for (auto [loc, m] : atoms_) bad = bad || near_pole(loc);
        if (density_ && f.c1 != 0.0) {
            const double lo = density_->grid.front(), hi = density_->grid.back();
            bad = bad || (pole > lo - 1e-12 && pole < hi + 1e-12);
        }
        if (bad) {
            std::ostringstream os;
            os << "spectrum: integrand has a pole on the support at z = " << pole;
            throw DomainError(os.str());
        }
    }
    return integrate(std::function<double(double)>([&](double z) { return f(z); }));
}

double MarchenkoPastur::lower_edge() const {
    const double t = std::sqrt(gamma) - 1.0;
    return variance * t * t;
}

double MarchenkoPastur::upper_edge() const {
    const double t = std::sqrt(gamma) + 1.0;
    return variance * t * t;
}

double MarchenkoPastur::atom_mass() const { return std::max(0.0, 1.0 - 1.0 / gamma); }

double MarchenkoPastur::density(double s) const {
    const double a = lower_edge(), b = upper_edge();
    if (s <= a || s >= b) return 0.0;
    return std::sqrt((s - a) * (b - s)) / (2.0 * std::numbers::pi * gamma * variance * s);
}

StieltjesValue mp_stieltjes(const MarchenkoPastur& mp, double z) {
    if (!(mp.gamma > 0) || !(mp.variance > 0)) throw DomainError("mp_stieltjes: gamma and variance must be positive");
    if (!std::isfinite(z) || z >= mp.lower_edge()) {
        std::ostringstream os;
        os << "mp_stieltjes: z = " << z << " is not below the support edge " << mp.lower_edge();
        throw DomainError(os.str());
    }
    if (mp.gamma >= 1.0 && z >= 0.0) throw DomainError("mp_stieltjes: z = 0 hits the atom at the origin");
    // A g^2 + B g + 1 = 0 with A = gamma v z, B = z - v (1 - gamma); the root 2 / (sqrt(disc) - B)
    // is the branch that is positive below the support.
    const double v = mp.variance, gm = mp.gamma;
    const double A = gm * v * z;
    const double B = z - v * (1.0 - gm);
    const double g = 2.0 / (std::sqrt(B * B - 4.0 * A) - B);
    const double gp = -(gm * v * g * g + g) / (2.0 * A * g + B);
    // h = 1 + z g solves gamma v h^2 - beta h + v = 0 with beta = v (1 + gamma) - z; take the small root.
    const double beta = v * (1.0 + gm) - z;
    const double D = std::sqrt(std::max(0.0, beta * beta - 4.0 * gm * v * v));
    const double h = 2.0 * v / (beta + D);
    const double hp = h / D;
    double d_plus_z;
    if (z < 0) {
        const double num = v * v * (1.0 - gm) * (1.0 - gm) - 2.0 * z * v * (1.0 + gm);
        d_plus_z = num / (D - z);
    } else {
        d_plus_z = D + z;
    }
    const double k = h * d_plus_z / D;
    return {g, gp, h, hp, k};
}

}  // namespace dtl
