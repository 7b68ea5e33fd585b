#include "dtl/covariance.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>

#include <boost/math/distributions/normal.hpp>

#include "dtl/error.hpp"

namespace dtl {

namespace {

constexpr long kBatch = 4096;
constexpr char kMagic[8] = {'D', 'T', 'L', 'M', 'A', 'T', '0', '1'};

void check_sigma(const Eigen::MatrixXd& sigma, int d) {
    if (sigma.rows() != d || sigma.cols() != d) throw ModelError("covariance: sigma must be d x d");
}

Eigen::MatrixXd sigma_factor(const Eigen::MatrixXd& sigma) {
    if (sigma.isIdentity(0.0)) return Eigen::MatrixXd();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    if (es.eigenvalues().minCoeff() < -1e-10) throw DomainError("covariance: sigma is not positive semidefinite");
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

// Inputs for rows [first, first + n) with covariance sigma = L L^T (empty L means identity).
Eigen::MatrixXd draw(const Eigen::MatrixXd& L, int d, long n, std::uint64_t seed, long first) {
    Eigen::MatrixXd Z = sample_inputs(Eigen::VectorXd::Ones(d), n, seed, std::uint64_t(first));
    if (L.size() == 0) return Z;
    return Z * L.transpose();
}

Eigen::MatrixXd chain(const WeightSet& w, int layer) {
    const int d = w.input_dim();
    Eigen::MatrixXd c = Eigen::MatrixXd::Identity(d, d);
    for (int l = 0; l < layer; ++l) c = (w.layers[l] * c).eval() / std::sqrt(double(w.layers[l].cols()));
    return c;
}

}  // namespace

Eigen::MatrixXd theory_covariance(const NetworkSpec& spec, const WeightSet& weights, int layer,
                                  const Eigen::MatrixXd& sigma) {
    check_shapes(spec, weights);
    check_sigma(sigma, weights.input_dim());
    if (layer < 0 || layer > spec.depth()) throw DomainError("theory_covariance: layer out of range");
    const GepProfile p = propagate(spec);
    Eigen::MatrixXd omega = sigma;
    for (int l = 0; l < layer; ++l) {
        const Eigen::MatrixXd& W = weights.layers[l];
        const double k1 = p.kappa1[l], ks = p.kappa_star[l];
        Eigen::MatrixXd next = k1 * k1 * (W * omega * W.transpose()) / double(W.cols());
        next.diagonal().array() += ks * ks;
        omega = 0.5 * (next + next.transpose());
    }
    return omega;
}

Eigen::MatrixXd cross_covariance(const NetworkSpec& spec_star, const WeightSet& weights_star, int layer_star,
                                 const NetworkSpec& spec, const WeightSet& weights, int layer,
                                 const Eigen::MatrixXd& sigma) {
    check_shapes(spec_star, weights_star);
    check_shapes(spec, weights);
    if (weights_star.input_dim() != weights.input_dim()) throw ModelError("cross_covariance: input dimensions differ");
    check_sigma(sigma, weights.input_dim());
    if (layer_star < 0 || layer_star > spec_star.depth() || layer < 0 || layer > spec.depth())
        throw DomainError("cross_covariance: layer out of range");
    const GepProfile ps = propagate(spec_star);
    const GepProfile p = propagate(spec);
    double coef = 1.0;
    for (int l = 0; l < layer_star; ++l) coef *= ps.kappa1[l];
    for (int l = 0; l < layer; ++l) coef *= p.kappa1[l];
    return coef * chain(weights_star, layer_star) * sigma * chain(weights, layer).transpose();
}

std::map<int, Eigen::MatrixXd> empirical_covariances(const NetworkSpec& spec, const WeightSet& weights,
                                                     const std::vector<int>& layers, long n_samples,
                                                     std::uint64_t seed, const Eigen::MatrixXd& sigma) {
    check_shapes(spec, weights);
    const int d = weights.input_dim();
    check_sigma(sigma, d);
    if (n_samples < 1000) throw DomainError("empirical_covariance: need at least 1000 samples");
    std::map<int, Eigen::MatrixXd> acc;
    int top = 0;
    for (int l : layers) {
        if (l < 0 || l > spec.depth()) throw DomainError("empirical_covariance: layer out of range");
        acc[l] = Eigen::MatrixXd::Zero(weights.width(l), weights.width(l));
        top = std::max(top, l);
    }
    const Eigen::MatrixXd L = sigma_factor(sigma);
    for (long first = 0; first < n_samples; first += kBatch) {
        const long n = std::min(kBatch, n_samples - first);
        Eigen::MatrixXd h = draw(L, d, n, seed, first);
        for (int l = 0; l <= top; ++l) {
            if (l > 0) {
                Eigen::MatrixXd pre = h * weights.layers[l - 1].transpose() / std::sqrt(double(h.cols()));
                apply(spec.activations[l - 1], pre);
                h = std::move(pre);
            }
            auto it = acc.find(l);
            if (it != acc.end()) it->second.selfadjointView<Eigen::Lower>().rankUpdate(h.transpose());
        }
    }
    for (auto& [l, m] : acc) {
        Eigen::MatrixXd full = m.selfadjointView<Eigen::Lower>();
        m = full / double(n_samples);
    }
    return acc;
}

Eigen::MatrixXd empirical_covariance(const NetworkSpec& spec, const WeightSet& weights, int layer, long n_samples,
                                     std::uint64_t seed, const Eigen::MatrixXd& sigma) {
    return empirical_covariances(spec, weights, {layer}, n_samples, seed, sigma).at(layer);
}

Eigen::MatrixXd empirical_cross_covariance(const NetworkSpec& spec_star, const WeightSet& weights_star, int layer_star,
                                           const NetworkSpec& spec, const WeightSet& weights, int layer,
                                           long n_samples, std::uint64_t seed, const Eigen::MatrixXd& sigma) {
    check_shapes(spec_star, weights_star);
    check_shapes(spec, weights);
    const int d = weights.input_dim();
    check_sigma(sigma, d);
    const Eigen::MatrixXd L = sigma_factor(sigma);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(weights_star.width(layer_star), weights.width(layer));
    for (long first = 0; first < n_samples; first += kBatch) {
        const long n = std::min(kBatch, n_samples - first);
        const Eigen::MatrixXd X = draw(L, d, n, seed, first);
        acc.noalias() += forward(spec_star, weights_star, X, layer_star).transpose() * forward(spec, weights, X, layer);
    }
    return acc / double(n_samples);
}

double rel_frobenius(const Eigen::MatrixXd& empirical, const Eigen::MatrixXd& theory) {
    if (empirical.rows() != theory.rows() || empirical.cols() != theory.cols())
        throw ModelError("rel_frobenius: shape mismatch");
    return (empirical - theory).squaredNorm() / empirical.squaredNorm();
}

std::vector<CovarianceReport> covariance_check(const NetworkSpec& spec, const WeightSet& weights,
                                               const std::vector<int>& layers, long n_samples, std::uint64_t seed) {
    const int d = weights.input_dim();
    const Eigen::VectorXd s = input_scales(spec.input_spectrum, d);
    const Eigen::MatrixXd sigma = s.array().square().matrix().asDiagonal();
    const auto emp = empirical_covariances(spec, weights, layers, n_samples, seed, sigma);
    std::vector<CovarianceReport> out;
    for (int l : layers) {
        CovarianceReport r;
        r.layer = l;
        r.theory = theory_covariance(spec, weights, l, sigma);
        r.empirical = emp.at(l);
        r.rel_frobenius = rel_frobenius(r.empirical, r.theory);
        r.n_samples = n_samples;
        out.push_back(std::move(r));
    }
    return out;
}

namespace {

// All set partitions of {0..n-1}, as block-size lists.
void set_partitions(int n, std::vector<std::vector<int>>& out) {
    std::vector<int> assign(n, 0);
    std::function<void(int, int)> rec = [&](int i, int blocks) {
        if (i == n) {
            std::vector<int> sizes(blocks, 0);
            for (int a : assign) ++sizes[a];
            out.push_back(sizes);
            return;
        }
        for (int b = 0; b <= blocks; ++b) {
            assign[i] = b;
            rec(i + 1, std::max(blocks, b + 1));
        }
    };
    rec(0, 0);
}

std::vector<std::vector<std::vector<int>>> set_partitions_of(int n) {
    // for each partition, the list of blocks as element indices
    std::vector<std::vector<std::vector<int>>> out;
    std::vector<int> assign(n, 0);
    std::function<void(int, int)> rec = [&](int i, int blocks) {
        if (i == n) {
            std::vector<std::vector<int>> part(blocks);
            for (int e = 0; e < n; ++e) part[assign[e]].push_back(e);
            out.push_back(part);
            return;
        }
        for (int b = 0; b <= blocks; ++b) {
            assign[i] = b;
            rec(i + 1, std::max(blocks, b + 1));
        }
    };
    rec(0, 0);
    return out;
}

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

// Sum over pairwise distinct indices of prod_j x_{i_j}^{parts_j}, from power sums.
double augmented_sum(const std::vector<int>& parts, const std::array<double, 9>& S) {
    double total = 0.0;
    for (const auto& part : set_partitions_of(int(parts.size()))) {
        double term = 1.0;
        for (const auto& block : part) {
            int power = 0;
            for (int e : block) power += parts[e];
            const int b = int(block.size());
            term *= ((b - 1) % 2 ? -1.0 : 1.0) * factorial(b - 1) * S[power];
        }
        total += term;
    }
    return total;
}

}  // namespace

double k_statistic(const Eigen::VectorXd& x, int order) {
    if (order < 1 || order > 8) throw DomainError("k_statistic: order must lie in [1, 8]");
    const Eigen::Index n = x.size();
    if (n <= order) throw DomainError("k_statistic: need more samples than the order");
    const double mean = x.mean();
    if (order == 1) return mean;
    // shift- and scale-normalise for conditioning; k-statistics of order >= 2 are shift invariant
    const double scale = std::sqrt((x.array() - mean).square().mean());
    if (scale == 0.0) return 0.0;
    const Eigen::ArrayXd y = (x.array() - mean) / scale;
    std::array<double, 9> S{};
    Eigen::ArrayXd pw = Eigen::ArrayXd::Ones(n);
    for (int j = 0; j <= 8; ++j) {
        S[j] = pw.sum();
        pw *= y;
    }
    std::vector<std::vector<int>> parts;
    set_partitions(order, parts);
    double k = 0.0;
    for (const auto& sizes : parts) {
        const int b = int(sizes.size());
        double falling = 1.0;
        for (int i = 0; i < b; ++i) falling *= double(n - i);
        k += ((b - 1) % 2 ? -1.0 : 1.0) * factorial(b - 1) * augmented_sum(sizes, S) / falling;
    }
    return k * std::pow(scale, order);
}

GaussianityReport gaussianity_diagnostics(const NetworkSpec& spec, const WeightSet& weights, long n_samples,
                                          std::uint64_t seed) {
    if (n_samples < 10000) throw DomainError("gaussianity_diagnostics: need at least 10^4 samples");
    const GepProfile p = propagate(spec);
    const int d = weights.input_dim();
    const Eigen::VectorXd s = input_scales(spec.input_spectrum, d);
    Eigen::VectorXd out(n_samples);
    for (long first = 0; first < n_samples; first += kBatch) {
        const long n = std::min(kBatch, n_samples - first);
        out.segment(first, n) = network_output(spec, weights, sample_inputs(s, n, seed, std::uint64_t(first)));
    }
    out /= std::sqrt(p.check_q);
    GaussianityReport r;
    r.n_samples = n_samples;
    for (int order : {3, 4, 6, 8}) r.cumulants[order] = k_statistic(out, order);
    r.scaled_variance = k_statistic(out, 2);
    std::vector<double> sorted(out.data(), out.data() + out.size());
    std::sort(sorted.begin(), sorted.end());
    const boost::math::normal_distribution<double> gauss;
    double ks = 0.0;
    const double nn = double(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double F = boost::math::cdf(gauss, sorted[i]);
        ks = std::max({ks, std::abs(F - i / nn), std::abs((i + 1) / nn - F)});
    }
    r.ks_statistic = ks;
    for (int i = 1; i <= 99; ++i) {
        const double prob = i / 100.0;
        const double pos = prob * (nn - 1);
        const std::size_t lo = std::size_t(std::floor(pos));
        const double frac = pos - lo;
        const double emp = sorted[lo] + frac * (sorted[std::min(lo + 1, sorted.size() - 1)] - sorted[lo]);
        r.qq_points.emplace_back(boost::math::quantile(gauss, prob), emp);
    }
    return r;
}

void write_matrix_binary(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ResourceError("cannot open " + path + " for writing");
    const std::uint32_t rows = std::uint32_t(m.rows()), cols = std::uint32_t(m.cols());
    f.write(kMagic, 8);
    f.write(reinterpret_cast<const char*>(&rows), 4);
    f.write(reinterpret_cast<const char*>(&cols), 4);
    f.write(reinterpret_cast<const char*>(m.data()), std::streamsize(sizeof(double) * m.size()));
    if (!f) throw ResourceError("write failed for " + path);
}

Eigen::MatrixXd read_matrix_binary(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ResourceError("cannot open " + path);
    char magic[8];
    std::uint32_t rows = 0, cols = 0;
    f.read(magic, 8);
    f.read(reinterpret_cast<char*>(&rows), 4);
    f.read(reinterpret_cast<char*>(&cols), 4);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) throw DomainError(path + " is not a matrix dump");
    Eigen::MatrixXd m(rows, cols);
    f.read(reinterpret_cast<char*>(m.data()), std::streamsize(sizeof(double) * m.size()));
    if (!f) throw DomainError(path + ": truncated matrix dump");
    return m;
}

}  // namespace dtl
