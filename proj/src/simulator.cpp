#include "dtl/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <thread>

#include "dtl/error.hpp"
#include "dtl/quadrature.hpp"
#include "dtl/rng.hpp"
#include "dtl/theory.hpp"

namespace dtl {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void require_nonempty(const Dataset& data, const char* what) {
    if (data.n < 1 || data.X.rows() != data.n || data.y.size() != data.n)
        throw DomainError(std::string(what) + ": dataset must contain at least one sample");
}

void score_regression(ErmResult& r, const Eigen::VectorXd& pred, const Dataset& test) {
    const Eigen::ArrayXd se = (test.y - pred).array().square();
    const MeanStd s = summarize(std::vector<double>(se.data(), se.data() + se.size()));
    r.test_error = s.mean;
    r.test_std_error = s.std_error;
    r.n_test = test.n;
}

void score_classification(ErmResult& r, const Eigen::VectorXd& pred, const Dataset& test) {
    long wrong = 0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) wrong += (pred(i) >= 0 ? 1.0 : -1.0) != test.y(i);
    const double p = double(wrong) / double(test.n);
    r.test_error = p;
    r.test_std_error = std::sqrt(p * (1 - p) / double(test.n));
    r.n_test = test.n;
}

double relu_moment(double n1, double n2, double c) {
    const double s = std::sqrt(n1 * n2);
    if (s == 0.0) return 0.0;
    const double cos_t = std::clamp(c / s, -1.0, 1.0);
    const double t = std::acos(cos_t);
    return s * (std::sin(t) + (std::numbers::pi - t) * cos_t) / (2.0 * std::numbers::pi);
}

double sign_moment(double n1, double n2, double c) {
    const double s = std::sqrt(n1 * n2);
    if (s == 0.0) return 0.0;
    return 2.0 / std::numbers::pi * std::asin(std::clamp(c / s, -1.0, 1.0));
}

double erf_moment(double a, double n1, double n2, double c) {
    const double a2 = 2.0 * a * a;
    return 2.0 / std::numbers::pi * std::asin(std::clamp(a2 * c / std::sqrt((1 + a2 * n1) * (1 + a2 * n2)), -1.0, 1.0));
}

}  // namespace

Dataset generate(const NetworkSpec& spec, const WeightSet& weights, long n, Task task, std::uint64_t seed,
                 std::uint64_t first_row) {
    if (n < 1) throw DomainError("generate: n must be at least 1");
    Dataset data;
    data.d = weights.input_dim();
    data.n = n;
    data.generator_seed = seed;
    data.task = task;
    data.X = sample_inputs(input_scales(spec.input_spectrum, data.d), n, seed, first_row);
    data.y = network_output(spec, weights, data.X);
    if (spec.noise_var > 0) {
        const double sd = std::sqrt(spec.noise_var);
        for (long i = 0; i < n; ++i) data.y(i) += sd * Stream(seed, "label-noise", first_row + std::uint64_t(i)).normal();
    }
    if (task == Task::Classification)
        for (long i = 0; i < n; ++i) data.y(i) = data.y(i) >= 0 ? 1.0 : -1.0;
    return data;
}

Eigen::VectorXd ridge_weights(const Dataset& train, double lambda) {
    require_nonempty(train, "fit_ridge");
    const double d = double(train.d);
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(train.d, train.d) * lambda;
    A.selfadjointView<Eigen::Lower>().rankUpdate(train.X.transpose(), 2.0 / d);
    const Eigen::VectorXd b = (2.0 / std::sqrt(d)) * (train.X.transpose() * train.y);
    Eigen::LLT<Eigen::MatrixXd> llt(A.selfadjointView<Eigen::Lower>());
    if (llt.info() != Eigen::Success) throw DomainError("fit_ridge: regularized system is not positive definite");
    return llt.solve(b);
}

ErmResult fit_ridge(const Dataset& train, double lambda, const Dataset& test) {
    const auto t0 = Clock::now();
    const Eigen::VectorXd w = ridge_weights(train, lambda);
    const double sd = std::sqrt(double(train.d));
    ErmResult r;
    r.method = "ridge";
    r.lambda = lambda;
    r.n_train = train.n;
    r.seed = train.generator_seed;
    r.train_loss = (train.y - train.X * w / sd).squaredNorm() + 0.5 * lambda * w.squaredNorm();
    score_regression(r, test.X * w / sd, test);
    r.wallclock = seconds_since(t0);
    return r;
}

ErmResult fit_ridge_classification(const Dataset& train, double lambda, const Dataset& test) {
    const auto t0 = Clock::now();
    // the half-loss minimiser is the printed-risk minimiser at 2 lambda
    const Eigen::VectorXd w = ridge_weights(train, 2.0 * lambda);
    const double sd = std::sqrt(double(train.d));
    ErmResult r;
    r.method = "ridge_classification";
    r.lambda = lambda;
    r.n_train = train.n;
    r.seed = train.generator_seed;
    r.train_loss = 0.5 * (train.y - train.X * w / sd).squaredNorm() + 0.5 * lambda * w.squaredNorm();
    score_classification(r, test.X * w / sd, test);
    r.wallclock = seconds_since(t0);
    return r;
}

double KernelSpec::operator()(double n1, double n2, double c) const {
    switch (kind) {
        case KernelKind::ArcCosine0: return sign_moment(n1, n2, c);
        case KernelKind::ArcCosine1: return relu_moment(n1, n2, c);
        case KernelKind::ArcSine: return erf_moment(1.0, n1, n2, c);
        case KernelKind::Nngp: break;
    }
    const double v1 = delta_f * n1, v2 = delta_f * n2, cv = delta_f * c;
    switch (activation.tag) {
        case ActivationTag::Identity: return cv;
        case ActivationTag::Sign: return sign_moment(v1, v2, cv);
        case ActivationTag::ErfScale: return erf_moment(activation.scale, v1, v2, cv);
        case ActivationTag::ShiftedRelu: {
            const double k = 1.0 / std::sqrt(2.0 * std::numbers::pi);
            return relu_moment(v1, v2, cv) - k * k * (std::sqrt(v1) + std::sqrt(v2)) + k * k;
        }
        default: break;
    }
    const GaussRule& rule = gauss_hermite(quadrature_order);
    const double s1 = std::sqrt(v1), s2 = std::sqrt(v2);
    const double rho = (s1 > 0 && s2 > 0) ? std::clamp(cv / (s1 * s2), -1.0, 1.0) : 0.0;
    const double perp = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double a = eval(activation, s1 * rule.nodes[i]);
        double inner = 0.0;
        for (std::size_t j = 0; j < rule.nodes.size(); ++j)
            inner += rule.weights[j] * eval(activation, s2 * (rho * rule.nodes[i] + perp * rule.nodes[j]));
        acc += rule.weights[i] * a * inner;
    }
    return acc;
}

std::string KernelSpec::name() const {
    switch (kind) {
        case KernelKind::ArcCosine0: return "arccos0";
        case KernelKind::ArcCosine1: return "arccos1";
        case KernelKind::ArcSine: return "arcsine";
        case KernelKind::Nngp: return "nngp:" + activation.name();
    }
    return "kernel";
}

KernelSpec nngp_kernel(const Activation& act, double delta_f) {
    KernelSpec k;
    k.kind = KernelKind::Nngp;
    k.activation = act;
    k.delta_f = delta_f;
    return k;
}

namespace {

constexpr int kMehlerTerms = 48;
constexpr double kMehlerMaxCorrelation = 0.6;
constexpr int kFallbackOrder = 300;

bool pointwise_gram(const KernelSpec& k) {
    return k.kind != KernelKind::Nngp || k.activation.tag != ActivationTag::TanhScale;
}

// Rows of E[sigma(s z) h_j(z)] with h_j the orthonormal Hermite polynomials, s = sqrt(delta_f n).
Eigen::MatrixXd mehler_coefficients(const KernelSpec& k, const Eigen::VectorXd& norms) {
    const GaussRule& rule = gauss_hermite(512);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(norms.size(), kMehlerTerms);
    std::vector<double> h(kMehlerTerms);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double z = rule.nodes[q];
        if (std::abs(z) > 14.0) continue;
        h[0] = 1.0;
        h[1] = z;
        for (int j = 1; j + 1 < kMehlerTerms; ++j) h[j + 1] = (z * h[j] - std::sqrt(double(j)) * h[j - 1]) / std::sqrt(j + 1.0);
        for (Eigen::Index i = 0; i < norms.size(); ++i) {
            const double f = rule.weights[q] * eval(k.activation, std::sqrt(k.delta_f * norms(i)) * z);
            for (int j = 0; j < kMehlerTerms; ++j) b(i, j) += f * h[j];
        }
    }
    return b;
}

}  // namespace

Eigen::MatrixXd gram(const KernelSpec& k, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    const double d = double(A.cols());
    const Eigen::MatrixXd C = A * B.transpose() / d;
    const Eigen::VectorXd na = A.rowwise().squaredNorm() / d, nb = B.rowwise().squaredNorm() / d;
    Eigen::MatrixXd G(A.rows(), B.rows());
    if (pointwise_gram(k)) {
        for (Eigen::Index j = 0; j < G.cols(); ++j)
            for (Eigen::Index i = 0; i < G.rows(); ++i) G(i, j) = k(na(i), nb(j), C(i, j));
        return G;
    }
    // Mehler expansion sum_j b_j(u) b_j(v) rho^j away from rho = +-1
    const Eigen::MatrixXd ba = mehler_coefficients(k, na), bb = mehler_coefficients(k, nb);
    KernelSpec fine = k;
    fine.quadrature_order = std::max(k.quadrature_order, kFallbackOrder);
    for (Eigen::Index j = 0; j < G.cols(); ++j) {
        for (Eigen::Index i = 0; i < G.rows(); ++i) {
            const double s = std::sqrt(na(i) * nb(j));
            const double rho = s > 0 ? C(i, j) / s : 0.0;
            if (std::abs(rho) > kMehlerMaxCorrelation) {
                G(i, j) = fine(na(i), nb(j), C(i, j));
                continue;
            }
            double acc = 0.0, pw = 1.0;
            for (int t = 0; t < kMehlerTerms; ++t, pw *= rho) acc += ba(i, t) * bb(j, t) * pw;
            G(i, j) = acc;
        }
    }
    return G;
}

namespace {

struct KernelPath {
    std::vector<Eigen::VectorXd> predictions;  // per lambda, for the evaluation set
    std::vector<double> train_loss;
};

KernelPath kernel_path(const Dataset& train, const KernelSpec& kernel, const std::vector<double>& lambdas,
                       const std::vector<const Dataset*>& evals, std::vector<std::vector<Eigen::VectorXd>>& preds,
                       const KernelOptions& opt) {
    require_nonempty(train, "fit_kernel");
    if (train.n > opt.max_n) throw ResourceError("fit_kernel: n exceeds the Gram-matrix cap");
    const Eigen::MatrixXd K = gram(kernel, train.X, train.X);
    std::vector<Eigen::MatrixXd> cross;
    for (const Dataset* e : evals) cross.push_back(gram(kernel, e->X, train.X));
    KernelPath path;
    preds.assign(evals.size(), {});
    for (double lambda : lambdas) {
        Eigen::MatrixXd A = K;
        A.diagonal().array() += 0.5 * lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        Eigen::VectorXd coef;
        if (llt.info() == Eigen::Success) {
            coef = llt.solve(train.y);
        } else {
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
            const Eigen::VectorXd& ev = eig.eigenvalues();
            if (ev.minCoeff() <= 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff())) {
                if (lambda < 0) throw DomainError("fit_kernel: negative lambda exceeded implicit regularization");
                throw NumericalError("fit_kernel: regularized Gram matrix is not positive definite");
            }
            coef = eig.eigenvectors() * ((eig.eigenvectors().transpose() * train.y).array() / ev.array()).matrix();
        }
        path.train_loss.push_back((train.y - K * coef).squaredNorm() / double(train.n));
        for (std::size_t i = 0; i < evals.size(); ++i) preds[i].push_back(cross[i] * coef);
    }
    return path;
}

}  // namespace

std::vector<ErmResult> fit_kernel_path(const Dataset& train, const KernelSpec& kernel,
                                       const std::vector<double>& lambdas, const Dataset& test,
                                       const KernelOptions& opt) {
    const auto t0 = Clock::now();
    std::vector<std::vector<Eigen::VectorXd>> preds;
    const KernelPath path = kernel_path(train, kernel, lambdas, {&test}, preds, opt);
    std::vector<ErmResult> out;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        ErmResult r;
        r.method = "kernel:" + kernel.name();
        r.lambda = lambdas[i];
        r.n_train = train.n;
        r.seed = train.generator_seed;
        r.train_loss = path.train_loss[i];
        score_regression(r, preds[0][i], test);
        out.push_back(r);
    }
    const double wall = seconds_since(t0);
    for (auto& r : out) r.wallclock = wall;
    return out;
}

ErmResult fit_kernel(const Dataset& train, const KernelSpec& kernel, double lambda, const Dataset& test,
                     const KernelOptions& opt) {
    return fit_kernel_path(train, kernel, {lambda}, test, opt).front();
}

ErmResult fit_random_features(const Dataset& train, int k_features, const Activation& act, double delta_f,
                              double lambda, std::uint64_t seed, const Dataset& test,
                              const std::optional<Eigen::MatrixXd>& feature_override) {
    require_nonempty(train, "fit_random_features");
    if (k_features < 1) throw DomainError("fit_random_features: k must be at least 1");
    if (!(lambda > 0)) throw DomainError("fit_random_features: lambda must be positive");
    const auto t0 = Clock::now();
    const Eigen::MatrixXd F = feature_override ? *feature_override
                                               : Stream(seed, "rf-features").normal_matrix(k_features, train.d, std::sqrt(delta_f));
    if (F.cols() != train.d) throw ModelError("fit_random_features: feature matrix has the wrong input dimension");
    const double k = double(F.rows());
    auto features = [&](const Eigen::MatrixXd& X) {
        Eigen::MatrixXd P = X * F.transpose() / std::sqrt(double(train.d));
        apply(act, P);
        return Eigen::MatrixXd(P / std::sqrt(k));
    };
    const Eigen::MatrixXd P = features(train.X);
    Eigen::VectorXd w;
    if (P.cols() <= P.rows()) {
        Eigen::MatrixXd A = Eigen::MatrixXd::Identity(P.cols(), P.cols()) * lambda;
        A.selfadjointView<Eigen::Lower>().rankUpdate(P.transpose(), 2.0);
        w = Eigen::LLT<Eigen::MatrixXd>(A.selfadjointView<Eigen::Lower>()).solve(2.0 * (P.transpose() * train.y));
    } else {
        Eigen::MatrixXd A = Eigen::MatrixXd::Identity(P.rows(), P.rows()) * lambda;
        A.selfadjointView<Eigen::Lower>().rankUpdate(P, 2.0);
        w = 2.0 * P.transpose() * Eigen::LLT<Eigen::MatrixXd>(A.selfadjointView<Eigen::Lower>()).solve(train.y);
    }
    ErmResult r;
    r.method = "random_features";
    r.lambda = lambda;
    r.n_train = train.n;
    r.seed = seed;
    r.train_loss = (train.y - P * w).squaredNorm() + 0.5 * lambda * w.squaredNorm();
    score_regression(r, features(test.X) * w, test);
    r.wallclock = seconds_since(t0);
    return r;
}

namespace {

double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }
double sigmoid(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

}  // namespace

ErmResult fit_logistic(const Dataset& train, double lambda, const Dataset& test, Eigen::VectorXd* w_out) {
    require_nonempty(train, "fit_logistic");
    if (!(lambda > 0)) throw DomainError("fit_logistic: lambda must be positive");
    const auto t0 = Clock::now();
    const double sd = std::sqrt(double(train.d));
    const Eigen::MatrixXd Xs = train.X / sd;
    auto risk = [&](const Eigen::VectorXd& w) {
        const Eigen::VectorXd z = Xs * w;
        double acc = 0.5 * lambda * w.squaredNorm();
        for (long i = 0; i < train.n; ++i) acc += softplus(-train.y(i) * z(i));
        return acc;
    };
    Eigen::VectorXd w = Eigen::VectorXd::Zero(train.d);
    double f = risk(w);
    bool converged = false;
    for (int it = 0; it < 500; ++it) {
        const Eigen::VectorXd z = Xs * w;
        Eigen::VectorXd s(train.n), curv(train.n);
        for (long i = 0; i < train.n; ++i) {
            s(i) = sigmoid(-train.y(i) * z(i));
            curv(i) = s(i) * (1.0 - s(i));
        }
        const Eigen::VectorXd grad = -Xs.transpose() * (train.y.cwiseProduct(s)) + lambda * w;
        if (grad.lpNorm<Eigen::Infinity>() < 1e-9) {
            converged = true;
            break;
        }
        Eigen::MatrixXd H = Eigen::MatrixXd::Identity(train.d, train.d) * lambda;
        H.selfadjointView<Eigen::Lower>().rankUpdate((Xs.array().colwise() * curv.array().sqrt()).matrix().transpose());
        const Eigen::VectorXd step = Eigen::LLT<Eigen::MatrixXd>(H.selfadjointView<Eigen::Lower>()).solve(-grad);
        double t = 1.0;
        const double slope = grad.dot(step);
        Eigen::VectorXd cand = w + step;
        double fc = risk(cand);
        while (fc > f + 1e-4 * t * slope && t > 1e-10) {
            t *= 0.5;
            cand = w + t * step;
            fc = risk(cand);
        }
        if (!(fc <= f)) {
            // no decrease left at machine precision
            if (grad.lpNorm<Eigen::Infinity>() < 1e-7) {
                converged = true;
                break;
            }
            throw NumericalError("fit_logistic: line search failed");
        }
        w = cand;
        f = fc;
    }
    if (!converged) throw NumericalError("fit_logistic: Newton did not converge in 500 steps");
    ErmResult r;
    r.method = "logistic";
    r.lambda = lambda;
    r.n_train = train.n;
    r.seed = train.generator_seed;
    r.train_loss = f;
    score_classification(r, test.X * w / sd, test);
    r.wallclock = seconds_since(t0);
    if (w_out) *w_out = w;
    return r;
}

std::vector<ErmResult> quadratic_regime_sweep(const NetworkSpec& spec, int d, const std::vector<double>& n_over_d2,
                                              const std::vector<SweepMethod>& methods,
                                              const std::vector<std::uint64_t>& seeds, const SweepOptions& opt) {
    if (d > 64) throw ConfigError("quadratic_regime_sweep: d must not exceed 64");
    const GepProfile p = propagate(spec);
    std::vector<double> factors = opt.lambda_factors;
    if (factors.empty())
        for (int i = -8; i <= 3; ++i) factors.push_back(std::pow(4.0, i));
    // ridge: printed-risk lambda around 2 eps_r / rho
    const double ridge0 = 2.0 * optimal_lambda_ridge(p);
    // kernel: Gram shift around the theory optimum, scaled by the kernel's nonlinear variance
    const Activation centred = Activation::shifted_relu();
    const double kernel0 = std::max(0.0, optimal_lambda_kernel(p, 1.0, centred));
    const double kernel_scale = gaussian_moment(centred, 1.0, MomentWeight::Square) -
                                std::pow(gaussian_moment(centred, 1.0, MomentWeight::TimesZ), 2);
    std::vector<ErmResult> out;
    for (std::uint64_t seed : seeds) {
        const WeightSet w = sample_target(spec, d, seed);
        const Dataset val = generate(spec, w, opt.n_validation, Task::Regression, seed, 1ull << 40);
        const Dataset test = generate(spec, w, opt.n_test, Task::Regression, seed, 1ull << 41);
        for (double c : n_over_d2) {
            const long n = std::max(1L, std::lround(c * d * d));
            if (n > opt.max_n) throw ConfigError("quadratic_regime_sweep: n exceeds the resource cap");
            const Dataset train = generate(spec, w, n, Task::Regression, seed, 0);
            for (SweepMethod m : methods) {
                const auto t0 = Clock::now();
                ErmResult best;
                if (m == SweepMethod::Ridge) {
                    double best_val = INFINITY, best_lambda = ridge0;
                    for (double f : factors) {
                        const double lam = ridge0 * f;
                        const double v = fit_ridge(train, lam, val).test_error;
                        if (v < best_val) best_val = v, best_lambda = lam;
                    }
                    best = fit_ridge(train, best_lambda, test);
                } else {
                    std::vector<double> lambdas;
                    for (double f : factors) lambdas.push_back(2.0 * (kernel0 + kernel_scale * f));
                    std::vector<std::vector<Eigen::VectorXd>> preds;
                    KernelOptions kopt;
                    kopt.max_n = opt.max_n;
                    const KernelPath path = kernel_path(train, opt.kernel, lambdas, {&val, &test}, preds, kopt);
                    std::size_t arg = 0;
                    double best_val = INFINITY;
                    for (std::size_t i = 0; i < lambdas.size(); ++i) {
                        const double v = (val.y - preds[0][i]).squaredNorm() / double(val.n);
                        if (v < best_val) best_val = v, arg = i;
                    }
                    best.method = "kernel:" + opt.kernel.name();
                    best.lambda = lambdas[arg];
                    best.n_train = n;
                    best.train_loss = path.train_loss[arg];
                    score_regression(best, preds[1][arg], test);
                }
                best.seed = seed;
                best.wallclock = seconds_since(t0);
                out.push_back(best);
            }
        }
    }
    return out;
}

std::vector<double> run_trials(int trials, const std::function<double(int)>& f, int workers) {
    std::vector<double> out(std::max(trials, 0));
    if (trials <= 0) return out;
    if (workers <= 0) workers = int(std::max(1u, std::thread::hardware_concurrency()));
    workers = std::min(workers, trials);
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(workers);
    auto body = [&](int id) {
        try {
            for (int i = next++; i < trials; i = next++) out[i] = f(i);
        } catch (...) {
            errors[id] = std::current_exception();
        }
    };
    if (workers == 1) {
        body(0);
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < workers; ++i) pool.emplace_back(body, i);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

MeanStd summarize(const std::vector<double>& values) {
    MeanStd s;
    s.count = long(values.size());
    if (values.empty()) return s;
    double mean = 0.0, m2 = 0.0;
    long n = 0;
    for (double v : values) {
        ++n;
        const double delta = v - mean;
        mean += delta / n;
        m2 += delta * (v - mean);
    }
    s.mean = mean;
    s.std_error = n > 1 ? std::sqrt(m2 / (n - 1) / n) : 0.0;
    return s;
}

}  // namespace dtl
