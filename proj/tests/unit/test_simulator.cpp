#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "dtl/error.hpp"
#include "dtl/network.hpp"
#include "dtl/simulator.hpp"
#include "dtl/theory.hpp"

using namespace dtl;

namespace {

NetworkSpec linear_target(double noise) {
    NetworkSpec s = NetworkSpec::uniform(1, Activation::identity());
    s.noise_var = noise;
    return s;
}

Dataset toy(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Dataset d;
    d.X = X;
    d.y = y;
    d.d = int(X.cols());
    d.n = X.rows();
    return d;
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("target weights have the requested variance and are reproducible") {
    NetworkSpec s = NetworkSpec::uniform(2, Activation::tanh_scale(2), 1.5);
    s.weight_vars = {2.0, 0.5};
    s.readout_var = 3.0;
    const WeightSet w = sample_target(s, 200, 11);
    CHECK(w.layers[0].rows() == 300);
    CHECK(w.layers[0].cols() == 200);
    CHECK(w.layers[1].rows() == 300);
    CHECK(w.width(0) == 200);
    CHECK(w.layers[0].squaredNorm() / double(w.layers[0].size()) == doctest::Approx(2.0).epsilon(0.02));
    CHECK(w.layers[1].squaredNorm() / double(w.layers[1].size()) == doctest::Approx(0.5).epsilon(0.02));
    CHECK(w.readout.squaredNorm() / 300.0 == doctest::Approx(3.0).epsilon(0.3));
    const WeightSet again = sample_target(s, 200, 11);
    CHECK(again.layers[1] == w.layers[1]);
    CHECK(again.readout == w.readout);
    CHECK(sample_target(s, 200, 12).layers[0] != w.layers[0]);
}

TEST_CASE("linear target labels are exact") {
    NetworkSpec s = NetworkSpec::uniform(2, Activation::identity(), 0.5);
    const WeightSet w = sample_target(s, 40, 3);
    const Dataset data = generate(s, w, 25, Task::Regression, 4);
    const Eigen::VectorXd ref =
        data.X * w.layers[0].transpose() * w.layers[1].transpose() * w.readout / (std::sqrt(40.0) * std::sqrt(20.0) * std::sqrt(20.0));
    CHECK((data.y - ref).cwiseAbs().maxCoeff() < 1e-12);
    const Dataset tail = generate(s, w, 5, Task::Regression, 4, 20);
    CHECK((tail.X - data.X.bottomRows(5)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("label variance matches the theory total variance") {
    NetworkSpec s = NetworkSpec::uniform(2, Activation::tanh_scale(2), 1.4);
    s.noise_var = 0.1;
    const double T = propagate(s).total_variance();
    double acc = 0.0;
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const Dataset data = generate(s, sample_target(s, 400, seed), 20000, Task::Regression, seed);
        acc += data.y.squaredNorm() / double(data.n);
    }
    CHECK(acc / 4 == doctest::Approx(T).epsilon(0.1));
}

TEST_CASE("classification labels are balanced signs") {
    const NetworkSpec s = NetworkSpec::uniform(2, Activation::sign());
    const Dataset data = generate(s, sample_target(s, 100, 1), 40000, Task::Classification, 2);
    CHECK((data.y.array().abs() == 1.0).all());
    CHECK(std::abs(data.y.mean()) < 5.0 / std::sqrt(40000.0));
}

TEST_CASE("ridge on a single sample is a rank-one update") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> n01;
    Eigen::MatrixXd X(1, 30);
    for (int j = 0; j < 30; ++j) X(0, j) = n01(gen);
    const double y = 0.7, lambda = 0.3, d = 30.0;
    const Eigen::VectorXd w = ridge_weights(toy(X, Eigen::VectorXd::Constant(1, y)), lambda);
    const Eigen::VectorXd ref = X.row(0).transpose() * (2.0 * y / std::sqrt(d)) / (lambda + 2.0 * X.squaredNorm() / d);
    CHECK((w - ref).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ridge weights are stationary and vanish under heavy penalty") {
    const NetworkSpec s = linear_target(0.2);
    const WeightSet wt = sample_target(s, 50, 7);
    const Dataset train = generate(s, wt, 120, Task::Regression, 8);
    const Dataset test = generate(s, wt, 4000, Task::Regression, 9);
    const double lambda = 0.8, sd = std::sqrt(50.0);
    const Eigen::VectorXd w = ridge_weights(train, lambda);
    const Eigen::VectorXd grad = -2.0 / sd * train.X.transpose() * (train.y - train.X * w / sd) + lambda * w;
    CHECK(grad.lpNorm<Eigen::Infinity>() < 1e-9);
    const ErmResult big = fit_ridge(train, 1e8, test);
    CHECK(big.test_error == doctest::Approx(test.y.squaredNorm() / double(test.n)).epsilon(1e-5));
    CHECK(big.n_train == 120);
    CHECK(big.n_test == 4000);
    CHECK(big.test_std_error > 0);
}

TEST_CASE("ridge on a linear target agrees with the theory curve") {
    const NetworkSpec s = linear_target(0.25);
    const double alpha = 2.0, lambda = 0.25;
    const int d = 500;
    std::vector<double> gaps;
    double theory_mean = 0.0;
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const WeightSet w = sample_target(s, d, seed);
        // theory at the realised teacher norm
        NetworkSpec realised = s;
        realised.readout_var = (w.layers[0].transpose() * w.readout).squaredNorm() / (double(d) * d);
        const double theory = ridge_regression(propagate(realised), s.input_spectrum, alpha, lambda).error;
        const Dataset train = generate(s, w, long(alpha * d), Task::Regression, seed);
        const Dataset test = generate(s, w, 10000, Task::Regression, seed, 1ull << 40);
        gaps.push_back(fit_ridge(train, 2.0 * lambda, test).test_error - theory);
        theory_mean += theory / 12;
    }
    const MeanStd m = summarize(gaps);
    CHECK(std::abs(m.mean) < 3.0 * m.std_error + 0.01 * theory_mean);
}

TEST_CASE("linear NNGP kernel reproduces ridge") {
    const NetworkSpec s = linear_target(0.1);
    const WeightSet w = sample_target(s, 30, 2);
    const Dataset train = generate(s, w, 80, Task::Regression, 3);
    const Dataset test = generate(s, w, 500, Task::Regression, 4);
    const KernelSpec k = nngp_kernel(Activation::identity(), 1.0);
    CHECK((gram(k, train.X, test.X) - train.X * test.X.transpose() / 30.0).cwiseAbs().maxCoeff() < 1e-12);
    const ErmResult a = fit_kernel(train, k, 0.4, test);
    const ErmResult b = fit_ridge(train, 0.4, test);
    CHECK(a.test_error == doctest::Approx(b.test_error).epsilon(1e-9));
    const auto path = fit_kernel_path(train, k, {0.4, 4.0}, test);
    CHECK(path[0].test_error == doctest::Approx(a.test_error).epsilon(1e-12));
    CHECK(path[1].test_error == doctest::Approx(fit_ridge(train, 4.0, test).test_error).epsilon(1e-9));
}

TEST_CASE("identity random features with F = I reproduce ridge") {
    const NetworkSpec s = linear_target(0.1);
    const WeightSet w = sample_target(s, 25, 2);
    const Dataset test = generate(s, w, 300, Task::Regression, 4);
    for (long n : {10L, 60L}) {
        const Dataset train = generate(s, w, n, Task::Regression, 3);
        const ErmResult rf = fit_random_features(train, 25, Activation::identity(), 1.0, 0.3, 0, test,
                                                 Eigen::MatrixXd::Identity(25, 25));
        CHECK(rf.test_error == doctest::Approx(fit_ridge(train, 0.3 * 25, test).test_error).epsilon(1e-9));
    }
}

TEST_CASE("closed-form kernels match Monte Carlo feature averages") {
    std::mt19937_64 gen(17);
    std::normal_distribution<double> n01;
    const double n1 = 1.3, n2 = 0.7, c = 0.4;
    // (u, v) with variances n1, n2 and covariance c
    const double l11 = std::sqrt(n1), l21 = c / l11, l22 = std::sqrt(n2 - l21 * l21);
    const int N = 2000000;
    double relu = 0, sgn = 0, erf1 = 0, tanh2 = 0;
    for (int i = 0; i < N; ++i) {
        const double g1 = n01(gen), g2 = n01(gen);
        const double u = l11 * g1, v = l21 * g1 + l22 * g2;
        relu += std::max(u, 0.0) * std::max(v, 0.0);
        sgn += (u >= 0 ? 1.0 : -1.0) * (v >= 0 ? 1.0 : -1.0);
        erf1 += std::erf(u) * std::erf(v);
        tanh2 += std::tanh(2 * u) * std::tanh(2 * v);
    }
    KernelSpec k;
    const double tol = 5.0 / std::sqrt(double(N));
    k.kind = KernelKind::ArcCosine1;
    CHECK(std::abs(k(n1, n2, c) - relu / N) < tol);
    k.kind = KernelKind::ArcCosine0;
    CHECK(std::abs(k(n1, n2, c) - sgn / N) < tol);
    k.kind = KernelKind::ArcSine;
    CHECK(std::abs(k(n1, n2, c) - erf1 / N) < tol);
    CHECK(std::abs(nngp_kernel(Activation::tanh_scale(2), 1.0)(n1, n2, c) - tanh2 / N) < tol);
    CHECK(nngp_kernel(Activation::sign(), 2.0)(n1, n2, c) == doctest::Approx(sgn / N).epsilon(0.01));
}

TEST_CASE("logistic regression") {
    SUBCASE("separable data is classified perfectly") {
        Eigen::MatrixXd X(4, 2);
        X << 2, 0.1, 1.5, -0.3, -1.8, 0.2, -2.2, -0.1;
        const Eigen::VectorXd y = (Eigen::VectorXd(4) << 1, 1, -1, -1).finished();
        Eigen::VectorXd w;
        const ErmResult r = fit_logistic(toy(X, y), 0.01, toy(X, y), &w);
        CHECK(r.test_error == 0.0);
        CHECK(w(0) > 0);
    }
    SUBCASE("flipping the labels negates the weights") {
        const NetworkSpec s = NetworkSpec::uniform(1, Activation::sign());
        const WeightSet wt = sample_target(s, 40, 1);
        Dataset train = generate(s, wt, 150, Task::Classification, 2);
        Eigen::VectorXd w1, w2;
        fit_logistic(train, 0.5, train, &w1);
        const double sd = std::sqrt(40.0);
        Eigen::VectorXd grad = 0.5 * w1;
        for (long i = 0; i < train.n; ++i) {
            const double t = train.y(i) * train.X.row(i).dot(w1) / sd;
            grad -= train.y(i) * train.X.row(i).transpose() / sd / (1.0 + std::exp(t));
        }
        CHECK(grad.lpNorm<Eigen::Infinity>() < 1e-8);
        train.y = -train.y;
        fit_logistic(train, 0.5, train, &w2);
        CHECK((w1 + w2).cwiseAbs().maxCoeff() < 1e-8);
    }
    CHECK_THROWS_AS(fit_logistic(toy(Eigen::MatrixXd::Ones(2, 2), Eigen::VectorXd::Ones(2)), 0.0,
                                 toy(Eigen::MatrixXd::Ones(2, 2), Eigen::VectorXd::Ones(2))),
                    DomainError);
}

TEST_CASE("ridge classification fits the half square loss") {
    const NetworkSpec s = NetworkSpec::uniform(1, Activation::sign());
    const WeightSet wt = sample_target(s, 40, 1);
    const Dataset train = generate(s, wt, 100, Task::Classification, 2);
    const Dataset test = generate(s, wt, 2000, Task::Classification, 3);
    const ErmResult r = fit_ridge_classification(train, 0.7, test);
    const Eigen::VectorXd w = ridge_weights(train, 1.4);
    const double sd = std::sqrt(40.0);
    long wrong = 0;
    for (long i = 0; i < test.n; ++i) wrong += ((test.X.row(i).dot(w) >= 0) ? 1.0 : -1.0) != test.y(i);
    CHECK(r.test_error == doctest::Approx(double(wrong) / test.n));
    CHECK(r.train_loss == doctest::Approx(0.5 * (train.y - train.X * w / sd).squaredNorm() + 0.35 * w.squaredNorm()));
}

TEST_CASE("run_trials is ordered and deterministic") {
    auto f = [](int i) { return double(i * i) + 0.5; };
    const auto a = run_trials(17, f, 1);
    const auto b = run_trials(17, f, 4);
    CHECK(a == b);
    CHECK(a[16] == 256.5);
    CHECK(run_trials(0, f).empty());
    CHECK_THROWS_AS(run_trials(5, [](int i) -> double { if (i == 3) throw std::runtime_error("boom"); return 0.0; }, 2),
                    std::runtime_error);
}

TEST_CASE("summarize") {
    const MeanStd m = summarize({1.0, 2.0, 3.0, 4.0});
    CHECK(m.mean == doctest::Approx(2.5));
    CHECK(m.std_error == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)));
    CHECK(m.count == 4);
    CHECK(summarize({}).count == 0);
}

TEST_CASE("quadratic sweep on a linear target reaches the noise floor") {
    const NetworkSpec s = linear_target(0.3);
    SweepOptions opt;
    opt.n_test = 4000;
    opt.kernel.kind = KernelKind::ArcCosine1;
    const auto res = quadratic_regime_sweep(s, 20, {3.0}, {SweepMethod::Ridge}, {1, 2}, opt);
    REQUIRE(res.size() == 2);
    for (const auto& r : res) {
        CHECK(r.n_train == 1200);
        CHECK(r.test_error == doctest::Approx(0.3 * (1.0 + 20.0 / 1200.0)).epsilon(0.1));
    }
    CHECK_THROWS_AS(quadratic_regime_sweep(s, 65, {1.0}, {SweepMethod::Ridge}, {1}, opt), ConfigError);
}

TEST_CASE("series Gram matrix matches pointwise quadrature") {
    const NetworkSpec s = linear_target(0.0);
    const WeightSet w = sample_target(s, 40, 1);
    const Dataset a = generate(s, w, 30, Task::Regression, 2);
    Dataset b = generate(s, w, 20, Task::Regression, 3);
    b.X.row(0) = a.X.row(0) * 1.1;
    b.X.row(1) = -0.8 * a.X.row(1) + 0.1 * a.X.row(2);
    const KernelSpec k = nngp_kernel(Activation::tanh_scale(2), 1.3);
    KernelSpec reference = k;
    reference.quadrature_order = 600;
    const Eigen::MatrixXd G = gram(k, a.X, b.X);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < G.rows(); ++i)
        for (Eigen::Index j = 0; j < G.cols(); ++j)
            worst = std::max(worst, std::abs(G(i, j) - reference(a.X.row(i).squaredNorm() / 40, b.X.row(j).squaredNorm() / 40,
                                                                 a.X.row(i).dot(b.X.row(j)) / 40)));
    CHECK(worst < 1e-7);
}

TEST_CASE("kernel regression accepts negative regularization") {
    const NetworkSpec s = NetworkSpec::uniform(1, Activation::tanh_scale(2), 1.4);
    const WeightSet w = sample_target(s, 200, 4);
    const Dataset train = generate(s, w, 400, Task::Regression, 5);
    const Dataset test = generate(s, w, 4000, Task::Regression, 6);
    const GepProfile p = propagate(s);
    const double lam = optimal_lambda_kernel(p, 1.0, Activation::sign());
    REQUIRE(lam < 0);
    KernelSpec k;
    k.kind = KernelKind::ArcCosine0;
    const ErmResult r = fit_kernel(train, k, 2.0 * lam, test);
    CHECK(std::isfinite(r.test_error));
    CHECK(r.test_error < fit_kernel(train, k, 1.0, test).test_error);
    CHECK_THROWS_AS(fit_kernel(train, k, -4.0, test), DomainError);
}

TEST_CASE("resource and domain guards") {
    const NetworkSpec s = linear_target(0.1);
    const WeightSet w = sample_target(s, 10, 1);
    const Dataset train = generate(s, w, 50, Task::Regression, 2);
    KernelOptions opt;
    opt.max_n = 10;
    CHECK_THROWS_AS(fit_kernel(train, KernelSpec{}, 1.0, train, opt), ResourceError);
    CHECK_THROWS_AS(fit_random_features(train, 0, Activation::sign(), 1.0, 1.0, 0, train), DomainError);
    CHECK_THROWS_AS(fit_random_features(train, 5, Activation::sign(), 1.0, 1.0, 0, train, Eigen::MatrixXd::Ones(5, 3)),
                    ModelError);
    CHECK_THROWS_AS(generate(s, w, 0, Task::Regression, 1), DomainError);
}

}
