#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>

#include "csober/errors.hpp"
#include "csober/gp.hpp"
#include "csober/rng.hpp"

using namespace csober;

namespace {

Dataset sine_data(int count, double noise_sd, std::uint64_t seed) {
    Rng rng(seed);
    Dataset data;
    data.y.resize(count);
    for (int i = 0; i < count; ++i) {
        Eigen::VectorXd x(1);
        x(0) = rng.uniform(-2.0, 2.0);
        data.y(i) = std::sin(2.0 * x(0)) + 0.5 * x(0) + noise_sd * rng.normal();
        data.X.push_back(make_continuous(std::move(x)));
    }
    return data;
}

Dataset random_dataset(int count, int dims, std::uint64_t seed) {
    Rng rng(seed);
    Dataset data;
    data.y.resize(count);
    for (int i = 0; i < count; ++i) {
        Eigen::VectorXd x(dims);
        for (int d = 0; d < dims; ++d) x(d) = rng.uniform(-1.0, 1.0);
        data.y(i) = std::cos(x.sum()) + 0.3 * rng.normal();
        data.X.push_back(make_continuous(std::move(x)));
    }
    return data;
}

}  // namespace

TEST_CASE("noiseless fit interpolates the training values") {
    Rng rng(42);
    Dataset data;
    data.y.resize(10);
    for (int i = 0; i < 10; ++i) {  // well-separated smooth 1-d points
        Eigen::VectorXd x(1);
        x(0) = -2.0 + 0.45 * i + 0.05 * rng.uniform();
        data.y(i) = std::sin(0.8 * x(0)) + 0.3 * x(0);
        data.X.push_back(make_continuous(std::move(x)));
    }
    const GpPosterior gp = fit_gp(data, rbf_kernel(1, 0.5, 1.0), 1e-6);
    const GpMarginals m = predict_marginal(gp, std::span<const Point>(data.X));
    for (Eigen::Index i = 0; i < data.y.size(); ++i)
        CHECK(std::abs(m.mean(i) - data.y(i)) <= 1e-4);
}

TEST_CASE("predictive variance never exceeds the prior amplitude") {
    const Dataset data = sine_data(10, 0.1, 7);
    const GpPosterior gp = fit_gp(data, rbf_kernel(1, 0.5, 1.0), 1e-6);
    const std::vector<Point> queries = sine_data(50, 0.0, 99).X;
    const GpMarginals m = predict_marginal(gp, std::span<const Point>(queries));
    const double bound =
        gp.y_scale * gp.y_scale * (gp.kernel.outputscale + gp.noise_var) + 1e-9;
    for (Eigen::Index i = 0; i < m.var.size(); ++i) CHECK(m.var(i) <= bound);
}

TEST_CASE("log marginal likelihood gradient vanishes at the fitted optimum") {
    const Dataset data = sine_data(14, 0.05, 3);
    const GpPosterior gp = fit_gp(data, rbf_kernel(1, 0.5, 1.0), 1e-6, FitOptions{});
    const GpObjective objective(data, KernelSpec::Family::kRbf, 1e-6);

    Eigen::VectorXd theta(objective.parameter_count());
    theta(0) = std::log(gp.kernel.lengthscales(0));
    theta(1) = std::log(gp.kernel.outputscale);
    theta(2) = 0.5 * std::log(std::max(gp.noise_var - 1e-6, 1e-300));

    Eigen::VectorXd analytic(theta.size());
    objective.value(theta, &analytic);

    // symmetric finite differences
    const double h = 1e-5;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        Eigen::VectorXd lo = theta, hi = theta;
        lo(k) -= h;
        hi(k) += h;
        const double fd = (objective.value(hi) - objective.value(lo)) / (2.0 * h);
        CHECK(std::abs(analytic(k) - fd) <= 1e-4 * (1.0 + std::abs(fd)));
        CHECK(std::abs(analytic(k)) <= 1e-3);
    }
}

TEST_CASE("huge noise collapses the standardised mean to zero") {
    Dataset data = sine_data(15, 0.0, 5);
    const GpPosterior gp = condition_gp(data, rbf_kernel(1, 0.7, 1.0), 1e6);
    const std::vector<Point> queries = sine_data(30, 0.0, 55).X;
    const GpMarginals m = predict_marginal(gp, std::span<const Point>(queries));
    for (Eigen::Index i = 0; i < m.mean.size(); ++i)
        CHECK(std::abs((m.mean(i) - gp.y_shift) / gp.y_scale) <= 1e-2);
}

TEST_CASE("predict matches the dense-inverse oracle") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        Rng rng(seed * 31 + 1);
        const int n = 3 + static_cast<int>(rng.uniform_index(18));  // n <= 20
        const Dataset data = random_dataset(n, 2, seed + 100);
        const KernelSpec kernel = rbf_kernel(2, 0.8, 1.5);
        const double noise = 1e-4;
        const GpPosterior gp = condition_gp(data, kernel, noise, 0.0, 1.0);

        const std::vector<Point> queries = random_dataset(4, 2, seed + 500).X;
        const GpPrediction pred = predict(gp, std::span<const Point>(queries));

        // naive O(n^3) dense inverse with the same jitter
        Eigen::MatrixXd K = gram(kernel, data.X, data.X);
        K.diagonal().array() += noise + gp.applied_jitter;
        const Eigen::MatrixXd Kinv = K.inverse();
        const Eigen::MatrixXd Kq = gram(kernel, queries, data.X);
        const Eigen::VectorXd mean = Kq * Kinv * data.y;
        const Eigen::MatrixXd cov =
            gram(kernel, queries, queries) - Kq * Kinv * Kq.transpose();

        CHECK((pred.mean - mean).cwiseAbs().maxCoeff() <= 1e-8);
        CHECK((pred.cov - cov).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("posterior factor reproduces the shifted Gram matrix") {
    const Dataset data = sine_data(9, 0.02, 13);
    const GpPosterior gp = fit_gp(data, rbf_kernel(1, 0.5, 1.0), 1e-6);
    Eigen::MatrixXd K = gram(gp.kernel, gp.train.X, gp.train.X);
    K.diagonal().array() += gp.noise_var;
    const Eigen::MatrixXd rebuilt = gp.chol_lower * gp.chol_lower.transpose();
    CHECK((rebuilt - K).norm() / K.norm() <= 1e-6);
}

TEST_CASE("sample_posterior is seeded and matches its Monte-Carlo moments") {
    const Dataset data = sine_data(8, 0.1, 21);
    const GpPosterior gp = fit_gp(data, rbf_kernel(1, 0.5, 1.0), 1e-6);
    const Point query = make_continuous(Eigen::VectorXd::Constant(1, 0.37));
    const std::span<const Point> q(&query, 1);

    const int count = 10000;
    const Eigen::MatrixXd s1 = sample_posterior(gp, q, count, 77);
    const Eigen::MatrixXd s2 = sample_posterior(gp, q, count, 77);
    CHECK((s1 - s2).cwiseAbs().maxCoeff() == 0.0);

    const GpMarginals m = predict_marginal(gp, q);
    const double sd = std::sqrt(m.var(0));
    CHECK(std::abs(s1.col(0).mean() - m.mean(0)) <= 4.0 * sd / 100.0);
}

TEST_CASE("samples at a noiseless training point collapse to the mean") {
    Rng rng(33);
    Dataset data;
    data.y.resize(6);
    for (int i = 0; i < 6; ++i) {
        Eigen::VectorXd x(1);
        x(0) = -2.0 + 0.8 * i;
        data.y(i) = std::cos(x(0));
        data.X.push_back(make_continuous(std::move(x)));
    }
    const GpPosterior gp = condition_gp(data, rbf_kernel(1, 0.6, 1.0), 1e-10);
    const std::span<const Point> q(&data.X[2], 1);
    const Eigen::MatrixXd samples = sample_posterior(gp, q, 64, 5);
    const GpMarginals m = predict_marginal(gp, q);
    for (Eigen::Index s = 0; s < samples.rows(); ++s)
        CHECK(std::abs(samples(s, 0) - m.mean(0)) <= 1e-3);
}

TEST_CASE("fit_gp is deterministic for a fixed seed") {
    const Dataset data = sine_data(10, 0.05, 8);
    FitOptions opt;
    opt.seed = 1234;
    const GpPosterior a = fit_gp(data, rbf_kernel(1, 1.0, 1.0), 1e-6, opt);
    const GpPosterior b = fit_gp(data, rbf_kernel(1, 1.0, 1.0), 1e-6, opt);
    CHECK(a.kernel.lengthscales(0) == b.kernel.lengthscales(0));
    CHECK(a.kernel.outputscale == b.kernel.outputscale);
    CHECK(a.noise_var == b.noise_var);
    CHECK((a.alpha - b.alpha).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hallucination keeps the mean and shrinks the variance") {
    const Dataset data = sine_data(10, 0.0, 61);
    const GpPosterior gp = condition_gp(data, rbf_kernel(1, 0.7, 1.0), 1e-6);

    SUBCASE("existing training point leaves predictions unchanged") {
        const GpPosterior sharp = condition_gp(data, rbf_kernel(1, 0.7, 1.0), 1e-10);
        const std::span<const Point> at(&data.X[4], 1);
        const GpPosterior hal = hallucinate(sharp, at);
        const std::vector<Point> queries = sine_data(25, 0.0, 62).X;
        const GpMarginals before = predict_marginal(sharp, std::span<const Point>(queries));
        const GpMarginals after = predict_marginal(hal, std::span<const Point>(queries));
        CHECK((before.mean - after.mean).cwiseAbs().maxCoeff() <= 1e-6);
        CHECK((before.var - after.var).cwiseAbs().maxCoeff() <= 1e-6);
    }

    SUBCASE("variance at the hallucinated point drops") {
        const Point x = make_continuous(Eigen::VectorXd::Constant(1, 1.23));
        const std::span<const Point> at(&x, 1);
        const GpMarginals before = predict_marginal(gp, at);
        const GpPosterior hal = hallucinate(gp, at);
        const GpMarginals after = predict_marginal(hal, at);
        CHECK(after.mean(0) == doctest::Approx(before.mean(0)).epsilon(1e-9));
        CHECK(after.var(0) <= before.var(0) + 1e-12);
    }

    SUBCASE("far-away predictions are untouched") {
        Point x = make_continuous(Eigen::VectorXd::Constant(1, 0.0));
        const std::span<const Point> at(&x, 1);
        const GpPosterior hal = hallucinate(gp, at);
        // many lengthscales away
        const Point far = make_continuous(Eigen::VectorXd::Constant(1, 40.0));
        const std::span<const Point> fq(&far, 1);
        CHECK(std::abs(predict_marginal(hal, fq).mean(0) -
                       predict_marginal(gp, fq).mean(0)) <= 1e-3);
    }
}

TEST_CASE("fit requires at least two observations and recovers noise") {
    Dataset tiny;
    tiny.X.push_back(make_continuous(Eigen::VectorXd::Zero(1)));
    tiny.y = Eigen::VectorXd::Zero(1);
    CHECK_THROWS_AS(fit_gp(tiny, rbf_kernel(1, 1.0, 1.0), 1e-6), DomainError);

    const double noise_floor = 1e-6;
    const Dataset data = sine_data(60, 0.3, 18);
    const GpPosterior gp = fit_gp(data, rbf_kernel(1, 0.5, 1.0), noise_floor);
    CHECK(gp.noise_var >= noise_floor);
    // standardised noise variance should be clearly nonzero for noisy data
    CHECK(gp.noise_var > 1e-3);
}
