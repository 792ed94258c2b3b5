#include "csober/measure.hpp"

#include <cmath>

#include "csober/errors.hpp"
#include "csober/rng.hpp"

namespace csober {

namespace {

constexpr double kDegenerateVar = 1e-12;
constexpr double kVanishingMass = 1e-300;

double improvement_prob(double mean, double var, double eta) {
    if (var < kDegenerateVar) return mean >= eta ? 1.0 : 0.0;
    return normal_cdf((mean - eta) / std::sqrt(var));
}

}  // namespace

double lfi_term(const PiDensity& pd, const Point& x) {
    const GpMarginals m = predict_marginal(*pd.objective, std::span<const Point>(&x, 1));
    return improvement_prob(m.mean(0), m.var(0), pd.eta);
}

Eigen::VectorXd lfi_batch(const PiDensity& pd, std::span<const Point> X) {
    const GpMarginals m = predict_marginal(*pd.objective, X);
    Eigen::VectorXd out(m.mean.size());
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out(i) = improvement_prob(m.mean(i), m.var(i), pd.eta);
    return out;
}

double pi_density(const PiDensity& pd, const Point& x) {
    double value = lfi_term(pd, x);
    for (const ConstraintModel& cm : pd.constraints) {
        if (value == 0.0) break;
        value *= std::max(rho(cm, x) - cm.threshold, 0.0);
    }
    return value;
}

Eigen::VectorXd pi_density_batch(const PiDensity& pd, std::span<const Point> X) {
    Eigen::VectorXd value = lfi_batch(pd, X);
    for (const ConstraintModel& cm : pd.constraints)
        value.array() *= (rho_batch(cm, X).array() - cm.threshold).max(0.0);
    return value;
}

double estimate_eta(const PiDensity& pd, std::span<const Point> pool) {
    if (pool.empty()) throw DomainError("estimate_eta: pool must be nonempty");
    double eta = predict_marginal(*pd.objective, pool).mean.maxCoeff();
    if (!pd.objective->train.X.empty()) {
        const double obs_max =
            predict_marginal(*pd.objective, std::span<const Point>(pd.objective->train.X))
                .mean.maxCoeff();
        eta = std::max(eta, obs_max);
    }
    return eta;
}

EmpiricalMeasure build_measure(const PiDensity& pd, std::vector<Point> candidates) {
    if (candidates.empty()) throw DomainError("build_measure: candidates must be nonempty");
    const std::span<const Point> view(candidates);
    Eigen::VectorXd w = pi_density_batch(pd, view);
    if (!(w.sum() > kVanishingMass)) w = lfi_batch(pd, view);
    if (!(w.sum() > kVanishingMass))
        w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(candidates.size()));
    w /= w.sum();
    return EmpiricalMeasure{std::move(candidates), std::move(w)};
}

std::vector<Point> deweighted_resample(const EmpiricalMeasure& m, int count, std::uint64_t seed) {
    if (count < 1) throw DomainError("deweighted_resample: count must be >= 1");
    std::vector<Eigen::Index> support;
    for (Eigen::Index i = 0; i < m.size(); ++i)
        if (m.weights(i) > 0.0) support.push_back(i);
    if (support.empty()) throw DegenerateMeasure("deweighted_resample: all weights are zero");

    Eigen::VectorXd cdf(static_cast<Eigen::Index>(support.size()));
    double acc = 0.0;
    for (std::size_t k = 0; k < support.size(); ++k) {
        acc += 1.0 / m.weights(support[k]);
        cdf(static_cast<Eigen::Index>(k)) = acc;
    }

    Rng rng(split_seed(seed, 0x6e7cu));
    std::vector<Point> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int s = 0; s < count; ++s) {
        const double u = rng.uniform() * acc;
        // first index with cdf >= u
        Eigen::Index lo = 0, hi = cdf.size() - 1;
        while (lo < hi) {
            const Eigen::Index mid = (lo + hi) / 2;
            if (cdf(mid) >= u)
                hi = mid;
            else
                lo = mid + 1;
        }
        out.push_back(m.points[static_cast<std::size_t>(support[static_cast<std::size_t>(lo)])]);
    }
    return out;
}

double rejection_rate(const EmpiricalMeasure& m, std::span<const ConstraintModel> constraints) {
    if (constraints.empty()) return 0.0;
    Eigen::VectorXd q = Eigen::VectorXd::Ones(m.size());
    const std::span<const Point> view(m.points);
    for (const ConstraintModel& cm : constraints) q.array() *= rho_batch(cm, view).array();
    const double rate = 1.0 - m.weights.dot(q);
    return std::min(std::max(rate, 0.0), 1.0);
}

ShrinkageStats shrinkage_stats(const EmpiricalMeasure& m, const Point* x_star) {
    ShrinkageStats out;
    const Eigen::MatrixXd X = coords_matrix(std::span<const Point>(m.points));
    out.mean = X * m.weights;
    double var = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i)
        var += m.weights(i) * (X.col(i) - out.mean).squaredNorm();
    out.variance = var;
    if (x_star != nullptr) out.mean_distance = (coords(*x_star) - out.mean).norm();
    return out;
}

}  // namespace csober
