#include "csober/constraints.hpp"

#include <cmath>

#include "csober/errors.hpp"

namespace csober {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kDegenerateVar = 1e-12;

/// phi(u)/Phi(u), stable for large negative u via the Mills-ratio
/// asymptotic expansion.
double mills_inverse(double u) {
    if (u > -6.0) return normal_pdf(u) / normal_cdf(u);
    const double u2 = u * u;
    return -u / (1.0 - 1.0 / u2 + 3.0 / (u2 * u2));
}

double log_normal_cdf(double u) {
    if (u > -6.0) return std::log(normal_cdf(u));
    // log Phi(u) ~ log phi(u) - log(-u) for u << 0
    const double u2 = u * u;
    return -0.5 * u * u - 0.5 * std::log(2.0 * M_PI) - std::log(-u) +
           std::log1p(-1.0 / u2 + 3.0 / (u2 * u2));
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double rho_continuous(const GpPosterior& gp, const Point& x) {
    const GpMarginals m = predict_marginal(gp, std::span<const Point>(&x, 1));
    if (m.var(0) < kDegenerateVar) return m.mean(0) >= 0.0 ? 1.0 : 0.0;
    return normal_cdf(m.mean(0) / std::sqrt(m.var(0)));
}

Eigen::VectorXd rho_continuous_batch(const GpPosterior& gp, std::span<const Point> X) {
    const GpMarginals m = predict_marginal(gp, X);
    Eigen::VectorXd r(m.mean.size());
    for (Eigen::Index i = 0; i < r.size(); ++i)
        r(i) = m.var(i) < kDegenerateVar ? (m.mean(i) >= 0.0 ? 1.0 : 0.0)
                                         : normal_cdf(m.mean(i) / std::sqrt(m.var(i)));
    return r;
}

BinaryClassifier fit_gp_classifier(const std::vector<Point>& X, const Eigen::VectorXd& labels01,
                                   const KernelSpec& kernel) {
    const Eigen::Index n = labels01.size();
    if (static_cast<Eigen::Index>(X.size()) != n)
        throw DomainError("fit_gp_classifier: |X| != |labels|");
    for (Eigen::Index i = 0; i < n; ++i)
        if (labels01(i) != 0.0 && labels01(i) != 1.0)
            throw DomainError("fit_gp_classifier: labels must be in {0,1}");

    BinaryClassifier clf;
    clf.kernel = kernel;

    const double positives = labels01.sum();
    if (positives == 0.0 || positives == static_cast<double>(n)) {
        clf.constant_rate = (positives + 1.0) / (static_cast<double>(n) + 2.0);
        return clf;
    }

    clf.train = X;
    const Eigen::VectorXd y = 2.0 * labels01.array() - 1.0;  // {-1,+1}
    const Eigen::MatrixXd K = gram(kernel, X, X);

    // Newton iterations for the posterior mode (Laplace approximation)
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd d(n), w(n);
    double prev_obj = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (int iter = 0; iter < 100; ++iter) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double u = y(i) * f(i);
            const double r = mills_inverse(u);
            d(i) = y(i) * r;
            w(i) = r * (r + u);
            if (!(w(i) > 1e-12)) w(i) = 1e-12;
        }
        const Eigen::VectorXd sw = w.cwiseSqrt();
        Eigen::MatrixXd B = sw.asDiagonal() * K * sw.asDiagonal();
        B.diagonal().array() += 1.0;
        Eigen::LLT<Eigen::MatrixXd> llt(B);
        if (llt.info() != Eigen::Success)
            throw NumericalFailure("fit_gp_classifier: inner factorisation failed");
        const Eigen::VectorXd b = w.cwiseProduct(f) + d;
        a = b - sw.cwiseProduct(llt.solve(sw.cwiseProduct(K * b)));
        f = K * a;

        double obj = -0.5 * a.dot(f);
        for (Eigen::Index i = 0; i < n; ++i) obj += log_normal_cdf(y(i) * f(i));
        if (std::abs(obj - prev_obj) < 1e-10 * (1.0 + std::abs(obj))) break;
        prev_obj = obj;
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        const double u = y(i) * f(i);
        const double r = mills_inverse(u);
        d(i) = y(i) * r;
        w(i) = std::max(r * (r + u), 1e-12);
    }
    clf.sqrt_w = w.cwiseSqrt();
    Eigen::MatrixXd B = clf.sqrt_w.asDiagonal() * K * clf.sqrt_w.asDiagonal();
    B.diagonal().array() += 1.0;
    Eigen::LLT<Eigen::MatrixXd> llt(B);
    if (llt.info() != Eigen::Success)
        throw NumericalFailure("fit_gp_classifier: final factorisation failed");
    clf.chol_b = llt.matrixL();
    clf.loglik_grad = d;
    return clf;
}

namespace {

void classifier_latent_terms(const BinaryClassifier& clf, std::span<const Point> X,
                             Eigen::VectorXd& mean, Eigen::MatrixXd& v) {
    const Eigen::MatrixXd Kq = gram(clf.kernel, std::span<const Point>(clf.train), X);
    mean = Kq.transpose() * clf.loglik_grad;
    v = clf.chol_b.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd(clf.sqrt_w.asDiagonal() * Kq));
}

}  // namespace

double classifier_rho(const BinaryClassifier& clf, const Point& x) {
    if (clf.constant_rate >= 0.0) return clf.constant_rate;
    Eigen::VectorXd mean;
    Eigen::MatrixXd v;
    classifier_latent_terms(clf, std::span<const Point>(&x, 1), mean, v);
    const double var =
        std::max(kernel_eval(clf.kernel, x, x) - v.col(0).squaredNorm(), 0.0);
    return normal_cdf(mean(0) / std::sqrt(1.0 + var));
}

Eigen::VectorXd classifier_rho_batch(const BinaryClassifier& clf, std::span<const Point> X) {
    const Eigen::Index q = static_cast<Eigen::Index>(X.size());
    if (clf.constant_rate >= 0.0) return Eigen::VectorXd::Constant(q, clf.constant_rate);
    Eigen::VectorXd mean;
    Eigen::MatrixXd v;
    classifier_latent_terms(clf, X, mean, v);
    const Eigen::VectorXd kdiag = gram_diagonal(clf.kernel, X);
    Eigen::VectorXd out(q);
    for (Eigen::Index i = 0; i < q; ++i) {
        const double var = std::max(kdiag(i) - v.col(i).squaredNorm(), 0.0);
        out(i) = normal_cdf(mean(i) / std::sqrt(1.0 + var));
    }
    return out;
}

GpPrediction classifier_latent_joint(const BinaryClassifier& clf, std::span<const Point> X) {
    if (clf.constant_rate >= 0.0)
        throw DomainError("classifier_latent_joint: constant fallback has no latent GP");
    GpPrediction pred;
    Eigen::MatrixXd v;
    classifier_latent_terms(clf, X, pred.mean, v);
    pred.cov = gram(clf.kernel, X, X) - v.transpose() * v;
    for (Eigen::Index i = 0; i < pred.cov.rows(); ++i)
        pred.cov(i, i) = std::max(pred.cov(i, i), 0.0);
    return pred;
}

ConstraintModel continuous_constraint(std::shared_ptr<const GpPosterior> gp, double threshold,
                                      bool coupled, bool ordered) {
    ConstraintModel cm;
    cm.flavour = ConstraintModel::Flavour::kContinuousSurrogate;
    cm.surrogate = std::move(gp);
    cm.threshold = threshold;
    cm.coupled = coupled;
    cm.ordered = ordered;
    return cm;
}

KernelSpec default_classifier_kernel(const std::vector<Point>& X) {
    const Eigen::MatrixXd C = coords_matrix(std::span<const Point>(X));
    Eigen::VectorXd ls(C.rows());
    for (Eigen::Index d = 0; d < C.rows(); ++d) {
        const double range = C.row(d).maxCoeff() - C.row(d).minCoeff();
        ls(d) = std::max(0.75 * range, 1e-2);
    }
    return rbf_kernel(std::move(ls), 4.0);
}

ConstraintModel fit_binary_constraint(const Dataset& data) {
    return fit_binary_constraint(data, default_classifier_kernel(data.X));
}

ConstraintModel fit_binary_constraint(const Dataset& data, const KernelSpec& kernel,
                                      double threshold, bool coupled, bool ordered) {
    ConstraintModel cm;
    cm.flavour = ConstraintModel::Flavour::kBinarySurrogate;
    cm.classifier = std::make_shared<BinaryClassifier>(fit_gp_classifier(data.X, data.y, kernel));
    cm.threshold = threshold;
    cm.coupled = coupled;
    cm.ordered = ordered;
    return cm;
}

ConstraintModel cheap_constraint(std::function<bool(const Point&)> oracle, double threshold,
                                 bool coupled, bool ordered) {
    ConstraintModel cm;
    cm.flavour = ConstraintModel::Flavour::kCheapOracle;
    cm.oracle = std::move(oracle);
    cm.threshold = threshold;
    cm.coupled = coupled;
    cm.ordered = ordered;
    return cm;
}

double rho(const ConstraintModel& cm, const Point& x) {
    switch (cm.flavour) {
        case ConstraintModel::Flavour::kContinuousSurrogate:
            return rho_continuous(*cm.surrogate, x);
        case ConstraintModel::Flavour::kBinarySurrogate:
            return classifier_rho(*cm.classifier, x);
        case ConstraintModel::Flavour::kCheapOracle:
            if (!cm.oracle) throw OracleError("rho: cheap constraint without an oracle");
            return cm.oracle(x) ? 1.0 : 0.0;
    }
    throw DomainError("rho: unknown constraint flavour");
}

Eigen::VectorXd rho_batch(const ConstraintModel& cm, std::span<const Point> X) {
    switch (cm.flavour) {
        case ConstraintModel::Flavour::kContinuousSurrogate:
            return rho_continuous_batch(*cm.surrogate, X);
        case ConstraintModel::Flavour::kBinarySurrogate:
            return classifier_rho_batch(*cm.classifier, X);
        case ConstraintModel::Flavour::kCheapOracle: {
            if (!cm.oracle) throw OracleError("rho_batch: cheap constraint without an oracle");
            Eigen::VectorXd out(static_cast<Eigen::Index>(X.size()));
            for (std::size_t i = 0; i < X.size(); ++i)
                out(static_cast<Eigen::Index>(i)) = cm.oracle(X[i]) ? 1.0 : 0.0;
            return out;
        }
    }
    throw DomainError("rho_batch: unknown constraint flavour");
}

}  // namespace csober
