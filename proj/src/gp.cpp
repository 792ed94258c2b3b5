#include "csober/gp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "csober/errors.hpp"
#include "csober/rng.hpp"

namespace csober {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

/// Cholesky of K + ridge*I. The jitter ladder starts at zero so noiseless
/// fits stay interpolating; on failure it escalates from 1e-6*outputscale
/// to 1e-2*outputscale. Returns the applied jitter, negative when the
/// ladder is exhausted.
double jittered_cholesky(const Eigen::MatrixXd& K, double ridge, double outputscale,
                         Eigen::MatrixXd& lower) {
    double jitter = 0.0;
    const double max_jitter = 1e-2 * outputscale;
    while (jitter <= max_jitter * (1.0 + 1e-12)) {
        Eigen::MatrixXd A = K;
        A.diagonal().array() += ridge + jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() == Eigen::Success) {
            lower = llt.matrixL();
            return jitter;
        }
        jitter = jitter == 0.0 ? kGramJitterScale * outputscale : jitter * 10.0;
    }
    return -1.0;
}

Eigen::MatrixXd rbf_gram_from_coords(const Eigen::MatrixXd& coords,
                                     const Eigen::VectorXd& lengthscales, double outputscale) {
    Eigen::MatrixXd A = coords;
    A.array().colwise() *= lengthscales.cwiseInverse().array();
    const Eigen::VectorXd sq = A.colwise().squaredNorm();
    Eigen::MatrixXd D = -2.0 * A.transpose() * A;
    D.colwise() += sq;
    D.rowwise() += sq.transpose();
    return outputscale * (-0.5 * D.cwiseMax(0.0)).array().exp().matrix();
}

Eigen::MatrixXd tanimoto_gram_from_coords(const Eigen::MatrixXd& coords, double outputscale) {
    const Eigen::VectorXd sq = coords.colwise().squaredNorm();
    const Eigen::MatrixXd inner = coords.transpose() * coords;
    Eigen::MatrixXd denom(inner.rows(), inner.cols());
    denom.colwise() = sq;
    denom.rowwise() += sq.transpose();
    denom -= inner;
    if ((denom.array() <= 0.0).any())
        throw DegenerateInput("tanimoto gram: zero feature vectors");
    return outputscale * inner.cwiseQuotient(denom);
}

struct LbfgsResult {
    Eigen::VectorXd x;
    double fx = std::numeric_limits<double>::infinity();
    Eigen::VectorXd grad;
    int iterations = 0;
};

/// Minimal L-BFGS with Armijo backtracking; minimises fn.
LbfgsResult lbfgs_minimize(const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>& fn,
                           Eigen::VectorXd x0, int max_iterations, double gradient_tol) {
    constexpr int kMemory = 8;
    constexpr double kArmijo = 1e-4;
    const Eigen::Index n = x0.size();

    LbfgsResult res;
    res.x = std::move(x0);
    res.grad.resize(n);
    res.fx = fn(res.x, res.grad);
    if (!std::isfinite(res.fx)) return res;

    std::vector<Eigen::VectorXd> s_hist, y_hist;
    std::vector<double> rho_hist;

    for (int iter = 0; iter < max_iterations; ++iter) {
        res.iterations = iter;
        if (res.grad.lpNorm<Eigen::Infinity>() <= gradient_tol) break;

        // two-loop recursion
        Eigen::VectorXd q = res.grad;
        const int m = static_cast<int>(s_hist.size());
        std::vector<double> a(m);
        for (int i = m - 1; i >= 0; --i) {
            a[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= a[i] * y_hist[i];
        }
        if (m > 0) {
            const double gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= gamma;
        }
        for (int i = 0; i < m; ++i) {
            const double b = rho_hist[i] * y_hist[i].dot(q);
            q += (a[i] - b) * s_hist[i];
        }
        Eigen::VectorXd dir = -q;
        double dg = dir.dot(res.grad);
        if (dg >= 0.0) {  // not a descent direction, restart from steepest descent
            dir = -res.grad;
            dg = -res.grad.squaredNorm();
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        double step = (m == 0) ? std::min(1.0, 1.0 / std::max(1e-12, res.grad.norm())) : 1.0;
        Eigen::VectorXd x_new(n), g_new(n);
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            x_new = res.x + step * dir;
            f_new = fn(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= res.fx + kArmijo * step * dg) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        Eigen::VectorXd s = x_new - res.x;
        Eigen::VectorXd yv = g_new - res.grad;
        const double sy = s.dot(yv);
        if (sy > 1e-12 * s.norm() * yv.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yv));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > kMemory) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
        }
        res.x = std::move(x_new);
        res.grad = g_new;
        const double improvement = res.fx - f_new;
        res.fx = f_new;
        if (improvement < 1e-12 * (std::abs(res.fx) + 1.0)) break;
    }
    return res;
}

void standardisation_moments(const Eigen::VectorXd& y, double& shift, double& scale) {
    shift = y.mean();
    const double var = (y.array() - shift).square().mean();
    scale = std::sqrt(var);
    if (!(scale > 1e-12)) scale = 1.0;
}

}  // namespace

GpPosterior condition_gp(Dataset data, KernelSpec kernel, double noise_var, double y_shift,
                         double y_scale) {
    if (data.size() < 2) throw DomainError("condition_gp: need at least 2 observations");
    if (static_cast<Eigen::Index>(data.X.size()) != data.y.size())
        throw DomainError("condition_gp: |X| != |y|");

    GpPosterior gp;
    gp.kernel = std::move(kernel);
    gp.noise_var = noise_var;
    gp.y_shift = y_shift;
    gp.y_scale = y_scale;

    const Eigen::MatrixXd K = gram(gp.kernel, data.X, data.X);
    gp.applied_jitter = jittered_cholesky(K, noise_var, gp.kernel.outputscale, gp.chol_lower);
    if (gp.applied_jitter < 0.0)
        throw NumericalFailure("condition_gp: Gram factorisation failed after jitter escalation");

    const Eigen::VectorXd z = (data.y.array() - y_shift) / y_scale;
    gp.alpha = gp.chol_lower.triangularView<Eigen::Lower>().solve(z);
    gp.chol_lower.triangularView<Eigen::Lower>().transpose().solveInPlace(gp.alpha);
    gp.train = std::move(data);
    return gp;
}

GpPosterior condition_gp(Dataset data, KernelSpec kernel, double noise_var) {
    double shift, scale;
    standardisation_moments(data.y, shift, scale);
    return condition_gp(std::move(data), std::move(kernel), noise_var, shift, scale);
}

GpObjective::GpObjective(const Dataset& data, KernelSpec::Family family, double noise_floor)
    : family_(family), noise_floor_(noise_floor) {
    if (data.size() < 2) throw DomainError("GpObjective: need at least 2 observations");
    coords_ = coords_matrix(std::span<const Point>(data.X));
    standardisation_moments(data.y, y_shift_, y_scale_);
    z_ = (data.y.array() - y_shift_) / y_scale_;
    if (family_ == KernelSpec::Family::kRbf) {
        const Eigen::Index n = coords_.cols();
        sq_diffs_.reserve(static_cast<std::size_t>(coords_.rows()));
        for (Eigen::Index d = 0; d < coords_.rows(); ++d) {
            const Eigen::VectorXd xd = coords_.row(d);
            const Eigen::MatrixXd diff = xd.replicate(1, n) - xd.transpose().replicate(n, 1);
            sq_diffs_.push_back(diff.cwiseProduct(diff));
        }
    }
}

Eigen::Index GpObjective::parameter_count() const {
    return family_ == KernelSpec::Family::kRbf ? coords_.rows() + 2 : 2;
}

KernelSpec GpObjective::kernel_for(const Eigen::VectorXd& theta) const {
    KernelSpec spec;
    spec.family = family_;
    if (family_ == KernelSpec::Family::kRbf)
        spec.lengthscales = theta.head(coords_.rows()).array().exp();
    spec.outputscale = std::exp(theta(theta.size() - 2));
    return spec;
}

double GpObjective::noise_var_for(const Eigen::VectorXd& theta) const {
    return noise_floor_ + std::exp(2.0 * theta(theta.size() - 1));
}

double GpObjective::value(const Eigen::VectorXd& theta, Eigen::VectorXd* gradient) const {
    if (theta.size() != parameter_count()) throw DomainError("GpObjective: bad parameter count");
    const Eigen::Index n = z_.size();
    const KernelSpec spec = kernel_for(theta);
    const double noise = noise_var_for(theta);

    Eigen::MatrixXd Kk;
    try {
        Kk = family_ == KernelSpec::Family::kRbf
                 ? rbf_gram_from_coords(coords_, spec.lengthscales, spec.outputscale)
                 : tanimoto_gram_from_coords(coords_, spec.outputscale);
    } catch (const DegenerateInput&) {
        return -std::numeric_limits<double>::infinity();
    }

    Eigen::MatrixXd A = Kk;
    A.diagonal().array() += noise + kGramJitterScale * spec.outputscale;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();

    const Eigen::MatrixXd L = llt.matrixL();
    Eigen::VectorXd alpha = L.triangularView<Eigen::Lower>().solve(z_);
    const double quad = alpha.squaredNorm();  // zᵀ(K+σ²I)⁻¹z
    L.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha);
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    const double lml = -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(n) * kLog2Pi;

    if (gradient != nullptr) {
        gradient->resize(parameter_count());
        // M = ααᵀ − (K+σ²I)⁻¹;   dL/dθ = ½ tr(M ∂K/∂θ)
        Eigen::MatrixXd Kinv = Eigen::MatrixXd::Identity(n, n);
        llt.solveInPlace(Kinv);
        Eigen::MatrixXd M = alpha * alpha.transpose() - Kinv;

        Eigen::Index idx = 0;
        if (family_ == KernelSpec::Family::kRbf) {
            const Eigen::MatrixXd Q = M.cwiseProduct(Kk);
            for (Eigen::Index d = 0; d < coords_.rows(); ++d) {
                const double l2 = spec.lengthscales(d) * spec.lengthscales(d);
                (*gradient)(idx++) =
                    0.5 / l2 * Q.cwiseProduct(sq_diffs_[static_cast<std::size_t>(d)]).sum();
            }
        }
        (*gradient)(idx++) = 0.5 * M.cwiseProduct(Kk).sum();               // log outputscale
        (*gradient)(idx++) = std::exp(2.0 * theta(theta.size() - 1)) * M.trace();  // noise t
    }
    return lml;
}

GpPosterior fit_gp(const Dataset& data, const KernelSpec& family, double noise_floor,
                   const FitOptions& options) {
    if (data.size() < 2) throw DomainError("fit_gp: need at least 2 observations");
    const GpObjective objective(data, family.family, noise_floor);
    const Eigen::Index p = objective.parameter_count();
    const Eigen::Index d = p - 2;

    auto negated = [&objective](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
        Eigen::VectorXd grad(th.size());
        const double v = objective.value(th, &grad);
        g = -grad;
        return -v;
    };

    // restart 0 uses the template hyperparameters, the rest are log-uniform
    Eigen::VectorXd theta0(p);
    if (family.family == KernelSpec::Family::kRbf) {
        if (family.lengthscales.size() == d)
            theta0.head(d) = family.lengthscales.array().log();
        else if (family.lengthscales.size() == 0)
            theta0.head(d).setZero();
        else
            throw DomainError("fit_gp: lengthscale template has wrong dimension");
    }
    theta0(p - 2) = std::log(std::max(family.outputscale, 1e-8));
    theta0(p - 1) = 0.5 * std::log(std::max(noise_floor, 1e-8));

    Rng rng(split_seed(options.seed, 0x9f17u));
    Eigen::VectorXd best_theta;
    double best_lml = -std::numeric_limits<double>::infinity();
    for (int r = 0; r <= options.restarts; ++r) {
        Eigen::VectorXd th(p);
        if (r == 0) {
            th = theta0;
        } else {
            for (Eigen::Index i = 0; i < p; ++i)
                th(i) = rng.uniform(options.init_log_lo, options.init_log_hi);
            th(p - 1) *= 0.5;  // noise amplitude parametrised as exp(2t)
        }
        const LbfgsResult res =
            lbfgs_minimize(negated, th, options.max_iterations, options.gradient_tol);
        if (std::isfinite(res.fx) && -res.fx > best_lml) {
            best_lml = -res.fx;
            best_theta = res.x;
        }
    }
    if (best_theta.size() == 0)
        throw NumericalFailure("fit_gp: all restarts failed to produce a finite likelihood");

    return condition_gp(data, objective.kernel_for(best_theta),
                        objective.noise_var_for(best_theta), objective.y_shift(),
                        objective.y_scale());
}

GpPrediction predict(const GpPosterior& gp, std::span<const Point> Xq) {
    const Eigen::MatrixXd Kq = gram(gp.kernel, Xq, std::span<const Point>(gp.train.X));
    GpPrediction out;
    out.mean = gp.y_shift + (gp.y_scale * (Kq * gp.alpha).array());
    const Eigen::MatrixXd V = gp.chol_lower.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd(Kq.transpose()));
    out.cov = gram(gp.kernel, Xq, Xq) - V.transpose() * V;
    for (Eigen::Index i = 0; i < out.cov.rows(); ++i)
        out.cov(i, i) = std::max(out.cov(i, i), 0.0);
    out.cov *= gp.y_scale * gp.y_scale;
    return out;
}

GpMarginals predict_marginal(const GpPosterior& gp, std::span<const Point> Xq) {
    const Eigen::MatrixXd Kq = gram(gp.kernel, Xq, std::span<const Point>(gp.train.X));
    GpMarginals out;
    out.mean = gp.y_shift + (gp.y_scale * (Kq * gp.alpha).array());
    const Eigen::MatrixXd V = gp.chol_lower.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd(Kq.transpose()));
    out.var = gram_diagonal(gp.kernel, Xq) - V.colwise().squaredNorm().transpose();
    out.var = out.var.cwiseMax(0.0) * gp.y_scale * gp.y_scale;
    return out;
}

Eigen::MatrixXd posterior_cov(const GpPosterior& gp, std::span<const Point> A,
                              std::span<const Point> B) {
    const std::span<const Point> train(gp.train.X);
    const Eigen::MatrixXd Va = gp.chol_lower.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd(gram(gp.kernel, train, A)));
    const Eigen::MatrixXd Vb = gp.chol_lower.triangularView<Eigen::Lower>().solve(
        Eigen::MatrixXd(gram(gp.kernel, train, B)));
    Eigen::MatrixXd C = gram(gp.kernel, A, B) - Va.transpose() * Vb;
    return gp.y_scale * gp.y_scale * C;
}

CovarianceFn posterior_covariance_fn(std::shared_ptr<const GpPosterior> gp) {
    return [gp = std::move(gp)](std::span<const Point> a, std::span<const Point> b) {
        return posterior_cov(*gp, a, b);
    };
}

Eigen::MatrixXd sample_posterior(const GpPosterior& gp, std::span<const Point> Xq, int count,
                                 std::uint64_t seed) {
    if (count < 1) throw DomainError("sample_posterior: count must be >= 1");
    const GpPrediction pred = predict(gp, Xq);
    const Eigen::Index q = pred.mean.size();

    Eigen::MatrixXd factor;
    Eigen::MatrixXd C = pred.cov;
    C.diagonal().array() += 1e-12 * std::max(1.0, C.trace() / std::max<Eigen::Index>(q, 1));
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() == Eigen::Success) {
        factor = llt.matrixL();
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pred.cov);
        if (eig.info() != Eigen::Success)
            throw NumericalFailure("sample_posterior: covariance factorisation failed");
        factor = eig.eigenvectors() *
                 eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }

    Rng rng(split_seed(seed, 0x5a3fu));
    Eigen::MatrixXd samples(count, q);
    Eigen::VectorXd xi(q);
    for (int s = 0; s < count; ++s) {
        for (Eigen::Index i = 0; i < q; ++i) xi(i) = rng.normal();
        samples.row(s) = (pred.mean + factor * xi).transpose();
    }
    return samples;
}

GpPosterior hallucinate(const GpPosterior& gp, std::span<const Point> X_new) {
    if (X_new.empty()) throw DomainError("hallucinate: X_new must be nonempty");
    const GpMarginals m = predict_marginal(gp, X_new);
    Dataset aug = gp.train;
    aug.X.insert(aug.X.end(), X_new.begin(), X_new.end());
    Eigen::VectorXd y(aug.y.size() + m.mean.size());
    y << aug.y, m.mean;
    aug.y = std::move(y);
    return condition_gp(std::move(aug), gp.kernel, gp.noise_var, gp.y_shift, gp.y_scale);
}

}  // namespace csober
