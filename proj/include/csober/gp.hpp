#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "csober/kernels.hpp"
#include "csober/point.hpp"

namespace csober {

struct Dataset {
    std::vector<Point> X;
    Eigen::VectorXd y;

    Eigen::Index size() const { return y.size(); }
};

/// Trained GP regressor. Kernel hyperparameters and noise live on the
/// standardised output scale; predictions are destandardised through
/// (y_shift, y_scale).
struct GpPosterior {
    Dataset train;
    KernelSpec kernel;
    double noise_var = 0.0;
    double y_shift = 0.0;
    double y_scale = 1.0;
    Eigen::MatrixXd chol_lower;  // L with L Lᵀ = K(X,X) + σ²I (+ applied jitter)
    Eigen::VectorXd alpha;       // (K + σ²I)⁻¹ z, z standardised targets
    double applied_jitter = 0.0;
};

struct GpPrediction {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

struct GpMarginals {
    Eigen::VectorXd mean;
    Eigen::VectorXd var;
};

/// Condition on data with fixed hyperparameters and an explicit output
/// transform. Throws NumericalFailure if the Gram factorisation fails after
/// jitter escalation to 1e-2 * outputscale.
GpPosterior condition_gp(Dataset data, KernelSpec kernel, double noise_var, double y_shift,
                         double y_scale);

/// As above with (y_shift, y_scale) taken from the data moments.
GpPosterior condition_gp(Dataset data, KernelSpec kernel, double noise_var);

struct FitOptions {
    int restarts = 8;
    std::uint64_t seed = 0;
    int max_iterations = 60;
    double gradient_tol = 1e-5;
    double init_log_lo = -2.0 * 2.302585092994046;  // log 1e-2
    double init_log_hi = 2.302585092994046;         // log 1e1
};

/// Type-II MLE fit: multi-start L-BFGS on the log marginal likelihood over
/// log lengthscales, log outputscale and a noise parameter with
/// noise_var = noise_floor + exp(2t). Deterministic given options.seed.
GpPosterior fit_gp(const Dataset& data, const KernelSpec& family, double noise_floor,
                   const FitOptions& options = {});

GpPrediction predict(const GpPosterior& gp, std::span<const Point> Xq);

/// Mean and clamped pointwise variance only; avoids the dense query Gram.
GpMarginals predict_marginal(const GpPosterior& gp, std::span<const Point> Xq);

/// Destandardised posterior covariance C(A, B).
Eigen::MatrixXd posterior_cov(const GpPosterior& gp, std::span<const Point> A,
                              std::span<const Point> B);

/// Copyable covariance closure over a shared posterior; suitable as the
/// recombination kernel K_LP.
CovarianceFn posterior_covariance_fn(std::shared_ptr<const GpPosterior> gp);

/// count x |Xq| matrix of joint posterior draws; deterministic given seed.
Eigen::MatrixXd sample_posterior(const GpPosterior& gp, std::span<const Point> Xq, int count,
                                 std::uint64_t seed);

/// Condition additionally on (X_new, m(X_new)) with unchanged
/// hyperparameters; leaves the mean function intact and collapses variance
/// at X_new.
GpPosterior hallucinate(const GpPosterior& gp, std::span<const Point> X_new);

/// Log marginal likelihood surface used by fit_gp, exposed for gradient
/// checks. Parameter layout: [log lengthscales..., log outputscale, t] with
/// noise_var = noise_floor + exp(2t); Tanimoto omits the lengthscale block.
class GpObjective {
public:
    GpObjective(const Dataset& data, KernelSpec::Family family, double noise_floor);

    Eigen::Index parameter_count() const;

    /// Log marginal likelihood of the standardised targets; gradient is
    /// optional. Returns -inf when the Gram factorisation fails.
    double value(const Eigen::VectorXd& theta, Eigen::VectorXd* gradient = nullptr) const;

    KernelSpec kernel_for(const Eigen::VectorXd& theta) const;
    double noise_var_for(const Eigen::VectorXd& theta) const;
    double y_shift() const { return y_shift_; }
    double y_scale() const { return y_scale_; }

private:
    Eigen::MatrixXd coords_;     // d x n
    Eigen::VectorXd z_;          // standardised targets
    KernelSpec::Family family_;
    double noise_floor_;
    double y_shift_ = 0.0;
    double y_scale_ = 1.0;
    std::vector<Eigen::MatrixXd> sq_diffs_;  // per-dim squared coordinate gaps
};

}  // namespace csober
