#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "csober/gp.hpp"
#include "csober/kernels.hpp"
#include "csober/point.hpp"

namespace csober {

/// Standard normal CDF.
double normal_cdf(double z);
double normal_pdf(double z);

/// Probability that the latent constraint value is nonnegative under the
/// surrogate: Phi(m / sqrt(C)). Degenerate variance falls back to the sign
/// of the mean.
double rho_continuous(const GpPosterior& gp, const Point& x);
Eigen::VectorXd rho_continuous_batch(const GpPosterior& gp, std::span<const Point> X);

/// Laplace-approximated GP classifier with a probit link. One-class data
/// degrades to a constant rate with Laplace smoothing.
struct BinaryClassifier {
    std::vector<Point> train;
    KernelSpec kernel;
    Eigen::VectorXd loglik_grad;   // gradient of the log likelihood at the mode
    Eigen::MatrixXd chol_b;        // L with L Lᵀ = I + W^½ K W^½
    Eigen::VectorXd sqrt_w;
    double constant_rate = -1.0;   // >= 0 means one-class fallback
};

BinaryClassifier fit_gp_classifier(const std::vector<Point>& X, const Eigen::VectorXd& labels01,
                                   const KernelSpec& kernel);

double classifier_rho(const BinaryClassifier& clf, const Point& x);
Eigen::VectorXd classifier_rho_batch(const BinaryClassifier& clf, std::span<const Point> X);

/// Joint latent posterior of the classifier (mean and covariance), used by
/// Thompson-style sampling. Undefined for the constant fallback.
GpPrediction classifier_latent_joint(const BinaryClassifier& clf, std::span<const Point> X);

/// Acceptance-probability model for one constraint.
struct ConstraintModel {
    enum class Flavour { kContinuousSurrogate, kBinarySurrogate, kCheapOracle };

    Flavour flavour = Flavour::kCheapOracle;
    std::shared_ptr<const GpPosterior> surrogate;
    std::shared_ptr<const BinaryClassifier> classifier;
    std::function<bool(const Point&)> oracle;
    double threshold = 0.5;  // ε_ℓ
    bool coupled = true;
    bool ordered = false;
};

ConstraintModel continuous_constraint(std::shared_ptr<const GpPosterior> gp, double threshold,
                                      bool coupled = true, bool ordered = false);

/// Smoothness-first RBF default for the classifier: per-dimension
/// lengthscales at three quarters of the observed coordinate range.
KernelSpec default_classifier_kernel(const std::vector<Point>& X);

/// Fit the binary surrogate from {0,1} labels. Requires labels in {0,1};
/// with only one class present the model is the smoothed constant
/// (k+1)/(n+2).
ConstraintModel fit_binary_constraint(const Dataset& data, const KernelSpec& kernel,
                                      double threshold = 0.5, bool coupled = true,
                                      bool ordered = false);
ConstraintModel fit_binary_constraint(const Dataset& data);

ConstraintModel cheap_constraint(std::function<bool(const Point&)> oracle, double threshold = 0.5,
                                 bool coupled = true, bool ordered = false);

/// Acceptance probability in [0,1]; cheap oracles report {0,1}.
double rho(const ConstraintModel& cm, const Point& x);
Eigen::VectorXd rho_batch(const ConstraintModel& cm, std::span<const Point> X);

}  // namespace csober
