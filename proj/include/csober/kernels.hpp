#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

#include "csober/point.hpp"

namespace csober {

/// Positive-definite kernel over mixed inputs. RBF treats binary coordinates
/// as reals in {0, 1} with their own lengthscales; Tanimoto requires
/// all-binary points.
struct KernelSpec {
    enum class Family { kRbf, kTanimoto };

    Family family = Family::kRbf;
    Eigen::VectorXd lengthscales;  // RBF only, one per (continuous+binary) dim
    double outputscale = 1.0;
};

inline KernelSpec rbf_kernel(Eigen::VectorXd lengthscales, double outputscale = 1.0) {
    return KernelSpec{KernelSpec::Family::kRbf, std::move(lengthscales), outputscale};
}

inline KernelSpec rbf_kernel(Eigen::Index dims, double lengthscale, double outputscale = 1.0) {
    return rbf_kernel(Eigen::VectorXd::Constant(dims, lengthscale), outputscale);
}

inline KernelSpec tanimoto_kernel(double outputscale = 1.0) {
    return KernelSpec{KernelSpec::Family::kTanimoto, Eigen::VectorXd(), outputscale};
}

double kernel_eval(const KernelSpec& spec, const Point& x, const Point& y);

/// Cross Gram matrix, entry (i, j) = k(X_i, Y_j).
Eigen::MatrixXd gram(const KernelSpec& spec, std::span<const Point> X, std::span<const Point> Y);

inline Eigen::MatrixXd gram(const KernelSpec& spec, const std::vector<Point>& X,
                            const std::vector<Point>& Y) {
    return gram(spec, std::span<const Point>(X), std::span<const Point>(Y));
}

inline Eigen::MatrixXd gram(const KernelSpec& spec, const std::vector<Point>& X) {
    return gram(spec, std::span<const Point>(X), std::span<const Point>(X));
}

Eigen::VectorXd gram_diagonal(const KernelSpec& spec, std::span<const Point> X);

/// Any symmetric positive-semidefinite covariance over point sets. Used to
/// swap the plain kernel for a GP posterior covariance in the quadrature
/// pipeline.
using CovarianceFn =
    std::function<Eigen::MatrixXd(std::span<const Point>, std::span<const Point>)>;

inline CovarianceFn covariance_fn(KernelSpec spec) {
    return [spec = std::move(spec)](std::span<const Point> a, std::span<const Point> b) {
        return gram(spec, a, b);
    };
}

/// Diagonal jitter scale applied before factorising Gram matrices.
inline constexpr double kGramJitterScale = 1e-6;

}  // namespace csober
