#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <vector>

#include "csober/constraints.hpp"
#include "csober/gp.hpp"
#include "csober/point.hpp"

namespace csober {

/// Weighted point set approximating a probability measure. Weights are
/// nonnegative and sum to one.
struct EmpiricalMeasure {
    std::vector<Point> points;
    Eigen::VectorXd weights;

    Eigen::Index size() const { return weights.size(); }
};

/// Density of the feasibility-weighted sampling measure: the probability of
/// improving on eta times the clamped acceptance factors.
struct PiDensity {
    std::shared_ptr<const GpPosterior> objective;
    double eta = 0.0;
    std::vector<ConstraintModel> constraints;
};

double lfi_term(const PiDensity& pd, const Point& x);
Eigen::VectorXd lfi_batch(const PiDensity& pd, std::span<const Point> X);

double pi_density(const PiDensity& pd, const Point& x);
Eigen::VectorXd pi_density_batch(const PiDensity& pd, std::span<const Point> X);

/// Largest predictive mean over the pool and the training inputs.
double estimate_eta(const PiDensity& pd, std::span<const Point> pool);

/// Normalised density weights over the candidates. Falls back to
/// improvement-only weights when the full density vanishes everywhere, and
/// to uniform weights after that.
EmpiricalMeasure build_measure(const PiDensity& pd, std::vector<Point> candidates);

/// Draw M points with replacement with probability proportional to 1/w,
/// restricted to strictly positive weights.
std::vector<Point> deweighted_resample(const EmpiricalMeasure& m, int count, std::uint64_t seed);

/// Expected rejection rate 1 - w . prod_l rho_l(X).
double rejection_rate(const EmpiricalMeasure& m, std::span<const ConstraintModel> constraints);

struct ShrinkageStats {
    Eigen::VectorXd mean;       // E[pi]
    double variance = 0.0;      // sum_i w_i |x_i - E|^2
    double mean_distance = -1.0;  // |x_star - E|, negative when x_star absent
};

ShrinkageStats shrinkage_stats(const EmpiricalMeasure& m, const Point* x_star = nullptr);

}  // namespace csober
