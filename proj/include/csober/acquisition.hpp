#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>

#include "csober/constraints.hpp"
#include "csober/gp.hpp"

namespace csober {

enum class AcquisitionKind { kUcb, kEi, kMeanOnly };

struct AcquisitionConfig {
    AcquisitionKind kind = AcquisitionKind::kUcb;
    double beta = 2.0;          // UCB exploration weight
    double best_value = 0.0;    // EI incumbent (maximisation)
};

inline double acquisition_value(double mean, double var, const AcquisitionConfig& cfg) {
    switch (cfg.kind) {
        case AcquisitionKind::kUcb:
            return mean + cfg.beta * std::sqrt(std::max(var, 0.0));
        case AcquisitionKind::kEi: {
            const double sigma = std::sqrt(std::max(var, 0.0));
            const double delta = mean - cfg.best_value;
            if (sigma < 1e-12) return std::max(delta, 0.0);
            const double z = delta / sigma;
            return delta * normal_cdf(z) + sigma * normal_pdf(z);
        }
        case AcquisitionKind::kMeanOnly:
            return mean;
    }
    return mean;
}

inline double acquisition(const GpPosterior& gp, const Point& x, const AcquisitionConfig& cfg) {
    const GpMarginals m = predict_marginal(gp, std::span<const Point>(&x, 1));
    return acquisition_value(m.mean(0), m.var(0), cfg);
}

inline Eigen::VectorXd acquisition_batch(const GpPosterior& gp, std::span<const Point> X,
                                         const AcquisitionConfig& cfg) {
    const GpMarginals m = predict_marginal(gp, X);
    Eigen::VectorXd out(m.mean.size());
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out(i) = acquisition_value(m.mean(i), m.var(i), cfg);
    return out;
}

}  // namespace csober
