#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "csober/kernels.hpp"
#include "csober/point.hpp"

namespace csober {

/// One black-box constraint with its querying semantics. Deterministic
/// constraints are satisfied iff the latent value is nonnegative;
/// probabilistic ones draw acceptance from accept_prob through a
/// value-keyed noise stream, so repeated queries of the same point agree.
struct ConstraintSpec {
    bool coupled = true;
    bool ordered = false;
    bool deterministic = true;
    bool cheap = false;
    bool binary_feedback = false;  // observation is {0,1} instead of the latent value

    std::function<double(const Point&)> latent;       // g(x), >= 0 means satisfied
    std::function<double(const Point&)> accept_prob;  // true rho for probabilistic constraints
};

struct DomainSpec {
    Eigen::VectorXd lower;  // continuous bounds
    Eigen::VectorXd upper;
    int binary_dims = 0;
    std::vector<Point> pool;  // nonempty selects the finite-pool domain

    bool is_pool() const { return !pool.empty(); }
    int total_dims() const {
        return is_pool() ? static_cast<int>(pool.front().dims())
                         : static_cast<int>(lower.size()) + binary_dims;
    }
};

struct Problem {
    std::string name;
    DomainSpec domain;
    std::function<double(const Point&)> objective;  // maximised
    std::vector<ConstraintSpec> constraints;
    std::optional<double> optimum;       // best feasible objective value
    std::optional<Point> optimum_point;
    KernelSpec kernel_template;
    std::uint64_t noise_seed = 0;  // probabilistic-constraint noise stream
};

/// Realised constraint satisfaction at query time.
bool constraint_satisfied(const Problem& problem, std::size_t constraint_index, const Point& x);

struct QueryOutcome {
    bool accepted = true;   // every ordered constraint passed
    bool feasible = true;   // every constraint satisfied
    std::optional<double> objective;
    std::vector<double> observations;  // one per constraint: latent value or {0,1}
};

/// Ordered-query semantics: constraints are evaluated first and the
/// objective is revealed only when all ordered constraints pass.
QueryOutcome query_problem(const Problem& problem, const Point& x);

/// Uniform draws from the box/binary prior, or uniform pool picks.
std::vector<Point> sample_domain(const Problem& problem, int count, std::uint64_t seed);

/// Negated 23-d Ackley over 3 continuous dims in [-1,1] and 20 binary dims,
/// with the sign constraints on the first two continuous coordinates. The
/// ordered variant re-tags those constraints ordered+expensive to exercise
/// the rejection pipeline.
Problem ackley_mixed(bool ordered_variant = false);

/// Negated 6-d Hartmann on [0,1]^6 with the two coordinate-sum constraints.
Problem hartmann6();

/// 2000-point binary-fingerprint pool with one ordered probabilistic binary
/// constraint and one ordered deterministic continuous constraint; the
/// feasible optimum is found by exhaustive scan at construction.
Problem synthetic_ordered_pool(std::uint64_t seed);

}  // namespace csober
