#include "csober/problems.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csober/errors.hpp"
#include "csober/rng.hpp"

namespace csober {

bool constraint_satisfied(const Problem& problem, std::size_t constraint_index, const Point& x) {
    const ConstraintSpec& c = problem.constraints.at(constraint_index);
    if (c.deterministic) {
        if (!c.latent) throw OracleError("constraint_satisfied: missing latent oracle");
        return c.latent(x) >= 0.0;
    }
    if (!c.accept_prob) throw OracleError("constraint_satisfied: missing acceptance oracle");
    const double p = c.accept_prob(x);
    const std::uint64_t h =
        hash_point(x, split_seed(problem.noise_seed, 0xc0ull + constraint_index));
    return unit_from_hash(h) < p;
}

QueryOutcome query_problem(const Problem& problem, const Point& x) {
    QueryOutcome out;
    out.observations.reserve(problem.constraints.size());
    for (std::size_t l = 0; l < problem.constraints.size(); ++l) {
        const ConstraintSpec& c = problem.constraints[l];
        const bool satisfied = constraint_satisfied(problem, l, x);
        if (c.binary_feedback)
            out.observations.push_back(satisfied ? 1.0 : 0.0);
        else
            out.observations.push_back(c.latent ? c.latent(x) : (satisfied ? 1.0 : -1.0));
        if (!satisfied) {
            out.feasible = false;
            if (c.ordered) out.accepted = false;
        }
    }
    if (out.accepted) out.objective = problem.objective(x);
    return out;
}

std::vector<Point> sample_domain(const Problem& problem, int count, std::uint64_t seed) {
    Rng rng(split_seed(seed, 0xd0cull));
    std::vector<Point> out;
    out.reserve(static_cast<std::size_t>(count));
    if (problem.domain.is_pool()) {
        const std::size_t pool_size = problem.domain.pool.size();
        for (int i = 0; i < count; ++i)
            out.push_back(problem.domain.pool[rng.uniform_index(pool_size)]);
        return out;
    }
    const Eigen::Index dc = problem.domain.lower.size();
    for (int i = 0; i < count; ++i) {
        Point p;
        p.continuous.resize(dc);
        for (Eigen::Index d = 0; d < dc; ++d)
            p.continuous(d) = rng.uniform(problem.domain.lower(d), problem.domain.upper(d));
        p.binary.resize(problem.domain.binary_dims);
        for (int d = 0; d < problem.domain.binary_dims; ++d)
            p.binary(d) = rng.uniform() < 0.5 ? 0.0 : 1.0;
        out.push_back(std::move(p));
    }
    return out;
}

namespace {

double ackley_value(const Eigen::VectorXd& z) {
    constexpr double a = 20.0;
    constexpr double b = 0.2;
    const double c = 2.0 * M_PI;
    const double d = static_cast<double>(z.size());
    const double rms = std::sqrt(z.squaredNorm() / d);
    const double mean_cos = (c * z.array()).cos().mean();
    return -a * std::exp(-b * rms) - std::exp(mean_cos) + a + std::exp(1.0);
}

}  // namespace

Problem ackley_mixed(bool ordered_variant) {
    Problem p;
    p.name = ordered_variant ? "ackley-ordered" : "ackley";
    p.domain.lower = Eigen::VectorXd::Constant(3, -1.0);
    p.domain.upper = Eigen::VectorXd::Constant(3, 1.0);
    p.domain.binary_dims = 20;
    p.objective = [](const Point& x) { return -ackley_value(coords(x)); };

    for (int i = 0; i < 2; ++i) {
        ConstraintSpec c;
        c.coupled = true;
        c.ordered = ordered_variant;
        c.deterministic = true;
        c.cheap = !ordered_variant;
        c.latent = [i](const Point& x) { return x.continuous(i); };
        p.constraints.push_back(std::move(c));
    }

    p.optimum = 0.0;
    Point star;
    star.continuous = Eigen::VectorXd::Zero(3);
    star.binary = Eigen::VectorXd::Zero(20);
    p.optimum_point = std::move(star);
    p.kernel_template = rbf_kernel(23, 1.0, 1.0);
    p.noise_seed = 0x0ac5ull;
    return p;
}

Problem hartmann6() {
    Problem p;
    p.name = "hartmann6";
    p.domain.lower = Eigen::VectorXd::Zero(6);
    p.domain.upper = Eigen::VectorXd::Ones(6);

    static const Eigen::Vector4d alpha(1.0, 1.2, 3.0, 3.2);
    static const Eigen::Matrix<double, 4, 6> A = [] {
        Eigen::Matrix<double, 4, 6> m;
        m << 10, 3, 17, 3.5, 1.7, 8,
             0.05, 10, 17, 0.1, 8, 14,
             3, 3.5, 1.7, 10, 17, 8,
             17, 8, 0.05, 10, 0.1, 14;
        return m;
    }();
    static const Eigen::Matrix<double, 4, 6> P = 1e-4 * [] {
        Eigen::Matrix<double, 4, 6> m;
        m << 1312, 1696, 5569, 124, 8283, 5886,
             2329, 4135, 8307, 3736, 1004, 9991,
             2348, 1451, 3522, 2883, 3047, 6650,
             4047, 8828, 8732, 5743, 1091, 381;
        return m;
    }();

    p.objective = [](const Point& x) {
        double value = 0.0;
        for (int i = 0; i < 4; ++i) {
            double inner = 0.0;
            for (int j = 0; j < 6; ++j) {
                const double diff = x.continuous(j) - P(i, j);
                inner += A(i, j) * diff * diff;
            }
            value -= alpha(i) * std::exp(-inner);
        }
        return -value;  // negated for maximisation
    };

    {
        ConstraintSpec lo;
        lo.cheap = true;
        lo.latent = [](const Point& x) { return x.continuous.sum() - 0.15; };
        p.constraints.push_back(std::move(lo));
        ConstraintSpec hi;
        hi.cheap = true;
        hi.latent = [](const Point& x) { return 3.0 - x.continuous.sum(); };
        p.constraints.push_back(std::move(hi));
    }

    p.optimum = 3.32237;
    Point star;
    star.continuous.resize(6);
    star.continuous << 0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573;
    p.optimum_point = std::move(star);
    p.kernel_template = rbf_kernel(6, 0.5, 1.0);
    p.noise_seed = 0x6a27ull;
    return p;
}

Problem synthetic_ordered_pool(std::uint64_t seed) {
    constexpr int kPoolSize = 2000;
    constexpr int kBits = 64;
    Rng rng(split_seed(seed, 0x9001ull));

    Problem p;
    p.name = "pool";
    p.noise_seed = split_seed(seed, 0x9002ull);

    // per-dimension activation rates make the fingerprints heterogeneous
    Eigen::VectorXd rates(kBits);
    for (int d = 0; d < kBits; ++d) rates(d) = rng.uniform(0.2, 0.8);
    p.domain.pool.reserve(kPoolSize);
    for (int i = 0; i < kPoolSize; ++i) {
        Eigen::VectorXd bits(kBits);
        for (int d = 0; d < kBits; ++d) bits(d) = rng.uniform() < rates(d) ? 1.0 : 0.0;
        if (bits.sum() == 0.0) bits(static_cast<Eigen::Index>(rng.uniform_index(kBits))) = 1.0;
        p.domain.pool.push_back(make_binary(std::move(bits), i));
    }

    // ordered deterministic continuous constraint on the activation count
    std::vector<double> popcounts;
    popcounts.reserve(kPoolSize);
    for (const Point& x : p.domain.pool) popcounts.push_back(x.binary.sum());
    std::vector<double> sorted_pop = popcounts;
    std::sort(sorted_pop.begin(), sorted_pop.end());
    const double pop_threshold = sorted_pop[static_cast<std::size_t>(0.35 * kPoolSize)];

    // ordered probabilistic binary constraint: logistic in a hidden mask count
    Eigen::VectorXd mask = Eigen::VectorXd::Zero(kBits);
    for (int d = 0; d < kBits && mask.sum() < 16.0; ++d)
        if (rng.uniform() < 0.35) mask(d) = 1.0;
    std::vector<double> mask_counts;
    mask_counts.reserve(kPoolSize);
    for (const Point& x : p.domain.pool) mask_counts.push_back(mask.dot(x.binary));
    std::vector<double> sorted_mask = mask_counts;
    std::sort(sorted_mask.begin(), sorted_mask.end());
    const double mask_threshold = sorted_mask[static_cast<std::size_t>(0.12 * kPoolSize)];

    {
        ConstraintSpec binary;
        binary.ordered = true;
        binary.deterministic = false;
        binary.binary_feedback = true;
        binary.accept_prob = [mask, mask_threshold](const Point& x) {
            const double t = 2.5 * (mask.dot(x.binary) - mask_threshold);
            return 1.0 / (1.0 + std::exp(-t));
        };
        p.constraints.push_back(std::move(binary));

        ConstraintSpec continuous;
        continuous.ordered = true;
        continuous.latent = [pop_threshold](const Point& x) {
            return (x.binary.sum() - pop_threshold) / 64.0;
        };
        p.constraints.push_back(std::move(continuous));
    }

    // true feasibility treats the probabilistic constraint as p >= 1/2
    auto truly_feasible = [&](const Point& x) {
        return p.constraints[0].accept_prob(x) >= 0.5 && p.constraints[1].latent(x) >= 0.0;
    };

    std::vector<int> feasible_ids;
    for (int i = 0; i < kPoolSize; ++i)
        if (truly_feasible(p.domain.pool[static_cast<std::size_t>(i)])) feasible_ids.push_back(i);
    const double infeasible_fraction =
        1.0 - static_cast<double>(feasible_ids.size()) / static_cast<double>(kPoolSize);
    if (infeasible_fraction < 0.3 || infeasible_fraction > 0.5)
        throw NumericalFailure("synthetic_ordered_pool: infeasible fraction out of range");
    if (feasible_ids.empty())
        throw NumericalFailure("synthetic_ordered_pool: no feasible pool points");

    // plant the optimum at a feasible fingerprint; the distance bump
    // dominates the popcount ripple so the argmax is unique up to duplicates
    const Point planted =
        p.domain.pool[static_cast<std::size_t>(feasible_ids[feasible_ids.size() / 2])];
    const Eigen::VectorXd planted_bits = planted.binary;
    const double planted_pop = planted_bits.sum();
    p.objective = [planted_bits, planted_pop](const Point& x) {
        const double hamming = (x.binary - planted_bits).cwiseAbs().sum();
        return 2.0 * std::exp(-hamming / 12.0) +
               0.2 * std::cos(0.3 * (x.binary.sum() - planted_pop));
    };

    // exhaustive scan over the pool records the ground-truth feasible optimum
    double best = -std::numeric_limits<double>::infinity();
    int best_id = -1;
    for (const int i : feasible_ids) {
        const double v = p.objective(p.domain.pool[static_cast<std::size_t>(i)]);
        if (v > best) {
            best = v;
            best_id = i;
        }
    }
    p.optimum = best;
    p.optimum_point = p.domain.pool[static_cast<std::size_t>(best_id)];
    p.kernel_template = tanimoto_kernel(1.0);
    return p;
}

}  // namespace csober
