#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "csober/baselines.hpp"
#include "csober/errors.hpp"
#include "csober/records.hpp"
#include "csober/rng.hpp"

using namespace csober;

namespace {

LoopConfig quick_config(int batch, int iters, std::uint64_t seed) {
    LoopConfig cfg;
    cfg.batch_size = batch;
    cfg.iterations = iters;
    cfg.seed = seed;
    cfg.num_candidates = 128;
    cfg.num_nystrom = 48;
    cfg.cts_candidate_cap = 96;
    cfg.fit_restarts = 2;
    cfg.fit_max_iterations = 20;
    return cfg;
}

double ackley_reference(const Eigen::VectorXd& z) {
    const double a = 20.0, b = 0.2, c = 2.0 * M_PI;
    const double d = static_cast<double>(z.size());
    double sum_sq = 0.0, sum_cos = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        sum_sq += z(i) * z(i);
        sum_cos += std::cos(c * z(i));
    }
    return -a * std::exp(-b * std::sqrt(sum_sq / d)) - std::exp(sum_cos / d) + a +
           std::exp(1.0);
}

}  // namespace

TEST_CASE("ackley problem definition") {
    const Problem p = ackley_mixed();

    SUBCASE("the all-zero point is the global maximum at value zero") {
        Point zero;
        zero.continuous = Eigen::VectorXd::Zero(3);
        zero.binary = Eigen::VectorXd::Zero(20);
        CHECK(p.objective(zero) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(*p.optimum == 0.0);
    }

    SUBCASE("objective equals the 23-dimensional reference formula") {
        Rng rng(5);
        for (int t = 0; t < 10; ++t) {
            Point x;
            x.continuous.resize(3);
            for (int d = 0; d < 3; ++d) x.continuous(d) = rng.uniform(-1.0, 1.0);
            x.binary.resize(20);
            for (int d = 0; d < 20; ++d) x.binary(d) = rng.uniform() < 0.5 ? 0.0 : 1.0;
            CHECK(p.objective(x) ==
                  doctest::Approx(-ackley_reference(coords(x))).epsilon(1e-12));
        }
    }

    SUBCASE("sign constraints gate the first two continuous dims") {
        Point x;
        x.continuous.resize(3);
        x.continuous << -0.5, 0.4, 0.0;
        x.binary = Eigen::VectorXd::Zero(20);
        CHECK_FALSE(constraint_satisfied(p, 0, x));
        CHECK(constraint_satisfied(p, 1, x));
        // unordered default: objective still revealed, flagged infeasible
        const QueryOutcome out = query_problem(p, x);
        CHECK(out.accepted);
        CHECK_FALSE(out.feasible);
        CHECK(out.objective.has_value());
    }

    SUBCASE("ordered variant rejects the same query") {
        const Problem po = ackley_mixed(true);
        Point x;
        x.continuous.resize(3);
        x.continuous << -0.5, 0.4, 0.0;
        x.binary = Eigen::VectorXd::Zero(20);
        const QueryOutcome out = query_problem(po, x);
        CHECK_FALSE(out.accepted);
        CHECK_FALSE(out.objective.has_value());
        REQUIRE(out.observations.size() == 2);
        CHECK(out.observations[0] == doctest::Approx(-0.5));
    }
}

TEST_CASE("hartmann6 problem definition") {
    const Problem p = hartmann6();

    SUBCASE("known optimum location and value") {
        REQUIRE(p.optimum_point.has_value());
        CHECK(p.objective(*p.optimum_point) == doctest::Approx(3.32237).epsilon(1e-4));
    }

    SUBCASE("frozen interior evaluation") {
        Point x;
        x.continuous = Eigen::VectorXd::Constant(6, 0.5);
        // independent evaluation of the negated Hartmann sum at 0.5^6
        const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
        const double A[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                {0.05, 10, 17, 0.1, 8, 14},
                                {3, 3.5, 1.7, 10, 17, 8},
                                {17, 8, 0.05, 10, 0.1, 14}};
        const double P[4][6] = {{0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
                                {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
                                {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
                                {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381}};
        double expected = 0.0;
        for (int i = 0; i < 4; ++i) {
            double inner = 0.0;
            for (int j = 0; j < 6; ++j)
                inner += A[i][j] * (0.5 - P[i][j]) * (0.5 - P[i][j]);
            expected -= alpha[i] * std::exp(-inner);
        }
        CHECK(p.objective(x) == doctest::Approx(-expected).epsilon(1e-12));
    }

    SUBCASE("coordinate-sum constraints") {
        Point low;
        low.continuous = Eigen::VectorXd::Constant(6, 0.01);  // sum 0.06 < 0.15
        CHECK_FALSE(constraint_satisfied(p, 0, low));
        CHECK(constraint_satisfied(p, 1, low));
        Point mid;
        mid.continuous = Eigen::VectorXd::Constant(6, 0.3);
        CHECK(constraint_satisfied(p, 0, mid));
        CHECK(constraint_satisfied(p, 1, mid));
    }
}

TEST_CASE("synthetic ordered pool construction") {
    const Problem p = synthetic_ordered_pool(7);
    REQUIRE(p.domain.is_pool());
    REQUIRE(p.domain.pool.size() == 2000);
    REQUIRE(p.constraints.size() == 2);
    CHECK(p.constraints[0].ordered);
    CHECK(p.constraints[1].ordered);
    CHECK(p.kernel_template.family == KernelSpec::Family::kTanimoto);

    auto truly_feasible = [&p](const Point& x) {
        return p.constraints[0].accept_prob(x) >= 0.5 && p.constraints[1].latent(x) >= 0.0;
    };

    SUBCASE("brute-force scan reproduces the recorded feasible optimum") {
        double best = -1e300;
        int best_id = -1;
        for (const Point& x : p.domain.pool) {
            if (!truly_feasible(x)) continue;
            const double v = p.objective(x);
            if (v > best) {
                best = v;
                best_id = x.pool_index;
            }
        }
        CHECK(best == doctest::Approx(*p.optimum).epsilon(1e-12));
        CHECK(best_id == p.optimum_point->pool_index);
        CHECK(truly_feasible(*p.optimum_point));
    }

    SUBCASE("infeasible fraction sits in the designed band") {
        int infeasible = 0;
        for (const Point& x : p.domain.pool)
            if (!truly_feasible(x)) ++infeasible;
        const double fraction = infeasible / 2000.0;
        CHECK(fraction >= 0.3);
        CHECK(fraction <= 0.5);
    }

    SUBCASE("probabilistic feedback is deterministic per point") {
        const Point& x = p.domain.pool[42];
        const bool first = constraint_satisfied(p, 0, x);
        for (int t = 0; t < 5; ++t) CHECK(constraint_satisfied(p, 0, x) == first);
    }
}

TEST_CASE("random baseline accounting") {
    const Problem p = synthetic_ordered_pool(7);
    const LoopConfig cfg = quick_config(10, 4, 3);

    SUBCASE("trace is nonincreasing and deterministic") {
        const RunOutput a = baseline_random(p, cfg);
        const RunOutput b = baseline_random(p, cfg);
        REQUIRE(a.records.size() == 4);
        for (std::size_t i = 1; i < a.records.size(); ++i)
            CHECK(a.records[i].best_feasible <= a.records[i - 1].best_feasible + 1e-12);
        for (std::size_t i = 0; i < a.records.size(); ++i)
            CHECK(same_results(a.records[i], b.records[i]));
    }

    SUBCASE("realised rejection tracks the pool infeasible fraction") {
        auto truly_feasible = [&p](const Point& x) {
            return p.constraints[0].accept_prob(x) >= 0.5 &&
                   p.constraints[1].latent(x) >= 0.0;
        };
        int infeasible = 0;
        for (const Point& x : p.domain.pool)
            if (!truly_feasible(x)) ++infeasible;
        const double pool_fraction = infeasible / 2000.0;

        double mean_rejection = 0.0;
        int rows = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            LoopConfig c = quick_config(25, 2, seed);
            const RunOutput out = baseline_random(p, c);
            for (const RunRecord& r : out.records) {
                mean_rejection += r.realised_rejection * r.batch_size;
                rows += r.batch_size;
            }
        }
        mean_rejection /= rows;
        CHECK(std::abs(mean_rejection - pool_fraction) <= 0.05);
    }
}

TEST_CASE("cts baseline runs the surrogate loop") {
    const Problem p = hartmann6();
    const LoopConfig cfg = quick_config(5, 3, 11);
    const RunOutput a = baseline_cts(p, cfg);
    const RunOutput b = baseline_cts(p, cfg);
    REQUIRE(a.records.size() == 3);
    for (std::size_t i = 0; i < a.records.size(); ++i)
        CHECK(same_results(a.records[i], b.records[i]));
    for (const RunRecord& r : a.records) {
        CHECK(r.batch_size == 5);
        CHECK(std::isfinite(r.realised_rejection));
        CHECK(std::isfinite(r.batch_logdet));
    }
    CHECK_NOTHROW(a.state.check_invariants());
}

TEST_CASE("realised rejection tracks the estimated rate on the ordered pool") {
    const Problem p = synthetic_ordered_pool(7);
    double est_sum = 0.0, realised_sum = 0.0;
    int rows = 0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        LoopConfig cfg = quick_config(10, 4, 500 + seed);
        cfg.max_pool_candidates = 2000;
        const RunOutput out = run_loop(p, cfg);
        for (const RunRecord& r : out.records) {
            if (r.eps_lp == 0.0) continue;  // bootstrap iterations have no estimate
            est_sum += r.est_rejection;
            realised_sum += r.realised_rejection;
            ++rows;
        }
    }
    REQUIRE(rows > 0);
    CHECK(std::abs(est_sum / rows - realised_sum / rows) <= 0.15);
}

TEST_CASE("method budgets agree for a fixed batch size and horizon") {
    const Problem p = hartmann6();
    int totals[3] = {0, 0, 0};
    const Method methods[3] = {Method::kRandom, Method::kCts, Method::kCsober};
    for (int k = 0; k < 3; ++k) {
        const LoopConfig cfg = quick_config(6, 3, 2);
        const RunOutput out = run_method(p, methods[k], cfg);
        for (const RunRecord& r : out.records) totals[k] += r.batch_size;
        CHECK(out.state.total_queries() == totals[k]);
    }
    CHECK(totals[0] == totals[1]);
    CHECK(totals[1] == totals[2]);
}

TEST_CASE("csv rows round-trip exactly") {
    const Problem p = hartmann6();
    const LoopConfig cfg = quick_config(5, 3, 13);
    const RunOutput out = run_method(p, Method::kCsober, cfg);

    const std::string csv = records_to_csv(out.records);
    const std::vector<RunRecord> parsed = parse_csv(csv);
    REQUIRE(parsed.size() == out.records.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        CHECK(same_results(parsed[i], out.records[i]));
        CHECK(parsed[i].elapsed_seconds == out.records[i].elapsed_seconds);
    }
}

TEST_CASE("record parsing accepts empty optional fields") {
    RunRecord r;
    r.iteration = 4;
    r.best_feasible = -1.25;
    r.log_regret.reset();
    r.eps_lp = 1e-3;
    r.batch_size = 7;
    r.seed = 99;
    const RunRecord back = parse_csv_row(to_csv_row(r));
    CHECK(!back.log_regret.has_value());
    CHECK(same_results(back, r));

    CHECK_THROWS_AS(parse_csv_row("1,2,3"), DomainError);
}

TEST_CASE("method names parse strictly") {
    CHECK(parse_method("csober") == Method::kCsober);
    CHECK(parse_method("random") == Method::kRandom);
    CHECK(parse_method("cts") == Method::kCts);
    CHECK_THROWS_AS(parse_method("nosuch"), ConfigError);
}
