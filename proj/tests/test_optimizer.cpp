#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "csober/errors.hpp"
#include "csober/optimizer.hpp"
#include "csober/rng.hpp"

using namespace csober;

namespace {

Point scalar_point(double x) { return make_continuous(Eigen::VectorXd::Constant(1, x)); }

/// 1-d maximisation of -(x-0.3)^2 on [-1,1] with one ordered expensive
/// constraint x >= -0.5.
Problem toy_ordered_problem() {
    Problem p;
    p.name = "toy-ordered";
    p.domain.lower = Eigen::VectorXd::Constant(1, -1.0);
    p.domain.upper = Eigen::VectorXd::Constant(1, 1.0);
    p.objective = [](const Point& x) {
        const double d = x.continuous(0) - 0.3;
        return -d * d;
    };
    ConstraintSpec c;
    c.ordered = true;
    c.cheap = false;
    c.latent = [](const Point& x) { return x.continuous(0) + 0.5; };
    p.constraints.push_back(std::move(c));
    p.optimum = 0.0;
    p.optimum_point = scalar_point(0.3);
    p.kernel_template = rbf_kernel(1, 0.5, 1.0);
    p.noise_seed = 0x70ull;
    return p;
}

Problem toy_unconstrained_problem() {
    Problem p = toy_ordered_problem();
    p.name = "toy-free";
    p.constraints.clear();
    return p;
}

LoopConfig small_config(int batch, int iters, std::uint64_t seed) {
    LoopConfig cfg;
    cfg.batch_size = batch;
    cfg.iterations = iters;
    cfg.seed = seed;
    cfg.num_candidates = 96;
    cfg.num_nystrom = 48;
    cfg.cts_candidate_cap = 64;
    cfg.fit_restarts = 2;
    cfg.fit_max_iterations = 25;
    return cfg;
}

LoopState bootstrap_state(const Problem& problem, int queries, std::uint64_t seed) {
    LoopState state;
    state.constraint_data.resize(problem.constraints.size());
    for (const Point& x : sample_domain(problem, queries, seed))
        absorb_outcome(state, problem, x, query_problem(problem, x));
    return state;
}

std::shared_ptr<GpPosterior> quadratic_gp() {
    Dataset d;
    d.y.resize(7);
    for (int i = 0; i < 7; ++i) {
        const double x = -1.5 + 0.5 * i;
        d.X.push_back(scalar_point(x));
        d.y(i) = -(x - 0.3) * (x - 0.3);
    }
    return std::make_shared<GpPosterior>(
        condition_gp(d, rbf_kernel(1, 0.5, 1.0), 1e-6, 0.0, 1.0));
}

}  // namespace

TEST_CASE("acquisition closed forms") {
    AcquisitionConfig ucb;
    ucb.kind = AcquisitionKind::kUcb;
    ucb.beta = 2.0;
    CHECK(acquisition_value(1.4, 0.0, ucb) == doctest::Approx(1.4));
    CHECK(acquisition_value(1.0, 0.25, ucb) == doctest::Approx(2.0));

    AcquisitionConfig ei;
    ei.kind = AcquisitionKind::kEi;
    ei.best_value = 0.7;
    CHECK(acquisition_value(0.7, 0.0, ei) == doctest::Approx(0.0));

    AcquisitionConfig mean;
    mean.kind = AcquisitionKind::kMeanOnly;
    CHECK(acquisition_value(-2.3, 5.0, mean) == doctest::Approx(-2.3));
}

TEST_CASE("expected improvement matches a Monte-Carlo estimate") {
    Rng rng(6);
    for (int t = 0; t < 5; ++t) {
        const double m = rng.uniform(-1.0, 1.0);
        const double var = rng.uniform(0.05, 1.5);
        const double best = rng.uniform(-1.0, 1.0);
        AcquisitionConfig ei;
        ei.kind = AcquisitionKind::kEi;
        ei.best_value = best;
        const double closed = acquisition_value(m, var, ei);

        const int draws = 100000;
        double sum = 0.0, sum_sq = 0.0;
        Rng mc(100 + t);
        for (int s = 0; s < draws; ++s) {
            const double f = m + std::sqrt(var) * mc.normal();
            const double imp = std::max(f - best, 0.0);
            sum += imp;
            sum_sq += imp * imp;
        }
        const double mc_mean = sum / draws;
        const double mc_se =
            std::sqrt(std::max(sum_sq / draws - mc_mean * mc_mean, 0.0) / draws);
        CHECK(std::abs(closed - mc_mean) <= 3.0 * mc_se + 1e-12);
    }
}

TEST_CASE("tolerance selection policy") {
    EmpiricalMeasure m;
    m.points = {scalar_point(0.0), scalar_point(1.0)};
    m.weights = Eigen::VectorXd::Constant(2, 0.5);

    LoopConfig cfg;
    cfg.tolerance_mode = ToleranceMode::kFixed;
    cfg.fixed_tolerance = 1e-3;
    CHECK(select_tolerance(cfg, m, {}) == 1e-3);

    cfg.tolerance_mode = ToleranceMode::kAdaptive;
    SUBCASE("no ordered constraints gives the zero-risk default") {
        std::vector<ConstraintModel> unordered = {
            cheap_constraint([](const Point&) { return true; })};
        CHECK(select_tolerance(cfg, m, std::span<const ConstraintModel>(unordered)) == 1e-8);
        CHECK(select_tolerance(cfg, m, {}) == 1e-8);
    }

    SUBCASE("ordered constraints propagate the rejection rate") {
        auto clf = std::make_shared<BinaryClassifier>();
        clf->constant_rate = 0.63;
        ConstraintModel cm;
        cm.flavour = ConstraintModel::Flavour::kBinarySurrogate;
        cm.classifier = std::move(clf);
        cm.ordered = true;
        std::vector<ConstraintModel> ordered = {cm};
        CHECK(select_tolerance(cfg, m, std::span<const ConstraintModel>(ordered)) ==
              doctest::Approx(0.37).epsilon(1e-12));
    }
}

TEST_CASE("constrained TS picks the sampled feasible argmax") {
    auto gp = quadratic_gp();

    SUBCASE("deterministic posterior returns the top values") {
        // training points as candidates: variance ~ 0, samples equal the mean
        const std::vector<Point>& candidates = gp->train.X;
        const std::vector<Point> picks =
            constrained_ts(*gp, {}, std::span<const Point>(candidates), 3, 5);
        REQUIRE(picks.size() == 3);
        // top three objective values sit at x in {0.5, 0.0, 1.0}
        CHECK(picks[0].continuous(0) == doctest::Approx(0.5));
        const double second = picks[1].continuous(0);
        const double third = picks[2].continuous(0);
        CHECK(((second == doctest::Approx(0.0)) || (second == doctest::Approx(1.0))));
        CHECK(((third == doctest::Approx(0.0)) || (third == doctest::Approx(1.0))));
    }

    SUBCASE("cheap-infeasible candidates fall back to the acceptance argmax") {
        std::vector<Point> candidates = {scalar_point(-1.0), scalar_point(0.5)};
        std::vector<ConstraintModel> cms = {
            cheap_constraint([](const Point&) { return false; })};
        auto clf = std::make_shared<BinaryClassifier>();
        clf->constant_rate = 0.4;
        ConstraintModel soft;
        soft.flavour = ConstraintModel::Flavour::kBinarySurrogate;
        soft.classifier = std::move(clf);
        cms.push_back(soft);
        const std::vector<Point> picks =
            constrained_ts(*gp, std::span<const ConstraintModel>(cms),
                           std::span<const Point>(candidates), 1, 9);
        REQUIRE(picks.size() == 1);  // fallback still proposes something
    }

    SUBCASE("always-satisfied cheap constraints reduce to plain TS") {
        std::vector<Point> candidates;
        for (int i = 0; i < 12; ++i) candidates.push_back(scalar_point(-1.5 + 0.25 * i));
        std::vector<ConstraintModel> cms = {
            cheap_constraint([](const Point&) { return true; })};
        const std::vector<Point> with =
            constrained_ts(*gp, std::span<const ConstraintModel>(cms),
                           std::span<const Point>(candidates), 4, 13);
        const std::vector<Point> without =
            constrained_ts(*gp, {}, std::span<const Point>(candidates), 4, 13);
        REQUIRE(with.size() == without.size());
        for (std::size_t i = 0; i < with.size(); ++i)
            CHECK(same_point(with[i], without[i]));
    }

    SUBCASE("symmetric candidates are picked first about equally often") {
        Dataset d;
        d.y.resize(2);
        d.X = {scalar_point(-5.0), scalar_point(5.0)};
        d.y << 1.0, 1.0;
        const GpPosterior sym = condition_gp(d, rbf_kernel(1, 0.5, 1.0), 0.5, 0.0, 1.0);
        std::vector<Point> candidates = {scalar_point(-5.0), scalar_point(5.0)};
        int first_hits = 0;
        const int runs = 10000;
        for (int r = 0; r < runs; ++r) {
            const std::vector<Point> picks =
                constrained_ts(sym, {}, std::span<const Point>(candidates), 1, 7000 + r);
            if (picks.front().continuous(0) < 0.0) ++first_hits;
        }
        const double sigma = std::sqrt(runs * 0.25);
        CHECK(std::abs(first_hits - runs / 2) <= 3.0 * sigma);
    }

    SUBCASE("empty candidates are rejected") {
        CHECK_THROWS_AS(constrained_ts(*gp, {}, {}, 1, 0), DomainError);
    }
}

TEST_CASE("pipeline identities on the ordered toy problem") {
    const Problem problem = toy_ordered_problem();
    const LoopConfig cfg = small_config(5, 1, 11);
    const LoopState state = bootstrap_state(problem, 16, 3);

    const StepArtifacts art = csober_pipeline(problem, state, cfg, 77);

    SUBCASE("adaptive tolerance equals the measured rejection rate") {
        CHECK(art.eps_lp == doctest::Approx(art.est_rejection).epsilon(1e-12));
    }

    SUBCASE("batch points stay inside the support of the measure") {
        REQUIRE(art.proposal.has_value());
        for (const Point& x : art.proposal->points) {
            const double density = pi_density(art.pi, x);
            CHECK(density > 0.0);
        }
    }

    SUBCASE("proposal weights are a probability vector over at most n points") {
        REQUIRE(art.proposal.has_value());
        CHECK(art.proposal->weights.sum() == doctest::Approx(1.0).epsilon(1e-8));
        CHECK(static_cast<int>(art.proposal->points.size()) <= cfg.batch_size);
    }
}

TEST_CASE("unconstrained problems run with the zero-risk tolerance") {
    const Problem problem = toy_unconstrained_problem();
    LoopConfig cfg = small_config(5, 1, 13);
    const LoopState state = bootstrap_state(problem, 14, 5);
    const StepArtifacts art = csober_pipeline(problem, state, cfg, 31);
    CHECK(art.eps_lp == doctest::Approx(1e-8));
    CHECK(art.est_rejection == 0.0);
    REQUIRE(art.proposal.has_value());
}

TEST_CASE("decoupled target swaps the recombination kernel") {
    const Problem problem = toy_ordered_problem();
    const LoopConfig cfg = small_config(5, 1, 17);
    const LoopState state = bootstrap_state(problem, 16, 7);

    const StepArtifacts obj = csober_pipeline(problem, state, cfg, 99, QueryTarget::kObjective);
    const StepArtifacts ct =
        csober_pipeline(problem, state, cfg, 99, QueryTarget::kConstraints);

    // same evaluation points, different covariances
    const std::vector<Point> probe = sample_domain(problem, 4, 123);
    const std::span<const Point> pv(probe);
    const Eigen::MatrixXd a = obj.k_lp(pv, pv);
    const Eigen::MatrixXd b = ct.k_lp(pv, pv);
    CHECK((a - b).cwiseAbs().maxCoeff() > 1e-12);

    // the constraint-target kernel is the summed constraint covariance
    REQUIRE(ct.constraints.size() == 1);
    REQUIRE(ct.constraints[0].surrogate != nullptr);
    const Eigen::MatrixXd expected = posterior_cov(*ct.constraints[0].surrogate, pv, pv);
    CHECK((b - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("budgeted batching fills to the requested size") {
    const Problem problem = toy_ordered_problem();
    const LoopState state = bootstrap_state(problem, 16, 9);

    LoopConfig cfg = small_config(8, 1, 19);
    const StepArtifacts art = csober_pipeline(problem, state, cfg, 55);
    REQUIRE(art.proposal.has_value());
    const int lp_count = static_cast<int>(art.proposal->points.size());

    SUBCASE("fill on tops up with distinct cTS picks") {
        cfg.fill_with_cts = true;
        const std::vector<Point> batch = budgeted_batch(art, cfg, 21);
        CHECK(static_cast<int>(batch.size()) == cfg.batch_size);
        for (std::size_t i = 0; i < batch.size(); ++i)
            for (std::size_t j = i + 1; j < batch.size(); ++j)
                CHECK(!same_point(batch[i], batch[j]));
    }

    SUBCASE("fill off returns the LP-determined size") {
        cfg.fill_with_cts = false;
        const std::vector<Point> batch = budgeted_batch(art, cfg, 21);
        CHECK(static_cast<int>(batch.size()) == lp_count);
    }
}

TEST_CASE("run_loop bookkeeping and determinism") {
    const Problem problem = toy_ordered_problem();

    SUBCASE("single iteration produces one fully populated record") {
        const LoopConfig cfg = small_config(6, 1, 23);
        const RunOutput out = run_loop(problem, cfg);
        REQUIRE(out.records.size() == 1);
        const RunRecord& r = out.records.front();
        CHECK(r.iteration == 1);
        CHECK(r.batch_size >= 1);
        CHECK(std::isfinite(r.realised_rejection));
        CHECK(std::isfinite(r.batch_logdet));
        CHECK(std::isfinite(r.best_feasible));
        CHECK(r.seed == 23);
    }

    SUBCASE("best-feasible trace is nonincreasing") {
        const LoopConfig cfg = small_config(6, 4, 29);
        const RunOutput out = run_loop(problem, cfg);
        for (std::size_t i = 1; i < out.records.size(); ++i)
            CHECK(out.records[i].best_feasible <= out.records[i - 1].best_feasible + 1e-12);
    }

    SUBCASE("identical config and seed reproduce the records") {
        const LoopConfig cfg = small_config(6, 3, 31);
        const RunOutput a = run_loop(problem, cfg);
        const RunOutput b = run_loop(problem, cfg);
        REQUIRE(a.records.size() == b.records.size());
        for (std::size_t i = 0; i < a.records.size(); ++i)
            CHECK(same_results(a.records[i], b.records[i]));
    }

    SUBCASE("rejected points never carry objective labels") {
        const LoopConfig cfg = small_config(6, 4, 37);
        const RunOutput out = run_loop(problem, cfg);
        CHECK_NOTHROW(out.state.check_invariants());
        CHECK(!out.state.rejected.empty());  // the toy problem rejects x < -0.5
        for (const Point& r : out.state.rejected)
            CHECK(r.continuous(0) < -0.5 + 1e-12);
    }

    SUBCASE("query budget equals the sum of batch sizes") {
        const LoopConfig cfg = small_config(6, 3, 41);
        const RunOutput out = run_loop(problem, cfg);
        int total = 0;
        for (const RunRecord& r : out.records) total += r.batch_size;
        CHECK(out.state.total_queries() == total);
    }

    SUBCASE("observer reports shrinkage diagnostics") {
        LoopConfig cfg = small_config(6, 3, 43);
        std::vector<IterationDiagnostics> diags;
        cfg.observer = [&diags](const IterationDiagnostics& d) { diags.push_back(d); };
        run_loop(problem, cfg);
        REQUIRE(diags.size() == 3);
        CHECK(diags.back().pi_mean_variance >= 0.0);
        CHECK(diags.back().bayes_regret_proxy >= 0.0);
    }
}

TEST_CASE("loop configuration is validated") {
    const Problem problem = toy_unconstrained_problem();
    LoopConfig cfg = small_config(2, 1, 0);
    CHECK_THROWS_AS(run_loop(problem, cfg), ConfigError);
    cfg.batch_size = 6;
    cfg.iterations = 0;
    CHECK_THROWS_AS(run_loop(problem, cfg), ConfigError);
}

TEST_CASE("initial design size follows the dimension rule") {
    const Problem toy = toy_ordered_problem();  // d = 1
    LoopConfig cfg = small_config(10, 1, 0);
    CHECK(initial_design_size(toy, cfg) == 6);  // clamp(3, 6, 10)
    cfg.batch_size = 4;
    CHECK(initial_design_size(toy, cfg) == 4);  // lower clamp bounded by n
}
