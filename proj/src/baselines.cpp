#include "csober/baselines.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "csober/errors.hpp"
#include "csober/rng.hpp"

namespace csober {

namespace {

constexpr double kRegretFloor = 1e-12;

struct IterationScratch {
    std::vector<Point> batch;
    double eps_lp = 0.0;
    double est_rejection = 0.0;
    CovarianceFn logdet_cov;
};

double batch_log_determinant(const CovarianceFn& cov, std::span<const Point> batch) {
    Eigen::MatrixXd K = cov(batch, batch);
    K = 0.5 * (K + K.transpose()).eval();
    const double scale = std::max(K.diagonal().maxCoeff(), 1e-12);
    K.diagonal().array() += kGramJitterScale * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success) {
        K.diagonal().array() += 1e-3 * scale;
        llt.compute(K);
        if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    }
    return 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
}

bool enough_data(const Problem& problem, const LoopState& state) {
    if (state.objective.size() < 2) return false;
    for (std::size_t l = 0; l < problem.constraints.size(); ++l)
        if (!problem.constraints[l].cheap && state.constraint_data.at(l).size() < 2)
            return false;
    return true;
}

/// Shared loop skeleton: the proposer fills the scratch for iterations
/// after the initial design.
template <typename Proposer>
RunOutput run_baseline(const Problem& problem, const LoopConfig& cfg, Proposer&& propose) {
    if (cfg.batch_size < 1) throw ConfigError("baseline: batch size must be >= 1");
    if (cfg.iterations < 1) throw ConfigError("baseline: iterations must be >= 1");

    RunOutput out;
    out.state.constraint_data.resize(problem.constraints.size());

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t iter_seed = split_seed(cfg.seed, 0x1000ull + iter);
        out.state.iteration = iter;

        IterationScratch scratch;
        scratch.logdet_cov = covariance_fn(problem.kernel_template);
        if (iter == 1) {
            scratch.batch = sample_domain(problem, initial_design_size(problem, cfg), iter_seed);
        } else {
            propose(out.state, iter_seed, scratch);
        }

        int infeasible = 0;
        for (const Point& x : scratch.batch) {
            const QueryOutcome outcome = query_problem(problem, x);
            if (!outcome.feasible) ++infeasible;
            absorb_outcome(out.state, problem, x, outcome);
        }
        out.state.check_invariants();

        RunRecord rec;
        rec.iteration = iter;
        rec.seed = cfg.seed;
        rec.batch_size = static_cast<int>(scratch.batch.size());
        const std::optional<double> best = out.state.best_feasible_value();
        rec.best_feasible = best ? -*best : std::numeric_limits<double>::infinity();
        if (problem.optimum && best)
            rec.log_regret = std::log10(std::max(*problem.optimum - *best, kRegretFloor));
        rec.realised_rejection =
            scratch.batch.empty()
                ? 0.0
                : static_cast<double>(infeasible) / static_cast<double>(scratch.batch.size());
        rec.eps_lp = scratch.eps_lp;
        rec.est_rejection = scratch.est_rejection;
        rec.batch_logdet =
            batch_log_determinant(scratch.logdet_cov, std::span<const Point>(scratch.batch));
        rec.elapsed_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.records.push_back(rec);
    }
    return out;
}

}  // namespace

RunOutput baseline_random(const Problem& problem, const LoopConfig& cfg) {
    return run_baseline(problem, cfg,
                        [&problem, &cfg](const LoopState&, std::uint64_t seed,
                                         IterationScratch& scratch) {
                            scratch.batch = sample_domain(problem, cfg.batch_size, seed);
                        });
}

RunOutput baseline_cts(const Problem& problem, const LoopConfig& cfg) {
    SurrogateBundle warm;
    return run_baseline(problem, cfg, [&problem, &cfg, &warm](const LoopState& state,
                                                              std::uint64_t seed,
                                                              IterationScratch& scratch) {
        if (!enough_data(problem, state)) {
            scratch.batch = sample_domain(problem, cfg.batch_size, seed);
            return;
        }
        // surrogate refits each iteration, then two-step cTS picks
        const SurrogateBundle bundle =
            fit_surrogates(problem, state, cfg, seed, warm.gp_objective ? &warm : nullptr);
        warm = bundle;
        std::vector<Point> candidates = candidate_set(problem, cfg, split_seed(seed, 0x40ull));
        if (static_cast<int>(candidates.size()) > cfg.cts_candidate_cap) {
            Rng rng(split_seed(seed, 0x41ull));
            for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.cts_candidate_cap); ++i) {
                const std::size_t j = i + rng.uniform_index(candidates.size() - i);
                std::swap(candidates[i], candidates[j]);
            }
            candidates.resize(static_cast<std::size_t>(cfg.cts_candidate_cap));
        }
        scratch.batch = constrained_ts(*bundle.gp_objective, bundle.constraints, candidates,
                                       cfg.batch_size, split_seed(seed, 0x42ull));
        Eigen::VectorXd q = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(scratch.batch.size()));
        for (const ConstraintModel& cm : bundle.constraints)
            q.array() *= rho_batch(cm, std::span<const Point>(scratch.batch)).array();
        scratch.est_rejection = scratch.batch.empty() ? 0.0 : 1.0 - q.mean();
        scratch.logdet_cov = covariance_fn(bundle.gp_objective->kernel);
    });
}

RunOutput run_method(const Problem& problem, Method method, const LoopConfig& cfg) {
    switch (method) {
        case Method::kCsober:
            return run_loop(problem, cfg);
        case Method::kRandom:
            return baseline_random(problem, cfg);
        case Method::kCts:
            return baseline_cts(problem, cfg);
    }
    throw ConfigError("run_method: unknown method");
}

Method parse_method(const std::string& name) {
    if (name == "csober") return Method::kCsober;
    if (name == "random") return Method::kRandom;
    if (name == "cts") return Method::kCts;
    throw ConfigError("unknown method: " + name);
}

}  // namespace csober
