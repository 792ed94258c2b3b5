#include "csober/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "csober/errors.hpp"
#include "csober/rng.hpp"

namespace csober {

namespace {

constexpr double kUnorderedTolerance = 1e-8;
constexpr double kRegretFloor = 1e-12;

KernelSpec classifier_kernel(const KernelSpec& family, const std::vector<Point>& X) {
    if (family.family == KernelSpec::Family::kTanimoto) return tanimoto_kernel(4.0);
    return default_classifier_kernel(X);
}

FitOptions fit_options(const LoopConfig& cfg, std::uint64_t seed) {
    FitOptions opt;
    opt.restarts = cfg.fit_restarts;
    opt.max_iterations = cfg.fit_max_iterations;
    opt.gradient_tol = 1e-4;  // loop fits do not need interior-test accuracy
    opt.seed = seed;
    return opt;
}

std::vector<ConstraintModel> build_constraint_models(const Problem& problem,
                                                     const LoopState& state,
                                                     const LoopConfig& cfg, std::uint64_t seed,
                                                     const SurrogateBundle* warm) {
    std::vector<ConstraintModel> models;
    for (std::size_t l = 0; l < problem.constraints.size(); ++l) {
        const ConstraintSpec& spec = problem.constraints[l];
        if (spec.cheap) {
            const std::uint64_t stream = split_seed(problem.noise_seed, 0xc0ull + l);
            auto latent = spec.latent;
            auto prob = spec.accept_prob;
            const bool deterministic = spec.deterministic;
            auto oracle = [latent, prob, deterministic, stream](const Point& x) {
                if (deterministic) return latent(x) >= 0.0;
                return unit_from_hash(hash_point(x, stream)) < prob(x);
            };
            models.push_back(
                cheap_constraint(oracle, cfg.constraint_epsilon, spec.coupled, spec.ordered));
            continue;
        }
        const Dataset& data = state.constraint_data.at(l);
        if (spec.binary_feedback) {
            models.push_back(fit_binary_constraint(
                data, classifier_kernel(problem.kernel_template, data.X), cfg.constraint_epsilon,
                spec.coupled, spec.ordered));
        } else {
            const KernelSpec* tpl = &problem.kernel_template;
            if (warm != nullptr && l < warm->constraints.size() &&
                warm->constraints[l].surrogate != nullptr)
                tpl = &warm->constraints[l].surrogate->kernel;
            auto gp = std::make_shared<GpPosterior>(
                fit_gp(data, *tpl, cfg.constraint_noise_floor,
                       fit_options(cfg, split_seed(seed, 0x11ull + l))));
            models.push_back(continuous_constraint(std::move(gp), cfg.constraint_epsilon,
                                                   spec.coupled, spec.ordered));
        }
    }
    return models;
}

}  // namespace

SurrogateBundle fit_surrogates(const Problem& problem, const LoopState& state,
                               const LoopConfig& cfg, std::uint64_t seed,
                               const SurrogateBundle* warm) {
    SurrogateBundle bundle;
    const KernelSpec& tpl = (warm != nullptr && warm->gp_objective != nullptr)
                                ? warm->gp_objective->kernel
                                : problem.kernel_template;
    bundle.gp_objective = std::make_shared<GpPosterior>(
        fit_gp(state.objective, tpl, cfg.objective_noise_floor,
               fit_options(cfg, split_seed(seed, 0x10ull))));
    bundle.constraints = build_constraint_models(problem, state, cfg, seed, warm);
    return bundle;
}

std::vector<Point> candidate_set(const Problem& problem, const LoopConfig& cfg,
                                 std::uint64_t seed) {
    if (problem.domain.is_pool()) {
        if (static_cast<int>(problem.domain.pool.size()) <= cfg.max_pool_candidates)
            return problem.domain.pool;
        Rng rng(split_seed(seed, 0xcadull));
        std::vector<Point> subset = problem.domain.pool;
        for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.max_pool_candidates); ++i) {
            const std::size_t j = i + rng.uniform_index(subset.size() - i);
            std::swap(subset[i], subset[j]);
        }
        subset.resize(static_cast<std::size_t>(cfg.max_pool_candidates));
        return subset;
    }
    return sample_domain(problem, cfg.num_candidates, split_seed(seed, 0xcadull));
}

namespace {

void drop_zero_weights(EmpiricalMeasure& m) {
    std::vector<Point> pts;
    std::vector<double> ws;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        if (m.weights(i) > 0.0) {
            pts.push_back(m.points[static_cast<std::size_t>(i)]);
            ws.push_back(m.weights(i));
        }
    }
    m.points = std::move(pts);
    m.weights = Eigen::Map<Eigen::VectorXd>(ws.data(), static_cast<Eigen::Index>(ws.size()));
    m.weights /= m.weights.sum();
}

Eigen::VectorXd covariance_diagonal(const CovarianceFn& cov, std::span<const Point> X) {
    constexpr std::size_t kBlock = 256;
    Eigen::VectorXd diag(static_cast<Eigen::Index>(X.size()));
    for (std::size_t start = 0; start < X.size(); start += kBlock) {
        const std::size_t len = std::min(kBlock, X.size() - start);
        const auto block = X.subspan(start, len);
        diag.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) =
            cov(block, block).diagonal();
    }
    return diag;
}

Eigen::VectorXd acceptance_vector(std::span<const ConstraintModel> models,
                                  std::span<const Point> X) {
    Eigen::VectorXd q = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(X.size()));
    for (const ConstraintModel& cm : models) q.array() *= rho_batch(cm, X).array();
    return q;
}

}  // namespace

std::optional<double> LoopState::best_feasible_value() const {
    std::optional<double> best;
    for (std::size_t i = 0; i < objective.X.size(); ++i) {
        if (!objective_feasible[i]) continue;
        if (!best || objective.y(static_cast<Eigen::Index>(i)) > *best)
            best = objective.y(static_cast<Eigen::Index>(i));
    }
    return best;
}

void LoopState::check_invariants() const {
    if (objective.X.size() != objective_feasible.size() ||
        static_cast<Eigen::Index>(objective.X.size()) != objective.y.size())
        throw DomainError("LoopState: misaligned objective bookkeeping");
    for (const Point& r : rejected)
        for (const Point& x : objective.X)
            if (same_point(r, x))
                throw DomainError("LoopState: rejected point carries an objective label");
}

void absorb_outcome(LoopState& state, const Problem& problem, const Point& x,
                    const QueryOutcome& outcome) {
    for (std::size_t l = 0; l < problem.constraints.size(); ++l) {
        if (problem.constraints[l].cheap) continue;
        Dataset& data = state.constraint_data.at(l);
        data.X.push_back(x);
        Eigen::VectorXd y(data.y.size() + 1);
        y << data.y, outcome.observations[l];
        data.y = std::move(y);
    }
    if (outcome.objective.has_value()) {
        state.objective.X.push_back(x);
        Eigen::VectorXd y(state.objective.y.size() + 1);
        y << state.objective.y, *outcome.objective;
        state.objective.y = std::move(y);
        state.objective_feasible.push_back(outcome.feasible ? 1 : 0);
    } else {
        state.rejected.push_back(x);
    }
}

double select_tolerance(const LoopConfig& cfg, const EmpiricalMeasure& m,
                        std::span<const ConstraintModel> constraints) {
    if (cfg.tolerance_mode == ToleranceMode::kFixed) return cfg.fixed_tolerance;
    std::vector<ConstraintModel> ordered;
    for (const ConstraintModel& cm : constraints)
        if (cm.ordered) ordered.push_back(cm);
    if (ordered.empty()) return kUnorderedTolerance;
    return rejection_rate(m, ordered);
}

std::vector<Point> constrained_ts(const GpPosterior& gp_obj,
                                  std::span<const ConstraintModel> constraints,
                                  std::span<const Point> candidates, int count,
                                  std::uint64_t seed) {
    if (candidates.empty()) throw DomainError("constrained_ts: candidates must be nonempty");
    if (count < 1) throw DomainError("constrained_ts: count must be >= 1");
    const Eigen::Index N = static_cast<Eigen::Index>(candidates.size());
    count = std::min<int>(count, static_cast<int>(N));

    const Eigen::MatrixXd obj_samples =
        sample_posterior(gp_obj, candidates, count, split_seed(seed, 0x7501ull));

    // sampled feasibility masks, one row per pick
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> feasible(count, N);
    feasible.setConstant(true);
    Rng rng(split_seed(seed, 0x7502ull));
    for (std::size_t l = 0; l < constraints.size(); ++l) {
        const ConstraintModel& cm = constraints[l];
        switch (cm.flavour) {
            case ConstraintModel::Flavour::kCheapOracle: {
                for (Eigen::Index i = 0; i < N; ++i) {
                    const bool ok = cm.oracle(candidates[static_cast<std::size_t>(i)]);
                    if (!ok) feasible.col(i).setConstant(false);
                }
                break;
            }
            case ConstraintModel::Flavour::kContinuousSurrogate: {
                const Eigen::MatrixXd latent = sample_posterior(
                    *cm.surrogate, candidates, count, split_seed(seed, 0x7510ull + l));
                for (int s = 0; s < count; ++s)
                    for (Eigen::Index i = 0; i < N; ++i)
                        if (latent(s, i) < 0.0) feasible(s, i) = false;
                break;
            }
            case ConstraintModel::Flavour::kBinarySurrogate: {
                if (cm.classifier->constant_rate >= 0.0) {
                    for (int s = 0; s < count; ++s)
                        for (Eigen::Index i = 0; i < N; ++i)
                            if (rng.uniform() >= cm.classifier->constant_rate)
                                feasible(s, i) = false;
                    break;
                }
                const GpPrediction latent = classifier_latent_joint(*cm.classifier, candidates);
                Eigen::MatrixXd C = latent.cov;
                C.diagonal().array() += 1e-10;
                Eigen::LLT<Eigen::MatrixXd> llt(C);
                Eigen::MatrixXd factor;
                if (llt.info() == Eigen::Success) {
                    factor = llt.matrixL();
                } else {
                    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(latent.cov);
                    factor = eig.eigenvectors() *
                             eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
                }
                Rng lrng(split_seed(seed, 0x7530ull + l));
                Eigen::VectorXd xi(N);
                for (int s = 0; s < count; ++s) {
                    for (Eigen::Index i = 0; i < N; ++i) xi(i) = lrng.normal();
                    const Eigen::VectorXd draw = latent.mean + factor * xi;
                    for (Eigen::Index i = 0; i < N; ++i)
                        if (draw(i) < 0.0) feasible(s, i) = false;
                }
                break;
            }
        }
    }

    const Eigen::VectorXd mean_accept = acceptance_vector(constraints, candidates);

    std::vector<char> picked(static_cast<std::size_t>(N), 0);
    std::vector<Point> out;
    for (int s = 0; s < count; ++s) {
        Eigen::Index best = -1;
        for (Eigen::Index i = 0; i < N; ++i) {
            if (picked[static_cast<std::size_t>(i)] || !feasible(s, i)) continue;
            if (best < 0 || obj_samples(s, i) > obj_samples(s, best)) best = i;
        }
        if (best < 0) {  // nothing sampled feasible: minimise the total violation
            for (Eigen::Index i = 0; i < N; ++i) {
                if (picked[static_cast<std::size_t>(i)]) continue;
                if (best < 0 || mean_accept(i) > mean_accept(best)) best = i;
            }
        }
        if (best < 0) break;
        picked[static_cast<std::size_t>(best)] = 1;
        out.push_back(candidates[static_cast<std::size_t>(best)]);
    }
    return out;
}

StepArtifacts csober_pipeline(const Problem& problem, const LoopState& state,
                              const LoopConfig& cfg, std::uint64_t iteration_seed,
                              QueryTarget target, const SurrogateBundle* warm) {
    if (cfg.batch_size < 3) throw ConfigError("csober_pipeline: batch size must be >= 3");

    StepArtifacts art;
    SurrogateBundle bundle = fit_surrogates(problem, state, cfg, iteration_seed, warm);
    art.gp_objective = std::move(bundle.gp_objective);
    art.constraints = std::move(bundle.constraints);

    std::vector<Point> candidates =
        candidate_set(problem, cfg, split_seed(iteration_seed, 0x20ull));

    art.pi.objective = art.gp_objective;
    art.pi.constraints = art.constraints;
    art.pi.eta = estimate_eta(art.pi, candidates);
    art.measure = build_measure(art.pi, std::move(candidates));
    drop_zero_weights(art.measure);

    art.eps_lp = select_tolerance(cfg, art.measure, art.constraints);
    std::vector<ConstraintModel> ordered;
    for (const ConstraintModel& cm : art.constraints)
        if (cm.ordered) ordered.push_back(cm);
    art.est_rejection = rejection_rate(art.measure, ordered.empty()
                                                        ? std::span<const ConstraintModel>(
                                                              art.constraints)
                                                        : std::span<const ConstraintModel>(
                                                              ordered));

    if (target == QueryTarget::kObjective) {
        art.k_lp = posterior_covariance_fn(art.gp_objective);
    } else {
        std::vector<std::shared_ptr<const GpPosterior>> gps;
        for (const ConstraintModel& cm : art.constraints)
            if (cm.flavour == ConstraintModel::Flavour::kContinuousSurrogate)
                gps.push_back(cm.surrogate);
        if (gps.empty()) {
            art.k_lp = posterior_covariance_fn(art.gp_objective);
        } else {
            art.k_lp = [gps](std::span<const Point> a, std::span<const Point> b) {
                Eigen::MatrixXd sum = posterior_cov(*gps.front(), a, b);
                for (std::size_t i = 1; i < gps.size(); ++i)
                    sum += posterior_cov(*gps[i], a, b);
                return sum;
            };
        }
    }

    const int n_nystrom = std::max(cfg.num_nystrom, cfg.batch_size - 2);
    const std::vector<Point> landmarks =
        deweighted_resample(art.measure, n_nystrom, split_seed(iteration_seed, 0x30ull));
    const NystromBasis basis = nystrom_basis(art.k_lp, landmarks, cfg.batch_size);

    const std::span<const Point> rec(art.measure.points);
    const Eigen::MatrixXd cross = art.k_lp(basis.points, rec);
    const Eigen::VectorXd diag = covariance_diagonal(art.k_lp, rec);
    art.eps_nys = nystrom_error(basis, cross, diag);
    const double k_max = std::sqrt(std::max(diag.maxCoeff(), 0.0));

    AcquisitionConfig af;
    af.kind = cfg.af_kind;
    af.beta = cfg.ucb_beta;
    if (cfg.af_kind == AcquisitionKind::kEi) {
        const std::optional<double> best = state.best_feasible_value();
        af.best_value = best ? *best : state.objective.y.maxCoeff();
    }
    const Eigen::VectorXd g = acquisition_batch(*art.gp_objective, rec, af);
    const Eigen::VectorXd q = acceptance_vector(art.constraints, rec);

    const LpProblem lp =
        build_lp(art.measure, basis, test_function_matrix(basis, cross), g, q, art.eps_lp);
    const RelaxedLpResult solved = solve_lp_with_recovery(lp);
    art.lp_fell_back = solved.fell_back;
    art.eps_lp = solved.eps_used;
    try {
        art.proposal = extract_batch(solved.result, lp, art.measure, art.eps_nys, k_max);
    } catch (const DegenerateBatch&) {
        art.proposal.reset();
    }
    return art;
}

std::vector<Point> csober_step(const Problem& problem, const LoopState& state,
                               const LoopConfig& cfg, std::uint64_t iteration_seed) {
    const StepArtifacts art = csober_pipeline(problem, state, cfg, iteration_seed);
    return art.proposal ? art.proposal->points : std::vector<Point>{};
}

std::vector<Point> budgeted_batch(const StepArtifacts& artifacts, const LoopConfig& cfg,
                                  std::uint64_t iteration_seed) {
    std::vector<Point> batch;
    if (artifacts.proposal) batch = artifacts.proposal->points;

    const bool must_fill = batch.empty() || (cfg.fill_with_cts &&
                                             static_cast<int>(batch.size()) < cfg.batch_size);
    if (!must_fill) return batch;

    // leftover candidates, deduplicated against the pending batch
    std::vector<Point> rest;
    for (const Point& x : artifacts.measure.points) {
        bool dup = false;
        for (const Point& b : batch) {
            if (same_point(x, b)) {
                dup = true;
                break;
            }
        }
        if (!dup) rest.push_back(x);
    }
    if (rest.empty()) return batch;

    if (static_cast<int>(rest.size()) > cfg.cts_candidate_cap) {
        Rng rng(split_seed(iteration_seed, 0x40ull));
        for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.cts_candidate_cap); ++i) {
            const std::size_t j = i + rng.uniform_index(rest.size() - i);
            std::swap(rest[i], rest[j]);
        }
        rest.resize(static_cast<std::size_t>(cfg.cts_candidate_cap));
    }

    // hallucinate the surrogates on the pending batch to diversify the fill
    std::shared_ptr<const GpPosterior> gp = artifacts.gp_objective;
    std::vector<ConstraintModel> constraints = artifacts.constraints;
    if (!batch.empty()) {
        gp = std::make_shared<GpPosterior>(
            hallucinate(*artifacts.gp_objective, std::span<const Point>(batch)));
        for (ConstraintModel& cm : constraints)
            if (cm.flavour == ConstraintModel::Flavour::kContinuousSurrogate)
                cm.surrogate = std::make_shared<GpPosterior>(
                    hallucinate(*cm.surrogate, std::span<const Point>(batch)));
    }

    const int need = cfg.batch_size - static_cast<int>(batch.size());
    const std::vector<Point> fill =
        constrained_ts(*gp, constraints, rest, need, split_seed(iteration_seed, 0x50ull));
    batch.insert(batch.end(), fill.begin(), fill.end());
    return batch;
}

int initial_design_size(const Problem& problem, const LoopConfig& cfg) {
    const int d = problem.domain.total_dims();
    const int lo = std::min(6, cfg.batch_size);
    return std::clamp(3 * d, lo, cfg.batch_size);
}

namespace {

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

}  // namespace

RunOutput run_loop(const Problem& problem, const LoopConfig& cfg) {
    if (cfg.batch_size < 3) throw ConfigError("run_loop: batch size must be >= 3");
    if (cfg.iterations < 1) throw ConfigError("run_loop: iterations must be >= 1");
    if (cfg.tolerance_mode == ToleranceMode::kFixed && cfg.fixed_tolerance < 0.0)
        throw ConfigError("run_loop: fixed tolerance must be >= 0");

    RunOutput out;
    out.state.constraint_data.resize(problem.constraints.size());
    SurrogateBundle warm;

    for (int iter = 1; iter <= cfg.iterations; ++iter) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t iter_seed = split_seed(cfg.seed, 0x1000ull + iter);
        out.state.iteration = iter;

        std::vector<Point> batch;
        std::optional<StepArtifacts> art;
        if (iter == 1) {
            batch = sample_domain(problem, initial_design_size(problem, cfg), iter_seed);
        } else if (!enough_data(problem, out.state)) {
            batch = sample_domain(problem, cfg.batch_size, iter_seed);
        } else {
            art = csober_pipeline(problem, out.state, cfg, iter_seed,
                                  QueryTarget::kObjective,
                                  warm.gp_objective ? &warm : nullptr);
            warm.gp_objective = art->gp_objective;
            warm.constraints = art->constraints;
            batch = budgeted_batch(*art, cfg, split_seed(iter_seed, 0x2ull));
        }

        int infeasible = 0;
        for (const Point& x : batch) {
            const QueryOutcome outcome = query_problem(problem, x);
            if (!outcome.feasible) ++infeasible;
            absorb_outcome(out.state, problem, x, outcome);
        }
        out.state.check_invariants();

        RunRecord rec;
        rec.iteration = iter;
        rec.seed = cfg.seed;
        rec.batch_size = static_cast<int>(batch.size());
        const std::optional<double> best = out.state.best_feasible_value();
        rec.best_feasible = best ? -*best : std::numeric_limits<double>::infinity();
        if (problem.optimum && best)
            rec.log_regret = std::log10(std::max(*problem.optimum - *best, kRegretFloor));
        rec.realised_rejection =
            batch.empty() ? 0.0
                          : static_cast<double>(infeasible) / static_cast<double>(batch.size());
        if (art) {
            rec.eps_lp = art->eps_lp;
            rec.est_rejection = art->est_rejection;
            rec.wce = art->proposal
                          ? worst_case_error(*art->proposal, art->measure, art->k_lp)
                          : 0.0;
            rec.batch_logdet = batch_log_determinant(art->k_lp, batch);
        } else {
            rec.batch_logdet =
                batch_log_determinant(covariance_fn(problem.kernel_template), batch);
        }
        rec.elapsed_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.records.push_back(rec);

        if (cfg.observer) {
            IterationDiagnostics diag;
            diag.iteration = iter;
            diag.eps_lp = rec.eps_lp;
            diag.wce = rec.wce;
            if (art) {
                diag.eps_nys = art->eps_nys;
                const Point* star =
                    problem.optimum_point ? &*problem.optimum_point : nullptr;
                const ShrinkageStats stats = shrinkage_stats(art->measure, star);
                diag.pi_mean_variance = stats.variance;
                diag.pi_mean_distance = stats.mean_distance;
                if (art->proposal) {
                    diag.lp_batch_size = static_cast<int>(art->proposal->points.size());
                    if (problem.optimum) {
                        double integral = 0.0;
                        for (Eigen::Index i = 0; i < art->proposal->weights.size(); ++i)
                            integral +=
                                art->proposal->weights(i) *
                                problem.objective(
                                    art->proposal->points[static_cast<std::size_t>(i)]);
                        diag.bayes_regret_proxy = std::abs(*problem.optimum - integral);
                    }
                }
            }
            cfg.observer(diag);
        }
    }
    return out;
}

}  // namespace csober
