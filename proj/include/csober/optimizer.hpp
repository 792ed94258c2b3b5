#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "csober/acquisition.hpp"
#include "csober/measure.hpp"
#include "csober/problems.hpp"
#include "csober/quadrature.hpp"
#include "csober/records.hpp"

namespace csober {

enum class ToleranceMode { kAdaptive, kFixed };

/// Side-channel diagnostics emitted once per iteration when an observer is
/// installed; never part of the CSV records.
struct IterationDiagnostics {
    int iteration = 0;
    double pi_mean_variance = 0.0;
    double pi_mean_distance = -1.0;
    double bayes_regret_proxy = -1.0;  // |y* - w_batch . f_true(X_batch)|
    double eps_lp = 0.0;
    double eps_nys = 0.0;
    double wce = 0.0;
    int lp_batch_size = 0;
};

struct LoopConfig {
    int batch_size = 50;   // n >= 3
    int iterations = 15;   // T >= 1
    std::uint64_t seed = 0;
    ToleranceMode tolerance_mode = ToleranceMode::kAdaptive;
    double fixed_tolerance = 1e-3;
    AcquisitionKind af_kind = AcquisitionKind::kUcb;
    double ucb_beta = 2.0;
    bool fill_with_cts = true;
    int num_candidates = 4096;    // N
    int num_nystrom = 512;        // M
    double constraint_epsilon = 0.5;  // default per-constraint threshold
    int cts_candidate_cap = 512;
    int max_pool_candidates = 10000;
    double constraint_noise_floor = 1e-6;
    double objective_noise_floor = 1e-6;
    int fit_restarts = 8;
    int fit_max_iterations = 40;
    std::function<void(const IterationDiagnostics&)> observer;
};

/// Mutable run state. Every queried point appears in exactly one of the
/// labelled objective set or the rejected log.
struct LoopState {
    Dataset objective;
    std::vector<char> objective_feasible;  // aligned with objective rows
    std::vector<Dataset> constraint_data;  // one per surrogate-modelled constraint
    std::vector<Point> rejected;
    int iteration = 0;

    int total_queries() const {
        return static_cast<int>(objective.X.size() + rejected.size());
    }
    /// Largest feasible objective value observed, if any.
    std::optional<double> best_feasible_value() const;
    void check_invariants() const;
};

/// Records a query outcome into the state.
void absorb_outcome(LoopState& state, const Problem& problem, const Point& x,
                    const QueryOutcome& outcome);

/// Tolerance policy: adaptive propagates the expected rejection rate of the
/// ordered constraints; problems without ordered constraints use 1e-8.
double select_tolerance(const LoopConfig& cfg, const EmpiricalMeasure& m,
                        std::span<const ConstraintModel> constraints);

/// Two-step constrained Thompson sampling: joint posterior draws for the
/// objective and every constraint, feasible sampled argmax per pick, and a
/// largest-acceptance fallback when nothing is sampled feasible. Picks are
/// made without replacement.
std::vector<Point> constrained_ts(const GpPosterior& gp_obj,
                                  std::span<const ConstraintModel> constraints,
                                  std::span<const Point> candidates, int count,
                                  std::uint64_t seed);

enum class QueryTarget { kObjective, kConstraints };

/// Fitted objective GP plus one acceptance model per problem constraint.
struct SurrogateBundle {
    std::shared_ptr<const GpPosterior> gp_objective;
    std::vector<ConstraintModel> constraints;
};

/// warm, when given, seeds the hyperparameter search from the previous
/// iteration's fits.
SurrogateBundle fit_surrogates(const Problem& problem, const LoopState& state,
                               const LoopConfig& cfg, std::uint64_t seed,
                               const SurrogateBundle* warm = nullptr);

/// Candidate set for one iteration: the pool (capped) or fresh prior draws.
std::vector<Point> candidate_set(const Problem& problem, const LoopConfig& cfg,
                                 std::uint64_t seed);

/// Everything the LP step produces; kept so the batching layer and the
/// metrics can share one pipeline pass.
struct StepArtifacts {
    std::shared_ptr<const GpPosterior> gp_objective;
    std::vector<ConstraintModel> constraints;
    PiDensity pi;
    EmpiricalMeasure measure;
    double eps_lp = 0.0;
    double eps_nys = 0.0;
    double est_rejection = 0.0;
    std::optional<BatchProposal> proposal;  // absent when the LP degenerated
    CovarianceFn k_lp;
    bool lp_fell_back = false;
};

/// Pipeline of one iteration: fit surrogates, build the feasibility
/// measure, pick the tolerance, run the recombination LP. The target swaps
/// the LP kernel between the objective covariance and the summed constraint
/// covariances for decoupled querying.
StepArtifacts csober_pipeline(const Problem& problem, const LoopState& state,
                              const LoopConfig& cfg, std::uint64_t iteration_seed,
                              QueryTarget target = QueryTarget::kObjective,
                              const SurrogateBundle* warm = nullptr);

/// The LP-selected batch only (no fill).
std::vector<Point> csober_step(const Problem& problem, const LoopState& state,
                               const LoopConfig& cfg, std::uint64_t iteration_seed);

/// LP batch topped up to the requested size with constrained TS picks on
/// the leftover candidates after hallucinating the pending batch.
std::vector<Point> budgeted_batch(const StepArtifacts& artifacts, const LoopConfig& cfg,
                                  std::uint64_t iteration_seed);

struct RunOutput {
    std::vector<RunRecord> records;
    LoopState state;
};

/// Full optimisation loop under ordered-query semantics; deterministic
/// given the config seed.
RunOutput run_loop(const Problem& problem, const LoopConfig& cfg);

/// Initial random design size: 3 * total dims clamped to the batch size.
int initial_design_size(const Problem& problem, const LoopConfig& cfg);

}  // namespace csober
