#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "csober/kernels.hpp"
#include "csober/measure.hpp"
#include "csober/point.hpp"
#include "csober/simplex.hpp"

namespace csober {

/// Eigenpairs of the landmark Gram matrix; the top n-2 pairs define the LP
/// test functions phi_j = u_j . K(X_nys, .).
struct NystromBasis {
    std::vector<Point> points;     // landmarks
    Eigen::VectorXd eigenvalues;   // descending, clamped at zero
    Eigen::MatrixXd eigenvectors;  // column j pairs with eigenvalues(j)
    int n_test = 0;                // n - 2
    CovarianceFn cov;
};

NystromBasis nystrom_basis(CovarianceFn cov, std::vector<Point> landmarks, int batch_size);
NystromBasis nystrom_basis(const KernelSpec& kernel, std::vector<Point> landmarks, int batch_size);

/// Test-function values over a point set given the landmark cross
/// covariance cov(X_nys, X), one row per test function.
Eigen::MatrixXd test_function_matrix(const NystromBasis& basis, const Eigen::MatrixXd& cross);
Eigen::MatrixXd test_function_matrix(const NystromBasis& basis, std::span<const Point> X);

/// Truncation error eps_nys = max_x |K_nys(x,x) - K(x,x)|^(1/2).
double nystrom_error(const NystromBasis& basis, const Eigen::MatrixXd& cross,
                     const Eigen::VectorXd& diag);
double nystrom_error(const NystromBasis& basis, std::span<const Point> X);

/// Assembled tolerance-relaxed recombination LP:
///   maximise w . (g o q)
///   s.t. |(w - w_rec) . phi_j| <= eps_lp sqrt(lambda_j / (n-2)),
///        (w - w_rec) . q >= 0,  sum w = 1,  w >= 0.
struct LpProblem {
    Eigen::VectorXd reward;       // g o q
    Eigen::MatrixXd test_matrix;  // n_test x N
    Eigen::VectorXd test_rhs;     // eps_lp * slack_unit
    Eigen::VectorXd slack_unit;   // sqrt(lambda_j / (n-2))
    Eigen::VectorXd w_rec;
    Eigen::VectorXd acceptance;   // q
    double eps_lp = 0.0;
    int batch_cap = 0;            // n

    Eigen::Index assembled_rows() const { return 2 * test_matrix.rows() + 2; }
};

LpProblem build_lp(const EmpiricalMeasure& m, const NystromBasis& basis, const Eigen::VectorXd& g,
                   const Eigen::VectorXd& q, double eps_lp);
LpProblem build_lp(const EmpiricalMeasure& m, const NystromBasis& basis,
                   const Eigen::MatrixXd& test_matrix, const Eigen::VectorXd& g,
                   const Eigen::VectorXd& q, double eps_lp);

LinearProgram to_linear_program(const LpProblem& lp);

struct LpResult {
    Eigen::VectorXd weights;
    double objective = 0.0;
    int iterations = 0;
};

/// Solves the recombination LP to a vertex. Throws SolverStall when the
/// iteration limit is hit or the solve cannot be certified feasible.
LpResult solve_lp(const LpProblem& lp, LpSolver* solver = nullptr);

/// Largest violation of the Eq.-(5)-style constraints by w.
double lp_constraint_violation(const LpProblem& lp, const Eigen::VectorXd& w);

struct RelaxedLpResult {
    LpResult result;
    double eps_used = 0.0;
    bool fell_back = false;  // w_rec truncated to its top-n weights
};

/// solve_lp with the stall-recovery ladder: relax eps tenfold up to three
/// times, then fall back to the truncated reference weights.
RelaxedLpResult solve_lp_with_recovery(const LpProblem& lp, LpSolver* solver = nullptr);

struct BatchProposal {
    std::vector<int> indices;  // into the reference measure
    std::vector<Point> points;
    Eigen::VectorXd weights;   // strictly positive, sums to one
    double eps_lp = 0.0;
    double eps_nys = 0.0;
    double expected_reward = 0.0;
    double wce_certificate = 0.0;  // eps_rej * K_max + 2 eps_nys + eps_lp
};

/// Strips weights below 1e-12 and renormalises. Throws DegenerateBatch when
/// everything is stripped.
BatchProposal extract_batch(const LpResult& result, const LpProblem& lp,
                            const EmpiricalMeasure& m, double eps_nys, double k_max);

/// Squared MMD between the batch and the reference measure under cov.
double worst_case_error(std::span<const Point> batch_points, const Eigen::VectorXd& batch_weights,
                        const EmpiricalMeasure& m, const CovarianceFn& cov);
double worst_case_error(const BatchProposal& bp, const EmpiricalMeasure& m,
                        const CovarianceFn& cov);

/// w . cov(X, X) . w evaluated in row blocks; never materialises the full
/// Gram matrix.
double quadratic_form_blocked(const CovarianceFn& cov, std::span<const Point> X,
                              const Eigen::VectorXd& w);

struct RejectionOutcome {
    std::vector<int> accepted;  // positions within the batch
    Eigen::VectorXd weights;    // reweighted survivor weights, not normalised
    double wce = 0.0;           // survivor wce against the reference measure

    bool empty() const { return accepted.empty(); }
};

/// Bernoulli acceptance per batch point followed by nonnegative
/// least-squares reweighting of the survivors on the wce quadratic form.
RejectionOutcome simulate_rejection(const BatchProposal& bp, const Eigen::VectorXd& q_batch,
                                    std::uint64_t seed, const EmpiricalMeasure& m,
                                    const CovarianceFn& cov);

}  // namespace csober
