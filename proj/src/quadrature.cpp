#include "csober/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csober/errors.hpp"
#include "csober/rng.hpp"

namespace csober {

namespace {

constexpr double kWeightFloor = 1e-12;
constexpr double kFeasSlack = 1e-9;

}  // namespace

NystromBasis nystrom_basis(CovarianceFn cov, std::vector<Point> landmarks, int batch_size) {
    if (batch_size < 3) throw DomainError("nystrom_basis: batch size must be >= 3");
    const int n_test = batch_size - 2;
    if (static_cast<int>(landmarks.size()) < n_test)
        throw DomainError("nystrom_basis: need at least n-2 landmarks");

    NystromBasis basis;
    basis.n_test = n_test;
    Eigen::MatrixXd G = cov(landmarks, landmarks);
    G = 0.5 * (G + G.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G);
    if (eig.info() != Eigen::Success)
        throw NumericalFailure("nystrom_basis: eigendecomposition failed");

    const Eigen::Index M = G.rows();
    basis.eigenvalues.resize(M);
    basis.eigenvectors.resize(M, M);
    const double floor = 1e-12 * std::max(eig.eigenvalues().maxCoeff(), 0.0);
    for (Eigen::Index j = 0; j < M; ++j) {  // ascending to descending
        const double lambda = eig.eigenvalues()(M - 1 - j);
        basis.eigenvalues(j) = lambda > floor ? lambda : 0.0;
        basis.eigenvectors.col(j) = eig.eigenvectors().col(M - 1 - j);
    }
    basis.points = std::move(landmarks);
    basis.cov = std::move(cov);
    return basis;
}

NystromBasis nystrom_basis(const KernelSpec& kernel, std::vector<Point> landmarks,
                           int batch_size) {
    return nystrom_basis(covariance_fn(kernel), std::move(landmarks), batch_size);
}

Eigen::MatrixXd test_function_matrix(const NystromBasis& basis, const Eigen::MatrixXd& cross) {
    return basis.eigenvectors.leftCols(basis.n_test).transpose() * cross;
}

Eigen::MatrixXd test_function_matrix(const NystromBasis& basis, std::span<const Point> X) {
    return test_function_matrix(basis, basis.cov(basis.points, X));
}

double nystrom_error(const NystromBasis& basis, const Eigen::MatrixXd& cross,
                     const Eigen::VectorXd& diag) {
    const Eigen::MatrixXd phi = test_function_matrix(basis, cross);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < diag.size(); ++i) {
        double knys = 0.0;
        for (int j = 0; j < basis.n_test; ++j)
            if (basis.eigenvalues(j) > 0.0)
                knys += phi(j, i) * phi(j, i) / basis.eigenvalues(j);
        worst = std::max(worst, std::abs(knys - diag(i)));
    }
    return std::sqrt(worst);
}

double nystrom_error(const NystromBasis& basis, std::span<const Point> X) {
    const Eigen::MatrixXd cross = basis.cov(basis.points, X);
    Eigen::VectorXd diag(static_cast<Eigen::Index>(X.size()));
    for (std::size_t i = 0; i < X.size(); ++i) {
        const std::span<const Point> one(&X[i], 1);
        diag(static_cast<Eigen::Index>(i)) = basis.cov(one, one)(0, 0);
    }
    return nystrom_error(basis, cross, diag);
}

LpProblem build_lp(const EmpiricalMeasure& m, const NystromBasis& basis,
                   const Eigen::MatrixXd& test_matrix, const Eigen::VectorXd& g,
                   const Eigen::VectorXd& q, double eps_lp) {
    if (eps_lp < 0.0) throw DomainError("build_lp: eps_lp must be >= 0");
    if (g.size() != m.size() || q.size() != m.size())
        throw DomainError("build_lp: g/q not aligned with the measure");

    LpProblem lp;
    lp.reward = g.cwiseProduct(q);
    lp.test_matrix = test_matrix;
    lp.slack_unit.resize(basis.n_test);
    const double denom = static_cast<double>(basis.n_test);
    for (int j = 0; j < basis.n_test; ++j)
        lp.slack_unit(j) = std::sqrt(basis.eigenvalues(j) / denom);
    lp.test_rhs = eps_lp * lp.slack_unit;
    lp.w_rec = m.weights;
    lp.acceptance = q;
    lp.eps_lp = eps_lp;
    lp.batch_cap = basis.n_test + 2;
    return lp;
}

LpProblem build_lp(const EmpiricalMeasure& m, const NystromBasis& basis, const Eigen::VectorXd& g,
                   const Eigen::VectorXd& q, double eps_lp) {
    return build_lp(m, basis, test_function_matrix(basis, std::span<const Point>(m.points)), g, q,
                    eps_lp);
}

LinearProgram to_linear_program(const LpProblem& lp) {
    const Eigen::Index n_test = lp.test_matrix.rows();
    const Eigen::Index N = lp.w_rec.size();
    LinearProgram out;
    out.constraints.resize(2 * n_test + 2, N);
    out.rhs.resize(2 * n_test + 2);
    out.relations.resize(static_cast<std::size_t>(2 * n_test + 2));

    for (Eigen::Index j = 0; j < n_test; ++j) {
        const double centre = lp.test_matrix.row(j).dot(lp.w_rec);
        out.constraints.row(2 * j) = lp.test_matrix.row(j);
        out.rhs(2 * j) = centre + lp.test_rhs(j);
        out.relations[static_cast<std::size_t>(2 * j)] = Relation::kLe;
        out.constraints.row(2 * j + 1) = lp.test_matrix.row(j);
        out.rhs(2 * j + 1) = centre - lp.test_rhs(j);
        out.relations[static_cast<std::size_t>(2 * j + 1)] = Relation::kGe;
    }
    out.constraints.row(2 * n_test) = lp.acceptance.transpose();
    out.rhs(2 * n_test) = lp.acceptance.dot(lp.w_rec);
    out.relations[static_cast<std::size_t>(2 * n_test)] = Relation::kGe;
    out.constraints.row(2 * n_test + 1).setOnes();
    out.rhs(2 * n_test + 1) = 1.0;
    out.relations[static_cast<std::size_t>(2 * n_test + 1)] = Relation::kEq;

    out.objective = lp.reward;
    return out;
}

double lp_constraint_violation(const LpProblem& lp, const Eigen::VectorXd& w) {
    double v = std::abs(w.sum() - 1.0);
    v = std::max(v, -w.minCoeff());
    v = std::max(v, -(w - lp.w_rec).dot(lp.acceptance));
    const Eigen::VectorXd dev = lp.test_matrix * (w - lp.w_rec);
    for (Eigen::Index j = 0; j < dev.size(); ++j)
        v = std::max(v, std::abs(dev(j)) - lp.test_rhs(j));
    return v;
}

LpResult solve_lp(const LpProblem& lp, LpSolver* solver) {
    const LinearProgram program = to_linear_program(lp);
    DenseSimplexSolver fallback;
    LpSolver& backend = solver != nullptr ? *solver : static_cast<LpSolver&>(fallback);
    const LpSolution sol = backend.solve(program);

    if (sol.status == LpSolution::Status::kIterationLimit)
        throw SolverStall("solve_lp: simplex hit its iteration limit");
    if (sol.status != LpSolution::Status::kOptimal)
        throw SolverStall("solve_lp: simplex did not reach an optimum");
    if (lp_constraint_violation(lp, sol.x) > kFeasSlack)
        throw SolverStall("solve_lp: solution failed the feasibility re-check");

    LpResult out;
    out.weights = sol.x;
    out.objective = sol.objective;
    out.iterations = sol.iterations;
    return out;
}

RelaxedLpResult solve_lp_with_recovery(const LpProblem& lp, LpSolver* solver) {
    RelaxedLpResult out;
    double eps = lp.eps_lp;
    for (int attempt = 0; attempt <= 3; ++attempt) {
        LpProblem relaxed = lp;
        if (attempt > 0) {
            eps = (eps == 0.0 ? 1e-8 : eps) * 10.0;
            relaxed.eps_lp = eps;
            relaxed.test_rhs = eps * lp.slack_unit;
        }
        try {
            out.result = solve_lp(relaxed, solver);
            out.eps_used = relaxed.eps_lp;
            return out;
        } catch (const SolverStall&) {
            continue;
        }
    }

    // last resort: reference weights truncated to their top-n entries
    const Eigen::Index N = lp.w_rec.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&lp](Eigen::Index a, Eigen::Index b) { return lp.w_rec(a) > lp.w_rec(b); });
    Eigen::VectorXd w = Eigen::VectorXd::Zero(N);
    const Eigen::Index keep = std::min<Eigen::Index>(lp.batch_cap, N);
    double total = 0.0;
    for (Eigen::Index k = 0; k < keep; ++k) total += lp.w_rec(order[static_cast<std::size_t>(k)]);
    if (total <= 0.0) throw DegenerateMeasure("solve_lp_with_recovery: empty reference weights");
    for (Eigen::Index k = 0; k < keep; ++k)
        w(order[static_cast<std::size_t>(k)]) = lp.w_rec(order[static_cast<std::size_t>(k)]) / total;
    out.result.weights = std::move(w);
    out.result.objective = lp.reward.dot(out.result.weights);
    out.eps_used = eps;
    out.fell_back = true;
    return out;
}

BatchProposal extract_batch(const LpResult& result, const LpProblem& lp,
                            const EmpiricalMeasure& m, double eps_nys, double k_max) {
    BatchProposal bp;
    double kept_mass = 0.0;
    for (Eigen::Index i = 0; i < result.weights.size(); ++i) {
        if (result.weights(i) > kWeightFloor) {
            bp.indices.push_back(static_cast<int>(i));
            kept_mass += result.weights(i);
        }
    }
    if (bp.indices.empty()) throw DegenerateBatch("extract_batch: all weights stripped");

    bp.weights.resize(static_cast<Eigen::Index>(bp.indices.size()));
    bp.points.reserve(bp.indices.size());
    for (std::size_t k = 0; k < bp.indices.size(); ++k) {
        bp.weights(static_cast<Eigen::Index>(k)) =
            result.weights(bp.indices[k]) / kept_mass;
        bp.points.push_back(m.points[static_cast<std::size_t>(bp.indices[k])]);
    }
    bp.eps_lp = lp.eps_lp;
    bp.eps_nys = eps_nys;
    bp.expected_reward = lp.reward.dot(result.weights);
    const double eps_rej = 1.0 - lp.w_rec.dot(lp.acceptance);
    bp.wce_certificate = eps_rej * k_max + 2.0 * eps_nys + lp.eps_lp;
    return bp;
}

double quadratic_form_blocked(const CovarianceFn& cov, std::span<const Point> X,
                              const Eigen::VectorXd& w) {
    constexpr std::size_t kBlock = 256;
    double acc = 0.0;
    for (std::size_t start = 0; start < X.size(); start += kBlock) {
        const std::size_t len = std::min(kBlock, X.size() - start);
        const Eigen::MatrixXd rows = cov(X.subspan(start, len), X);
        acc += w.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len))
                   .dot(rows * w);
    }
    return acc;
}

double worst_case_error(std::span<const Point> batch_points, const Eigen::VectorXd& batch_weights,
                        const EmpiricalMeasure& m, const CovarianceFn& cov) {
    const std::span<const Point> ref(m.points);
    const double t1 = batch_weights.dot(cov(batch_points, batch_points) * batch_weights);
    const double t2 = batch_weights.dot(cov(batch_points, ref) * m.weights);
    const double t3 = quadratic_form_blocked(cov, ref, m.weights);
    return t1 - 2.0 * t2 + t3;
}

double worst_case_error(const BatchProposal& bp, const EmpiricalMeasure& m,
                        const CovarianceFn& cov) {
    return worst_case_error(std::span<const Point>(bp.points), bp.weights, m, cov);
}

RejectionOutcome simulate_rejection(const BatchProposal& bp, const Eigen::VectorXd& q_batch,
                                    std::uint64_t seed, const EmpiricalMeasure& m,
                                    const CovarianceFn& cov) {
    if (q_batch.size() != bp.weights.size())
        throw DomainError("simulate_rejection: q not aligned with the batch");
    for (Eigen::Index i = 0; i < q_batch.size(); ++i)
        if (q_batch(i) < 0.0 || q_batch(i) > 1.0)
            throw DomainError("simulate_rejection: q values must lie in [0,1]");

    Rng rng(split_seed(seed, 0x2b81u));
    RejectionOutcome out;
    for (Eigen::Index i = 0; i < q_batch.size(); ++i)
        if (rng.uniform() < q_batch(i)) out.accepted.push_back(static_cast<int>(i));
    if (out.accepted.empty()) return out;  // EmptyAcceptance: valid, reported as-is

    if (static_cast<Eigen::Index>(out.accepted.size()) == q_batch.size()) {
        // nothing rejected, so the batch weights stand
        out.weights = bp.weights;
        out.wce = worst_case_error(bp, m, cov);
        return out;
    }

    std::vector<Point> survivors;
    Eigen::VectorXd v0(static_cast<Eigen::Index>(out.accepted.size()));
    for (std::size_t k = 0; k < out.accepted.size(); ++k) {
        survivors.push_back(bp.points[static_cast<std::size_t>(out.accepted[k])]);
        v0(static_cast<Eigen::Index>(k)) = bp.weights(out.accepted[k]);
    }

    // minimise v A v - 2 v b over v >= 0 by projected gradient from the
    // truncated weights; the step 1/lambda_max makes every iterate
    // non-increasing, so the result never loses to plain truncation
    const std::span<const Point> sv(survivors);
    Eigen::MatrixXd A = cov(sv, sv);
    A = 0.5 * (A + A.transpose()).eval();
    const Eigen::VectorXd b = cov(sv, std::span<const Point>(m.points)) * m.weights;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
    if (eig.info() != Eigen::Success)
        throw NumericalFailure("simulate_rejection: survivor Gram eigendecomposition failed");
    const double lipschitz = std::max(eig.eigenvalues().maxCoeff(), 1e-12);
    const double step = 1.0 / lipschitz;

    Eigen::VectorXd v = v0;
    double prev = v.dot(A * v) - 2.0 * v.dot(b);
    for (int iter = 0; iter < 500; ++iter) {
        v = (v - step * (A * v - b)).cwiseMax(0.0);
        const double value = v.dot(A * v) - 2.0 * v.dot(b);
        if (std::abs(prev - value) < 1e-10 * (std::abs(value) + 1.0)) break;
        prev = value;
    }

    out.weights = std::move(v);
    const double t3 = quadratic_form_blocked(cov, std::span<const Point>(m.points), m.weights);
    out.wce = out.weights.dot(A * out.weights) - 2.0 * out.weights.dot(b) + t3;
    return out;
}

}  // namespace csober
