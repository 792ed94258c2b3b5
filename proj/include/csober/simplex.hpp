#pragma once

#include <Eigen/Dense>
#include <vector>

namespace csober {

enum class Relation { kLe, kGe, kEq };

/// maximise objective . x subject to row constraints and x >= 0.
struct LinearProgram {
    Eigen::MatrixXd constraints;  // m x n
    Eigen::VectorXd rhs;          // m
    std::vector<Relation> relations;
    Eigen::VectorXd objective;    // n

    Eigen::Index rows() const { return rhs.size(); }
    Eigen::Index cols() const { return objective.size(); }
};

struct LpSolution {
    enum class Status { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

    Status status = Status::kIterationLimit;
    Eigen::VectorXd x;
    double objective = 0.0;
    int iterations = 0;
    std::vector<int> basis;  // standard-form column indices of the final basis
};

struct SimplexOptions {
    int max_iterations = 0;  // 0 selects an automatic limit
    double feas_tol = 1e-9;
    double opt_tol = 1e-10;
    double pivot_tol = 1e-11;
};

/// Two-phase dense revised simplex. Dantzig pricing with a permanent switch
/// to Bland's rule once degenerate stalling is detected, so the iteration
/// never cycles. Always returns a basic (vertex) solution.
LpSolution solve_simplex(const LinearProgram& lp, const SimplexOptions& options = {});

/// Adapter slot for plugging an external LP backend behind the same
/// interface.
class LpSolver {
public:
    virtual ~LpSolver() = default;
    virtual LpSolution solve(const LinearProgram& lp) = 0;
};

class DenseSimplexSolver final : public LpSolver {
public:
    explicit DenseSimplexSolver(SimplexOptions options = {}) : options_(options) {}
    LpSolution solve(const LinearProgram& lp) override { return solve_simplex(lp, options_); }

private:
    SimplexOptions options_;
};

}  // namespace csober
