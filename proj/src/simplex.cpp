#include "csober/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "csober/errors.hpp"

namespace csober {

namespace {

struct Tableau {
    Eigen::MatrixXd columns;  // m x n_total standard-form columns
    Eigen::VectorXd rhs;      // m, nonnegative
    Eigen::Index n_struct = 0;
    Eigen::Index first_artificial = 0;  // columns >= this are artificial
    std::vector<int> row_basis;         // initial basic column per row
};

Tableau to_standard_form(const LinearProgram& lp) {
    const Eigen::Index m = lp.rows();
    const Eigen::Index n = lp.cols();

    // row equilibration keeps pivot tolerances meaningful across the very
    // different scales of the Nystrom test functions
    Eigen::MatrixXd A = lp.constraints;
    Eigen::VectorXd b = lp.rhs;
    std::vector<Relation> rel = lp.relations;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double scale = A.row(i).cwiseAbs().maxCoeff();
        if (scale > 0.0) {
            A.row(i) /= scale;
            b(i) /= scale;
        }
        if (b(i) < 0.0) {
            A.row(i) = -A.row(i);
            b(i) = -b(i);
            if (rel[i] == Relation::kLe)
                rel[i] = Relation::kGe;
            else if (rel[i] == Relation::kGe)
                rel[i] = Relation::kLe;
        }
    }

    Eigen::Index n_slack = 0;
    for (const Relation r : rel)
        if (r != Relation::kEq) ++n_slack;
    Eigen::Index n_artificial = 0;
    for (const Relation r : rel)
        if (r != Relation::kLe) ++n_artificial;

    Tableau t;
    t.n_struct = n;
    t.first_artificial = n + n_slack;
    t.columns = Eigen::MatrixXd::Zero(m, n + n_slack + n_artificial);
    t.columns.leftCols(n) = A;
    t.rhs = b;

    t.row_basis.resize(static_cast<std::size_t>(m));
    Eigen::Index slack = n;
    Eigen::Index artificial = t.first_artificial;
    for (Eigen::Index i = 0; i < m; ++i) {
        if (rel[i] == Relation::kLe) {
            t.columns(i, slack) = 1.0;
            t.row_basis[static_cast<std::size_t>(i)] = static_cast<int>(slack);
            ++slack;
        } else if (rel[i] == Relation::kGe) {
            t.columns(i, slack) = -1.0;
            ++slack;
        }
        if (rel[i] != Relation::kLe) {
            t.columns(i, artificial) = 1.0;
            t.row_basis[static_cast<std::size_t>(i)] = static_cast<int>(artificial);
            ++artificial;
        }
    }
    return t;
}

class RevisedSimplex {
public:
    RevisedSimplex(const Tableau& t, const SimplexOptions& opt) : t_(t), opt_(opt) {
        const Eigen::Index m = t_.rhs.size();
        binv_ = Eigen::MatrixXd::Identity(m, m);
        basis_ = t_.row_basis;
        in_basis_.assign(static_cast<std::size_t>(t_.columns.cols()), false);
        banned_.assign(static_cast<std::size_t>(t_.columns.cols()), false);
        for (const int col : basis_) in_basis_[static_cast<std::size_t>(col)] = true;
        xb_ = t_.rhs;
    }

    /// Runs the simplex on the given cost vector; returns final status.
    LpSolution::Status run(const Eigen::VectorXd& cost, bool phase_one, int max_iterations,
                           int& iterations) {
        const Eigen::Index m = t_.rhs.size();
        int degenerate_streak = 0;
        bool bland = false;

        for (; iterations < max_iterations; ++iterations) {
            if (iterations > 0 && iterations % 64 == 0) refactorise();

            // pricing
            Eigen::VectorXd cb(m);
            for (Eigen::Index i = 0; i < m; ++i)
                cb(i) = cost(basis_[static_cast<std::size_t>(i)]);
            const Eigen::VectorXd y = binv_.transpose() * cb;

            Eigen::Index entering = -1;
            double best_rc = opt_tol();
            const Eigen::Index n_cols =
                phase_one ? t_.columns.cols() : t_.first_artificial;
            for (Eigen::Index j = 0; j < n_cols; ++j) {
                const std::size_t js = static_cast<std::size_t>(j);
                if (in_basis_[js] || banned_[js]) continue;
                const double rc = cost(j) - y.dot(t_.columns.col(j));
                if (bland) {
                    if (rc > opt_tol()) {
                        entering = j;
                        break;
                    }
                } else if (rc > best_rc) {
                    best_rc = rc;
                    entering = j;
                }
            }
            if (entering < 0) return LpSolution::Status::kOptimal;

            const Eigen::VectorXd d = binv_ * t_.columns.col(entering);

            // basic artificials at zero must leave before they can grow
            Eigen::Index leaving = -1;
            if (!phase_one) {
                for (Eigen::Index i = 0; i < m; ++i) {
                    if (basis_[static_cast<std::size_t>(i)] >=
                            static_cast<int>(t_.first_artificial) &&
                        std::abs(d(i)) > opt_.pivot_tol) {
                        leaving = i;
                        break;
                    }
                }
            }
            double step = 0.0;
            if (leaving < 0) {
                step = std::numeric_limits<double>::infinity();
                for (Eigen::Index i = 0; i < m; ++i) {
                    if (d(i) > opt_.pivot_tol) {
                        const double ratio = std::max(xb_(i), 0.0) / d(i);
                        if (ratio < step - 1e-15 ||
                            (ratio < step + 1e-15 && leaving >= 0 &&
                             basis_[static_cast<std::size_t>(i)] <
                                 basis_[static_cast<std::size_t>(leaving)])) {
                            step = ratio;
                            leaving = i;
                        }
                    }
                }
                if (leaving < 0) return LpSolution::Status::kUnbounded;
            } else {
                step = d(leaving) > 0.0 ? std::max(xb_(leaving), 0.0) / d(leaving) : 0.0;
            }

            if (step <= 1e-13) {
                if (++degenerate_streak > 2 * static_cast<int>(m) + 32) bland = true;
            } else {
                degenerate_streak = 0;
            }

            pivot(entering, leaving, d);
        }
        return LpSolution::Status::kIterationLimit;
    }

    /// Feasibility cleanup after phase one: ban nonbasic artificials and
    /// clamp the basic ones to zero.
    void finish_phase_one() {
        for (Eigen::Index j = t_.first_artificial; j < t_.columns.cols(); ++j)
            if (!in_basis_[static_cast<std::size_t>(j)]) banned_[static_cast<std::size_t>(j)] = true;
        for (Eigen::Index i = 0; i < xb_.size(); ++i)
            if (basis_[static_cast<std::size_t>(i)] >= static_cast<int>(t_.first_artificial))
                xb_(i) = 0.0;
    }

    double phase_one_infeasibility() const {
        double v = 0.0;
        for (Eigen::Index i = 0; i < xb_.size(); ++i)
            if (basis_[static_cast<std::size_t>(i)] >= static_cast<int>(t_.first_artificial))
                v += std::max(xb_(i), 0.0);
        return v;
    }

    /// Recompute the basic solution from a fresh factorisation with one
    /// refinement step; the final vertex is then accurate to round-off.
    void extract(LpSolution& out) {
        const Eigen::Index m = t_.rhs.size();
        Eigen::MatrixXd B(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            B.col(i) = t_.columns.col(basis_[static_cast<std::size_t>(i)]);
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
        Eigen::VectorXd x = lu.solve(t_.rhs);
        x += lu.solve(t_.rhs - B * x);

        out.x = Eigen::VectorXd::Zero(t_.n_struct);
        for (Eigen::Index i = 0; i < m; ++i) {
            const int col = basis_[static_cast<std::size_t>(i)];
            if (col < static_cast<int>(t_.n_struct)) out.x(col) = std::max(x(i), 0.0);
        }
        out.basis.assign(basis_.begin(), basis_.end());
    }

private:
    double opt_tol() const { return opt_.opt_tol; }

    void refactorise() {
        const Eigen::Index m = t_.rhs.size();
        Eigen::MatrixXd B(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            B.col(i) = t_.columns.col(basis_[static_cast<std::size_t>(i)]);
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
        binv_ = lu.inverse();
        xb_ = binv_ * t_.rhs;
    }

    void pivot(Eigen::Index entering, Eigen::Index leaving, const Eigen::VectorXd& d) {
        const Eigen::Index m = t_.rhs.size();
        const double pivot_value = d(leaving);
        in_basis_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(leaving)])] = false;
        const int old = basis_[static_cast<std::size_t>(leaving)];
        if (old >= static_cast<int>(t_.first_artificial))
            banned_[static_cast<std::size_t>(old)] = true;  // artificials never re-enter
        basis_[static_cast<std::size_t>(leaving)] = static_cast<int>(entering);
        in_basis_[static_cast<std::size_t>(entering)] = true;

        binv_.row(leaving) /= pivot_value;
        for (Eigen::Index i = 0; i < m; ++i)
            if (i != leaving && d(i) != 0.0) binv_.row(i) -= d(i) * binv_.row(leaving);
        xb_ = binv_ * t_.rhs;
    }

    const Tableau& t_;
    SimplexOptions opt_;
    Eigen::MatrixXd binv_;
    Eigen::VectorXd xb_;
    std::vector<int> basis_;
    std::vector<bool> in_basis_;
    std::vector<bool> banned_;
};

}  // namespace

LpSolution solve_simplex(const LinearProgram& lp, const SimplexOptions& options) {
    if (lp.constraints.rows() != lp.rhs.size() ||
        lp.constraints.rows() != static_cast<Eigen::Index>(lp.relations.size()) ||
        lp.constraints.cols() != lp.objective.size())
        throw DomainError("solve_simplex: inconsistent problem dimensions");

    const Tableau t = to_standard_form(lp);
    const Eigen::Index n_total = t.columns.cols();

    int max_iterations = options.max_iterations;
    if (max_iterations <= 0)
        max_iterations = 400 + 60 * static_cast<int>(t.rhs.size() +
                                                     std::min<Eigen::Index>(n_total, 4000));

    RevisedSimplex simplex(t, options);
    LpSolution out;
    int iterations = 0;

    const bool needs_phase_one = t.first_artificial < n_total;
    if (needs_phase_one) {
        Eigen::VectorXd phase1 = Eigen::VectorXd::Zero(n_total);
        phase1.tail(n_total - t.first_artificial).setConstant(-1.0);
        const LpSolution::Status s1 = simplex.run(phase1, true, max_iterations, iterations);
        if (s1 == LpSolution::Status::kIterationLimit) {
            out.status = s1;
            out.iterations = iterations;
            return out;
        }
        if (simplex.phase_one_infeasibility() > options.feas_tol) {
            out.status = LpSolution::Status::kInfeasible;
            out.iterations = iterations;
            return out;
        }
        simplex.finish_phase_one();
    }

    Eigen::VectorXd cost = Eigen::VectorXd::Zero(n_total);
    cost.head(t.n_struct) = lp.objective;
    const LpSolution::Status s2 = simplex.run(cost, false, max_iterations, iterations);
    out.status = s2;
    out.iterations = iterations;
    if (s2 != LpSolution::Status::kOptimal) return out;

    simplex.extract(out);
    out.objective = lp.objective.dot(out.x);
    return out;
}

}  // namespace csober
