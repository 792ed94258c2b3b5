#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "csober/simplex.hpp"

namespace csober::testing {

/// Brute-force LP optimum by enumerating all basic solutions of the
/// standard form. Exponential; only for tiny instances.
inline double enumerate_lp_optimum(const LinearProgram& lp, double tol = 1e-9) {
    const Eigen::Index m = lp.rows();
    const Eigen::Index n = lp.cols();
    Eigen::Index n_slack = 0;
    for (const Relation r : lp.relations)
        if (r != Relation::kEq) ++n_slack;
    const Eigen::Index total = n + n_slack;

    Eigen::MatrixXd A(m, total);
    A.setZero();
    A.leftCols(n) = lp.constraints;
    Eigen::Index slack = n;
    for (Eigen::Index i = 0; i < m; ++i) {
        if (lp.relations[static_cast<std::size_t>(i)] == Relation::kLe)
            A(i, slack++) = 1.0;
        else if (lp.relations[static_cast<std::size_t>(i)] == Relation::kGe)
            A(i, slack++) = -1.0;
    }

    double best = -std::numeric_limits<double>::infinity();
    std::vector<Eigen::Index> comb(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) comb[static_cast<std::size_t>(i)] = i;
    for (;;) {
        Eigen::MatrixXd B(m, m);
        for (Eigen::Index k = 0; k < m; ++k) B.col(k) = A.col(comb[static_cast<std::size_t>(k)]);
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
        if (lu.isInvertible()) {
            const Eigen::VectorXd xb = lu.solve(lp.rhs);
            if (xb.minCoeff() >= -tol) {
                double value = 0.0;
                for (Eigen::Index k = 0; k < m; ++k)
                    if (comb[static_cast<std::size_t>(k)] < n)
                        value += lp.objective(comb[static_cast<std::size_t>(k)]) * xb(k);
                best = std::max(best, value);
            }
        }
        Eigen::Index pos = m - 1;
        while (pos >= 0 && comb[static_cast<std::size_t>(pos)] == total - m + pos) --pos;
        if (pos < 0) break;
        ++comb[static_cast<std::size_t>(pos)];
        for (Eigen::Index k = pos + 1; k < m; ++k)
            comb[static_cast<std::size_t>(k)] = comb[static_cast<std::size_t>(k - 1)] + 1;
    }
    return best;
}

}  // namespace csober::testing
