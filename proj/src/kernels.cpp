#include "csober/kernels.hpp"

#include <cmath>

#include "csober/errors.hpp"

namespace csober {

namespace {

void check_rbf_dims(const KernelSpec& spec, const Point& p) {
    if (p.dims() != spec.lengthscales.size())
        throw DomainError("kernel_eval: point dimension does not match lengthscales");
}

void check_tanimoto(const Point& p) {
    if (p.continuous.size() != 0)
        throw DomainError("kernel_eval: Tanimoto kernel requires all-binary points");
}

}  // namespace

double kernel_eval(const KernelSpec& spec, const Point& x, const Point& y) {
    switch (spec.family) {
        case KernelSpec::Family::kRbf: {
            check_rbf_dims(spec, x);
            check_rbf_dims(spec, y);
            const Eigen::VectorXd d =
                (coords(x) - coords(y)).cwiseQuotient(spec.lengthscales);
            return spec.outputscale * std::exp(-0.5 * d.squaredNorm());
        }
        case KernelSpec::Family::kTanimoto: {
            check_tanimoto(x);
            check_tanimoto(y);
            if (x.binary.size() != y.binary.size())
                throw DomainError("kernel_eval: Tanimoto dimension mismatch");
            const double xy = x.binary.dot(y.binary);
            const double xx = x.binary.squaredNorm();
            const double yy = y.binary.squaredNorm();
            if (xx == 0.0 && yy == 0.0)
                throw DegenerateInput("kernel_eval: Tanimoto undefined for two zero vectors");
            return spec.outputscale * xy / (xx + yy - xy);
        }
    }
    throw DomainError("kernel_eval: unknown kernel family");
}

Eigen::MatrixXd gram(const KernelSpec& spec, std::span<const Point> X, std::span<const Point> Y) {
    const Eigen::Index nx = static_cast<Eigen::Index>(X.size());
    const Eigen::Index ny = static_cast<Eigen::Index>(Y.size());
    if (nx == 0 || ny == 0) return Eigen::MatrixXd(nx, ny);

    switch (spec.family) {
        case KernelSpec::Family::kRbf: {
            check_rbf_dims(spec, X.front());
            check_rbf_dims(spec, Y.front());
            const Eigen::VectorXd inv_l = spec.lengthscales.cwiseInverse();
            Eigen::MatrixXd A = coords_matrix(X);
            Eigen::MatrixXd B = coords_matrix(Y);
            if (A.rows() != spec.lengthscales.size() || B.rows() != spec.lengthscales.size())
                throw DomainError("gram: point dimension does not match lengthscales");
            A.array().colwise() *= inv_l.array();
            B.array().colwise() *= inv_l.array();
            const Eigen::VectorXd a2 = A.colwise().squaredNorm();
            const Eigen::VectorXd b2 = B.colwise().squaredNorm();
            Eigen::MatrixXd sq = (-2.0 * A.transpose() * B);
            sq.colwise() += a2;
            sq.rowwise() += b2.transpose();
            return spec.outputscale * (-0.5 * sq.cwiseMax(0.0)).array().exp().matrix();
        }
        case KernelSpec::Family::kTanimoto: {
            check_tanimoto(X.front());
            check_tanimoto(Y.front());
            const Eigen::MatrixXd A = coords_matrix(X);
            const Eigen::MatrixXd B = coords_matrix(Y);
            if (A.rows() != B.rows()) throw DomainError("gram: Tanimoto dimension mismatch");
            const Eigen::VectorXd a2 = A.colwise().squaredNorm();
            const Eigen::VectorXd b2 = B.colwise().squaredNorm();
            const Eigen::MatrixXd inner = A.transpose() * B;
            Eigen::MatrixXd denom(nx, ny);
            denom.colwise() = a2;
            denom.rowwise() += b2.transpose();
            denom -= inner;
            for (Eigen::Index i = 0; i < nx; ++i)
                for (Eigen::Index j = 0; j < ny; ++j)
                    if (denom(i, j) <= 0.0)
                        throw DegenerateInput("gram: Tanimoto undefined for two zero vectors");
            return spec.outputscale * inner.cwiseQuotient(denom);
        }
    }
    throw DomainError("gram: unknown kernel family");
}

Eigen::VectorXd gram_diagonal(const KernelSpec& spec, std::span<const Point> X) {
    Eigen::VectorXd d(static_cast<Eigen::Index>(X.size()));
    for (std::size_t i = 0; i < X.size(); ++i)
        d(static_cast<Eigen::Index>(i)) = kernel_eval(spec, X[i], X[i]);
    return d;
}

}  // namespace csober
