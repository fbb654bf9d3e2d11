#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "mnlrl/errors.hpp"

namespace mnlrl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Symmetric positive definite design matrix with a cached Cholesky factor.
///
/// Every mutation refreshes the factor, so norms and solves are always
/// consistent with the stored matrix. Refresh is O(d^3), independent of how
/// many observations have been absorbed.
class GramMatrix {
public:
    GramMatrix() = default;

    GramMatrix(Eigen::Index dim, double lambda) : mat_(Matrix::Identity(dim, dim) * lambda)
    {
        if (dim <= 0) throw InvalidArgument("gram dimension must be positive");
        if (!(lambda > 0.0)) throw InvalidArgument("gram regularizer must be positive");
        refresh();
    }

    static GramMatrix from_matrix(const Matrix& m)
    {
        if (m.rows() != m.cols() || m.rows() == 0) throw InvalidArgument("gram matrix must be square and nonempty");
        GramMatrix g;
        g.mat_ = m;
        g.refresh();
        return g;
    }

    Eigen::Index dim() const { return mat_.rows(); }
    const Matrix& matrix() const { return mat_; }
    const Eigen::LLT<Matrix>& factor() const { return llt_; }

    /// mat += weight * x x^T, without refreshing the factor.
    void accumulate_outer(const Vector& x, double weight)
    {
        mat_.selfadjointView<Eigen::Lower>().rankUpdate(x, weight);
        mat_.triangularView<Eigen::StrictlyUpper>() = mat_.transpose().triangularView<Eigen::StrictlyUpper>();
    }

    void accumulate(const Matrix& m) { mat_ += m; }

    void refresh()
    {
        llt_.compute(mat_);
        if (llt_.info() != Eigen::Success) throw NumericalFailure("gram matrix is not positive definite");
    }

    /// x^T M^{-1} x
    double inv_norm_sq(const Vector& x) const
    {
        return llt_.matrixL().solve(x).squaredNorm();
    }

    /// x^T M x
    double norm_sq(const Vector& x) const { return x.dot(mat_ * x); }
    double norm(const Vector& x) const { return std::sqrt(std::max(0.0, norm_sq(x))); }

    Vector solve(const Vector& b) const { return llt_.solve(b); }

private:
    Matrix mat_;
    Eigen::LLT<Matrix> llt_;
};

}  // namespace mnlrl
