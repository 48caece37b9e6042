#pragma once

// Dense spectral utilities: SVD, symmetric eigenvalues, pseudo-inverse and
// orthogonal projection. Every routine validates finiteness and reports
// solver failure through NumericalError rather than returning garbage.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "excite_id/errors.hpp"

namespace excite {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thin SVD with A = left * diag(singular_values) * right^T.
/// Singular values are nonincreasing and nonnegative.
struct SvdResult {
    Vector singular_values;
    Matrix left;
    Matrix right;
};

inline void require_finite(const Eigen::Ref<const Matrix>& a, const char* what) {
    if (!a.allFinite()) throw ValidationError(std::string(what) + ": matrix has non-finite entries");
}

inline SvdResult svd(const Eigen::Ref<const Matrix>& a) {
    require_finite(a, "svd");
    if (a.size() == 0) return {Vector(0), Matrix(a.rows(), 0), Matrix(a.cols(), 0)};
    Eigen::JacobiSVD<Matrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (solver.info() != Eigen::Success) throw NumericalError("svd: Jacobi SVD did not converge");
    return {solver.singularValues(), solver.matrixU(), solver.matrixV()};
}

/// Default relative rank tolerance max(rows, cols) * eps.
inline double default_rank_tolerance(const Eigen::Ref<const Matrix>& a) {
    return static_cast<double>(std::max(a.rows(), a.cols())) * std::numeric_limits<double>::epsilon();
}

/// Number of singular values above rel_tol * sigma_1.
inline Eigen::Index numerical_rank(const Vector& singular_values, double rel_tol) {
    if (singular_values.size() == 0 || singular_values[0] == 0.0) return 0;
    const double cutoff = rel_tol * singular_values[0];
    Eigen::Index r = 0;
    while (r < singular_values.size() && singular_values[r] > cutoff) ++r;
    return r;
}

/// Smallest of the min(rows, cols) singular values; 0 for empty matrices.
inline double sigma_min(const Eigen::Ref<const Matrix>& a) {
    const auto s = svd(a).singular_values;
    return s.size() == 0 ? 0.0 : s[s.size() - 1];
}

/// sigma_min through the smaller Gram matrix (A A^T or A^T A). Cheaper than a
/// full SVD for very wide or tall matrices; loses relative accuracy once
/// sigma_min^2 approaches eps * sigma_max^2.
inline double sigma_min_gram(const Eigen::Ref<const Matrix>& a) {
    require_finite(a, "sigma_min_gram");
    if (a.size() == 0) return 0.0;
    const Matrix gram = a.rows() <= a.cols() ? Matrix(a * a.transpose()) : Matrix(a.transpose() * a);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericalError("sigma_min_gram: solver did not converge");
    return std::sqrt(std::max(0.0, solver.eigenvalues()[0]));
}

/// Moore-Penrose inverse; singular values <= rel_tol * sigma_1 are treated as zero.
inline Matrix pinv(const Eigen::Ref<const Matrix>& a, std::optional<double> rel_tol = std::nullopt) {
    const double tol = rel_tol.value_or(default_rank_tolerance(a));
    if (tol < 0.0) throw ValidationError("pinv: tolerance must be nonnegative");
    const SvdResult f = svd(a);
    const Eigen::Index r = numerical_rank(f.singular_values, tol);
    Matrix out = Matrix::Zero(a.cols(), a.rows());
    if (r == 0) return out;
    const Vector inv = f.singular_values.head(r).cwiseInverse();
    out.noalias() = f.right.leftCols(r) * inv.asDiagonal() * f.left.leftCols(r).transpose();
    return out;
}

inline void require_symmetric(const Eigen::Ref<const Matrix>& s, const char* what) {
    require_finite(s, what);
    if (s.rows() != s.cols()) throw ValidationError(std::string(what) + ": matrix is not square");
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ValidationError(std::string(what) + ": matrix is not symmetric to 1e-10");
}

/// Eigenvalues of a symmetric matrix in ascending order.
inline Vector eigenvalues_sym(const Eigen::Ref<const Matrix>& s) {
    require_symmetric(s, "eigenvalues_sym");
    if (s.size() == 0) return Vector(0);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(s, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericalError("eigenvalues_sym: solver did not converge");
    return solver.eigenvalues();
}

inline double min_eig_sym(const Eigen::Ref<const Matrix>& s) {
    const Vector ev = eigenvalues_sym(s);
    if (ev.size() == 0) throw ValidationError("min_eig_sym: empty matrix");
    return ev[0];
}

/// Smallest eigenvalue above rel_tol * max|lambda|, i.e. lambda_{n-r+1} for the
/// numerical rank r. Meant for symmetric positive semidefinite input.
inline double min_pos_eig_sym(const Eigen::Ref<const Matrix>& s, std::optional<double> rel_tol = std::nullopt) {
    const Vector ev = eigenvalues_sym(s);
    const double scale = ev.size() == 0 ? 0.0 : ev.cwiseAbs().maxCoeff();
    if (scale == 0.0) throw NumericalError("min_pos_eig_sym: no positive eigenvalue (zero matrix)");
    const double cutoff = rel_tol.value_or(default_rank_tolerance(s)) * scale;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev[i] > cutoff) return ev[i];
    throw NumericalError("min_pos_eig_sym: no positive eigenvalue");
}

/// Orthonormal basis of ran(basis) at the default rank tolerance.
inline Matrix range_basis(const Eigen::Ref<const Matrix>& basis) {
    if (basis.cols() == 0 || basis.rows() == 0) return Matrix(basis.rows(), 0);
    const SvdResult f = svd(basis);
    return f.left.leftCols(numerical_rank(f.singular_values, default_rank_tolerance(basis)));
}

/// Orthogonal projection of y onto span of the columns of `basis`.
inline Vector project(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Matrix>& basis) {
    if (basis.cols() == 0) return Vector::Zero(y.size());
    if (basis.rows() != y.size()) throw ValidationError("project: dimension mismatch");
    require_finite(y, "project");
    const Matrix q = range_basis(basis);
    return q * (q.transpose() * y);
}

}  // namespace excite
