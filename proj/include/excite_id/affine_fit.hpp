#pragma once

// Local affine regression y_j = g0 + G u_j + eps_j at a fixed state, with the
// certified max-norm error bound r_eps * sqrt(d+1) / sigma_min(V).

#include <cmath>
#include <limits>
#include <vector>

#include "excite_id/errors.hpp"
#include "excite_id/specfactor.hpp"

namespace excite {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// Ordered inputs u_0..u_d stored as the columns of an m x (d+1) matrix.
struct InputSet {
    Matrix inputs;
    double r_u = kUnbounded;

    [[nodiscard]] Eigen::Index dim() const { return inputs.rows(); }
    [[nodiscard]] Eigen::Index count() const { return inputs.cols(); }
    // Number of inputs minus one, matching the u_0..u_d indexing.
    [[nodiscard]] Eigen::Index d() const { return inputs.cols() - 1; }
    [[nodiscard]] Vector input(Eigen::Index j) const { return inputs.col(j); }
};

/// Checks dimensions, finiteness and the norm constraint.
inline InputSet make_input_set(Matrix inputs, double r_u = kUnbounded) {
    if (inputs.rows() < 1 || inputs.cols() < 1) throw ValidationError("input set must be nonempty with m >= 1");
    require_finite(inputs, "input set");
    if (!(r_u > 0.0)) throw ValidationError("input constraint radius r_u must be positive");
    if (std::isfinite(r_u)) {
        for (Eigen::Index j = 0; j < inputs.cols(); ++j)
            if (inputs.col(j).norm() > r_u + 1e-12)
                throw ValidationError("input u_" + std::to_string(j) + " violates |u| <= r_u");
    }
    return {std::move(inputs), r_u};
}

inline InputSet make_input_set(const std::vector<Vector>& inputs, double r_u = kUnbounded) {
    if (inputs.empty()) throw ValidationError("input set must be nonempty");
    Matrix u(inputs.front().size(), static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        if (inputs[j].size() != u.rows()) throw ValidationError("inputs have inconsistent dimension");
        u.col(static_cast<Eigen::Index>(j)) = inputs[j];
    }
    return make_input_set(std::move(u), r_u);
}

/// Outputs y_0..y_d as columns of an n x (d+1) matrix with disturbance radius r_eps.
struct ObservationSet {
    Matrix outputs;
    double r_eps = 0.0;
};

struct RegressionEstimate {
    Vector g0_hat;
    Matrix G_hat;
    double sigma_min_V = 0.0;
    double bound_maxnorm = 0.0;
    double residual_fro = 0.0;

    /// [g0_hat G_hat] as one n x (m+1) block.
    [[nodiscard]] Matrix coefficients() const {
        Matrix c(g0_hat.size(), G_hat.cols() + 1);
        c << g0_hat, G_hat;
        return c;
    }
};

/// V = [1^T; U], shape (m+1) x (d+1).
inline Matrix assemble_V(const InputSet& set) {
    if (set.count() == 0) throw ValidationError("assemble_V: empty input set");
    Matrix v(set.dim() + 1, set.count());
    v.row(0).setOnes();
    v.bottomRows(set.dim()) = set.inputs;
    return v;
}

inline double error_bound(double r_eps, Eigen::Index d, double sigma_min_V) {
    if (!(sigma_min_V > 0.0)) throw ValidationError("error_bound: sigma_min(V) must be positive");
    if (r_eps < 0.0 || d < 0) throw ValidationError("error_bound: r_eps and d must be nonnegative");
    return r_eps * std::sqrt(static_cast<double>(d + 1)) / sigma_min_V;
}

/// Upper bound on sigma_min(V) under |u_j| <= r_u: min{sqrt(d+1), r_u sqrt((d+1)/m)}.
inline double sigma_ceiling(Eigen::Index d, Eigen::Index m, double r_u) {
    if (m < 1 || d < m) throw ValidationError("sigma_ceiling: requires d >= m >= 1");
    if (!(r_u > 0.0)) throw ValidationError("sigma_ceiling: r_u must be positive");
    const double n_cols = static_cast<double>(d + 1);
    const double free = std::sqrt(n_cols);
    if (!std::isfinite(r_u)) return free;
    return std::min(free, r_u * std::sqrt(n_cols / static_cast<double>(m)));
}

// Full row rank is taken to mean sigma_min(V) > kFullRankRatio * sigma_max(V).
inline constexpr double kFullRankRatio = 1e-10;

/// Least-squares fit [g0_hat G_hat] = Y pinv(V).
///
/// Throws InsufficientExcitation when d < m or V is numerically rank deficient;
/// no minimum-norm fallback is attempted.
inline RegressionEstimate fit_affine(const InputSet& set, const ObservationSet& obs) {
    if (obs.outputs.cols() != set.count())
        throw ValidationError("fit_affine: input and observation counts differ");
    if (obs.r_eps < 0.0) throw ValidationError("fit_affine: r_eps must be nonnegative");
    require_finite(obs.outputs, "fit_affine outputs");
    const Matrix v = assemble_V(set);
    if (set.d() < set.dim()) throw InsufficientExcitation("insufficient excitation: d < m", 0.0);

    const SvdResult f = svd(v);
    const double s_max = f.singular_values[0];
    const double s_min = f.singular_values[f.singular_values.size() - 1];
    if (!(s_min > kFullRankRatio * s_max)) throw InsufficientExcitation("insufficient excitation: V is rank deficient", s_min);

    const Vector inv = f.singular_values.cwiseInverse();
    const Matrix v_pinv = f.right * inv.asDiagonal() * f.left.transpose();
    const Matrix coeffs = obs.outputs * v_pinv;

    RegressionEstimate est;
    est.g0_hat = coeffs.col(0);
    est.G_hat = coeffs.rightCols(set.dim());
    est.sigma_min_V = s_min;
    est.bound_maxnorm = error_bound(obs.r_eps, set.d(), s_min);
    est.residual_fro = (obs.outputs - coeffs * v).norm();
    return est;
}

}  // namespace excite
