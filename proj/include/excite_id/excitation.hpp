#pragma once

// Construction and analysis of exciting input sets: the sum-to-zero
// optimality condition, scaled orthogonal and simplex designs, tight-frame
// checks, the subspace-angle lower bound on sigma_min^2(V) and the rank-one
// SPSD eigenvalue estimate it rests on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "excite_id/affine_fit.hpp"
#include "excite_id/parallel.hpp"
#include "excite_id/random.hpp"
#include "excite_id/specfactor.hpp"

namespace excite {

struct NcoCheck {
    bool satisfied = false;
    double residual = 0.0;  // |sum_j u_j|
};

/// Tests U 1 = 0 relative to the largest input norm.
inline NcoCheck check_nco(const InputSet& set, double tol = 1e-10) {
    const Vector sum = set.inputs.rowwise().sum();
    double max_norm = 0.0;
    for (Eigen::Index j = 0; j < set.count(); ++j) max_norm = std::max(max_norm, set.inputs.col(j).norm());
    const double residual = sum.norm();
    return {residual <= tol * std::max(1.0, max_norm), residual};
}

namespace detail {
inline void require_design_dims(Eigen::Index m, Eigen::Index d, double alpha, const char* what) {
    if (m < 1 || d < m) throw ValidationError(std::string(what) + ": requires d >= m >= 1");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError(std::string(what) + ": alpha must be positive");
}
}  // namespace detail

/// u_0 = -alpha 1_m, u_k = alpha e_k (k = 1..m), zeros beyond. sigma_min(V) = sqrt(d+1)
/// once alpha >= sqrt(d+1).
inline InputSet orthogonal_inputs(Eigen::Index m, Eigen::Index d, double alpha) {
    detail::require_design_dims(m, d, alpha, "orthogonal_inputs");
    Matrix u = Matrix::Zero(m, d + 1);
    u.col(0).setConstant(-alpha);
    u.block(0, 1, m, m) = alpha * Matrix::Identity(m, m);
    return make_input_set(std::move(u));
}

/// Vertices of a regular m-simplex scaled to norm alpha, zeros beyond u_m.
inline InputSet simplex_inputs(Eigen::Index m, Eigen::Index d, double alpha) {
    detail::require_design_dims(m, d, alpha, "simplex_inputs");
    const double md = static_cast<double>(m);
    const double b = std::sqrt((md + 1.0) / md);
    const double c = (1.0 - std::sqrt(md + 1.0)) / (md * std::sqrt(md));
    Matrix u = Matrix::Zero(m, d + 1);
    u.col(0).setConstant(-1.0 / std::sqrt(md));
    for (Eigen::Index j = 1; j <= m; ++j) {
        u.col(j).setConstant(c);
        u(j - 1, j) += b;
    }
    u *= alpha;
    return make_input_set(std::move(u));
}

/// True when the inputs are unit norm, sum to zero and have frame operator ((d+1)/m) I.
inline bool verify_tight_frame(const InputSet& set, double tol = 1e-10) {
    for (Eigen::Index j = 0; j < set.count(); ++j)
        if (std::abs(set.inputs.col(j).norm() - 1.0) > tol) return false;
    if (set.inputs.rowwise().sum().norm() > tol) return false;
    const double a = static_cast<double>(set.count()) / static_cast<double>(set.dim());
    const Matrix frame = set.inputs * set.inputs.transpose();
    return (frame - a * Matrix::Identity(set.dim(), set.dim())).cwiseAbs().maxCoeff() <= tol;
}

/// Theta(x) = 1 - sqrt((m+1 - (1 - 1^T x)^2 / (1 + |x|^2)) / (m+1)), clamped to [0, 1].
inline double theta(const Eigen::Ref<const Vector>& x) {
    require_finite(x, "theta");
    const double mp1 = static_cast<double>(x.size()) + 1.0;
    const double s = 1.0 - x.sum();
    const double inner = std::max(0.0, mp1 - s * s / (1.0 + x.squaredNorm()));
    return std::clamp(1.0 - std::sqrt(inner / mp1), 0.0, 1.0);
}

/// cos of the angle between y and span(columns of span_vectors): |P y| / |y|.
inline double subspace_cos(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Matrix>& span_vectors) {
    const double ny = y.norm();
    if (ny == 0.0) throw ValidationError("subspace_cos: y must be nonzero");
    return std::clamp(project(y, span_vectors).norm() / ny, 0.0, 1.0);
}

struct AngleDecomposition {
    std::vector<Eigen::Index> order;  // 1-based indices i_1..i_m into u_1..u_m, norms nonincreasing
    std::vector<double> cosines;      // cos theta(u_{i_s}, S_{I_s}), s = 1..m-1
    double theta_value = 0.0;         // Theta(U_m^{-1} u_0)
    double min_norm_sq = 0.0;         // |u_{i_m}|^2
};

struct LowerBound {
    double bound = 0.0;
    AngleDecomposition decomposition;
};

/// Subspace-angle lower bound on sigma_min^2 of V built from u_0..u_m:
///
///   Theta(U_m^{-1} u_0) * min{m+1, |u_{i_m}|^2 prod_s (1 - cos theta(u_{i_s}, S_{I_s}))}
///
/// Inputs beyond u_m are ignored; appending columns to V can only raise
/// sigma_min, so the value also bounds sigma_min^2 of the full V.
/// Ties in the norm ordering keep the original index order.
inline LowerBound thm_lower_bound(const InputSet& set) {
    const Eigen::Index m = set.dim();
    if (set.count() < m + 1) throw ValidationError("thm_lower_bound: needs at least m+1 inputs");
    const Matrix um = set.inputs.block(0, 1, m, m);
    const SvdResult f = svd(um);
    if (!(f.singular_values[m - 1] > 1e-12 * f.singular_values[0]))
        throw NumericalError("thm_lower_bound: bound undefined, U_m = [u_1 .. u_m] is singular");

    LowerBound out;
    auto& dec = out.decomposition;
    const Vector x = um.fullPivLu().solve(set.inputs.col(0));
    dec.theta_value = theta(x);

    dec.order.resize(static_cast<std::size_t>(m));
    std::iota(dec.order.begin(), dec.order.end(), Eigen::Index{1});
    std::stable_sort(dec.order.begin(), dec.order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return set.inputs.col(a).norm() > set.inputs.col(b).norm();
    });

    double product = 1.0;
    for (Eigen::Index s = 0; s + 1 < m; ++s) {
        Matrix rest(m, m - s - 1);
        for (Eigen::Index t = s + 1; t < m; ++t) rest.col(t - s - 1) = set.inputs.col(dec.order[static_cast<std::size_t>(t)]);
        const double c = subspace_cos(set.inputs.col(dec.order[static_cast<std::size_t>(s)]), rest);
        dec.cosines.push_back(c);
        product *= 1.0 - c;
    }
    dec.min_norm_sq = set.inputs.col(dec.order.back()).squaredNorm();
    out.bound = dec.theta_value * std::min(static_cast<double>(m + 1), dec.min_norm_sq * product);
    return out;
}

/// Lower bound on the smallest positive eigenvalue of u u^T + Q for SPSD Q != 0:
/// (1 - cos theta(u, ran Q)) * min{|u|^2, lambda_min^+(Q)}.
inline double kaur_bound(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Matrix>& q) {
    require_symmetric(q, "kaur_bound");
    if (q.rows() != u.size()) throw ValidationError("kaur_bound: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(q);
    if (solver.info() != Eigen::Success) throw NumericalError("kaur_bound: eigensolver did not converge");
    const Vector& ev = solver.eigenvalues();
    const double scale = ev.cwiseAbs().maxCoeff();
    if (scale == 0.0) throw ValidationError("kaur_bound: Q must be nonzero");
    if (ev[0] < -1e-10 * std::max(1.0, scale)) throw ValidationError("kaur_bound: Q is not positive semidefinite");

    // ran Q from eigenvalues above 1e-10 * lambda_max; rounding noise in the null
    // space sits near eps * lambda_max.
    const double cutoff = 1e-10 * scale;
    Eigen::Index first = 0;
    while (ev[first] <= cutoff) ++first;
    const double lambda_pos = ev[first];
    if (u.norm() == 0.0) return 0.0;
    const Matrix range = solver.eigenvectors().rightCols(q.rows() - first);
    const double c = std::clamp((range.transpose() * u).norm() / u.norm(), 0.0, 1.0);
    return (1.0 - c) * std::min(u.squaredNorm(), lambda_pos);
}

/// Prepends u_0 = -(u_1 + ... + u_m) to m linearly independent inputs.
inline InputSet complete_inputs(const Eigen::Ref<const Matrix>& partial, double r_u = kUnbounded) {
    const Eigen::Index m = partial.rows();
    if (m < 1 || partial.cols() != m) throw ValidationError("complete_inputs: expects m inputs in R^m");
    require_finite(partial, "complete_inputs");
    const Vector s = svd(partial).singular_values;
    if (!(s[m - 1] > 1e-12 * s[0])) throw NumericalError("complete_inputs: partial inputs do not span R^m");
    Matrix u(m, m + 1);
    u.col(0) = -partial.rowwise().sum();
    u.rightCols(m) = partial;
    return make_input_set(std::move(u), r_u);
}

/// Quantities compared when judging a design.
struct DesignReport {
    double sigma_min_V = 0.0;
    double sigma_upper = 0.0;
    double thm_lower_bound = 0.0;  // 0 when the angle bound is undefined (still a valid lower bound)
    bool thm_bound_defined = false;
    double nco_residual = 0.0;
    std::vector<double> per_input_norms;
};

inline DesignReport design_report(const InputSet& set) {
    DesignReport r;
    r.sigma_min_V = sigma_min(assemble_V(set));
    if (set.d() >= set.dim()) {
        double r_u = set.r_u;
        if (!std::isfinite(r_u)) r_u = kUnbounded;
        r.sigma_upper = sigma_ceiling(set.d(), set.dim(), r_u);
    } else {
        r.sigma_upper = std::sqrt(static_cast<double>(set.count()));
    }
    if (set.count() >= set.dim() + 1) {
        try {
            r.thm_lower_bound = thm_lower_bound(set).bound;
            r.thm_bound_defined = true;
        } catch (const NumericalError&) {
        }
    }
    r.nco_residual = check_nco(set).residual;
    for (Eigen::Index j = 0; j < set.count(); ++j) r.per_input_norms.push_back(set.inputs.col(j).norm());
    return r;
}

// ---------------------------------------------------------------------------
// Monte Carlo distribution of sigma_min(V) / sqrt(d) for random inputs.

struct DistributionRow {
    Eigen::Index d = 0;
    double q0 = 0, q25 = 0, q50 = 0, q75 = 0, q100 = 0, mean = 0;
};

/// Linear-interpolation quantile of sorted data, p in [0, 1].
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw ValidationError("quantile of empty sample");
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return sorted[lo] + w * (sorted[hi] - sorted[lo]);
}

inline DistributionRow summarize(Eigen::Index d, std::vector<double> values) {
    std::sort(values.begin(), values.end());
    DistributionRow row;
    row.d = d;
    row.q0 = values.front();
    row.q25 = quantile_sorted(values, 0.25);
    row.q50 = quantile_sorted(values, 0.5);
    row.q75 = quantile_sorted(values, 0.75);
    row.q100 = values.back();
    double sum = 0.0;
    for (double v : values) sum += v;
    row.mean = sum / static_cast<double>(values.size());
    return row;
}

/// One draw of d+1 inputs, i.i.d. uniform on [-0.5, 0.5]^m, optionally normalized to unit norm.
inline Matrix random_box_inputs(RandomStream& rng, Eigen::Index m, Eigen::Index d, bool normalize) {
    Matrix u(m, d + 1);
    for (Eigen::Index j = 0; j <= d; ++j) {
        Vector v = rng.uniform_box(m, -0.5, 0.5);
        if (normalize) {
            while (v.norm() == 0.0) v = rng.uniform_box(m, -0.5, 0.5);
            v /= v.norm();
        }
        u.col(j) = v;
    }
    return u;
}

/// Per d: quartiles and mean of sigma_min(V)/sqrt(d) over `trials` draws. Trial t
/// for a given d uses the substream (seed, d, t), so results do not depend on
/// `threads`.
inline std::vector<DistributionRow> monte_carlo_sigma(Eigen::Index m, const std::vector<Eigen::Index>& d_list,
                                                      std::size_t trials, bool normalize, std::uint64_t seed,
                                                      unsigned threads = 1) {
    if (m < 1) throw ValidationError("monte_carlo_sigma: m must be >= 1");
    if (trials < 1) throw ValidationError("monte_carlo_sigma: trials must be >= 1");
    std::vector<DistributionRow> rows;
    for (Eigen::Index d : d_list) {
        if (d < 1) throw ValidationError("monte_carlo_sigma: d must be >= 1");
        std::vector<double> values(trials);
        parallel_for(trials, threads, [&](std::size_t t) {
            RandomStream rng = RandomStream::derive(seed, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(d), t});
            Matrix v(m + 1, d + 1);
            v.row(0).setOnes();
            v.bottomRows(m) = random_box_inputs(rng, m, d, normalize);
            values[t] = sigma_min(v) / std::sqrt(static_cast<double>(d));
        });
        rows.push_back(summarize(d, std::move(values)));
    }
    return rows;
}

}  // namespace excite
