#pragma once

// Kernel EDMD with compactly supported Wendland kernels.
//
// For nodes X = {x_1..x_d} the Koopman compression is
//   K_hat = K_X^{-1} K_{F(X)} K_X^{-1},   K_{F(X)}(i, j) = k(F(x_i), x_j),
// and an observable psi is propagated by psi(F(x)) ~ psi_X^T K_hat^T k_X(x).
// The control-affine variant fits one such matrix per component g_0..g_m.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "excite_id/errors.hpp"
#include "excite_id/specfactor.hpp"

namespace excite {

/// phi_{n,k}(r / rho) from Wendland's table, normalized to phi(0) = 1.
/// Supported: n in {1, 2, 3}, k in {0, 1, 2}; n = 2 shares the n = 3 row.
class WendlandKernel {
public:
    WendlandKernel(int n, int k, double support_scale = 1.0) : n_(n), k_(k), rho_(support_scale) {
        if (n < 1 || n > 3 || k < 0 || k > 2)
            throw ValidationError("Wendland kernel (n=" + std::to_string(n) + ", k=" + std::to_string(k) +
                                  ") not implemented; supported pairs: n in {1,2,3}, k in {0,1,2}");
        if (!(rho_ > 0.0) || !std::isfinite(rho_)) throw ValidationError("Wendland kernel support radius must be positive");
    }

    [[nodiscard]] int n() const { return n_; }
    [[nodiscard]] int k() const { return k_; }
    [[nodiscard]] double support() const { return rho_; }

    [[nodiscard]] double phi(double r) const {
        if (r < 0.0) throw ValidationError("Wendland kernel evaluated at negative radius");
        const double s = r / rho_;
        if (s >= 1.0) return 0.0;
        const double t = 1.0 - s;
        if (n_ == 1) {
            switch (k_) {
                case 0: return t;
                case 1: return t * t * t * (3.0 * s + 1.0);
                default: return std::pow(t, 5) * (8.0 * s * s + 5.0 * s + 1.0);
            }
        }
        switch (k_) {
            case 0: return t * t;
            case 1: return std::pow(t, 4) * (4.0 * s + 1.0);
            default: return std::pow(t, 6) * (35.0 * s * s + 18.0 * s + 3.0) / 3.0;
        }
    }

    [[nodiscard]] double operator()(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) const {
        return phi((x - y).norm());
    }

private:
    int n_;
    int k_;
    double rho_;
};

/// Gram matrix (k(a_i, b_j)) between the columns of a and b.
inline Matrix cross_kernel_matrix(const WendlandKernel& kernel, const Eigen::Ref<const Matrix>& a,
                                  const Eigen::Ref<const Matrix>& b) {
    Matrix out(a.cols(), b.cols());
    for (Eigen::Index i = 0; i < a.cols(); ++i)
        for (Eigen::Index j = 0; j < b.cols(); ++j) out(i, j) = kernel(a.col(i), b.col(j));
    return out;
}

/// K_X for nodes stored as columns. Rejects duplicates and matrices that fail Cholesky.
/// No jitter is added: conditioning of K_X enters the error bound directly.
inline Matrix kernel_matrix(const WendlandKernel& kernel, const Eigen::Ref<const Matrix>& points) {
    require_finite(points, "kernel_matrix");
    const Eigen::Index d = points.cols();
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = i + 1; j < d; ++j)
            if ((points.col(i) - points.col(j)).norm() == 0.0)
                throw ValidationError("kernel_matrix: duplicate nodes " + std::to_string(i) + " and " + std::to_string(j));
    Matrix k(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        k(i, i) = kernel.phi(0.0);
        for (Eigen::Index j = i + 1; j < d; ++j) k(i, j) = k(j, i) = kernel(points.col(i), points.col(j));
    }
    return k;
}

/// Cholesky factor of K_X; throws NumericalError with the smallest eigenvalue on failure.
inline Eigen::LLT<Matrix> factor_kernel_matrix(const Matrix& kx) {
    Eigen::LLT<Matrix> llt(kx);
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
        const Vector diag = llt.matrixLLT().diagonal();
        ok = diag.minCoeff() > 0.0 && std::isfinite(diag.maxCoeff());
    }
    if (!ok)
        throw NumericalError("ill-conditioned nodes: Cholesky of K_X failed, min eigenvalue = " +
                             std::to_string(min_eig_sym(kx)));
    return llt;
}

/// Kernel surrogate with one coefficient matrix per input component (one for
/// autonomous maps). Immutable after fitting.
struct KernelSurrogate {
    WendlandKernel kernel{1, 1, 1.0};
    Matrix nodes;                  // n x d
    Matrix gram;                   // K_X
    std::vector<Matrix> k_hat;     // K_hat_0..K_hat_m
    Matrix psi_at_nodes;           // d x p, row i = psi(x_i)^T

    [[nodiscard]] Eigen::Index node_count() const { return nodes.cols(); }
    [[nodiscard]] Eigen::Index input_dim() const { return static_cast<Eigen::Index>(k_hat.size()) - 1; }

    [[nodiscard]] Vector features(const Vector& x) const {
        Vector kx(nodes.cols());
        for (Eigen::Index j = 0; j < nodes.cols(); ++j) kx[j] = kernel(nodes.col(j), x);
        return kx;
    }

    /// psi(F(x, u)) ~ psi_X^T (K_hat_0 + sum_k u_k K_hat_k)^T k_X(x).
    [[nodiscard]] Vector predict(const Vector& x, const Vector& u) const {
        if (u.size() != input_dim()) throw ValidationError("kernel predict: input dimension mismatch");
        const Vector kx = features(x);
        Vector w = k_hat[0].transpose() * kx;
        for (Eigen::Index k = 0; k < u.size(); ++k) w += u[k] * (k_hat[static_cast<std::size_t>(k + 1)].transpose() * kx);
        return psi_at_nodes.transpose() * w;
    }

    [[nodiscard]] Vector predict(const Vector& x) const { return predict(x, Vector(0)); }
};

namespace detail {
inline Matrix sandwich_inverse(const Eigen::LLT<Matrix>& llt, const Matrix& middle) {
    // K_X^{-1} M K_X^{-1} = (K_X^{-1} (K_X^{-1} M)^T)^T, K_X symmetric.
    const Matrix left = llt.solve(middle);
    return llt.solve(left.transpose()).transpose();
}
}  // namespace detail

/// Autonomous kEDMD for x+ = F(x) with coordinate observables psi_l(x) = x_l.
/// successors column i holds F(x_i).
inline KernelSurrogate kedmd_fit(const WendlandKernel& kernel, const Matrix& nodes, const Matrix& successors) {
    if (successors.cols() != nodes.cols()) throw ValidationError("kedmd_fit: one successor per node required");
    require_finite(successors, "kedmd_fit successors");
    KernelSurrogate s;
    s.kernel = kernel;
    s.nodes = nodes;
    s.gram = kernel_matrix(kernel, nodes);
    const auto llt = factor_kernel_matrix(s.gram);
    s.k_hat.push_back(detail::sandwich_inverse(llt, cross_kernel_matrix(kernel, successors, nodes)));
    s.psi_at_nodes = nodes.transpose();
    return s;
}

/// Control-affine kEDMD. component_values[k] column i holds g~_k(x_i), the
/// fitted drift (k = 0) or input vector field (k >= 1) at node i.
inline KernelSurrogate kedmd_control_fit(const WendlandKernel& kernel, const Matrix& nodes,
                                         const std::vector<Matrix>& component_values) {
    if (component_values.empty()) throw ValidationError("kedmd_control_fit: needs at least g~_0");
    KernelSurrogate s;
    s.kernel = kernel;
    s.nodes = nodes;
    s.gram = kernel_matrix(kernel, nodes);
    const auto llt = factor_kernel_matrix(s.gram);
    for (const auto& g : component_values) {
        if (g.cols() != nodes.cols() || g.rows() != nodes.rows())
            throw ValidationError("kedmd_control_fit: component values must be n x d");
        require_finite(g, "kedmd_control_fit");
        s.k_hat.push_back(detail::sandwich_inverse(llt, cross_kernel_matrix(kernel, g, nodes)));
    }
    s.psi_at_nodes = nodes.transpose();
    return s;
}

/// Estimated fill distance: max over probe columns of the distance to the nearest node.
/// A lower estimate of the supremum over the continuous domain.
inline double fill_distance(const Eigen::Ref<const Matrix>& nodes, const Eigen::Ref<const Matrix>& probes) {
    if (nodes.cols() == 0) throw ValidationError("fill_distance: empty node set");
    if (probes.cols() == 0) throw ValidationError("fill_distance: probe_count must be >= 1");
    if (probes.rows() != nodes.rows()) throw ValidationError("fill_distance: dimension mismatch");
    double worst = 0.0;
    for (Eigen::Index p = 0; p < probes.cols(); ++p) {
        const double nearest = (nodes.colwise() - probes.col(p)).colwise().norm().minCoeff();
        worst = std::max(worst, nearest);
    }
    return worst;
}

/// Tensor grid with `per_axis` points per dimension on the box [lo, hi]^n (endpoints included).
inline Matrix grid_probes(const Vector& lo, const Vector& hi, Eigen::Index per_axis) {
    if (lo.size() != hi.size() || lo.size() == 0) throw ValidationError("grid_probes: bad box");
    if (per_axis < 1) throw ValidationError("grid_probes: probe_count must be >= 1");
    const Eigen::Index n = lo.size();
    Eigen::Index total = 1;
    for (Eigen::Index i = 0; i < n; ++i) total *= per_axis;
    Matrix out(n, total);
    for (Eigen::Index c = 0; c < total; ++c) {
        Eigen::Index rem = c;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index idx = rem % per_axis;
            rem /= per_axis;
            const double t = per_axis == 1 ? 0.5 : static_cast<double>(idx) / static_cast<double>(per_axis - 1);
            out(i, c) = lo[i] + t * (hi[i] - lo[i]);
        }
    }
    return out;
}

struct ConstantC {
    double value = 0.0;
    bool exact = false;  // false: upper bound via d * |K_X^{-1}|_2
};

inline constexpr Eigen::Index kMaxExactVertexDim = 20;

/// c = phi(0)^{1/2} (max_{|v|_inf <= 1} v^T K_X^{-1} v)^{1/2}.
///
/// The maximum of a convex quadratic over the box sits at a vertex; for
/// d <= 20 all 2^(d-1) sign patterns (up to global sign) are visited in Gray
/// code order with O(d) updates per step.
inline ConstantC constant_c(const Matrix& kx, double phi0) {
    const auto llt = factor_kernel_matrix(kx);
    const Eigen::Index d = kx.rows();
    const Matrix a = llt.solve(Matrix::Identity(d, d));
    ConstantC out;
    if (d <= kMaxExactVertexDim) {
        Vector v = Vector::Ones(d);
        Vector av = a * v;
        double q = v.dot(av);
        double best = q;
        const std::uint64_t steps = d == 0 ? 0 : (std::uint64_t{1} << (d - 1));
        for (std::uint64_t g = 1; g < steps; ++g) {
            const auto j = static_cast<Eigen::Index>(std::countr_zero(g));
            // flip v_j: q' = q - 4 v_j (A v)_j + 4 A_jj
            q += -4.0 * v[j] * av[j] + 4.0 * a(j, j);
            av -= 2.0 * v[j] * a.col(j);
            v[j] = -v[j];
            best = std::max(best, q);
        }
        out.value = std::sqrt(phi0 * best);
        out.exact = true;
    } else {
        const double norm_inv = 1.0 / min_eig_sym(kx);
        out.value = std::sqrt(phi0 * static_cast<double>(d) * norm_inv);
        out.exact = false;
    }
    return out;
}

inline ConstantC constant_c(const WendlandKernel& kernel, const Matrix& kx) { return constant_c(kx, kernel.phi(0.0)); }

/// C1 h^{k+1/2} + C2 c |K_X^{-1}| r_X sigma_tilde, with C1 and C2 free positive
/// scales. radius_condition_ok reports r_X < h/2, under which the bound is stated.
struct KernelBound {
    double value = 0.0;
    bool radius_condition_ok = false;
};

inline KernelBound kernel_error_bound(double c1, double c2, double fill, int k, double c, double norm_kx_inv,
                                      double cluster_radius, double sigma_tilde_max) {
    if (c1 <= 0.0 || c2 <= 0.0) throw ValidationError("kernel_error_bound: scales must be positive");
    return {c1 * std::pow(fill, k + 0.5) + c2 * c * norm_kx_inv * cluster_radius * sigma_tilde_max,
            cluster_radius < fill / 2.0};
}

}  // namespace excite
