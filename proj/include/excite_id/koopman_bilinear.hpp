#pragma once

// Bilinear EDMDc / gEDMD with flexible sampling.
//
// Arbitrary samples (x, u, y) near a set of centers are clustered, a local
// affine model y ~ g0(x_i) + G(x_i) u is fitted per cluster, and the fitted
// components provide artificial data at the per-unit inputs e_0 = 0, e_1..e_m
// from which one Koopman matrix per input is regressed.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "excite_id/affine_fit.hpp"
#include "excite_id/excitation.hpp"
#include "excite_id/parallel.hpp"
#include "excite_id/specfactor.hpp"

namespace excite {

enum class SurrogateMode { Operator, Generator };

inline const char* to_string(SurrogateMode mode) { return mode == SurrogateMode::Operator ? "operator" : "generator"; }

inline SurrogateMode parse_mode(const std::string& s) {
    if (s == "operator") return SurrogateMode::Operator;
    if (s == "generator") return SurrogateMode::Generator;
    throw ValidationError("unknown surrogate mode '" + s + "' (expected operator|generator)");
}

struct Observable {
    std::string name;
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
};

/// Finite dictionary Psi = (psi_1, ..., psi_M) of scalar observables of an n-dimensional state.
class Dictionary {
public:
    Dictionary(std::string id, Eigen::Index state_dim, std::vector<Observable> observables)
        : id_(std::move(id)), state_dim_(state_dim), observables_(std::move(observables)) {
        if (observables_.empty()) throw ValidationError("dictionary needs at least one observable");
    }

    [[nodiscard]] const std::string& id() const { return id_; }
    [[nodiscard]] Eigen::Index state_dim() const { return state_dim_; }
    [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(observables_.size()); }
    [[nodiscard]] const std::vector<Observable>& observables() const { return observables_; }

    [[nodiscard]] std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& o : observables_) out.push_back(o.name);
        return out;
    }

    [[nodiscard]] Vector lift(const Vector& x) const {
        if (x.size() != state_dim_) throw ValidationError("dictionary '" + id_ + "': state dimension mismatch");
        Vector z(size());
        for (Eigen::Index p = 0; p < size(); ++p) z[p] = observables_[static_cast<std::size_t>(p)].value(x);
        return z;
    }

    /// Rows are gradients of psi_p, so jacobian(x) * f = grad Psi^T f.
    [[nodiscard]] Matrix jacobian(const Vector& x) const {
        Matrix j(size(), state_dim_);
        for (Eigen::Index p = 0; p < size(); ++p) j.row(p) = observables_[static_cast<std::size_t>(p)].gradient(x).transpose();
        return j;
    }

private:
    std::string id_;
    Eigen::Index state_dim_;
    std::vector<Observable> observables_;
};

inline Observable coordinate_observable(Eigen::Index n, Eigen::Index l) {
    return {"x" + std::to_string(l + 1), [l](const Vector& x) { return x[l]; },
            [n, l](const Vector&) {
                Vector g = Vector::Zero(n);
                g[l] = 1.0;
                return g;
            }};
}

/// Psi(x) = x.
inline Dictionary identity_dictionary(Eigen::Index n) {
    std::vector<Observable> obs;
    for (Eigen::Index l = 0; l < n; ++l) obs.push_back(coordinate_observable(n, l));
    return Dictionary("identity", n, std::move(obs));
}

/// Psi(x) = (1, x). The constant makes affine dynamics closed on the dictionary.
inline Dictionary affine_dictionary(Eigen::Index n) {
    std::vector<Observable> obs;
    obs.push_back({"1", [](const Vector&) { return 1.0; }, [n](const Vector&) { return Vector(Vector::Zero(n)); }});
    for (Eigen::Index l = 0; l < n; ++l) obs.push_back(coordinate_observable(n, l));
    return Dictionary("affine", n, std::move(obs));
}

/// {1, x1, x2, cos x3, sin x3} for planar pose states.
inline Dictionary robot_dictionary() {
    std::vector<Observable> obs;
    obs.push_back({"1", [](const Vector&) { return 1.0; }, [](const Vector&) { return Vector(Vector::Zero(3)); }});
    obs.push_back(coordinate_observable(3, 0));
    obs.push_back(coordinate_observable(3, 1));
    obs.push_back({"cos_x3", [](const Vector& x) { return std::cos(x[2]); },
                   [](const Vector& x) { return Vector(Eigen::Vector3d(0.0, 0.0, -std::sin(x[2]))); }});
    obs.push_back({"sin_x3", [](const Vector& x) { return std::sin(x[2]); },
                   [](const Vector& x) { return Vector(Eigen::Vector3d(0.0, 0.0, std::cos(x[2]))); }});
    return Dictionary("robot", 3, std::move(obs));
}

/// Looks up "identity", "affine" or "robot".
inline Dictionary make_dictionary(const std::string& id, Eigen::Index n) {
    if (id == "identity") return identity_dictionary(n);
    if (id == "affine") return affine_dictionary(n);
    if (id == "robot") {
        if (n != 3) throw ValidationError("robot dictionary needs n = 3");
        return robot_dictionary();
    }
    throw ValidationError("unknown dictionary '" + id + "' (expected identity|affine|robot)");
}

// ---------------------------------------------------------------------------
// Clustering

/// One raw observation. In operator mode y is the successor state F(x, u); in
/// generator mode y = grad Psi(x)^T f(x, u).
struct Sample {
    Vector x;
    Vector u;
    Vector y;
};

struct ClusteredDataset {
    SurrogateMode mode = SurrogateMode::Operator;
    std::vector<Vector> centers;
    std::vector<double> radii;
    std::vector<std::vector<Sample>> clusters;
    std::vector<bool> retained;           // false when the cluster has fewer than m+1 samples
    std::vector<std::size_t> undersampled; // indices of excluded centers
    std::size_t unassigned = 0;            // samples outside every ball
};

/// Assigns each sample to the nearest center whose ball contains it.
///
/// Proximity is measured in state space in operator mode and in observable
/// space in generator mode, where the ball radius is lipschitz_psi * r_i.
/// Equidistant centers resolve to the lower index.
inline ClusteredDataset cluster(const std::vector<Sample>& samples, const std::vector<Vector>& centers,
                                const std::vector<double>& radii, const Dictionary& lift, SurrogateMode mode,
                                Eigen::Index m, double lipschitz_psi = 1.0) {
    if (centers.size() != radii.size()) throw ValidationError("cluster: one radius per center required");
    for (std::size_t a = 0; a < centers.size(); ++a) {
        if (radii[a] < 0.0) throw ValidationError("cluster: radii must be nonnegative");
        for (std::size_t b = a + 1; b < centers.size(); ++b)
            if ((centers[a] - centers[b]).norm() == 0.0) throw ValidationError("cluster: centers must be pairwise distinct");
    }
    ClusteredDataset out;
    out.mode = mode;
    out.centers = centers;
    out.radii = radii;
    out.clusters.resize(centers.size());

    std::vector<Vector> lifted_centers;
    if (mode == SurrogateMode::Generator)
        for (const auto& c : centers) lifted_centers.push_back(lift.lift(c));

    for (const auto& s : samples) {
        if (s.u.size() != m) throw ValidationError("cluster: sample input has wrong dimension");
        const Vector probe = mode == SurrogateMode::Generator ? lift.lift(s.x) : s.x;
        std::optional<std::size_t> best;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < centers.size(); ++i) {
            const double dist = mode == SurrogateMode::Generator ? (probe - lifted_centers[i]).norm()
                                                                 : (probe - centers[i]).norm();
            const double radius = mode == SurrogateMode::Generator ? lipschitz_psi * radii[i] : radii[i];
            if (dist <= radius && dist < best_dist) {
                best = i;
                best_dist = dist;
            }
        }
        if (best) out.clusters[*best].push_back(s);
        else ++out.unassigned;
    }
    for (std::size_t i = 0; i < centers.size(); ++i) {
        const bool ok = static_cast<Eigen::Index>(out.clusters[i].size()) >= m + 1;
        out.retained.push_back(ok);
        if (!ok) out.undersampled.push_back(i);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Local fits

/// Reciprocal square root of the subspace-angle bound on the first m+1 inputs;
/// +inf when the bound is zero or undefined.
inline double sigma_tilde(const InputSet& inputs) {
    try {
        const double b = thm_lower_bound(inputs).bound;
        return b > 0.0 ? 1.0 / std::sqrt(b) : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
        return std::numeric_limits<double>::infinity();
    }
}

struct LocalEstimate {
    bool fitted = false;
    std::string failure;
    Matrix coefficients;  // [Y~0 | Y~1 | ... | Y~m], one column per component
    double sigma_min_V = 0.0;
    double sigma_tilde = std::numeric_limits<double>::infinity();
    double bound_maxnorm = 0.0;
    Eigen::Index sample_count = 0;
};

inline InputSet cluster_inputs(const std::vector<Sample>& cluster_samples) {
    std::vector<Vector> u;
    for (const auto& s : cluster_samples) u.push_back(s.u);
    return make_input_set(u);
}

/// Affine regression over one cluster. Rank failures mark the estimate unfit
/// rather than throwing.
inline LocalEstimate fit_cluster(const std::vector<Sample>& cluster_samples, double r_eps = 0.0) {
    LocalEstimate est;
    est.sample_count = static_cast<Eigen::Index>(cluster_samples.size());
    if (cluster_samples.empty()) {
        est.failure = "empty cluster";
        return est;
    }
    const InputSet inputs = cluster_inputs(cluster_samples);
    ObservationSet obs;
    obs.outputs.resize(cluster_samples.front().y.size(), est.sample_count);
    for (Eigen::Index j = 0; j < est.sample_count; ++j) obs.outputs.col(j) = cluster_samples[static_cast<std::size_t>(j)].y;
    obs.r_eps = r_eps;
    est.sigma_tilde = inputs.count() >= inputs.dim() + 1 ? sigma_tilde(inputs) : std::numeric_limits<double>::infinity();
    try {
        const RegressionEstimate fit = fit_affine(inputs, obs);
        est.coefficients = fit.coefficients();
        est.sigma_min_V = fit.sigma_min_V;
        est.bound_maxnorm = fit.bound_maxnorm;
        est.fitted = true;
    } catch (const InsufficientExcitation& e) {
        est.sigma_min_V = e.sigma_min();
        est.failure = e.what();
    }
    return est;
}

inline std::vector<LocalEstimate> fit_clusters(const ClusteredDataset& data, double r_eps = 0.0, unsigned threads = 1) {
    std::vector<LocalEstimate> out(data.clusters.size());
    parallel_for(data.clusters.size(), threads, [&](std::size_t i) {
        if (data.retained[i]) out[i] = fit_cluster(data.clusters[i], r_eps);
        else out[i].failure = "undersampled cluster";
    });
    return out;
}

/// r_eps * max_i sqrt(N_i) * sigma_tilde_i with N_i the sample count of cluster i.
inline double cluster_error_bound(double r_eps, const std::vector<LocalEstimate>& estimates) {
    double worst = 0.0;
    for (const auto& e : estimates)
        if (e.fitted) worst = std::max(worst, std::sqrt(static_cast<double>(e.sample_count)) * e.sigma_tilde);
    return r_eps * worst;
}

// ---------------------------------------------------------------------------
// Artificial data and regression

struct ArtificialData {
    Matrix X;                     // Psi(x_i) columns
    std::vector<Matrix> targets;  // regression targets per input index k = 0..m
    std::vector<Matrix> increments; // generator mode: Y~k columns (Y~0 for k = 0); empty otherwise
    std::vector<std::size_t> centers_used;
};

/// Builds X and Y^0..Y^m from the fitted clusters.
///
/// Operator mode: Y^k column i = Psi(g0_hat + G_hat e_k) with e_0 = 0.
/// Generator mode: Y~k are the fitted components; the regression target for
/// k >= 1 is Y^0 + Y~k, the generator data at input e_k.
inline ArtificialData artificial_data(const std::vector<Vector>& centers, const std::vector<LocalEstimate>& estimates,
                                      SurrogateMode mode, const Dictionary& lift) {
    if (centers.size() != estimates.size()) throw ValidationError("artificial_data: one estimate per center required");
    ArtificialData out;
    for (std::size_t i = 0; i < centers.size(); ++i)
        if (estimates[i].fitted) out.centers_used.push_back(i);
    if (out.centers_used.empty()) throw NumericalError("artificial_data: no fitted clusters");

    const auto d = static_cast<Eigen::Index>(out.centers_used.size());
    const Eigen::Index comps = estimates[out.centers_used.front()].coefficients.cols();
    const Eigen::Index M = lift.size();
    out.X.resize(M, d);
    out.targets.assign(static_cast<std::size_t>(comps), Matrix(M, d));
    if (mode == SurrogateMode::Generator) out.increments.assign(static_cast<std::size_t>(comps), Matrix(M, d));

    for (Eigen::Index c = 0; c < d; ++c) {
        const std::size_t i = out.centers_used[static_cast<std::size_t>(c)];
        const Matrix& coef = estimates[i].coefficients;
        out.X.col(c) = lift.lift(centers[i]);
        for (Eigen::Index k = 0; k < comps; ++k) {
            if (mode == SurrogateMode::Operator) {
                const Vector successor = k == 0 ? Vector(coef.col(0)) : Vector(coef.col(0) + coef.col(k));
                out.targets[static_cast<std::size_t>(k)].col(c) = lift.lift(successor);
            } else {
                if (coef.rows() != M) throw ValidationError("artificial_data: generator outputs must live in R^M");
                out.increments[static_cast<std::size_t>(k)].col(c) = coef.col(k);
                out.targets[static_cast<std::size_t>(k)].col(c) = k == 0 ? Vector(coef.col(0)) : Vector(coef.col(0) + coef.col(k));
            }
        }
    }
    return out;
}

struct BilinearSurrogate {
    SurrogateMode mode = SurrogateMode::Operator;
    std::vector<Matrix> matrices;  // K^0..K^m (operator) or L^0..L^m (generator)
    std::vector<std::string> dictionary_names;
    std::string dictionary_id;
    std::vector<double> sigma_tilde;

    [[nodiscard]] Eigen::Index lifted_dim() const { return matrices.empty() ? 0 : matrices.front().rows(); }
    [[nodiscard]] Eigen::Index input_dim() const { return static_cast<Eigen::Index>(matrices.size()) - 1; }
};

/// K^k = Y^k pinv(X). Rejects rank-deficient X and names the poorly sampled
/// dictionary directions.
inline BilinearSurrogate edmd_fit(const Matrix& X, const std::vector<Matrix>& targets, SurrogateMode mode,
                                  const std::vector<std::string>& names = {}) {
    if (targets.empty()) throw ValidationError("edmd_fit: no regression targets");
    for (const auto& y : targets)
        if (y.rows() != X.rows() || y.cols() != X.cols()) throw ValidationError("edmd_fit: target shape mismatch");
    const SvdResult f = svd(X);
    const Eigen::Index M = X.rows();
    const bool deficient = X.cols() < M || !(f.singular_values[M - 1] > kFullRankRatio * f.singular_values[0]);
    if (deficient) {
        Eigen::JacobiSVD<Matrix> full(X, Eigen::ComputeFullU);
        const Vector& sv = full.singularValues();
        const double cutoff = sv.size() == 0 ? 0.0 : kFullRankRatio * sv[0];
        std::ostringstream msg;
        msg << "edmd_fit: data matrix X is rank deficient; unexcited dictionary directions:";
        for (Eigen::Index r = 0; r < M; ++r) {
            if (r < sv.size() && sv[r] > cutoff) continue;
            msg << " [";
            bool first = true;
            for (Eigen::Index p = 0; p < M; ++p) {
                const double w = full.matrixU()(p, r);
                if (std::abs(w) < 1e-6) continue;
                if (!first) msg << " + ";
                const auto idx = static_cast<std::size_t>(p);
                msg << w << "*" << (idx < names.size() ? names[idx] : "psi" + std::to_string(p + 1));
                first = false;
            }
            msg << "]";
        }
        throw NumericalError(msg.str());
    }
    const Matrix x_pinv = f.right * f.singular_values.cwiseInverse().asDiagonal() * f.left.transpose();
    BilinearSurrogate s;
    s.mode = mode;
    s.dictionary_names = names;
    for (const auto& y : targets) s.matrices.push_back(y * x_pinv);
    return s;
}

/// Operator mode: z+ = (K^0 + sum_k u_k (K^k - K^0)) z. Generator mode returns dz/dt likewise.
inline Vector predict(const BilinearSurrogate& s, const Vector& z, const Vector& u) {
    if (z.size() != s.lifted_dim() || u.size() != s.input_dim()) throw ValidationError("predict: dimension mismatch");
    const Vector base = s.matrices[0] * z;
    Vector out = base;
    for (Eigen::Index k = 0; k < u.size(); ++k) out += u[k] * (s.matrices[static_cast<std::size_t>(k + 1)] * z - base);
    return out;
}

/// End-to-end flexible-sampling fit: cluster, local fits, artificial data, regression.
struct FlexibleFit {
    ClusteredDataset data;
    std::vector<LocalEstimate> estimates;
    ArtificialData artificial;
    BilinearSurrogate surrogate;
};

inline FlexibleFit flexible_fit(const std::vector<Sample>& samples, const std::vector<Vector>& centers,
                                const std::vector<double>& radii, const Dictionary& lift, SurrogateMode mode,
                                Eigen::Index m, double r_eps = 0.0, unsigned threads = 1, double lipschitz_psi = 1.0) {
    FlexibleFit out;
    out.data = cluster(samples, centers, radii, lift, mode, m, lipschitz_psi);
    out.estimates = fit_clusters(out.data, r_eps, threads);
    out.artificial = artificial_data(centers, out.estimates, mode, lift);
    out.surrogate = edmd_fit(out.artificial.X, out.artificial.targets, mode, lift.names());
    out.surrogate.dictionary_id = lift.id();
    for (std::size_t i : out.artificial.centers_used) out.surrogate.sigma_tilde.push_back(out.estimates[i].sigma_tilde);
    return out;
}

}  // namespace excite
