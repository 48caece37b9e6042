#include <catch_amalgamated.hpp>

#include <cmath>

#include "excite_id/affine_fit.hpp"
#include "excite_id/excitation.hpp"
#include "oracles.hpp"

using namespace excite;
using Catch::Approx;

namespace {
ObservationSet observe(const Vector& g0, const Matrix& G, const InputSet& in, double r_eps, oracle::Lcg* rng) {
    ObservationSet obs;
    obs.r_eps = r_eps;
    obs.outputs.resize(g0.size(), in.count());
    for (Eigen::Index j = 0; j < in.count(); ++j) {
        Vector y = g0 + G * in.input(j);
        if (rng && r_eps > 0.0) y += rng->in_ball(g0.size(), r_eps);
        obs.outputs.col(j) = y;
    }
    return obs;
}

Matrix truth(const Vector& g0, const Matrix& G) {
    Matrix c(g0.size(), G.cols() + 1);
    c << g0, G;
    return c;
}
}  // namespace

TEST_CASE("assemble_V layout", "[affine_fit]") {
    Matrix u(1, 2);
    u << -1, 1;
    Matrix expected(2, 2);
    expected << 1, 1, -1, 1;
    CHECK(assemble_V(make_input_set(u)) == expected);

    Matrix u2(2, 3);
    u2 << 1, 0, -1, 0, 1, -1;
    const Matrix v = assemble_V(make_input_set(u2));
    CHECK(v.rows() == 3);
    CHECK(v.row(0).isOnes());
    CHECK(v.bottomRows(2) == u2);

    // d = m - 1 is representable; the fit rejects it.
    const InputSet short_set = make_input_set(Matrix(Eigen::Vector2d(1, 2)));
    CHECK(assemble_V(short_set).cols() == 1);
    ObservationSet obs{Matrix::Zero(2, 1), 0.0};
    CHECK_THROWS_AS(fit_affine(short_set, obs), InsufficientExcitation);
}

TEST_CASE("input sets enforce the norm constraint", "[affine_fit]") {
    Matrix u(2, 2);
    u << 3, 0, 4, 1;
    CHECK_NOTHROW(make_input_set(u, 5.0));
    CHECK_THROWS_AS(make_input_set(u, 4.9), ValidationError);
    CHECK_THROWS_AS(make_input_set(u, 0.0), ValidationError);
    CHECK_THROWS_AS(make_input_set(Matrix(0, 0)), ValidationError);
}

TEST_CASE("noiseless data is recovered exactly", "[affine_fit]") {
    oracle::Lcg rng(4);
    for (int t = 0; t < 20; ++t) {
        const Vector g0 = rng.vector(3);
        const Matrix G = rng.matrix(3, 2);
        const InputSet in = make_input_set(rng.matrix(2, 6));
        const auto est = fit_affine(in, observe(g0, G, in, 0.0, nullptr));
        CHECK((est.coefficients() - truth(g0, G)).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(est.residual_fro <= 1e-10);
        CHECK(est.bound_maxnorm == 0.0);
    }
}

TEST_CASE("orthogonal design with bounded noise stays within the bound", "[affine_fit]") {
    const Vector g0 = Eigen::Vector2d(1, 2);
    const Matrix G = Matrix::Identity(2, 2);
    const InputSet in = orthogonal_inputs(2, 2, std::sqrt(3.0));
    oracle::Lcg rng(8);
    for (int t = 0; t < 200; ++t) {
        const auto est = fit_affine(in, observe(g0, G, in, 0.1, &rng));
        CHECK(est.sigma_min_V == Approx(std::sqrt(3.0)));
        CHECK(est.bound_maxnorm == Approx(0.1));
        CHECK((est.coefficients() - truth(g0, G)).cwiseAbs().maxCoeff() <= 0.1 + 1e-12);
    }
}

TEST_CASE("equal inputs are rejected with sigma_min attached", "[affine_fit]") {
    const InputSet in = make_input_set(Matrix::Ones(2, 4));
    ObservationSet obs{Matrix::Zero(1, 4), 0.0};
    try {
        fit_affine(in, obs);
        FAIL("expected InsufficientExcitation");
    } catch (const InsufficientExcitation& e) {
        CHECK(e.sigma_min() < 1e-10);
        CHECK(std::string(e.what()).find("insufficient excitation") != std::string::npos);
    }
}

TEST_CASE("error_bound formula", "[affine_fit]") {
    CHECK(error_bound(0.1, 2, std::sqrt(3.0)) == Approx(0.1));
    CHECK(error_bound(0.0, 7, 0.3) == 0.0);
    CHECK(error_bound(1.0, 3, 1.0) == Approx(2.0));
    CHECK_THROWS_AS(error_bound(1.0, 3, 0.0), ValidationError);
    CHECK_THROWS_AS(error_bound(1.0, 3, -1.0), ValidationError);
}

TEST_CASE("sigma_ceiling takes the smaller branch", "[affine_fit]") {
    CHECK(sigma_ceiling(2, 2, 1.0) == Approx(std::sqrt(1.5)));
    CHECK(sigma_ceiling(2, 2, kUnbounded) == Approx(std::sqrt(3.0)));
    for (Eigen::Index m = 1; m <= 6; ++m) {
        for (double r_u : {0.5 * std::sqrt(double(m)), std::sqrt(double(m)), 2.0 * std::sqrt(double(m))}) {
            const double free = std::sqrt(double(m + 1));
            const double constrained = r_u * std::sqrt(double(m + 1) / double(m));
            CHECK(sigma_ceiling(m, m, r_u) == Approx(std::min(free, constrained)));
        }
        // r_u = sqrt(m): both branches coincide.
        CHECK(sigma_ceiling(m, m, std::sqrt(double(m))) == Approx(std::sqrt(double(m + 1))));
    }
    CHECK_THROWS_AS(sigma_ceiling(1, 2, 1.0), ValidationError);
}

TEST_CASE("bound validity on random instances", "[affine_fit][property]") {
    oracle::Lcg rng(2024);
    int checked = 0;
    for (int t = 0; t < 500; ++t) {
        const auto n = static_cast<Eigen::Index>(1 + t % 5);
        const auto m = static_cast<Eigen::Index>(1 + (t / 5) % 5);
        const auto d = m + static_cast<Eigen::Index>(rng.uniform() * (13 - m));
        const Vector g0 = rng.vector(n, -2, 2);
        const Matrix G = rng.matrix(n, m, -2, 2);
        const InputSet in = make_input_set(rng.matrix(m, d + 1));
        const double r_eps = rng.uniform(0.0, 0.5);
        RegressionEstimate est;
        try {
            est = fit_affine(in, observe(g0, G, in, r_eps, &rng));
        } catch (const InsufficientExcitation&) {
            continue;
        }
        ++checked;
        CHECK((est.coefficients() - truth(g0, G)).cwiseAbs().maxCoeff() <= est.bound_maxnorm + 1e-9);
        CHECK(est.bound_maxnorm == Approx(r_eps * std::sqrt(double(d + 1)) / est.sigma_min_V));
    }
    CHECK(checked > 450);
}

TEST_CASE("ceiling is never exceeded under the norm constraint", "[affine_fit][property]") {
    oracle::Lcg rng(31);
    for (int t = 0; t < 500; ++t) {
        const auto m = static_cast<Eigen::Index>(1 + t % 5);
        const auto d = m + static_cast<Eigen::Index>(t % 7);
        const double r_u = rng.uniform(0.1, 3.0);
        Matrix u(m, d + 1);
        for (Eigen::Index j = 0; j <= d; ++j) u.col(j) = rng.in_ball(m, r_u);
        CHECK(sigma_min(assemble_V(make_input_set(u, r_u))) <= sigma_ceiling(d, m, r_u) + 1e-9);
    }
}

TEST_CASE("violating the sum-to-zero condition keeps sigma_min below sqrt(d+1)", "[affine_fit][property]") {
    oracle::Lcg rng(12);
    int checked = 0;
    for (int t = 0; t < 500; ++t) {
        const auto m = static_cast<Eigen::Index>(1 + t % 4);
        const auto d = m + static_cast<Eigen::Index>(t % 5);
        const Matrix u = rng.matrix(m, d + 1, -5, 5);
        double max_norm = 0.0;
        for (Eigen::Index j = 0; j <= d; ++j) max_norm = std::max(max_norm, u.col(j).norm());
        if (u.rowwise().sum().norm() <= 1e-8 * std::sqrt(double(d + 1)) * max_norm) continue;
        ++checked;
        CHECK(sigma_min(assemble_V(make_input_set(u))) < std::sqrt(double(d + 1)) - 1e-9);
    }
    CHECK(checked > 400);
}
