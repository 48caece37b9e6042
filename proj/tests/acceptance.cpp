// One PASS/FAIL line per acceptance criterion; exit status is nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"
#include "excite_id/affine_fit.hpp"
#include "excite_id/excitation.hpp"
#include "excite_id/koopman_bilinear.hpp"
#include "excite_id/koopman_kernel.hpp"
#include "excite_id/robot_bench.hpp"
#include "oracles.hpp"

using namespace excite;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

int failures = 0;

void report(const std::string& id, const Outcome& o, double seconds, double limit) {
    // limit <= 0: no runtime requirement.
    const bool in_time = limit <= 0.0 || seconds < limit;
    const bool ok = o.pass && in_time;
    if (!ok) ++failures;
    if (limit > 0.0)
        std::printf("%s %s: %s [%.2f s, limit %.0f s]\n", ok ? "PASS" : "FAIL", id.c_str(), o.detail.c_str(), seconds, limit);
    else
        std::printf("%s %s: %s [%.2f s]\n", ok ? "PASS" : "FAIL", id.c_str(), o.detail.c_str(), seconds);
    std::fflush(stdout);
}

template <typename F>
std::pair<Outcome, double> timed(F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = body();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {o, s};
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// 1. Closed-form sigma_min of the orthogonal and simplex designs.
Outcome designed_inputs() {
    double worst = 0.0;
    for (Eigen::Index m = 1; m <= 6; ++m) {
        const Eigen::Index d = m;
        const double alpha = std::sqrt(double(d + 1));
        const double so = oracle::sigma_min(assemble_V(orthogonal_inputs(m, d, alpha)));
        worst = std::max(worst, std::abs(so - std::sqrt(double(d + 1))));
        const double target = std::min(std::sqrt(double(d + 1)), alpha * std::sqrt(double(m + 1) / double(m)));
        const double ss = oracle::sigma_min(assemble_V(simplex_inputs(m, d, alpha)));
        worst = std::max(worst, std::abs(ss - target));
    }
    return {worst <= 1e-9, "max deviation " + num(worst) + " (tol 1e-9)"};
}

// 2a. Regression error never exceeds r_eps sqrt(d+1) / sigma_min.
Outcome soundness_regression() {
    oracle::Lcg rng(20240601);
    int violations = 0, fitted = 0;
    double worst = -1e300;
    for (int t = 0; t < 10000; ++t) {
        const auto n = static_cast<Eigen::Index>(1 + t % 4);
        const auto m = static_cast<Eigen::Index>(1 + (t / 4) % 4);
        const auto d = m + static_cast<Eigen::Index>(rng.uniform() * 8);
        const double r_u = rng.uniform(0.5, 3.0), r_eps = rng.uniform(0.0, 0.3);
        const Vector g0 = rng.vector(n, -2, 2);
        const Matrix G = rng.matrix(n, m, -2, 2);
        Matrix u(m, d + 1);
        for (Eigen::Index j = 0; j <= d; ++j) u.col(j) = rng.in_ball(m, r_u);
        const InputSet in = make_input_set(u, r_u);
        ObservationSet obs{Matrix(n, d + 1), r_eps};
        for (Eigen::Index j = 0; j <= d; ++j) obs.outputs.col(j) = g0 + G * in.input(j) + rng.in_ball(n, r_eps);
        try {
            const RegressionEstimate est = fit_affine(in, obs);
            ++fitted;
            Matrix truth(n, m + 1);
            truth << g0, G;
            const double excess = (est.coefficients() - truth).cwiseAbs().maxCoeff() - est.bound_maxnorm;
            worst = std::max(worst, excess);
            if (excess > 1e-9) ++violations;
        } catch (const InsufficientExcitation&) {
        }
    }
    return {violations == 0 && fitted > 9000,
            std::to_string(violations) + " violations in " + std::to_string(fitted) + " fits, max excess " + num(worst)};
}

// 2b. Subspace-angle lower bound never exceeds sigma_min^2(V).
Outcome soundness_angle() {
    oracle::Lcg rng(77);
    int violations = 0, checked = 0;
    for (int t = 0; t < 10000; ++t) {
        const auto m = static_cast<Eigen::Index>(1 + t % 5);
        const InputSet set = make_input_set(rng.matrix(m, m + 1 + t % 3, -3, 3));
        try {
            const double lb = thm_lower_bound(set).bound;
            const double s = oracle::sigma_min(assemble_V(set));
            ++checked;
            if (lb > s * s + 1e-9) ++violations;
        } catch (const NumericalError&) {
        }
    }
    return {violations == 0 && checked > 9900, std::to_string(violations) + " violations in " + std::to_string(checked)};
}

// 2c. Rank-one update bound never exceeds the smallest positive eigenvalue.
Outcome soundness_kaur() {
    oracle::Lcg rng(91);
    int violations = 0;
    for (int t = 0; t < 10000; ++t) {
        const auto n = static_cast<Eigen::Index>(2 + t % 6);
        const auto r = static_cast<Eigen::Index>(1 + (t / 6) % (n - 1));
        const Matrix b = rng.matrix(n, r);
        const Matrix q = b * b.transpose();
        const Vector u = rng.vector(n);
        const auto ev = oracle::jacobi_eigenvalues(u * u.transpose() + q);
        const double top = ev.back();
        double smallest_pos = top;
        for (double e : ev)
            if (e > 1e-10 * top) smallest_pos = std::min(smallest_pos, e);
        if (kaur_bound(u, q) > smallest_pos + 1e-9) ++violations;
    }
    return {violations == 0, std::to_string(violations) + " violations in 10000"};
}

// 2d. Norm-constrained ceiling never exceeded.
Outcome soundness_ceiling() {
    oracle::Lcg rng(5150);
    int violations = 0;
    for (int t = 0; t < 10000; ++t) {
        const auto m = static_cast<Eigen::Index>(1 + t % 6);
        const auto d = m + static_cast<Eigen::Index>((t / 6) % 10);
        const double r_u = rng.uniform(0.1, 4.0);
        Matrix u(m, d + 1);
        for (Eigen::Index j = 0; j <= d; ++j) u.col(j) = rng.in_ball(m, r_u * std::sqrt(rng.uniform()));
        if (oracle::sigma_min(assemble_V(make_input_set(u, r_u))) > sigma_ceiling(d, m, r_u) + 1e-9) ++violations;
    }
    return {violations == 0, std::to_string(violations) + " violations in 10000"};
}

// 3. Tight witnesses.
Outcome tightness() {
    Matrix u(2, 3);
    u << -1, 1, 0, -1, 0, 1;
    const InputSet set = make_input_set(u);
    const double lb = thm_lower_bound(set).bound;
    const Matrix v = assemble_V(set);
    const auto ev = oracle::jacobi_eigenvalues(v * v.transpose());
    const bool eig_ok = std::abs(ev[0] - 1) < 1e-12 && std::abs(ev[1] - 3) < 1e-12 && std::abs(ev[2] - 3) < 1e-12;
    const bool angle_ok = std::abs(lb - 1.0) < 1e-12 && std::abs(ev[0] - lb) < 1e-12;
    double worst = 0.0;
    for (Eigen::Index m = 1; m <= 6; ++m)
        for (double r_u : {0.3, 1.0, 2.5}) {
            const double s = oracle::sigma_min(assemble_V(make_input_set(simplex_inputs(m, m, r_u).inputs, r_u)));
            worst = std::max(worst, std::abs(s - sigma_ceiling(m, m, r_u)));
        }
    return {eig_ok && angle_ok && worst < 1e-9,
            "angle bound " + num(lb) + ", eig(VV^T) {" + num(ev[0]) + "," + num(ev[1]) + "," + num(ev[2]) +
                "}, simplex ceiling gap " + num(worst)};
}

// 4. Median trend of sigma_min(V)/sqrt(d) for random inputs.
std::vector<DistributionRow> mc_rows(bool normalize) {
    return monte_carlo_sigma(4, {5, 6, 7, 8, 9, 10, 15, 20, 25}, 1000, normalize, 1, 1);
}

Outcome mc_trend(const std::vector<DistributionRow>& raw, const std::vector<DistributionRow>& norm) {
    bool mono = true;
    std::string medians;
    for (const auto* rows : {&raw, &norm}) {
        for (std::size_t i = 1; i < rows->size(); ++i)
            if ((*rows)[i].q50 < (*rows)[i - 1].q50) mono = false;
        medians += (rows == &raw ? "raw " : "; normalized ") + num(rows->front().q50) + " -> " + num(rows->back().q50);
    }
    return {mono, "medians nondecreasing in d: " + medians};
}

Outcome mc_level(const std::vector<DistributionRow>& norm) {
    const double med = norm.back().q50;
    const double ceiling = sigma_ceiling(25, 4, 1.0) / 5.0;
    return {med > 0.9, "normalized median at d=25 = " + num(med) + " (needs > 0.9; unit-norm ceiling " + num(ceiling) + ")"};
}

// 5. Zero-noise recovery of a linear control-affine system.
Outcome flexible_exactness() {
    oracle::Lcg rng(8);
    const Eigen::Index n = 3, m = 2;
    const Matrix A = rng.matrix(n, n), B = rng.matrix(n, m);
    const Dictionary dict = affine_dictionary(n);
    const InputSet in = orthogonal_inputs(m, m, 1.0);
    std::vector<Vector> centers;
    std::vector<Sample> samples;
    for (int i = 0; i < 12; ++i) {
        centers.push_back(rng.vector(n));
        for (Eigen::Index j = 0; j < in.count(); ++j)
            samples.push_back({centers.back(), in.input(j), A * centers.back() + B * in.input(j)});
    }
    const FlexibleFit fit = flexible_fit(samples, centers, std::vector<double>(centers.size(), 0.0), dict,
                                         SurrogateMode::Operator, m);
    const Matrix& k0 = fit.surrogate.matrices[0];
    Matrix k0_true = Matrix::Zero(n + 1, n + 1);
    k0_true(0, 0) = 1.0;
    k0_true.bottomRightCorner(n, n) = A;
    double err_k = (k0 - k0_true).cwiseAbs().maxCoeff();
    for (Eigen::Index k = 1; k <= m; ++k) {
        const Matrix diff = fit.surrogate.matrices[static_cast<std::size_t>(k)] - k0;
        err_k = std::max(err_k, (diff.col(0).tail(n) - B.col(k - 1)).cwiseAbs().maxCoeff());
    }
    double err_p = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Vector x = rng.vector(n, -2, 2), u = rng.vector(m, -2, 2);
        const Vector z = predict(fit.surrogate, dict.lift(x), u);
        err_p = std::max(err_p, (z.tail(n) - (A * x + B * u)).cwiseAbs().maxCoeff());
    }
    return {err_k <= 1e-8 && err_p <= 1e-8, "matrix error " + num(err_k) + ", predictor error " + num(err_p) + " (tol 1e-8)"};
}

// 6. Robot benchmark relative claims.
Outcome robot_claims(const robot::ExperimentReport& rep, char part) {
    using robot::Strategy;
    auto medians = [&](Strategy s, auto field) {
        std::vector<double> v;
        for (const auto& c : rep.run(s, 3).centers) v.push_back(field(c));
        return robot::median(v);
    };
    auto sig = [](const robot::CenterResult& c) { return c.sigma_min; };
    auto err = [](const robot::CenterResult& c) { return c.fit_error; };
    switch (part) {
        case 'a': {
            double worst = 0.0;
            std::size_t excluded = 0, count = 0;
            for (Strategy s : {Strategy::Orthogonal, Strategy::Simplex}) {
                const auto& run = rep.run(s, 3);
                excluded += run.excluded_centers;
                for (const auto& c : run.centers) worst = std::max(worst, std::abs(c.sigma_min - std::sqrt(3.0))), ++count;
            }
            return {worst < 1e-9 && excluded == 0,
                    std::to_string(count) + " centers, max |sigma_min - sqrt 3| = " + num(worst) + ", excluded " + std::to_string(excluded)};
        }
        case 'b': {
            const double a = medians(Strategy::Angle, sig), r = medians(Strategy::Random, sig);
            return {a > r, "median sigma_min angle " + num(a) + " vs random " + num(r)};
        }
        case 'c': {
            const double r = medians(Strategy::Random, err);
            const double o = medians(Strategy::Orthogonal, err), s = medians(Strategy::Simplex, err), a = medians(Strategy::Angle, err);
            return {r > o && r > s && r > a,
                    "median fit error random " + num(r) + " vs orthogonal " + num(o) + ", simplex " + num(s) + ", angle " + num(a)};
        }
        default: {
            const double e3 = rep.run(Strategy::Random, 3).rollout.mean_position_error();
            const double e4 = rep.run(Strategy::Random, 4).rollout.mean_position_error();
            return {e3 > e4, "mean one-step position error random d_i+1=3 " + num(e3) + " vs d_i+1=4 " + num(e4)};
        }
    }
}

// 7. Kernel EDMD properties.
Outcome kedmd_props() {
    oracle::Lcg rng(12);
    const WendlandKernel w2(2, 1, 0.8);
    const Matrix nodes = rng.matrix(2, 40);
    const KernelSurrogate id = kedmd_fit(w2, nodes, nodes);
    double interp = 0.0;
    for (Eigen::Index i = 0; i < nodes.cols(); ++i) interp = std::max(interp, (id.predict(nodes.col(i)) - nodes.col(i)).norm());

    auto F = [](double x) { return 0.8 * x + 0.1 * std::sin(3.0 * x); };
    const WendlandKernel w1(1, 1, 1.0);
    Matrix probes(1, 401);
    for (Eigen::Index p = 0; p < 401; ++p) probes(0, p) = -1.0 + 2.0 * double(p) / 400.0;
    std::vector<double> errs;
    for (Eigen::Index count : {9, 17, 33, 65}) {
        Matrix x(1, count);
        for (Eigen::Index i = 0; i < count; ++i) x(0, i) = -1.0 + 2.0 * double(i) / double(count - 1);
        const KernelSurrogate s = kedmd_fit(w1, x, x.unaryExpr(F));
        double e = 0.0;
        for (Eigen::Index p = 0; p < probes.cols(); ++p) e = std::max(e, std::abs(s.predict(probes.col(p))[0] - F(probes(0, p))));
        errs.push_back(e);
    }
    bool mono = true;
    for (std::size_t i = 1; i < errs.size(); ++i) mono = mono && errs[i] <= errs[i - 1];

    double c_dev = 0.0;
    for (Eigen::Index d = 1; d <= 12; ++d) {
        const Matrix kx = kernel_matrix(w2, rng.matrix(2, d));
        const double brute = std::sqrt(w2.phi(0.0) * oracle::vertex_max(oracle::inverse(kx)));
        const ConstantC c = constant_c(w2, kx);
        c_dev = std::max(c_dev, c.exact ? std::abs(c.value - brute) / brute : 1.0);
    }
    std::string e_str;
    for (double e : errs) e_str += (e_str.empty() ? "" : " ") + num(e);
    return {interp <= 1e-8 && mono && c_dev <= 1e-9,
            "interpolation " + num(interp) + ", refinement errors [" + e_str + "], constant_c rel dev " + num(c_dev)};
}

// 8. Byte-identical outputs across thread counts.
std::string slurp(const fs::path& p) { return io::read_file(p); }

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / ("excite_id_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const char* configs = std::getenv("EXCITE_ID_CONFIGS");
    const std::string config = configs ? (fs::path(configs) / "robot.json").string() : std::string();
    std::vector<std::string> differing;
    std::size_t files = 0;
    for (const std::string cmd : {"robot", "montecarlo"}) {
        std::vector<fs::path> dirs;
        for (const char* threads : {"1", "8"}) {
            const fs::path dir = root / (cmd + "_" + threads);
            std::vector<std::string> args{"excite_id", "--seed", "1", "--threads", threads, "--output-dir", dir.string()};
            if (!config.empty()) args.insert(args.end(), {"--config", config});
            args.push_back(cmd);
            std::vector<const char*> argv;
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err, nullptr);
            if (code != 0) return {false, cmd + " --threads " + threads + " exited " + std::to_string(code) + ": " + err.str()};
            const fs::path stdout_file = dir / "stdout.txt";
            io::write_text(stdout_file, out.str());
            dirs.push_back(dir);
        }
        for (const auto& entry : fs::directory_iterator(dirs[0])) {
            ++files;
            const fs::path other = dirs[1] / entry.path().filename();
            if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) differing.push_back(cmd + "/" + entry.path().filename().string());
        }
    }
    fs::remove_all(root);
    std::string detail = std::to_string(files) + " files compared";
    for (const auto& d : differing) detail += ", differs: " + d;
    return {differing.empty() && files > 0, detail};
}

}  // namespace

int main() {
    auto run = [](const std::string& id, double limit, const std::function<Outcome()>& body) {
        auto [o, s] = timed(body);
        report(id, o, s, limit);
    };
    run("1 designed-input exactness", 1, designed_inputs);
    run("2a regression bound soundness", 60, soundness_regression);
    run("2b angle lower bound soundness", 60, soundness_angle);
    run("2c rank-one update bound soundness", 60, soundness_kaur);
    run("2d norm-constrained ceiling", 60, soundness_ceiling);
    run("3 tightness witnesses", 0, tightness);

    std::vector<DistributionRow> raw, norm;
    const auto [mc_outcome, mc_seconds] = timed([&] {
        raw = mc_rows(false);
        norm = mc_rows(true);
        return Outcome{};
    });
    (void)mc_outcome;
    report("4a Monte Carlo median monotonicity", mc_trend(raw, norm), mc_seconds, 30);
    report("4b normalized median above 0.9 at d=25", mc_level(norm), mc_seconds, 30);

    run("5 flexible-sampling exactness", 1, flexible_exactness);

    robot::ExperimentReport rep;
    const auto [robot_outcome, robot_seconds] = timed([&] {
        rep = robot::run_experiment(robot::ExperimentConfig{}, robot::RobotParams{}, 1);
        return Outcome{};
    });
    (void)robot_outcome;
    report("6a robot: structured designs reach sqrt(3)", robot_claims(rep, 'a'), robot_seconds, 300);
    report("6b robot: angle beats random sigma_min", robot_claims(rep, 'b'), robot_seconds, 300);
    report("6c robot: random has the largest fit error", robot_claims(rep, 'c'), robot_seconds, 300);
    report("6d robot: extra random neighbor lowers one-step error", robot_claims(rep, 'd'), robot_seconds, 300);

    run("7 kEDMD properties", 0, kedmd_props);
    run("8 determinism across thread counts", 0, determinism);

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
