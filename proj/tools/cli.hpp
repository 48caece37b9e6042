#pragma once

// Command-line front end. run() returns the process exit code:
// 0 success, 1 invalid input or configuration, 2 numerical failure.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "excite_id/affine_fit.hpp"
#include "excite_id/excitation.hpp"
#include "excite_id/io.hpp"
#include "excite_id/koopman_bilinear.hpp"
#include "excite_id/koopman_kernel.hpp"
#include "excite_id/robot_bench.hpp"

namespace excite::cli {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;
inline constexpr std::uint64_t kDefaultSeed = 1;

struct DesignOptions {
    std::string strategy = "simplex";
    long m = 2;
    long d = 2;
    double alpha = 1.0;
    double r_u = kUnbounded;
};

struct AnalyzeOptions {
    std::string input_file;
    double r_u = kUnbounded;
};

struct MonteCarloOptions {
    long m = 4;
    std::vector<long> d_list{5, 6, 7, 8, 9, 10, 15, 20, 25};
    long trials = 1000;
    bool normalize = false;
};

struct FitOptions {
    std::string dataset;
    std::string centers;  // optional CSV x1..xn,radius
    std::string dictionary = "affine";
    std::string mode = "operator";
    double r_eps = 0.0;
    double lipschitz_psi = 1.0;
};

struct KedmdOptions {
    std::string nodes;    // CSV x1..xn (and y1..yn for an autonomous fit)
    std::string dataset;  // optional: flexible-sampling data around the nodes
    double radius = 0.0;
    int k = 1;
    double rho = 1.0;
    long probes = 51;
};

struct RunConfig {
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    std::string output_dir = ".";
    DesignOptions design;
    AnalyzeOptions analyze;
    MonteCarloOptions montecarlo;
    FitOptions fit;
    KedmdOptions kedmd;
    robot::ExperimentConfig robot;
    robot::RobotParams robot_params;
};

// ---------------------------------------------------------------------------
// JSON configuration

namespace detail {
inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ValidationError("config: '" + path + "' must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
        if (!ok.contains(key)) throw ValidationError("config: unknown key '" + (path.empty() ? key : path + "." + key) + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& path) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("config: '" + (path.empty() ? std::string(key) : path + "." + key) + "' has the wrong type");
    }
}

inline void read_radius(const json& j, const char* key, double& out, const std::string& path) {
    if (!j.contains(key)) return;
    if (j.at(key).is_string() && j.at(key).get<std::string>() == "inf") {
        out = kUnbounded;
        return;
    }
    read(j, key, out, path);
}
}  // namespace detail

inline void apply_config(const json& root, RunConfig& cfg) {
    using detail::check_keys;
    using detail::read;
    check_keys(root, "", {"schema_version", "seed", "threads", "output_dir", "design", "analyze", "montecarlo", "fit",
                          "kedmd", "robot"});
    if (!root.contains("schema_version")) throw ValidationError("config: missing 'schema_version'");
    int version = 0;
    read(root, "schema_version", version, "");
    if (version != kSchemaVersion)
        throw ValidationError("config: unsupported schema_version " + std::to_string(version) + " (expected " +
                              std::to_string(kSchemaVersion) + ")");
    if (root.contains("seed")) {
        std::uint64_t s = 0;
        read(root, "seed", s, "");
        cfg.seed = s;
    }
    read(root, "threads", cfg.threads, "");
    read(root, "output_dir", cfg.output_dir, "");

    if (root.contains("design")) {
        const json& j = root["design"];
        check_keys(j, "design", {"strategy", "m", "d", "alpha", "r_u"});
        read(j, "strategy", cfg.design.strategy, "design");
        read(j, "m", cfg.design.m, "design");
        read(j, "d", cfg.design.d, "design");
        read(j, "alpha", cfg.design.alpha, "design");
        detail::read_radius(j, "r_u", cfg.design.r_u, "design");
    }
    if (root.contains("analyze")) {
        const json& j = root["analyze"];
        check_keys(j, "analyze", {"input_file", "r_u"});
        read(j, "input_file", cfg.analyze.input_file, "analyze");
        detail::read_radius(j, "r_u", cfg.analyze.r_u, "analyze");
    }
    if (root.contains("montecarlo")) {
        const json& j = root["montecarlo"];
        check_keys(j, "montecarlo", {"m", "d", "trials", "normalize"});
        read(j, "m", cfg.montecarlo.m, "montecarlo");
        read(j, "d", cfg.montecarlo.d_list, "montecarlo");
        read(j, "trials", cfg.montecarlo.trials, "montecarlo");
        read(j, "normalize", cfg.montecarlo.normalize, "montecarlo");
    }
    if (root.contains("fit")) {
        const json& j = root["fit"];
        check_keys(j, "fit", {"dataset", "centers", "dictionary", "mode", "r_eps", "lipschitz_psi"});
        read(j, "dataset", cfg.fit.dataset, "fit");
        read(j, "centers", cfg.fit.centers, "fit");
        read(j, "dictionary", cfg.fit.dictionary, "fit");
        read(j, "mode", cfg.fit.mode, "fit");
        read(j, "r_eps", cfg.fit.r_eps, "fit");
        read(j, "lipschitz_psi", cfg.fit.lipschitz_psi, "fit");
    }
    if (root.contains("kedmd")) {
        const json& j = root["kedmd"];
        check_keys(j, "kedmd", {"nodes", "dataset", "radius", "k", "rho", "probes"});
        read(j, "nodes", cfg.kedmd.nodes, "kedmd");
        read(j, "dataset", cfg.kedmd.dataset, "kedmd");
        read(j, "radius", cfg.kedmd.radius, "kedmd");
        read(j, "k", cfg.kedmd.k, "kedmd");
        read(j, "rho", cfg.kedmd.rho, "kedmd");
        read(j, "probes", cfg.kedmd.probes, "kedmd");
    }
    if (root.contains("robot")) {
        const json& j = root["robot"];
        check_keys(j, "robot", {"params", "experiment"});
        if (j.contains("params")) {
            const json& p = j["params"];
            check_keys(p, "robot.params", {"wheel_radius", "wheel_separation", "delta_t", "r_u"});
            read(p, "wheel_radius", cfg.robot_params.wheel_radius, "robot.params");
            read(p, "wheel_separation", cfg.robot_params.wheel_separation, "robot.params");
            read(p, "delta_t", cfg.robot_params.delta_t, "robot.params");
            read(p, "r_u", cfg.robot_params.r_u, "robot.params");
        }
        if (j.contains("experiment")) {
            const json& e = j["experiment"];
            const std::string path = "robot.experiment";
            check_keys(e, path, {"d", "box", "r_x", "neighbors", "extra_random_neighbors", "ecdf_neighbors", "strategies",
                                 "alpha", "lemniscate"});
            auto& c = cfg.robot;
            read(e, "d", c.d, path);
            if (e.contains("box")) {
                std::vector<double> box;
                read(e, "box", box, path);
                if (box.size() != 2) throw ValidationError("config: 'robot.experiment.box' must be [lo, hi]");
                c.box_lo = box[0];
                c.box_hi = box[1];
            }
            read(e, "r_x", c.r_x, path);
            read(e, "neighbors", c.neighbors, path);
            read(e, "extra_random_neighbors", c.extra_random_neighbors, path);
            read(e, "ecdf_neighbors", c.ecdf_neighbors, path);
            if (e.contains("strategies")) {
                std::vector<std::string> names;
                read(e, "strategies", names, path);
                c.strategies.clear();
                for (const auto& n : names) c.strategies.push_back(robot::parse_strategy(n));
            }
            read(e, "alpha", c.alpha, path);
            if (e.contains("lemniscate")) {
                const json& l = e["lemniscate"];
                check_keys(l, path + ".lemniscate", {"amplitude", "period", "duration"});
                read(l, "amplitude", c.lemniscate.amplitude, path + ".lemniscate");
                read(l, "period", c.lemniscate.period, path + ".lemniscate");
                read(l, "duration", c.lemniscate.duration, path + ".lemniscate");
            }
        }
    }
}

inline json parse_json(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(source + ": " + e.what());
    }
}

inline void load_config(const fs::path& path, RunConfig& cfg) { apply_config(parse_json(io::read_file(path), path.string()), cfg); }

/// --seed, then EXCITE_ID_SEED, then the config file, then the default.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, const char* env, std::optional<std::uint64_t> config) {
    if (flag) return *flag;
    if (env && *env) {
        const std::string s(env);
        char* end = nullptr;
        errno = 0;
        const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
        if (end != s.c_str() + s.size() || errno == ERANGE || s.front() == '-')
            throw ValidationError("EXCITE_ID_SEED must be a nonnegative integer, got '" + s + "'");
        return v;
    }
    return config.value_or(kDefaultSeed);
}

// ---------------------------------------------------------------------------
// Subcommands

struct Context {
    std::uint64_t seed = kDefaultSeed;
    unsigned threads = 1;
    fs::path output_dir;
    std::ostream* out = &std::cout;
    std::ostream* err = &std::cerr;
};

inline void print_report(std::ostream& out, const DesignReport& r) {
    out << "sigma_min " << io::fmt(r.sigma_min_V) << '\n';
    out << "sigma_upper " << io::fmt(r.sigma_upper) << '\n';
    out << "thm_lower_bound " << (r.thm_bound_defined ? io::fmt(r.thm_lower_bound) : std::string("undefined")) << '\n';
    out << "nco_residual " << io::fmt(r.nco_residual) << '\n';
}

inline std::string report_csv(const DesignReport& r) {
    io::CsvWriter w({"quantity", "value"});
    w.row({"sigma_min", io::fmt(r.sigma_min_V)});
    w.row({"sigma_upper", io::fmt(r.sigma_upper)});
    w.row({"thm_lower_bound", r.thm_bound_defined ? io::fmt(r.thm_lower_bound) : "nan"});
    w.row({"nco_residual", io::fmt(r.nco_residual)});
    for (std::size_t j = 0; j < r.per_input_norms.size(); ++j) w.row({"norm_u" + std::to_string(j), io::fmt(r.per_input_norms[j])});
    return w.str();
}

/// Inputs for `design`. Random draws are uniform in the ball of radius alpha;
/// the angle strategy replaces draw m by the negated sum of draws 0..m-1.
inline InputSet design_inputs(const DesignOptions& o, std::uint64_t seed) {
    if (o.m < 1 || o.d < 0) throw ValidationError("design: need m >= 1 and d >= 0");
    if (!(o.alpha > 0.0)) throw ValidationError("design: alpha must be positive");
    const Eigen::Index m = o.m, d = o.d;
    if (o.strategy == "orthogonal") return make_input_set(orthogonal_inputs(m, d, o.alpha).inputs, o.r_u);
    if (o.strategy == "simplex") return make_input_set(simplex_inputs(m, d, o.alpha).inputs, o.r_u);
    if (o.strategy != "random" && o.strategy != "angle")
        throw ValidationError("design: unknown strategy '" + o.strategy + "' (expected orthogonal|simplex|random|angle)");
    RandomStream rng = RandomStream::derive(seed, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(d)});
    Matrix u(m, d + 1);
    for (Eigen::Index j = 0; j <= d; ++j) u.col(j) = rng.in_ball_rejection(m, o.alpha);
    if (o.strategy == "random") return make_input_set(std::move(u), o.r_u);
    if (d < m) throw ValidationError("design: angle strategy needs d >= m");
    const InputSet head = complete_inputs(u.leftCols(m));
    u.leftCols(m + 1) = head.inputs;
    return make_input_set(std::move(u), o.r_u);
}

inline void cmd_design(const DesignOptions& o, const Context& ctx) {
    const InputSet set = design_inputs(o, ctx.seed);
    const DesignReport r = design_report(set);
    *ctx.out << "strategy " << o.strategy << "\nm " << o.m << "\nd " << o.d << '\n';
    print_report(*ctx.out, r);
    io::write_text(ctx.output_dir / "inputs.csv", io::input_set_csv(set));
    io::write_text(ctx.output_dir / "design_report.csv", report_csv(r));
}

inline void cmd_analyze(const AnalyzeOptions& o, const Context& ctx) {
    if (o.input_file.empty()) throw ValidationError("analyze: --input-file is required");
    const InputSet set = io::parse_input_set(io::read_csv(o.input_file), o.input_file, o.r_u);
    const DesignReport r = design_report(set);
    *ctx.out << "m " << set.dim() << "\nd " << set.d() << '\n';
    print_report(*ctx.out, r);
    io::write_text(ctx.output_dir / "analysis.csv", report_csv(r));
}

inline void cmd_montecarlo(const MonteCarloOptions& o, const Context& ctx) {
    if (o.m < 1 || o.trials < 1 || o.d_list.empty()) throw ValidationError("montecarlo: need m >= 1, trials >= 1 and a d list");
    std::vector<Eigen::Index> ds(o.d_list.begin(), o.d_list.end());
    const auto rows = monte_carlo_sigma(o.m, ds, static_cast<std::size_t>(o.trials), o.normalize, ctx.seed, ctx.threads);
    io::CsvWriter w({"d", "q0", "q25", "q50", "q75", "q100", "mean"});
    io::Series q25{"q25", {}, {}}, q50{"median", {}, {}}, q75{"q75", {}, {}}, q0{"min", {}, {}}, q100{"max", {}, {}};
    for (const auto& r : rows) {
        w.row({std::to_string(r.d), io::fmt(r.q0), io::fmt(r.q25), io::fmt(r.q50), io::fmt(r.q75), io::fmt(r.q100), io::fmt(r.mean)});
        for (auto* s : {&q0, &q25, &q50, &q75, &q100}) s->x.push_back(static_cast<double>(r.d));
        q0.y.push_back(r.q0);
        q25.y.push_back(r.q25);
        q50.y.push_back(r.q50);
        q75.y.push_back(r.q75);
        q100.y.push_back(r.q100);
    }
    *ctx.out << w.str();
    w.save(ctx.output_dir / "montecarlo.csv");
    io::write_text(ctx.output_dir / "montecarlo.svg",
                   io::line_plot_svg({"sigma_min(V)/sqrt(d), m = " + std::to_string(o.m), "d", "sigma_min(V)/sqrt(d)"},
                                     {q0, q25, q50, q75, q100}));
}

/// Centers as cluster means with the largest deviation as radius; the radius
/// is measured in observable space (divided by lipschitz_psi) for the generator path.
inline void centers_from_ids(const io::Dataset& data, const Dictionary& dict, SurrogateMode mode, double lipschitz_psi,
                             std::vector<Vector>& centers, std::vector<double>& radii) {
    std::vector<long> ids(data.cluster_ids);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (long id : ids) {
        Vector mean = Vector::Zero(data.samples.front().x.size());
        std::size_t count = 0;
        for (std::size_t r = 0; r < data.samples.size(); ++r)
            if (data.cluster_ids[r] == id) mean += data.samples[r].x, ++count;
        mean /= static_cast<double>(count);
        double radius = 0.0;
        for (std::size_t r = 0; r < data.samples.size(); ++r) {
            if (data.cluster_ids[r] != id) continue;
            const double dist = mode == SurrogateMode::Generator
                                    ? (dict.lift(data.samples[r].x) - dict.lift(mean)).norm() / lipschitz_psi
                                    : (data.samples[r].x - mean).norm();
            radius = std::max(radius, dist);
        }
        centers.push_back(mean);
        radii.push_back(radius);
    }
}

inline void read_centers(const std::string& path, Eigen::Index n, std::vector<Vector>& centers, std::vector<double>& radii) {
    const io::Table t = io::read_csv(path);
    const Matrix all = io::numeric(t, path);
    const std::size_t rc = t.column("radius");
    std::vector<std::size_t> xs;
    for (std::size_t c = 0; c < t.header.size(); ++c)
        if (t.header[c].size() > 1 && t.header[c][0] == 'x') xs.push_back(c);
    if (static_cast<Eigen::Index>(xs.size()) != n) throw ValidationError(path + ":1: center dimension does not match the dataset");
    for (Eigen::Index r = 0; r < all.rows(); ++r) {
        Vector x(n);
        for (Eigen::Index i = 0; i < n; ++i) x[i] = all(r, static_cast<Eigen::Index>(xs[static_cast<std::size_t>(i)]));
        centers.push_back(x);
        radii.push_back(all(r, static_cast<Eigen::Index>(rc)));
    }
}

inline void cmd_fit(const FitOptions& o, const Context& ctx) {
    if (o.dataset.empty()) throw ValidationError("fit: --dataset is required");
    if (!(o.lipschitz_psi > 0.0)) throw ValidationError("fit: lipschitz_psi must be positive");
    const io::Dataset data = io::parse_dataset(io::read_csv(o.dataset), o.dataset);
    const Eigen::Index n = data.samples.front().x.size(), m = data.samples.front().u.size();
    const Dictionary dict = make_dictionary(o.dictionary, n);
    const SurrogateMode mode = parse_mode(o.mode);
    const Eigen::Index out_dim = data.samples.front().y.size();
    if (mode == SurrogateMode::Generator && out_dim != dict.size())
        throw ValidationError("fit: generator data needs y columns of the dictionary size " + std::to_string(dict.size()));
    if (mode == SurrogateMode::Operator && out_dim != n)
        throw ValidationError("fit: operator data needs y columns of the state size " + std::to_string(n));

    std::vector<Vector> centers;
    std::vector<double> radii;
    if (o.centers.empty()) centers_from_ids(data, dict, mode, o.lipschitz_psi, centers, radii);
    else read_centers(o.centers, n, centers, radii);

    const FlexibleFit fit = flexible_fit(data.samples, centers, radii, dict, mode, m, o.r_eps, ctx.threads, o.lipschitz_psi);
    io::write_text(ctx.output_dir / "surrogate.txt", io::serialize(fit.surrogate));

    io::CsvWriter w({"center", "samples", "fitted", "sigma_min", "sigma_tilde", "bound"});
    for (std::size_t i = 0; i < centers.size(); ++i) {
        const auto& e = fit.estimates[i];
        w.row({std::to_string(i), std::to_string(fit.data.clusters[i].size()), e.fitted ? "1" : "0", io::fmt(e.sigma_min_V),
               io::fmt(e.sigma_tilde), io::fmt(e.bound_maxnorm)});
    }
    w.save(ctx.output_dir / "clusters.csv");

    *ctx.out << "mode " << to_string(mode) << "\ndictionary " << dict.id() << "\ncenters " << centers.size()
             << "\nfitted " << fit.artificial.centers_used.size() << "\nunassigned " << fit.data.unassigned << '\n';
    if (o.r_eps > 0.0) *ctx.out << "cluster_bound " << io::fmt(cluster_error_bound(o.r_eps, fit.estimates)) << '\n';
    for (std::size_t i : fit.data.undersampled) *ctx.err << "warning: center " << i << " undersampled, excluded\n";
    for (std::size_t i = 0; i < centers.size(); ++i)
        if (fit.data.retained[i] && !fit.estimates[i].fitted)
            *ctx.err << "warning: center " << i << " not fitted: " << fit.estimates[i].failure << '\n';
}

inline void cmd_kedmd(const KedmdOptions& o, const Context& ctx) {
    if (o.nodes.empty()) throw ValidationError("kedmd: --nodes is required");
    if (o.probes < 2) throw ValidationError("kedmd: probes must be >= 2");
    const io::Table t = io::read_csv(o.nodes);
    const Matrix all = io::numeric(t, o.nodes);
    std::vector<std::size_t> xs, ys;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (t.header[c].size() > 1 && t.header[c][0] == 'x') xs.push_back(c);
        if (t.header[c].size() > 1 && t.header[c][0] == 'y') ys.push_back(c);
    }
    if (xs.empty()) throw ValidationError(o.nodes + ":1: no x* columns");
    const auto n = static_cast<Eigen::Index>(xs.size());
    auto columns = [&](const std::vector<std::size_t>& cols) {
        Matrix out(static_cast<Eigen::Index>(cols.size()), all.rows());
        for (std::size_t i = 0; i < cols.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = all.col(static_cast<Eigen::Index>(cols[i])).transpose();
        return out;
    };
    const Matrix nodes = columns(xs);
    const WendlandKernel kernel(static_cast<int>(n), o.k, o.rho);

    KernelSurrogate s;
    double sigma_tilde_max = 0.0;
    if (o.dataset.empty()) {
        if (static_cast<Eigen::Index>(ys.size()) != n) throw ValidationError(o.nodes + ":1: autonomous fit needs y1..yn successor columns");
        s = kedmd_fit(kernel, nodes, columns(ys));
    } else {
        const io::Dataset data = io::parse_dataset(io::read_csv(o.dataset), o.dataset);
        if (data.samples.front().x.size() != n || data.samples.front().y.size() != n)
            throw ValidationError(o.dataset + ": state dimension does not match the nodes");
        std::vector<Vector> centers;
        for (Eigen::Index i = 0; i < nodes.cols(); ++i) centers.push_back(nodes.col(i));
        const std::vector<double> radii(centers.size(), o.radius);
        const Dictionary dict = identity_dictionary(n);
        const ClusteredDataset cl = cluster(data.samples, centers, radii, dict, SurrogateMode::Operator, data.samples.front().u.size());
        const auto est = fit_clusters(cl, 0.0, ctx.threads);
        for (std::size_t i = 0; i < est.size(); ++i) {
            if (!est[i].fitted) throw NumericalError("kedmd: node " + std::to_string(i) + " not fitted: " + est[i].failure);
            sigma_tilde_max = std::max(sigma_tilde_max, est[i].sigma_tilde);
        }
        std::vector<Matrix> comps(static_cast<std::size_t>(est.front().coefficients.cols()), Matrix(n, nodes.cols()));
        for (std::size_t k = 0; k < comps.size(); ++k)
            for (std::size_t i = 0; i < est.size(); ++i) comps[k].col(static_cast<Eigen::Index>(i)) = est[i].coefficients.col(static_cast<Eigen::Index>(k));
        s = kedmd_control_fit(kernel, nodes, comps);
    }
    io::write_text(ctx.output_dir / "kedmd_surrogate.txt", io::serialize(s));

    const Vector lo = nodes.rowwise().minCoeff(), hi = nodes.rowwise().maxCoeff();
    const double h = fill_distance(nodes, grid_probes(lo, hi, o.probes));
    const ConstantC c = constant_c(kernel, s.gram);
    const double norm_inv = 1.0 / min_eig_sym(s.gram);
    *ctx.out << "nodes " << nodes.cols() << "\nfill_distance_estimate " << io::fmt(h) << "\nconstant_c " << io::fmt(c.value)
             << (c.exact ? " exact" : " upper_bound") << "\nnorm_kx_inv " << io::fmt(norm_inv) << '\n';
    if (!o.dataset.empty()) {
        *ctx.out << "cluster_radius " << io::fmt(o.radius) << "\nsigma_tilde_max " << io::fmt(sigma_tilde_max) << '\n';
        if (!(o.radius < h / 2.0)) *ctx.err << "warning: cluster radius is not below half the fill distance estimate\n";
    }
}

inline std::string group_name(const robot::StrategyRun& r) {
    return std::string(robot::to_string(r.strategy)) + "_" + std::to_string(r.neighbors);
}

inline void write_robot_outputs(const robot::ExperimentReport& rep, const fs::path& dir) {
    const double d = static_cast<double>(rep.centers.size());
    io::CsvWriter sigma({"strategy", "neighbors", "rank", "center", "sigma_min", "sigma_tilde"});
    io::CsvWriter errors({"strategy", "neighbors", "rank", "center", "sigma_min", "fit_error", "bound"});
    std::vector<io::Series> sigma_plot, error_plot, bound_plot;
    for (const auto& run : rep.runs) {
        std::vector<robot::CenterResult> sorted = run.centers;
        std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.sigma_min < b.sigma_min; });
        io::Series sp{group_name(run), {}, {}}, ep{group_name(run) + " error", {}, {}}, bp{group_name(run) + " bound", {}, {}};
        for (std::size_t k = 0; k < sorted.size(); ++k) {
            const auto& c = sorted[k];
            const std::string s = robot::to_string(run.strategy), nb = std::to_string(run.neighbors), rk = std::to_string(k);
            sigma.row({s, nb, rk, std::to_string(c.center), io::fmt(c.sigma_min), io::fmt(c.sigma_tilde)});
            errors.row({s, nb, rk, std::to_string(c.center), io::fmt(c.sigma_min), io::fmt(c.fit_error), io::fmt(c.bound)});
            sp.x.push_back(static_cast<double>(k));
            sp.y.push_back(c.sigma_min);
            ep.x.push_back(static_cast<double>(k));
            ep.y.push_back(c.fit_error);
            bp.x.push_back(static_cast<double>(k));
            bp.y.push_back(c.bound);
        }
        sigma_plot.push_back(std::move(sp));
        error_plot.push_back(std::move(ep));
        error_plot.push_back(std::move(bp));
    }
    sigma.save(dir / "sigma_per_center.csv");
    errors.save(dir / "fit_errors.csv");

    io::CsvWriter ecdf({"strategy", "neighbors", "rank", "value", "probability"});
    std::vector<io::Series> ecdf_plot;
    for (const auto& e : rep.ecdf) {
        io::Series s{std::string(robot::to_string(e.strategy)) + "_" + std::to_string(e.neighbors), {}, {}};
        for (std::size_t k = 0; k < e.values.size(); ++k) {
            const double p = static_cast<double>(k + 1) / d;
            ecdf.row({robot::to_string(e.strategy), std::to_string(e.neighbors), std::to_string(k), io::fmt(e.values[k]), io::fmt(p)});
            s.x.push_back(e.values[k]);
            s.y.push_back(p);
        }
        if (e.strategy == robot::Strategy::Random) ecdf_plot.push_back(std::move(s));
    }
    ecdf.save(dir / "ecdf.csv");

    io::CsvWriter traj({"series", "t", "x1", "x2", "x3"});
    std::vector<io::Series> traj_plot;
    auto add_traj = [&](const std::string& name, const std::vector<Vector>& xs) {
        io::Series s{name, {}, {}};
        for (std::size_t t = 0; t < xs.size(); ++t) {
            traj.row({name, std::to_string(t), io::fmt(xs[t][0]), io::fmt(xs[t][1]), io::fmt(xs[t][2])});
            s.x.push_back(xs[t][0]);
            s.y.push_back(xs[t][1]);
        }
        traj_plot.push_back(std::move(s));
    };
    add_traj("reference", rep.reference.states);
    for (const auto& run : rep.runs) add_traj(group_name(run), run.rollout.trajectory);
    traj.save(dir / "trajectory.csv");

    io::CsvWriter onestep({"strategy", "neighbors", "t", "position_error", "orientation_error"});
    std::vector<io::Series> pos_plot, ori_plot;
    for (const auto& run : rep.runs) {
        io::Series ps{group_name(run), {}, {}}, os{group_name(run), {}, {}};
        for (std::size_t t = 0; t < run.rollout.position_errors.size(); ++t) {
            onestep.row({robot::to_string(run.strategy), std::to_string(run.neighbors), std::to_string(t),
                         io::fmt(run.rollout.position_errors[t]), io::fmt(run.rollout.orientation_errors[t])});
            ps.x.push_back(static_cast<double>(t));
            ps.y.push_back(run.rollout.position_errors[t]);
            os.x.push_back(static_cast<double>(t));
            os.y.push_back(run.rollout.orientation_errors[t]);
        }
        pos_plot.push_back(std::move(ps));
        ori_plot.push_back(std::move(os));
    }
    onestep.save(dir / "onestep_errors.csv");

    io::write_text(dir / "sigma_per_center.svg", io::line_plot_svg({"sigma_min(V_i) per center, sorted", "center rank", "sigma_min"}, sigma_plot));
    io::write_text(dir / "ecdf.svg", io::line_plot_svg({"ECDF of sigma_min/sqrt(d_i+1), random inputs", "value", "probability"}, ecdf_plot));
    io::write_text(dir / "fit_errors.svg", io::line_plot_svg({"max-norm fit error and bound", "center rank", "error", true}, error_plot));
    io::write_text(dir / "trajectory.svg", io::line_plot_svg({"open-loop trajectories", "x1 [m]", "x2 [m]", false, true}, traj_plot));
    io::write_text(dir / "onestep_position.svg", io::line_plot_svg({"one-step position error", "step", "error [m]", true}, pos_plot));
    io::write_text(dir / "onestep_orientation.svg", io::line_plot_svg({"one-step orientation error", "step", "error [rad]", true}, ori_plot));
}

inline void cmd_robot(robot::ExperimentConfig c, const robot::RobotParams& p, const Context& ctx) {
    c.seed = ctx.seed;
    const robot::ExperimentReport rep = robot::run_experiment(c, p, ctx.threads);
    write_robot_outputs(rep, ctx.output_dir);
    io::CsvWriter summary({"strategy", "neighbors", "median_sigma_min", "median_fit_error", "mean_position_error",
                           "mean_orientation_error", "excluded_centers", "constraint_violations"});
    for (const auto& run : rep.runs) {
        std::vector<double> s, e;
        for (const auto& cr : run.centers) s.push_back(cr.sigma_min), e.push_back(cr.fit_error);
        summary.row({robot::to_string(run.strategy), std::to_string(run.neighbors), io::fmt(robot::median(s)), io::fmt(robot::median(e)),
                     io::fmt(run.rollout.mean_position_error()), io::fmt(run.rollout.mean_orientation_error()),
                     std::to_string(run.excluded_centers), std::to_string(run.constraint_violations)});
    }
    *ctx.out << summary.str();
    summary.save(ctx.output_dir / "summary.csv");
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr,
               const char* seed_env = std::getenv("EXCITE_ID_SEED")) {
    CLI::App app{"Input design, certified affine regression and Koopman surrogates for control-affine systems", "excite_id"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::uint64_t> seed_flag;
    std::optional<unsigned> threads_flag;
    std::optional<std::string> output_flag, config_flag;
    app.add_option("--seed", seed_flag, "Root seed for all randomness (overrides EXCITE_ID_SEED)");
    app.add_option("--threads", threads_flag, "Worker threads; results do not depend on it");
    app.add_option("--output-dir", output_flag, "Directory for output files");
    app.add_option("--config", config_flag, "JSON configuration file")->check(CLI::ExistingFile);

    std::optional<std::string> strategy;
    std::optional<long> dm, dd;
    std::optional<double> alpha, r_u, a_ru;
    auto* design = app.add_subcommand("design", "Construct an input set and report its excitation");
    design->add_option("--strategy", strategy, "orthogonal|simplex|random|angle");
    design->add_option("--m", dm, "Input dimension");
    design->add_option("--d", dd, "Number of inputs minus one");
    design->add_option("--alpha", alpha, "Scale");
    design->add_option("--r-u", r_u, "Input norm bound");

    std::optional<std::string> input_file;
    auto* analyze = app.add_subcommand("analyze", "Report excitation quantities of an input CSV");
    analyze->add_option("--input-file", input_file, "CSV with u1..um columns, one row per input");
    analyze->add_option("--r-u", a_ru, "Input norm bound");

    std::optional<long> mc_m, trials;
    std::optional<std::vector<long>> d_list;
    bool normalize_flag = false;
    auto* mc = app.add_subcommand("montecarlo", "Distribution of sigma_min(V)/sqrt(d) for random inputs");
    mc->add_option("--m", mc_m, "Input dimension");
    mc->add_option("--d", d_list, "Comma-separated d values")->delimiter(',');
    mc->add_option("--trials", trials, "Trials per d");
    mc->add_flag("--normalize", normalize_flag, "Normalize inputs to unit norm");

    std::optional<std::string> dataset, centers, dictionary, mode;
    std::optional<double> r_eps, lpsi;
    auto* fit = app.add_subcommand("fit", "Flexible-sampling bilinear EDMD fit");
    fit->add_option("--dataset", dataset, "CSV cluster_id,x*,u*,y*");
    fit->add_option("--centers", centers, "CSV x*,radius (default: cluster means)");
    fit->add_option("--dictionary", dictionary, "identity|affine|robot");
    fit->add_option("--mode", mode, "operator|generator");
    fit->add_option("--r-eps", r_eps, "Noise radius for the reported bound");
    fit->add_option("--lipschitz-psi", lpsi, "Lipschitz constant of the dictionary (generator clustering)");

    std::optional<std::string> nodes, kdataset;
    std::optional<double> radius, rho;
    std::optional<int> kk;
    std::optional<long> probes;
    auto* kedmd = app.add_subcommand("kedmd", "Kernel EDMD with Wendland kernels");
    kedmd->add_option("--nodes", nodes, "CSV x* (and y* successors for an autonomous fit)");
    kedmd->add_option("--dataset", kdataset, "Flexible-sampling data around the nodes");
    kedmd->add_option("--radius", radius, "Cluster radius around each node");
    kedmd->add_option("--k", kk, "Wendland smoothness");
    kedmd->add_option("--rho", rho, "Support radius");
    kedmd->add_option("--probes", probes, "Probe grid points per axis for the fill distance");

    auto* robot_cmd = app.add_subcommand("robot", "Differential-drive robot benchmark");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig cfg;
        if (config_flag) load_config(*config_flag, cfg);
        Context ctx;
        ctx.out = &out;
        ctx.err = &err;
        ctx.seed = resolve_seed(seed_flag, seed_env, cfg.seed);
        ctx.threads = threads_flag.value_or(cfg.threads);
        if (ctx.threads < 1) throw ValidationError("--threads must be >= 1");
        ctx.output_dir = output_flag.value_or(cfg.output_dir);
        fs::create_directories(ctx.output_dir);

        if (*design) {
            auto o = cfg.design;
            if (strategy) o.strategy = *strategy;
            if (dm) o.m = *dm;
            if (dd) o.d = *dd;
            if (alpha) o.alpha = *alpha;
            if (r_u) o.r_u = *r_u;
            cmd_design(o, ctx);
        } else if (*analyze) {
            auto o = cfg.analyze;
            if (input_file) o.input_file = *input_file;
            if (a_ru) o.r_u = *a_ru;
            cmd_analyze(o, ctx);
        } else if (*mc) {
            auto o = cfg.montecarlo;
            if (mc_m) o.m = *mc_m;
            if (d_list) o.d_list = *d_list;
            if (trials) o.trials = *trials;
            if (normalize_flag) o.normalize = true;
            cmd_montecarlo(o, ctx);
        } else if (*fit) {
            auto o = cfg.fit;
            if (dataset) o.dataset = *dataset;
            if (centers) o.centers = *centers;
            if (dictionary) o.dictionary = *dictionary;
            if (mode) o.mode = *mode;
            if (r_eps) o.r_eps = *r_eps;
            if (lpsi) o.lipschitz_psi = *lpsi;
            cmd_fit(o, ctx);
        } else if (*kedmd) {
            auto o = cfg.kedmd;
            if (nodes) o.nodes = *nodes;
            if (kdataset) o.dataset = *kdataset;
            if (radius) o.radius = *radius;
            if (kk) o.k = *kk;
            if (rho) o.rho = *rho;
            if (probes) o.probes = *probes;
            cmd_kedmd(o, ctx);
        } else if (*robot_cmd) {
            cmd_robot(cfg.robot, cfg.robot_params, ctx);
        }
        return 0;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace excite::cli
