#pragma once

// Text interchange: CSV tables (header row, '.' decimal, LF endings, 17
// significant digits), a versioned textual surrogate format, and a minimal
// SVG line-plot writer.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "excite_id/errors.hpp"
#include "excite_id/koopman_bilinear.hpp"
#include "excite_id/koopman_kernel.hpp"

namespace excite::io {

/// Shortest round-trip-safe rendering; locale independent.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& cell, const std::string& where) {
    if (cell == "inf") return std::numeric_limits<double>::infinity();
    if (cell == "-inf") return -std::numeric_limits<double>::infinity();
    if (cell == "nan") return std::numeric_limits<double>::quiet_NaN();
    const char* begin = cell.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (cell.empty() || end != begin + cell.size() || errno == ERANGE)
        throw ValidationError(where + ": not a number: '" + cell + "'");
    return v;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::size_t column(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ValidationError("missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    }
};

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) { row(header); }

    CsvWriter& row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
        return *this;
    }

    [[nodiscard]] std::string str() const { return out_.str(); }

    void save(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw ValidationError("cannot write " + path.string());
        f << out_.str();
        if (!f) throw ValidationError("write failed: " + path.string());
    }

private:
    std::ostringstream out_;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

/// Parses CSV text; every data row must match the header width. `source`
/// prefixes diagnostics as source:line.
inline Table parse_csv(const std::string& text, const std::string& source) {
    Table t;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw ValidationError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                                  " fields, found " + std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) throw ValidationError(source + ": empty CSV");
    return t;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot read " + path.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

inline Table read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path), path.string()); }

/// Numeric view of all cells, row-major; diagnostics name the line.
inline Matrix numeric(const Table& t, const std::string& source) {
    Matrix out(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (std::size_t c = 0; c < t.header.size(); ++c)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                parse_double(t.rows[r][c], source + ":" + std::to_string(r + 2) + " column '" + t.header[c] + "'");
    return out;
}

// ---------------------------------------------------------------------------
// Input sets: columns u1..um, one row per input u_0..u_d.

inline std::string input_set_csv(const InputSet& set) {
    std::vector<std::string> header{"j"};
    for (Eigen::Index i = 0; i < set.dim(); ++i) header.push_back("u" + std::to_string(i + 1));
    CsvWriter w(header);
    for (Eigen::Index j = 0; j < set.count(); ++j) {
        std::vector<std::string> row{std::to_string(j)};
        for (Eigen::Index i = 0; i < set.dim(); ++i) row.push_back(fmt(set.inputs(i, j)));
        w.row(row);
    }
    return w.str();
}

inline InputSet parse_input_set(const Table& t, const std::string& source, double r_u = kUnbounded) {
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < t.header.size(); ++c)
        if (t.header[c].size() > 1 && t.header[c][0] == 'u') cols.push_back(c);
    if (cols.empty()) throw ValidationError(source + ": no u* columns");
    if (t.rows.empty()) throw ValidationError(source + ": no inputs");
    const Matrix all = numeric(t, source);
    Matrix u(static_cast<Eigen::Index>(cols.size()), all.rows());
    for (std::size_t i = 0; i < cols.size(); ++i) u.row(static_cast<Eigen::Index>(i)) = all.col(static_cast<Eigen::Index>(cols[i])).transpose();
    return make_input_set(std::move(u), r_u);
}

// ---------------------------------------------------------------------------
// Datasets: cluster_id, x1..xn, u1..um, y1..yp.

struct Dataset {
    std::vector<long> cluster_ids;
    std::vector<Sample> samples;
};

inline std::string dataset_csv(const Dataset& data) {
    if (data.samples.empty()) throw ValidationError("dataset_csv: empty dataset");
    const auto& s0 = data.samples.front();
    std::vector<std::string> header{"cluster_id"};
    for (Eigen::Index i = 0; i < s0.x.size(); ++i) header.push_back("x" + std::to_string(i + 1));
    for (Eigen::Index i = 0; i < s0.u.size(); ++i) header.push_back("u" + std::to_string(i + 1));
    for (Eigen::Index i = 0; i < s0.y.size(); ++i) header.push_back("y" + std::to_string(i + 1));
    CsvWriter w(header);
    for (std::size_t r = 0; r < data.samples.size(); ++r) {
        const auto& s = data.samples[r];
        std::vector<std::string> row{std::to_string(r < data.cluster_ids.size() ? data.cluster_ids[r] : -1)};
        for (Eigen::Index i = 0; i < s.x.size(); ++i) row.push_back(fmt(s.x[i]));
        for (Eigen::Index i = 0; i < s.u.size(); ++i) row.push_back(fmt(s.u[i]));
        for (Eigen::Index i = 0; i < s.y.size(); ++i) row.push_back(fmt(s.y[i]));
        w.row(row);
    }
    return w.str();
}

inline Dataset parse_dataset(const Table& t, const std::string& source) {
    std::vector<std::size_t> xs, us, ys;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        const auto& h = t.header[c];
        if (h == "cluster_id") continue;
        if (h.size() < 2) throw ValidationError(source + ":1: unexpected column '" + h + "'");
        if (h[0] == 'x') xs.push_back(c);
        else if (h[0] == 'u') us.push_back(c);
        else if (h[0] == 'y') ys.push_back(c);
        else throw ValidationError(source + ":1: unexpected column '" + h + "'");
    }
    if (xs.empty() || us.empty() || ys.empty()) throw ValidationError(source + ":1: need x*, u* and y* columns");
    const std::size_t id_col = t.column("cluster_id");
    const Matrix all = numeric(t, source);
    Dataset d;
    auto gather = [&](Eigen::Index r, const std::vector<std::size_t>& cols) {
        Vector v(static_cast<Eigen::Index>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i) v[static_cast<Eigen::Index>(i)] = all(r, static_cast<Eigen::Index>(cols[i]));
        return v;
    };
    for (Eigen::Index r = 0; r < all.rows(); ++r) {
        const double id = all(r, static_cast<Eigen::Index>(id_col));
        if (id != std::floor(id)) throw ValidationError(source + ":" + std::to_string(r + 2) + ": cluster_id must be an integer");
        d.cluster_ids.push_back(static_cast<long>(id));
        d.samples.push_back({gather(r, xs), gather(r, us), gather(r, ys)});
    }
    return d;
}

// ---------------------------------------------------------------------------
// Surrogates. Line-oriented, whitespace separated:
//   excite-surrogate 1
//   type bilinear|kernel
//   ...key value lines...
//   matrix <rows> <cols>   followed by <rows> lines of numbers

inline constexpr int kSurrogateFormatVersion = 1;

namespace detail {
inline void write_matrix(std::ostream& out, const Matrix& a) {
    out << "matrix " << a.rows() << ' ' << a.cols() << '\n';
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.cols(); ++c) out << (c ? " " : "") << fmt(a(r, c));
        out << '\n';
    }
}

class Reader {
public:
    Reader(const std::string& text, std::string source) : in_(text), source_(std::move(source)) {}

    std::vector<std::string> line() {
        std::string s;
        while (std::getline(in_, s)) {
            ++lineno_;
            std::istringstream ls(s);
            std::vector<std::string> tok;
            for (std::string t; ls >> t;) tok.push_back(t);
            if (!tok.empty()) return tok;
        }
        fail("unexpected end of file");
    }

    std::vector<std::string> expect(const std::string& key, std::size_t values) {
        auto tok = line();
        if (tok.front() != key || tok.size() != values + 1)
            fail("expected '" + key + "' with " + std::to_string(values) + " value(s)");
        return tok;
    }

    double number(const std::string& s) { return parse_double(s, where()); }

    long integer(const std::string& s) {
        const double v = number(s);
        if (v != std::floor(v) || v < 0) fail("expected a nonnegative integer, found '" + s + "'");
        return static_cast<long>(v);
    }

    Matrix matrix() {
        const auto head = expect("matrix", 2);
        const long rows = integer(head[1]), cols = integer(head[2]);
        Matrix a(rows, cols);
        for (long r = 0; r < rows; ++r) {
            const auto tok = line();
            if (static_cast<long>(tok.size()) != cols) fail("matrix row has wrong width");
            for (long c = 0; c < cols; ++c) a(r, c) = number(tok[static_cast<std::size_t>(c)]);
        }
        return a;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ValidationError(where() + ": " + msg); }

private:
    [[nodiscard]] std::string where() const { return source_ + ":" + std::to_string(lineno_); }

    std::istringstream in_;
    std::string source_;
    std::size_t lineno_ = 0;
};

inline void read_preamble(Reader& r, const std::string& type) {
    const auto magic = r.expect("excite-surrogate", 1);
    if (r.integer(magic[1]) != kSurrogateFormatVersion) r.fail("unsupported surrogate format version " + magic[1]);
    const auto t = r.expect("type", 1);
    if (t[1] != type) r.fail("expected a " + type + " surrogate, found '" + t[1] + "'");
}
}  // namespace detail

inline std::string serialize(const BilinearSurrogate& s) {
    std::ostringstream out;
    out << "excite-surrogate " << kSurrogateFormatVersion << '\n';
    out << "type bilinear\n";
    out << "mode " << to_string(s.mode) << '\n';
    out << "dictionary " << (s.dictionary_id.empty() ? "custom" : s.dictionary_id) << '\n';
    out << "M " << s.lifted_dim() << '\n';
    out << "m " << s.input_dim() << '\n';
    out << "names";
    for (Eigen::Index p = 0; p < s.lifted_dim(); ++p) {
        const auto idx = static_cast<std::size_t>(p);
        out << ' ' << (idx < s.dictionary_names.size() ? s.dictionary_names[idx] : "psi" + std::to_string(p + 1));
    }
    out << '\n';
    for (const auto& k : s.matrices) detail::write_matrix(out, k);
    return out.str();
}

inline BilinearSurrogate deserialize_bilinear(const std::string& text, const std::string& source) {
    detail::Reader r(text, source);
    detail::read_preamble(r, "bilinear");
    BilinearSurrogate s;
    s.mode = parse_mode(r.expect("mode", 1)[1]);
    s.dictionary_id = r.expect("dictionary", 1)[1];
    const long M = r.integer(r.expect("M", 1)[1]);
    const long m = r.integer(r.expect("m", 1)[1]);
    auto names = r.expect("names", static_cast<std::size_t>(M));
    s.dictionary_names.assign(names.begin() + 1, names.end());
    for (long k = 0; k <= m; ++k) {
        Matrix a = r.matrix();
        if (a.rows() != M || a.cols() != M) r.fail("matrix must be M x M");
        s.matrices.push_back(std::move(a));
    }
    return s;
}

inline std::string serialize(const KernelSurrogate& s) {
    std::ostringstream out;
    out << "excite-surrogate " << kSurrogateFormatVersion << '\n';
    out << "type kernel\n";
    out << "n " << s.kernel.n() << '\n';
    out << "k " << s.kernel.k() << '\n';
    out << "rho " << fmt(s.kernel.support()) << '\n';
    out << "nodes " << s.node_count() << '\n';
    out << "m " << s.input_dim() << '\n';
    detail::write_matrix(out, s.nodes);
    for (const auto& k : s.k_hat) detail::write_matrix(out, k);
    return out.str();
}

inline KernelSurrogate deserialize_kernel(const std::string& text, const std::string& source) {
    detail::Reader r(text, source);
    detail::read_preamble(r, "kernel");
    const long n = r.integer(r.expect("n", 1)[1]);
    const long k = r.integer(r.expect("k", 1)[1]);
    const double rho = r.number(r.expect("rho", 1)[1]);
    const long d = r.integer(r.expect("nodes", 1)[1]);
    const long m = r.integer(r.expect("m", 1)[1]);
    KernelSurrogate s;
    s.kernel = WendlandKernel(static_cast<int>(n), static_cast<int>(k), rho);
    s.nodes = r.matrix();
    if (s.nodes.rows() != n || s.nodes.cols() != d) r.fail("node matrix must be n x nodes");
    for (long i = 0; i <= m; ++i) {
        Matrix a = r.matrix();
        if (a.rows() != d || a.cols() != d) r.fail("coefficient matrix must be nodes x nodes");
        s.k_hat.push_back(std::move(a));
    }
    s.gram = kernel_matrix(s.kernel, s.nodes);
    s.psi_at_nodes = s.nodes.transpose();
    return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + path.string());
    f << text;
    if (!f) throw ValidationError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// SVG line plots.

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
    bool equal_axes = false;
};

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

/// Polylines with a frame, min/max tick labels and a legend.
inline std::string line_plot_svg(const PlotSpec& spec, const std::vector<Series>& series) {
    constexpr double W = 640, H = 420, L = 70, R = 160, T = 40, B = 50;
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    auto ty = [&](double v) { return spec.log_y ? std::log10(std::max(v, 1e-300)) : v; };

    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (spec.log_y && s.y[i] <= 0)) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    double pw = W - L - R, ph = H - T - B;
    if (spec.equal_axes) {
        const double scale = std::min(pw / (x1 - x0), ph / (y1 - y0));
        pw = scale * (x1 - x0);
        ph = scale * (y1 - y0);
    }
    auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return T + ph - (ty(v) - y0) / (y1 - y0) * ph; };
    auto tick = [&](double v) { return spec.log_y ? "1e" + fmt(std::round(v * 100) / 100) : fmt(std::round(v * 1e4) / 1e4); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << svg_escape(spec.title) << "</text>\n";
    o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"black\"/>\n";
    o << "<text x=\"" << L + pw / 2 << "\" y=\"" << T + ph + 38 << "\" text-anchor=\"middle\">" << svg_escape(spec.x_label) << "</text>\n";
    o << "<text x=\"16\" y=\"" << T + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << T + ph / 2 << ")\">"
      << svg_escape(spec.y_label) << "</text>\n";
    o << "<text x=\"" << L << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"start\">" << tick(x0) << "</text>\n";
    o << "<text x=\"" << L + pw << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"end\">" << tick(x1) << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << T + ph << "\" text-anchor=\"end\">" << tick(y0) << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << T + 10 << "\" text-anchor=\"end\">" << tick(y1) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = palette[k % std::size(palette)];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        bool first = true;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (spec.log_y && s.y[i] <= 0)) continue;
            char buf[64];
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", first ? "" : " ", px(s.x[i]), py(s.y[i]));
            o << buf;
            first = false;
        }
        o << "\"/>\n";
        const double ly = T + 14 + 18 * static_cast<double>(k);
        o << "<line x1=\"" << L + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << L + pw + 32 << "\" y2=\"" << ly - 4
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << L + pw + 38 << "\" y=\"" << ly << "\">" << svg_escape(s.label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace excite::io
