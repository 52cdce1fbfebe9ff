#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dual/errors.hpp"
#include "dual/rng.hpp"
#include "dual/sample.hpp"

namespace dual {

struct DatasetSpec {
    Problem problem = Problem::TwoSample;
    Hypothesis hypothesis = Hypothesis::Alt;
    Index n = 100; // items per split
    int d = 2;
    double rho = 0.5;   // blob: per-mode correlation magnitude
    double a = 0.5;     // independence: perturbation strength
    double noise = 1.0; // independence: noise scale
    int k = -1;         // independence: perturbed dimensions, -1 = min(3, d)
    std::uint64_t seed = 0;

    int perturbed_dims() const { return k < 0 ? std::min(3, d) : k; }
};

inline void validate(const DatasetSpec& s) {
    detail::require(s.n >= 2, "n must be >= 2 items per split");
    detail::require(s.d >= 1, "dimension must be >= 1");
    if (s.problem == Problem::TwoSample) {
        detail::require(s.d == 2, "blob data is two-dimensional (d = 2)");
        detail::require(std::abs(s.rho) < 1.0, "blob correlation must satisfy |rho| < 1");
    } else {
        detail::require(s.k >= -1 && s.perturbed_dims() <= s.d, "k must be -1 or in [0, d]");
        detail::require(std::isfinite(s.a), "a must be finite");
        detail::require(s.noise >= 0.0 && std::isfinite(s.noise), "noise must be >= 0");
    }
}

namespace detail {

inline MatrixXd standard_normal(Index rows, Index cols, Rng& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    MatrixXd out(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) out(i, j) = z(rng);
    return out;
}

// m draws from the 3x3 blob mixture. rho = 0 gives identity covariances.
inline MatrixXd blob_points(Index m, double rho, Rng& rng) {
    std::uniform_int_distribution<int> mode(0, 2);
    std::normal_distribution<double> z(0.0, 1.0);
    MatrixXd out(m, 2);
    for (Index r = 0; r < m; ++r) {
        const int i = mode(rng);
        const int j = mode(rng);
        const double c = ((i + j) % 2 == 0 ? 1.0 : -1.0) * rho;
        const double z1 = z(rng), z2 = z(rng);
        out(r, 0) = 5.0 * i + z1;
        out(r, 1) = 5.0 * j + c * z1 + std::sqrt(1.0 - c * c) * z2;
    }
    return out;
}

} // namespace detail

/// 2n two-sample pairs. x follows the isotropic 3x3 blob mixture; y uses the
/// same centers with per-mode correlation rho * (-1)^(i+j). The null draws y
/// through the same path with rho = 0.
inline Sample gen_blob(const DatasetSpec& spec) {
    validate(spec);
    Rng rng = make_rng(spec.seed);
    const Index m = 2 * spec.n;
    const double rho = spec.hypothesis == Hypothesis::Null ? 0.0 : spec.rho;
    MatrixXd x = detail::blob_points(m, 0.0, rng);
    MatrixXd y = detail::blob_points(m, rho, rng);
    return make_two_sample(std::move(x), std::move(y));
}

struct IndepData {
    MatrixXd x; // raw stream, m rows
    MatrixXd y;
    Sample quads;
};

/// m = 4n raw observations: x standard normal; y_j = a x_j + noise * e_j on
/// the first k coordinates and independent standard normal elsewhere. The
/// null uses a = 0, noise = 1 on the same path. Quadruples come from
/// pair_quads, giving 2n items.
inline IndepData gen_indep(const DatasetSpec& spec) {
    validate(spec);
    Rng rng = make_rng(spec.seed);
    const Index m = 4 * spec.n;
    const bool alt = spec.hypothesis == Hypothesis::Alt;
    const double a = alt ? spec.a : 0.0;
    const double noise = alt ? spec.noise : 1.0;
    const int k = spec.perturbed_dims();
    IndepData out;
    out.x = detail::standard_normal(m, spec.d, rng);
    out.y = detail::standard_normal(m, spec.d, rng);
    out.y.leftCols(k) = a * out.x.leftCols(k) + noise * out.y.leftCols(k);
    out.quads = pair_quads(out.x, out.y);
    return out;
}

/// 2n items for either problem.
inline Sample generate(const DatasetSpec& spec) {
    return spec.problem == Problem::TwoSample ? gen_blob(spec) : gen_indep(spec).quads;
}

/// Seeded random halving into disjoint training and testing splits.
inline std::pair<Sample, Sample> split_train_test(const Sample& w, std::uint64_t seed) {
    validate(w);
    const Index m = w.size();
    detail::require(m >= 4, "split needs at least 4 items");
    detail::require(m % 2 == 0, "split needs an even number of items");
    std::vector<Index> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), Index{0});
    Rng rng = make_rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto half = static_cast<std::ptrdiff_t>(m / 2);
    const std::vector<Index> tr(perm.begin(), perm.begin() + half), te(perm.begin() + half, perm.end());
    return {w.rows(tr), w.rows(te)};
}

// ---------------------------------------------------------------------------
// Delimited text export / import.
//
// Two-sample: one row per pair, columns x0..x{d-1}, y0..y{d-1}.
// Independence: one row per raw observation of the stream that pair_quads
// consumes, columns x0.., y0...
// ---------------------------------------------------------------------------

namespace detail {

inline void write_rows(std::ostream& os, const MatrixXd& a, const MatrixXd& b) {
    os.precision(17);
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) os << (j ? "," : "") << a(i, j);
        for (Index j = 0; j < b.cols(); ++j) os << ',' << b(i, j);
        os << '\n';
    }
}

inline void write_header(std::ostream& os, Index dx, Index dy) {
    for (Index j = 0; j < dx; ++j) os << (j ? "," : "") << 'x' << j;
    for (Index j = 0; j < dy; ++j) os << ",y" << j;
    os << '\n';
}

} // namespace detail

inline void write_csv(std::ostream& os, const Sample& w) {
    validate(w, 1);
    if (w.problem == Problem::TwoSample) {
        detail::write_header(os, w.first.dim(), w.first.dim());
        detail::write_rows(os, w.first.x, w.first.y);
        return;
    }
    const Index n = w.size();
    MatrixXd x(2 * n, w.first.dim()), y(2 * n, w.second.dim());
    x << w.first.x, w.first.y;
    y << w.second.x, w.second.y;
    detail::write_header(os, x.cols(), y.cols());
    detail::write_rows(os, x, y);
}

/// Reads the format written by write_csv. Columns are matched by their
/// x/y prefix; blank lines are skipped.
inline Sample read_csv(std::istream& is, Problem problem) {
    std::string line;
    detail::require(static_cast<bool>(std::getline(is, line)), "csv input is empty");
    std::vector<char> kind;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cell.erase(std::remove_if(cell.begin(), cell.end(), ::isspace), cell.end());
            detail::require(!cell.empty() && (cell[0] == 'x' || cell[0] == 'y'),
                            "csv header: column '" + cell + "' must start with x or y");
            kind.push_back(cell[0]);
        }
    }
    const auto dx = static_cast<Index>(std::count(kind.begin(), kind.end(), 'x'));
    const auto dy = static_cast<Index>(kind.size()) - dx;
    detail::require(dx >= 1 && dy >= 1, "csv header needs x and y columns");
    std::vector<std::vector<double>> xs, ys;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> xr, yr;
        std::size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            detail::require(col < kind.size(), "csv line " + std::to_string(lineno) + ": too many columns");
            double v = 0.0;
            try {
                std::size_t used = 0;
                v = std::stod(cell, &used);
                detail::require(cell.find_first_not_of(" \t\r", used) == std::string::npos, "trailing text");
            } catch (const std::exception&) {
                throw InvalidInput("csv line " + std::to_string(lineno) + ": bad number '" + cell + "'");
            }
            (kind[col] == 'x' ? xr : yr).push_back(v);
            ++col;
        }
        detail::require(col == kind.size(), "csv line " + std::to_string(lineno) + ": too few columns");
        xs.push_back(std::move(xr));
        ys.push_back(std::move(yr));
    }
    const auto m = static_cast<Index>(xs.size());
    MatrixXd x(m, dx), y(m, dy);
    for (Index i = 0; i < m; ++i) {
        x.row(i) = Eigen::Map<const Eigen::RowVectorXd>(xs[i].data(), dx);
        y.row(i) = Eigen::Map<const Eigen::RowVectorXd>(ys[i].data(), dy);
    }
    if (problem == Problem::TwoSample) {
        detail::require(dx == dy, "two-sample csv needs equal numbers of x and y columns");
        return make_two_sample(std::move(x), std::move(y));
    }
    return pair_quads(x, y);
}

inline void write_csv_file(const std::string& path, const Sample& w) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_csv(os, w);
    if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

inline Sample read_csv_file(const std::string& path, Problem problem) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open '" + path + "' for reading");
    return read_csv(is, problem);
}

} // namespace dual
