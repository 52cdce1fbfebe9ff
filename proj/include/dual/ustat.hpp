#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dual/errors.hpp"
#include "dual/hstack.hpp"
#include "dual/rng.hpp"
#include "dual/sample.hpp"

namespace dual {

inline double pair_count(Index n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }

namespace detail {

// sum_{i<j} eps_i eps_j h_ij with eps_i in {-1, +1}. The products are exact,
// so only the summation rounds; it runs in extended precision. u_stat goes
// through the same routine with eps = 1 so the two agree bit for bit.
inline double signed_pair_sum(const MatrixXd& h, const Eigen::Ref<const VectorXd>& eps) {
    const Index n = h.rows();
    long double total = 0.0L;
    for (Index i = 0; i + 1 < n; ++i) {
        const double* col = h.col(i).data();
        long double row = 0.0L;
        for (Index j = i + 1; j < n; ++j) row += eps[j] < 0.0 ? -col[j] : col[j];
        total += eps[i] < 0.0 ? -row : row;
    }
    return static_cast<double>(total);
}

} // namespace detail

/// Second-order U-statistic: mean of h over all pairs i < j.
inline double u_stat(const MatrixXd& h) {
    detail::require(h.rows() == h.cols(), "h matrix must be square");
    detail::require(h.rows() >= 2, "U-statistic needs n >= 2");
    return detail::signed_pair_sum(h, VectorXd::Ones(h.rows())) / pair_count(h.rows());
}

struct MultiU {
    VectorXd values;
    Index n = 0;
};

inline MultiU multi_u(const HStack& stack) {
    detail::require(stack.n >= 2, "U-statistic needs n >= 2");
    MultiU u{VectorXd(stack.c()), stack.n};
    for (Index k = 0; k < stack.c(); ++k) u.values[k] = u_stat(stack.mats[k]);
    return u;
}

/// Draws a sample of the same size in which the alternative is destroyed
/// by construction.
///
/// Two-sample: all 2n observations are pooled and each new x' and y' is an
/// independent uniform draw from the pool.
/// Independence: the x-halves and y-halves are re-indexed by two
/// independent with-replacement draws, breaking the x-y coupling.
inline Sample null_resample(const Sample& w, Rng& rng) {
    detail::require(w.size() >= 1, "cannot resample an empty sample");
    const Index n = w.size();
    if (w.problem == Problem::TwoSample) {
        const Index d = w.first.dim();
        std::uniform_int_distribution<Index> pick(0, 2 * n - 1);
        auto draw_row = [&](MatrixXd& out, Index r) {
            const Index j = pick(rng);
            out.row(r) = j < n ? w.first.x.row(j) : w.first.y.row(j - n);
        };
        Sample out{Problem::TwoSample, {MatrixXd(n, d), MatrixXd(n, d)}, {}};
        for (Index r = 0; r < n; ++r) {
            draw_row(out.first.x, r);
            draw_row(out.first.y, r);
        }
        return out;
    }
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::vector<Index> ix(n), iy(n);
    for (auto& i : ix) i = pick(rng);
    for (auto& i : iy) i = pick(rng);
    return Sample{Problem::Independence, w.first.rows(ix), w.second.rows(iy)};
}

/// Ridge added to the null covariance. `relative` resolves to
/// max(scale * trace / c, floor); `fixed` uses the value as is.
struct Ridge {
    enum class Mode { Relative, Fixed };

    Mode mode = Mode::Relative;
    double value = 1e-6;
    double floor = 1e-12;

    static Ridge relative(double scale = 1e-6) { return {Mode::Relative, scale, 1e-12}; }
    static Ridge fixed(double lambda) {
        detail::require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be >= 0");
        return {Mode::Fixed, lambda, 0.0};
    }

    double resolve(const MatrixXd& sigma) const {
        if (mode == Mode::Fixed) return value;
        return std::max(value * sigma.trace() / static_cast<double>(sigma.rows()), floor);
    }

    /// d lambda / d trace(sigma) at `sigma` (0 for fixed or floored ridges).
    double trace_slope(const MatrixXd& sigma) const {
        if (mode == Mode::Fixed) return 0.0;
        const double c = static_cast<double>(sigma.rows());
        return value * sigma.trace() / c > floor ? value / c : 0.0;
    }
};

/// Null covariance of n * U: entries n^2 * binom(n,2)^-2 * sum_{i<j} h_a h_b,
/// plus a ridge lambda * I.
struct NullCov {
    MatrixXd sigma;
    double lambda = 0.0;
    Index n = 0;

    MatrixXd regularized() const {
        return sigma + lambda * MatrixXd::Identity(sigma.rows(), sigma.cols());
    }
};

/// Unregularized null covariance estimate from an h-stack built on a null
/// sample.
inline MatrixXd null_cov_matrix(const std::vector<const MatrixXd*>& mats, Index n) {
    detail::require(n >= 2, "null covariance needs n >= 2");
    const auto c = static_cast<Index>(mats.size());
    const Index pairs = n * (n - 1) / 2;
    MatrixXd flat(pairs, c);
    for (Index k = 0; k < c; ++k) {
        Index row = 0;
        const MatrixXd& h = *mats[static_cast<std::size_t>(k)];
        detail::require(h.rows() == n && h.cols() == n, "h matrix has the wrong size");
        for (Index i = 0; i + 1 < n; ++i) {
            const Index len = n - i - 1;
            flat.col(k).segment(row, len) = h.col(i).tail(len);
            row += len;
        }
    }
    const double np = pair_count(n);
    const double scale = static_cast<double>(n) * static_cast<double>(n) / (np * np);
    MatrixXd sigma(c, c);
    for (Index a = 0; a < c; ++a)
        for (Index b = a; b < c; ++b) sigma(a, b) = sigma(b, a) = scale * flat.col(a).dot(flat.col(b));
    return sigma;
}

inline MatrixXd null_cov_matrix(const HStack& stack) {
    std::vector<const MatrixXd*> mats;
    for (const auto& h : stack.mats) mats.push_back(&h);
    return null_cov_matrix(mats, stack.n);
}

inline bool is_positive_definite(const MatrixXd& m) {
    if (!m.allFinite()) return false;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.info() == Eigen::Success && es.eigenvalues().minCoeff() > 0.0;
}

inline NullCov make_null_cov(MatrixXd sigma, double lambda, Index n) {
    detail::require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be >= 0");
    NullCov cov{std::move(sigma), lambda, n};
    if (!is_positive_definite(cov.regularized()))
        throw NumericalError("null covariance is not positive definite after regularization; increase lambda");
    return cov;
}

inline NullCov estimate_null_cov(const HStack& stack_h0, const Ridge& ridge) {
    MatrixXd sigma = null_cov_matrix(stack_h0);
    const double lambda = ridge.resolve(sigma);
    return make_null_cov(std::move(sigma), lambda, stack_h0.n);
}

inline NullCov estimate_null_cov(const HStack& stack_h0, double lambda) {
    return estimate_null_cov(stack_h0, Ridge::fixed(lambda));
}

/// Inverse of the symmetric positive-definite square root L of the
/// regularized null covariance (L * L = Sigma + lambda I).
struct SqrtInv {
    MatrixXd linv;

    static SqrtInv identity(Index c) { return {MatrixXd::Identity(c, c)}; }
};

/// For a symmetric positive-definite matrix the Schur form is its spectral
/// decomposition V diag(e) V^T, so L^-1 = V diag(e^-1/2) V^T. The c x c
/// decomposition runs in extended precision, since errors in the smallest
/// eigenvalues grow with the condition number.
inline SqrtInv sqrt_inv(const MatrixXd& spd) {
    using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    detail::require(spd.rows() == spd.cols() && spd.rows() >= 1, "matrix must be square and non-empty");
    detail::require(spd.allFinite(), "matrix must be finite");
    Eigen::SelfAdjointEigenSolver<MatrixXld> es(spd.cast<long double>());
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    const auto& e = es.eigenvalues();
    if (!(e.minCoeff() > 0.0L)) throw NumericalError("matrix is not positive definite; increase lambda");
    const MatrixXld& v = es.eigenvectors();
    const MatrixXld linv = v * e.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
    return {(0.5L * (linv + linv.transpose())).cast<double>()};
}

inline SqrtInv sqrt_inv(const NullCov& cov) { return sqrt_inv(cov.regularized()); }

namespace detail {

inline double n_squared(Index n) { return static_cast<double>(n) * static_cast<double>(n); }

// n^2 * sum_i mask_i * z_i^2; shared by the aggregated and selected statistics.
inline double masked_norm(const VectorXd& z, const Eigen::VectorXi* mask, Index n) {
    double s = 0.0;
    for (Index i = 0; i < z.size(); ++i)
        if (mask == nullptr || (*mask)[i] != 0) s += z[i] * z[i];
    return n_squared(n) * s;
}

// linv * u with extended-precision accumulation; the entries of L^-1 u can
// cancel heavily and c is small.
inline VectorXd whiten_vector(const MatrixXd& linv, const Eigen::Ref<const VectorXd>& u) {
    VectorXd z(linv.rows());
    for (Index k = 0; k < linv.rows(); ++k) {
        long double acc = 0.0L;
        for (Index j = 0; j < linv.cols(); ++j) acc += static_cast<long double>(linv(k, j)) * u[j];
        z[k] = static_cast<double>(acc);
    }
    return z;
}

} // namespace detail

inline VectorXd whiten(const MultiU& u, const SqrtInv& linv) {
    detail::require(linv.linv.rows() == u.values.size() && linv.linv.cols() == u.values.size(),
                    "dimension mismatch between U vector and L^-1");
    return detail::whiten_vector(linv.linv, u.values);
}

/// T = n^2 |L^-1 u|^2.
inline double aggregated_stat(const MultiU& u, const SqrtInv& linv) {
    return detail::masked_norm(whiten(u, linv), nullptr, u.n);
}

/// Relative diversity (1 + |cor(a, b)| sqrt(var a / var b))^-1 of two series.
inline double relative_diversity(std::span<const double> a, std::span<const double> b) {
    detail::require(a.size() == b.size(), "series must have equal length");
    detail::require(a.size() >= 2, "series need at least 2 values");
    const auto n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
        sab += (a[i] - ma) * (b[i] - mb);
    }
    if (!(sbb > 0.0) || !(saa > 0.0)) throw InvalidInput("degenerate series: zero variance");
    const double cor = sab / std::sqrt(saa * sbb);
    return 1.0 / (1.0 + std::abs(cor) * std::sqrt(saa / sbb));
}

} // namespace dual
