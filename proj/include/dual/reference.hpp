#pragma once

// Brute-force reference implementations. Each one recomputes its quantity
// from the definition with plain loops and shares no code with the fast
// path beyond the data types, so the two can be compared.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "dual/kernel.hpp"
#include "dual/sample.hpp"

namespace dual::reference {

inline double kernel(const Kernel& k, const VectorXd& u, const VectorXd& v) {
    const Index d = u.size();
    if (k.family() == Family::Mahalanobis) {
        const MatrixXd m = k.factor();
        double q = 0.0;
        for (Index c = 0; c < m.cols(); ++c) {
            double proj = 0.0;
            for (Index r = 0; r < d; ++r) proj += (u[r] - v[r]) * m(r, c);
            q += proj * proj;
        }
        return std::exp(-q);
    }
    double sq = 0.0;
    for (Index r = 0; r < d; ++r) sq += (u[r] - v[r]) * (u[r] - v[r]);
    const double s = k.bandwidth();
    return k.family() == Family::Gaussian ? std::exp(-sq / (s * s)) : std::exp(-std::sqrt(sq) / s);
}

inline double h_pair(const Kernel& k, const VectorXd& x, const VectorXd& y, const VectorXd& xp,
                     const VectorXd& yp) {
    return kernel(k, x, xp) + kernel(k, y, yp) - kernel(k, x, yp) - kernel(k, y, xp);
}

/// h(w_i, w_j) for one pool entry, straight from the data.
inline double h_item(const KernelSpec& spec, const Sample& w, Index i, Index j) {
    const auto row = [](const MatrixXd& m, Index r) { return VectorXd(m.row(r).transpose()); };
    const double first = h_pair(spec.first, row(w.first.x, i), row(w.first.y, i), row(w.first.x, j),
                                row(w.first.y, j));
    if (w.problem == Problem::TwoSample) return first;
    const double second = h_pair(*spec.second, row(w.second.x, i), row(w.second.y, i), row(w.second.x, j),
                                 row(w.second.y, j));
    return 0.25 * first * second;
}

inline std::vector<MatrixXd> h_stack(const Pool& pool, const Sample& w) {
    const Index n = w.size();
    std::vector<MatrixXd> out;
    for (const auto& spec : pool) {
        MatrixXd h = MatrixXd::Zero(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j)
                if (i != j) h(i, j) = h_item(spec, w, i, j);
        out.push_back(h);
    }
    return out;
}

/// binom(n,2)^-1 sum_{i<j} eps_i eps_j h_ij.
inline double weighted_u(const MatrixXd& h, const VectorXd& eps) {
    const Index n = h.rows();
    long double s = 0.0L;
    long pairs = 0;
    for (Index j = n - 1; j > 0; --j)
        for (Index i = 0; i < j; ++i) {
            s += static_cast<long double>(eps[i] * eps[j]) * h(i, j);
            ++pairs;
        }
    return static_cast<double>(s / pairs);
}

inline double u_stat(const MatrixXd& h) { return weighted_u(h, VectorXd::Ones(h.rows())); }

inline VectorXd multi_u(const std::vector<MatrixXd>& hs, const VectorXd& eps) {
    VectorXd u(static_cast<Index>(hs.size()));
    for (std::size_t k = 0; k < hs.size(); ++k) u[static_cast<Index>(k)] = weighted_u(hs[k], eps);
    return u;
}

/// n^2 binom(n,2)^-2 sum_{i<j} h_a h_b + lambda I.
inline MatrixXd null_cov(const std::vector<MatrixXd>& hs, double lambda) {
    const auto c = static_cast<Index>(hs.size());
    const Index n = hs.front().rows();
    const double pairs = n * (n - 1) / 2.0;
    MatrixXd s = MatrixXd::Zero(c, c);
    for (Index a = 0; a < c; ++a)
        for (Index b = 0; b < c; ++b) {
            double acc = 0.0;
            for (Index i = 0; i < n; ++i)
                for (Index j = i + 1; j < n; ++j) acc += hs[a](i, j) * hs[b](i, j);
            s(a, b) = static_cast<double>(n) * n / (pairs * pairs) * acc;
        }
    for (Index a = 0; a < c; ++a) s(a, a) += lambda;
    return s;
}

/// A^-1/2 by the Denman-Beavers iteration.
inline MatrixXd inv_sqrt(const MatrixXd& a, int iterations = 100) {
    MatrixXd y = a, z = MatrixXd::Identity(a.rows(), a.cols());
    for (int it = 0; it < iterations; ++it) {
        const MatrixXd yi = y.inverse(), zi = z.inverse();
        const MatrixXd y_next = 0.5 * (y + zi);
        const MatrixXd z_next = 0.5 * (z + yi);
        const double change = (y_next - y).norm();
        y = y_next;
        z = z_next;
        if (change <= 1e-15 * y.norm()) break;
    }
    return z;
}

/// n^2 u^T A^-1 u by a direct linear solve in extended precision.
inline double aggregated_stat(const VectorXd& u, const MatrixXd& regularized, Index n) {
    using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    const VectorXld ul = u.cast<long double>();
    const VectorXld v = regularized.cast<long double>().fullPivLu().solve(ul);
    return static_cast<double>(static_cast<long double>(n) * n * ul.dot(v));
}

/// n^2 sum over aligned coordinates of (linv u)_k^2, with alignment taken
/// between `f_tr` and the signs of linv u.
inline double selected_stat(const VectorXd& u, const MatrixXd& linv, const Eigen::VectorXi& f_tr, Index n) {
    double s = 0.0;
    for (Index k = 0; k < u.size(); ++k) {
        long double acc = 0.0L;
        for (Index j = u.size() - 1; j >= 0; --j) acc += static_cast<long double>(linv(k, j)) * u[j];
        const auto z = static_cast<double>(acc);
        const int sign = z < 0.0 ? -1 : 1;
        if (sign == f_tr[k]) s += z * z;
    }
    return static_cast<double>(n) * n * s;
}

} // namespace dual::reference
