#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "dual/errors.hpp"
#include "dual/kernel.hpp"
#include "dual/sample.hpp"

namespace dual {

/// Parameter-independent geometry of a PairSample: squared and plain
/// Euclidean distances between all a-a, b-b and a-b rows. Built once per
/// sample and reused for every kernel evaluation during training.
struct PairGeometry {
    PairSample data;
    MatrixXd sq_xx, sq_yy, sq_xy; // sq_xy(i, j) = |x_i - y_j|^2
    MatrixXd d_xx, d_yy, d_xy;

    Index size() const { return data.size(); }
    Index dim() const { return data.dim(); }
};

namespace detail {

inline MatrixXd squared_distances(const MatrixXd& a, const MatrixXd& b) {
    const Index n = a.rows(), m = b.rows(), d = a.cols();
    MatrixXd out = MatrixXd::Zero(n, m);
    for (Index j = 0; j < m; ++j)
        for (Index p = 0; p < d; ++p) out.col(j).array() += (a.col(p).array() - b(j, p)).square();
    return out;
}

// exp(scale * a) entry-wise. Whole SIMD packets are exponentiated in place
// and the ragged tail goes through a zero-padded packet, so every entry uses
// the same exp implementation; equal inputs then give bit-identical outputs
// wherever they sit in the matrix.
inline MatrixXd scaled_exp(const MatrixXd& a, double scale) {
    constexpr Index pad = 16;
    const Index size = a.size();
    const Index body = size / pad * pad;
    MatrixXd out(a.rows(), a.cols());
    Eigen::Map<Eigen::ArrayXd>(out.data(), body) = (Eigen::Map<const Eigen::ArrayXd>(a.data(), body) * scale).exp();
    if (body < size) {
        Eigen::Array<double, pad, 1> tail = Eigen::Array<double, pad, 1>::Zero();
        tail.head(size - body) = Eigen::Map<const Eigen::ArrayXd>(a.data() + body, size - body) * scale;
        tail = tail.exp();
        Eigen::Map<Eigen::ArrayXd>(out.data() + body, size - body) = tail.head(size - body);
    }
    return out;
}

} // namespace detail

inline PairGeometry make_geometry(const PairSample& s) {
    PairGeometry g;
    g.data = s;
    g.sq_xx = detail::squared_distances(s.x, s.x);
    g.sq_yy = detail::squared_distances(s.y, s.y);
    g.sq_xy = detail::squared_distances(s.x, s.y);
    // Scalar sqrt: correctly rounded everywhere, so symmetry is preserved.
    g.d_xx = g.sq_xx.unaryExpr([](double v) { return std::sqrt(v); });
    g.d_yy = g.sq_yy.unaryExpr([](double v) { return std::sqrt(v); });
    g.d_xy = g.sq_xy.unaryExpr([](double v) { return std::sqrt(v); });
    return g;
}

struct SampleGeometry {
    Problem problem = Problem::TwoSample;
    PairGeometry first;
    PairGeometry second;

    Index size() const { return first.size(); }
};

inline SampleGeometry make_geometry(const Sample& s) {
    validate(s);
    SampleGeometry g;
    g.problem = s.problem;
    g.first = make_geometry(s.first);
    if (s.problem == Problem::Independence) g.second = make_geometry(s.second);
    return g;
}

/// Kernel Gram blocks of one kernel on one PairSample.
struct KernelBlocks {
    MatrixXd xx, yy, xy;
};

inline KernelBlocks kernel_blocks(const Kernel& k, const PairGeometry& g) {
    KernelBlocks b;
    switch (k.family()) {
    case Family::Gaussian: {
        const double scale = -std::exp(-2.0 * k.log_bandwidth());
        b.xx = detail::scaled_exp(g.sq_xx, scale);
        b.yy = detail::scaled_exp(g.sq_yy, scale);
        b.xy = detail::scaled_exp(g.sq_xy, scale);
        break;
    }
    case Family::Laplacian: {
        const double scale = -std::exp(-k.log_bandwidth());
        b.xx = detail::scaled_exp(g.d_xx, scale);
        b.yy = detail::scaled_exp(g.d_yy, scale);
        b.xy = detail::scaled_exp(g.d_xy, scale);
        break;
    }
    case Family::Mahalanobis: {
        detail::require(k.dim() == g.dim(), "mahalanobis kernel dimension does not match the data");
        const MatrixXd m = k.factor();
        const MatrixXd zx = g.data.x * m;
        const MatrixXd zy = g.data.y * m;
        b.xx = detail::scaled_exp(detail::squared_distances(zx, zx), -1.0);
        b.yy = detail::scaled_exp(detail::squared_distances(zy, zy), -1.0);
        b.xy = detail::scaled_exp(detail::squared_distances(zx, zy), -1.0);
        break;
    }
    }
    return b;
}

/// h_mmd matrix from Gram blocks, zero diagonal. Written so that the result
/// is exactly symmetric and exactly zero whenever x_i = y_i for all i.
inline MatrixXd mmd_matrix(const KernelBlocks& b) {
    MatrixXd h = (b.xx + b.yy) - (b.xy + b.xy.transpose());
    h.diagonal().setZero();
    return h;
}

namespace detail {

// sum_ij w_ij * d/dM_pq exp(-|M^T (u_i - v_j)|^2), as a d x d matrix.
inline MatrixXd mahalanobis_block_gradient(const MatrixXd& u, const MatrixXd& v, const MatrixXd& m,
                                           const MatrixXd& kernel, const MatrixXd& w) {
    const MatrixXd a = w.cwiseProduct(kernel);
    const VectorXd r = a.rowwise().sum();
    const VectorXd s = a.colwise().sum().transpose();
    const MatrixXd zu = u * m;
    const MatrixXd zv = v * m;
    const MatrixXd g = u.transpose() * r.asDiagonal() * zu - u.transpose() * a * zv -
                       v.transpose() * a.transpose() * zu + v.transpose() * s.asDiagonal() * zv;
    return -2.0 * g;
}

} // namespace detail

/// Gradient of sum_{i<j} w_ij h_mmd(w_i, w_j) with respect to the kernel's
/// parameters. `w` must be symmetric with a zero diagonal.
inline VectorXd mmd_weighted_gradient(const Kernel& k, const PairGeometry& g, const KernelBlocks& b,
                                      const MatrixXd& w) {
    VectorXd grad(k.num_params());
    if (k.is_isotropic()) {
        const bool gauss = k.family() == Family::Gaussian;
        const double factor = gauss ? 2.0 * std::exp(-2.0 * k.log_bandwidth()) : std::exp(-k.log_bandwidth());
        const MatrixXd& dxx = gauss ? g.sq_xx : g.d_xx;
        const MatrixXd& dyy = gauss ? g.sq_yy : g.d_yy;
        const MatrixXd& dxy = gauss ? g.sq_xy : g.d_xy;
        const double sxx = (w.array() * b.xx.array() * dxx.array()).sum();
        const double syy = (w.array() * b.yy.array() * dyy.array()).sum();
        const double sxy = (w.array() * b.xy.array() * dxy.array()).sum();
        grad[0] = factor * (0.5 * sxx + 0.5 * syy - sxy);
        return grad;
    }

    const MatrixXd m = k.factor();
    const MatrixXd& x = g.data.x;
    const MatrixXd& y = g.data.y;
    const MatrixXd dm = 0.5 * detail::mahalanobis_block_gradient(x, x, m, b.xx, w) +
                        0.5 * detail::mahalanobis_block_gradient(y, y, m, b.yy, w) -
                        detail::mahalanobis_block_gradient(x, y, m, b.xy, w);
    const Index d = m.rows();
    Index pos = 0;
    for (Index p = 0; p < d; ++p) grad[pos++] = dm(p, p) * m(p, p);
    for (Index p = 1; p < d; ++p)
        for (Index q = 0; q < p; ++q) grad[pos++] = dm(p, q);
    return grad;
}

/// Everything needed to evaluate one pool entry on one sample and to
/// differentiate through it.
struct SpecEval {
    KernelBlocks first_blocks;
    KernelBlocks second_blocks;
    MatrixXd first_h;  // independence only: h_mmd of `first` on the first PairSample
    MatrixXd second_h; // independence only
    MatrixXd h;        // core matrix used by the U-statistic
};

inline void check_compatible(const KernelSpec& spec, Problem problem) {
    if (problem == Problem::Independence)
        detail::require(spec.second.has_value(), "independence testing needs a (gamma, ell) kernel pair");
}

inline SpecEval evaluate_spec(const KernelSpec& spec, const SampleGeometry& g) {
    check_compatible(spec, g.problem);
    SpecEval e;
    e.first_blocks = kernel_blocks(spec.first, g.first);
    if (g.problem == Problem::TwoSample) {
        e.h = mmd_matrix(e.first_blocks);
        return e;
    }
    e.first_h = mmd_matrix(e.first_blocks);
    e.second_blocks = kernel_blocks(*spec.second, g.second);
    e.second_h = mmd_matrix(e.second_blocks);
    e.h = 0.25 * e.first_h.cwiseProduct(e.second_h);
    return e;
}

/// Gradient of sum_{i<j} w_ij h(w_i, w_j; spec) with respect to
/// spec.params(). `w` must be symmetric with zero diagonal.
inline VectorXd spec_weighted_gradient(const KernelSpec& spec, const SampleGeometry& g, const SpecEval& e,
                                       const MatrixXd& w) {
    if (g.problem == Problem::TwoSample) return mmd_weighted_gradient(spec.first, g.first, e.first_blocks, w);
    VectorXd grad(spec.num_params());
    const MatrixXd w_first = 0.25 * w.cwiseProduct(e.second_h);
    const MatrixXd w_second = 0.25 * w.cwiseProduct(e.first_h);
    grad.head(spec.first.num_params()) = mmd_weighted_gradient(spec.first, g.first, e.first_blocks, w_first);
    grad.tail(spec.second->num_params()) =
        mmd_weighted_gradient(*spec.second, g.second, e.second_blocks, w_second);
    return grad;
}

/// Per-kernel matrices of pairwise core values h(w_i, w_j; kappa_k),
/// symmetric with a zero diagonal.
struct HStack {
    Index n = 0;
    std::vector<MatrixXd> mats;

    Index c() const { return static_cast<Index>(mats.size()); }
};

inline HStack build_h_stack(const Pool& pool, const SampleGeometry& g) {
    detail::require(g.size() >= 2, "h-stack needs at least 2 items");
    detail::require(!pool.empty(), "kernel pool is empty");
    HStack stack;
    stack.n = g.size();
    stack.mats.reserve(pool.size());
    for (const auto& spec : pool) stack.mats.push_back(evaluate_spec(spec, g).h);
    return stack;
}

inline HStack build_h_stack(const Pool& pool, const Sample& s) {
    validate(s);
    return build_h_stack(pool, make_geometry(s));
}

} // namespace dual
