#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dual/errors.hpp"

namespace dual {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Family { Gaussian, Laplacian, Mahalanobis };

inline std::string_view to_string(Family f) {
    switch (f) {
    case Family::Gaussian: return "gaussian";
    case Family::Laplacian: return "laplacian";
    case Family::Mahalanobis: return "mahalanobis";
    }
    return "unknown";
}

inline Family parse_family(std::string_view name) {
    if (name == "gaussian" || name == "g") return Family::Gaussian;
    if (name == "laplacian" || name == "l") return Family::Laplacian;
    if (name == "mahalanobis" || name == "m") return Family::Mahalanobis;
    throw InvalidInput("unknown kernel family '" + std::string(name) + "'");
}

namespace detail {

inline bool all_finite(const Eigen::Ref<const VectorXd>& v) { return v.allFinite(); }

} // namespace detail

/// A bounded positive-definite kernel with trainable parameters.
///
/// Gaussian    k(u,v) = exp(-|u-v|^2 / s^2)
/// Laplacian   k(u,v) = exp(-|u-v| / s)
/// Mahalanobis k(u,v) = exp(-(u-v)^T M M^T (u-v))
///
/// Gaussian and Laplacian store log(s). Mahalanobis stores a lower-triangular
/// factor M: the first d parameters are log(M_pp), followed by the strictly
/// lower entries M_pq (p > q) in row-major order. Both parameterizations keep
/// the kernel valid for any real parameter vector.
class Kernel {
public:
    static Kernel gaussian(double bandwidth) { return isotropic(Family::Gaussian, bandwidth); }
    static Kernel laplacian(double bandwidth) { return isotropic(Family::Laplacian, bandwidth); }

    static Kernel mahalanobis(const MatrixXd& factor) {
        detail::require(factor.rows() == factor.cols() && factor.rows() >= 1,
                        "mahalanobis factor must be a non-empty square matrix");
        const Index d = factor.rows();
        Kernel k(Family::Mahalanobis, static_cast<int>(d), VectorXd(d * (d + 1) / 2));
        Index pos = 0;
        for (Index p = 0; p < d; ++p) {
            detail::require(factor(p, p) > 0.0 && std::isfinite(factor(p, p)),
                            "mahalanobis factor needs a strictly positive diagonal");
            k.params_[pos++] = std::log(factor(p, p));
        }
        for (Index p = 1; p < d; ++p)
            for (Index q = 0; q < p; ++q) k.params_[pos++] = factor(p, q);
        detail::require(k.params_.allFinite(), "mahalanobis factor must be finite");
        return k;
    }

    /// Mahalanobis kernel whose precision is I / bandwidth^2, i.e. equal to
    /// the Gaussian kernel of the same bandwidth.
    static Kernel isotropic_mahalanobis(int dim, double bandwidth) {
        detail::require(dim >= 1, "dimension must be >= 1");
        detail::require(bandwidth > 0.0 && std::isfinite(bandwidth), "bandwidth must be positive");
        return mahalanobis(MatrixXd::Identity(dim, dim) / bandwidth);
    }

    static Kernel of_family(Family f, int dim, double bandwidth) {
        return f == Family::Mahalanobis ? isotropic_mahalanobis(dim, bandwidth) : isotropic(f, bandwidth);
    }

    Family family() const { return family_; }
    bool is_isotropic() const { return family_ != Family::Mahalanobis; }

    /// Input dimension the kernel is tied to; 0 means any dimension.
    int dim() const { return dim_; }

    double log_bandwidth() const { return params_[0]; }
    double bandwidth() const { return std::exp(params_[0]); }

    MatrixXd factor() const {
        const Index d = dim_;
        MatrixXd m = MatrixXd::Zero(d, d);
        Index pos = 0;
        for (Index p = 0; p < d; ++p) m(p, p) = std::exp(params_[pos++]);
        for (Index p = 1; p < d; ++p)
            for (Index q = 0; q < p; ++q) m(p, q) = params_[pos++];
        return m;
    }

    MatrixXd precision() const {
        const MatrixXd m = factor();
        return m * m.transpose();
    }

    const VectorXd& params() const { return params_; }
    Index num_params() const { return params_.size(); }

    void set_params(const Eigen::Ref<const VectorXd>& p) {
        detail::require(p.size() == params_.size(), "parameter vector has wrong length");
        detail::require(p.allFinite(), "kernel parameters must be finite");
        params_ = p;
    }

    /// Kernel value as a function of the squared Euclidean distance
    /// (isotropic families only).
    double from_squared_distance(double sq) const {
        if (family_ == Family::Gaussian) return std::exp(-sq * std::exp(-2.0 * params_[0]));
        return std::exp(-std::sqrt(sq) * std::exp(-params_[0]));
    }

    double operator()(const Eigen::Ref<const VectorXd>& u, const Eigen::Ref<const VectorXd>& v) const {
        detail::require(u.size() == v.size(), "kernel arguments have different dimensions");
        detail::require(u.size() >= 1, "kernel arguments must be non-empty");
        detail::require(u.allFinite() && v.allFinite(), "kernel arguments must be finite");
        if (family_ == Family::Mahalanobis) {
            detail::require(u.size() == dim_, "argument dimension does not match the mahalanobis factor");
            const VectorXd z = factor().transpose() * (u - v);
            return std::exp(-z.squaredNorm());
        }
        return from_squared_distance((u - v).squaredNorm());
    }

private:
    Kernel(Family f, int dim, VectorXd params) : family_(f), dim_(dim), params_(std::move(params)) {}

    static Kernel isotropic(Family f, double bandwidth) {
        detail::require(bandwidth > 0.0 && std::isfinite(bandwidth), "bandwidth must be positive and finite");
        VectorXd p(1);
        p[0] = std::log(bandwidth);
        return Kernel(f, 0, p);
    }

    Family family_;
    int dim_;
    VectorXd params_;
};

/// One entry of the kernel pool. For two-sample testing only `first` is
/// used. For independence testing `first` acts on the x-parts (gamma) and
/// `second` on the y-parts (ell); the pool entry is their product kernel.
struct KernelSpec {
    Kernel first;
    std::optional<Kernel> second;

    Index num_params() const { return first.num_params() + (second ? second->num_params() : 0); }

    VectorXd params() const {
        VectorXd p(num_params());
        p.head(first.num_params()) = first.params();
        if (second) p.tail(second->num_params()) = second->params();
        return p;
    }

    void set_params(const Eigen::Ref<const VectorXd>& p) {
        detail::require(p.size() == num_params(), "parameter vector has wrong length");
        first.set_params(p.head(first.num_params()));
        if (second) second->set_params(p.tail(second->num_params()));
    }
};

using Pool = std::vector<KernelSpec>;

inline Index pool_num_params(const Pool& pool) {
    Index total = 0;
    for (const auto& k : pool) total += k.num_params();
    return total;
}

inline VectorXd pack_params(const Pool& pool) {
    VectorXd p(pool_num_params(pool));
    Index pos = 0;
    for (const auto& k : pool) {
        p.segment(pos, k.num_params()) = k.params();
        pos += k.num_params();
    }
    return p;
}

inline void unpack_params(Pool& pool, const Eigen::Ref<const VectorXd>& p) {
    detail::require(p.size() == pool_num_params(pool), "parameter vector has wrong length");
    Index pos = 0;
    for (auto& k : pool) {
        k.set_params(p.segment(pos, k.num_params()));
        pos += k.num_params();
    }
}

struct TwoSamplePair {
    VectorXd x;
    VectorXd y;
};

struct IndepQuad {
    VectorXd x1, x2;
    VectorXd y1, y2;
};

inline double eval_kernel(const Kernel& k, const Eigen::Ref<const VectorXd>& u,
                          const Eigen::Ref<const VectorXd>& v) {
    return k(u, v);
}

/// MMD core: k(x,x') + k(y,y') - k(x,y') - k(y,x').
inline double h_mmd(const Kernel& k, const TwoSamplePair& w, const TwoSamplePair& wp) {
    detail::require(w.x.size() == w.y.size() && wp.x.size() == wp.y.size() && w.x.size() == wp.x.size(),
                    "two-sample pairs have inconsistent dimensions");
    return (k(w.x, wp.x) + k(w.y, wp.y)) - (k(w.x, wp.y) + k(w.y, wp.x));
}

/// HSIC core on quadruples: 1/4 * h_mmd(gamma; x-halves) * h_mmd(ell; y-halves).
inline double h_hsic(const Kernel& gamma, const Kernel& ell, const IndepQuad& w, const IndepQuad& wp) {
    const double hx = h_mmd(gamma, {w.x1, w.x2}, {wp.x1, wp.x2});
    const double hy = h_mmd(ell, {w.y1, w.y2}, {wp.y1, wp.y2});
    return 0.25 * hx * hy;
}

} // namespace dual
