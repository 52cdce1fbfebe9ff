#pragma once

#include <Eigen/Dense>

#include "dual/errors.hpp"
#include "dual/ustat.hpp"

namespace dual {

/// Entries in {-1, +1}; sgn(0) = +1.
struct SignVector {
    Eigen::VectorXi signs;

    Index size() const { return signs.size(); }
    bool operator==(const SignVector&) const = default;
};

/// Entries in {0, 1}; 1 where training and testing signs agree.
struct AlignMask {
    Eigen::VectorXi mask;

    static AlignMask all_ones(Index c) { return {Eigen::VectorXi::Ones(c)}; }
    Index size() const { return mask.size(); }
    Index count() const { return mask.sum(); }
    bool operator==(const AlignMask&) const = default;
};

inline SignVector signum(const Eigen::Ref<const VectorXd>& v) {
    detail::require(v.allFinite(), "signum input must be finite");
    SignVector s{Eigen::VectorXi(v.size())};
    for (Index i = 0; i < v.size(); ++i) s.signs[i] = v[i] < 0.0 ? -1 : 1;
    return s;
}

inline AlignMask alignment(const SignVector& f_tr, const SignVector& f_te) {
    detail::require(f_tr.size() == f_te.size(), "sign vectors have different lengths");
    AlignMask m{Eigen::VectorXi(f_tr.size())};
    for (Index i = 0; i < f_tr.size(); ++i) m.mask[i] = f_tr.signs[i] == f_te.signs[i] ? 1 : 0;
    return m;
}

/// T = n^2 |mask (.) L^-1 u|^2.
inline double selected_stat(const MultiU& u, const SqrtInv& linv, const AlignMask& mask) {
    detail::require(mask.size() == u.values.size(), "mask length does not match the number of kernels");
    return detail::masked_norm(whiten(u, linv), &mask.mask, u.n);
}

} // namespace dual
