#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dual/errors.hpp"
#include "dual/kernel.hpp"

namespace dual {

enum class Problem { TwoSample, Independence };
enum class Hypothesis { Null, Alt };

inline std::string_view to_string(Problem p) {
    return p == Problem::TwoSample ? "two-sample" : "independence";
}
inline std::string_view to_string(Hypothesis h) { return h == Hypothesis::Null ? "null" : "alt"; }

/// n items w_i = (a_i, b_i); row i of `x` and `y` hold the two halves.
/// For two-sample data these are (x_i, y_i); for the x-half of independence
/// quadruples they are (x_i, x_{i+n}).
struct PairSample {
    MatrixXd x;
    MatrixXd y;

    Index size() const { return x.rows(); }
    Index dim() const { return x.cols(); }

    PairSample rows(std::span<const Index> idx) const {
        PairSample out{MatrixXd(static_cast<Index>(idx.size()), x.cols()),
                       MatrixXd(static_cast<Index>(idx.size()), y.cols())};
        for (std::size_t r = 0; r < idx.size(); ++r) {
            out.x.row(static_cast<Index>(r)) = x.row(idx[r]);
            out.y.row(static_cast<Index>(r)) = y.row(idx[r]);
        }
        return out;
    }
};

/// A sample W of n items. Two-sample items are pairs (x_i, y_i) held in
/// `first`. Independence items are quadruples (x_i, x_{i+n}, y_i, y_{i+n});
/// `first` holds the x-halves and `second` the y-halves.
struct Sample {
    Problem problem = Problem::TwoSample;
    PairSample first;
    PairSample second;

    Index size() const { return first.size(); }

    Sample rows(std::span<const Index> idx) const {
        Sample out{problem, first.rows(idx), {}};
        if (problem == Problem::Independence) out.second = second.rows(idx);
        return out;
    }

    TwoSamplePair pair(Index i) const {
        return {first.x.row(i).transpose(), first.y.row(i).transpose()};
    }

    IndepQuad quad(Index i) const {
        return {first.x.row(i).transpose(), first.y.row(i).transpose(), second.x.row(i).transpose(),
                second.y.row(i).transpose()};
    }
};

inline Sample make_two_sample(MatrixXd x, MatrixXd y) {
    return Sample{Problem::TwoSample, PairSample{std::move(x), std::move(y)}, {}};
}

/// Pairs a raw i.i.d. stream (x_j, y_j), j < m, into floor(m/2) quadruples
/// w_i = (x_i, x_{i+n}, y_i, y_{i+n}); an odd trailing observation is dropped.
inline Sample pair_quads(const MatrixXd& x, const MatrixXd& y) {
    detail::require(x.rows() == y.rows(), "x and y streams must have the same length");
    const Index n = x.rows() / 2;
    return Sample{Problem::Independence, PairSample{x.topRows(n), x.middleRows(n, n)},
                  PairSample{y.topRows(n), y.middleRows(n, n)}};
}

inline void validate(const PairSample& s, const char* what) {
    detail::require(s.x.rows() == s.y.rows(), std::string(what) + ": halves have different sizes");
    detail::require(s.x.cols() == s.y.cols(), std::string(what) + ": halves have different dimensions");
    detail::require(s.x.cols() >= 1, std::string(what) + ": dimension must be >= 1");
    detail::require(s.x.allFinite() && s.y.allFinite(), std::string(what) + ": non-finite coordinate");
}

inline void validate(const Sample& s, Index min_size = 2) {
    validate(s.first, s.problem == Problem::TwoSample ? "two-sample data" : "x-halves");
    if (s.problem == Problem::Independence) {
        validate(s.second, "y-halves");
        detail::require(s.second.size() == s.first.size(), "x-halves and y-halves differ in size");
    }
    detail::require(s.size() >= min_size, "sample needs at least " + std::to_string(min_size) + " items");
}

} // namespace dual
