#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dual/errors.hpp"
#include "dual/hstack.hpp"
#include "dual/kernel.hpp"
#include "dual/rng.hpp"
#include "dual/sample.hpp"
#include "dual/selection.hpp"
#include "dual/ustat.hpp"

namespace dual {

struct AdamSettings {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    int c = 6;
    std::vector<Family> families{Family::Gaussian, Family::Mahalanobis};
    int epochs = 200;
    double learning_rate = 5e-4;
    Ridge ridge = Ridge::relative();
    std::uint64_t resample_seed = 0;
    AdamSettings adam;
    bool use_diversity = true; // false: identity covariance in the objective
    double quantile_low = 0.05;
    double quantile_high = 0.95;
};

inline void validate(const TrainConfig& cfg) {
    detail::require(cfg.c >= 1, "c must be >= 1");
    detail::require(cfg.epochs >= 0, "epochs must be >= 0");
    detail::require(cfg.learning_rate > 0.0 && std::isfinite(cfg.learning_rate), "learning rate must be > 0");
    detail::require(!cfg.families.empty(), "at least one kernel family is required");
    detail::require(0.0 <= cfg.quantile_low && cfg.quantile_low <= cfg.quantile_high && cfg.quantile_high <= 1.0,
                    "bandwidth quantiles must satisfy 0 <= low <= high <= 1");
}

/// Quantile with linear interpolation between order statistics
/// (position q * (m - 1) in the sorted values).
inline double quantile_linear(std::vector<double> values, double q) {
    detail::require(!values.empty(), "quantile of an empty set");
    detail::require(q >= 0.0 && q <= 1.0, "quantile level must be in [0,1]");
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double vlo = values[lo];
    if (hi == lo) return vlo;
    const double vhi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return vlo + (pos - static_cast<double>(lo)) * (vhi - vlo);
}

/// Pairwise Euclidean distances among the rows of `a` and `b` taken together.
inline std::vector<double> pooled_pairwise_distances(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd pts(a.rows() + b.rows(), a.cols());
    pts << a, b;
    const Index m = pts.rows();
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
    for (Index i = 0; i < m; ++i)
        for (Index j = i + 1; j < m; ++j) out.push_back((pts.row(i) - pts.row(j)).norm());
    return out;
}

/// `count` bandwidths spaced uniformly in log scale between the low and
/// high quantiles of the distances; a single bandwidth sits at the log-scale
/// midpoint.
inline std::vector<double> bandwidth_grid(std::vector<double> distances, int count, double q_low, double q_high) {
    detail::require(count >= 1, "grid needs at least one point");
    const bool any_positive = std::any_of(distances.begin(), distances.end(), [](double d) { return d > 0.0; });
    if (!any_positive) throw InvalidInput("degenerate data: all pairwise distances are zero");
    double lo = quantile_linear(distances, q_low);
    if (!(lo > 0.0)) {
        std::erase_if(distances, [](double d) { return !(d > 0.0); });
        lo = quantile_linear(distances, q_low);
    }
    const double hi = quantile_linear(distances, q_high);
    const double llo = std::log(lo), lhi = std::log(hi);
    std::vector<double> grid(static_cast<std::size_t>(count));
    if (count == 1) {
        grid[0] = std::exp(0.5 * (llo + lhi));
        return grid;
    }
    for (int k = 0; k < count; ++k) grid[static_cast<std::size_t>(k)] = std::exp(llo + (lhi - llo) * k / (count - 1));
    return grid;
}

/// Median-heuristic style initialization: kernel k gets the k-th grid
/// bandwidth and family families[k % families.size()]. Mahalanobis kernels
/// start at precision I / bandwidth^2.
inline Pool init_pool_median(const Sample& tr, const TrainConfig& cfg) {
    validate(cfg);
    validate(tr);
    auto make = [&](Family f, int dim, double bw) { return Kernel::of_family(f, dim, bw); };
    const auto grid_first =
        bandwidth_grid(pooled_pairwise_distances(tr.first.x, tr.first.y), cfg.c, cfg.quantile_low, cfg.quantile_high);
    std::vector<double> grid_second;
    if (tr.problem == Problem::Independence)
        grid_second = bandwidth_grid(pooled_pairwise_distances(tr.second.x, tr.second.y), cfg.c, cfg.quantile_low,
                                     cfg.quantile_high);
    Pool pool;
    pool.reserve(static_cast<std::size_t>(cfg.c));
    for (int k = 0; k < cfg.c; ++k) {
        const auto idx = static_cast<std::size_t>(k);
        const Family f = cfg.families[idx % cfg.families.size()];
        KernelSpec spec{make(f, static_cast<int>(tr.first.dim()), grid_first[idx]), std::nullopt};
        if (tr.problem == Problem::Independence)
            spec.second = make(f, static_cast<int>(tr.second.dim()), grid_second[idx]);
        pool.push_back(std::move(spec));
    }
    return pool;
}

/// The training objective n^2 U^T (Sigma + lambda I)^-1 U on a fixed
/// training split, with Sigma estimated on a fixed null resample of it, so
/// that the objective is a deterministic function of the kernel parameters.
class TrainingObjective {
public:
    static constexpr double max_condition = 1e12;

    struct Evaluation {
        double value = 0.0;
        VectorXd gradient;
        MultiU u;
        MatrixXd sigma_regularized; // empty when diversity is off
        double lambda = 0.0;
        int guard_hits = 0;
    };

    TrainingObjective(const Sample& train, const Sample& train_null, Ridge ridge, bool use_diversity = true)
        : ridge_(ridge), use_diversity_(use_diversity) {
        validate(train);
        train_ = make_geometry(train);
        if (use_diversity_) {
            validate(train_null);
            detail::require(train_null.problem == train.problem && train_null.size() == train.size(),
                            "null resample must match the training split");
            null_ = make_geometry(train_null);
        }
    }

    Index sample_size() const { return train_.size(); }

    Evaluation evaluate(const Pool& pool, bool with_gradient) const {
        detail::require(!pool.empty(), "kernel pool is empty");
        const Index c = static_cast<Index>(pool.size());
        const Index n = train_.size();
        const double n2 = detail::n_squared(n);
        const double np = pair_count(n);

        std::vector<SpecEval> tr(pool.size()), h0;
        Evaluation out;
        out.u = MultiU{VectorXd(c), n};
        for (Index a = 0; a < c; ++a) {
            tr[a] = evaluate_spec(pool[a], train_);
            out.u.values[a] = u_stat(tr[a].h);
        }
        const VectorXd& u = out.u.values;

        VectorXd v = u; // (Sigma + lambda I)^-1 u, or u itself without diversity
        double slope = 0.0;
        if (use_diversity_) {
            h0.resize(pool.size());
            std::vector<const MatrixXd*> null_mats;
            for (Index a = 0; a < c; ++a) {
                h0[a] = evaluate_spec(pool[a], null_);
                null_mats.push_back(&h0[a].h);
            }
            const MatrixXd sigma = null_cov_matrix(null_mats, n);
            out.lambda = ridge_.resolve(sigma);
            slope = ridge_.trace_slope(sigma);
            Eigen::SelfAdjointEigenSolver<MatrixXd> es;
            for (;;) {
                out.sigma_regularized = sigma + out.lambda * MatrixXd::Identity(c, c);
                es.compute(out.sigma_regularized);
                const VectorXd& e = es.eigenvalues();
                const bool ok = es.info() == Eigen::Success && e.minCoeff() > 0.0 &&
                                e.maxCoeff() / e.minCoeff() <= max_condition;
                if (ok) break;
                if (++out.guard_hits > 30)
                    throw NumericalError("training covariance stays ill-conditioned; increase lambda");
                out.lambda = out.lambda > 0.0 ? 10.0 * out.lambda : 1e-12;
                slope *= 10.0;
            }
            v = es.eigenvectors() * (es.eigenvectors().transpose() * u).cwiseQuotient(es.eigenvalues());
        }
        out.value = n2 * u.dot(v);
        if (!with_gradient) return out;

        out.gradient = VectorXd(pool_num_params(pool));
        const MatrixXd off_diagonal = MatrixXd::Ones(n, n) - MatrixXd::Identity(n, n);
        MatrixXd weighted_null;
        double vv = 0.0;
        if (use_diversity_) {
            weighted_null = MatrixXd::Zero(n, n);
            for (Index b = 0; b < c; ++b) weighted_null += v[b] * h0[b].h;
            vv = v.squaredNorm();
        }
        const double null_scale = n2 / (np * np);
        Index pos = 0;
        for (Index a = 0; a < c; ++a) {
            const Index p = pool[a].num_params();
            // The weighted gradient is linear in the weights.
            VectorXd g = (2.0 * n2 * v[a] / np) * spec_weighted_gradient(pool[a], train_, tr[a], off_diagonal);
            if (use_diversity_) {
                const MatrixXd w = (-2.0 * n2 * null_scale) * (v[a] * weighted_null + (slope * vv) * h0[a].h);
                g += spec_weighted_gradient(pool[a], null_, h0[a], w);
            }
            out.gradient.segment(pos, p) = g;
            pos += p;
        }
        return out;
    }

    double value(const Pool& pool) const { return evaluate(pool, false).value; }

    VectorXd gradient(const Pool& pool) const {
        auto e = evaluate(pool, true);
        if (!e.gradient.allFinite()) throw NumericalError("non-finite gradient of the training objective");
        return e.gradient;
    }

    /// L^-1 used for the training sign vector.
    SqrtInv whitening(const Evaluation& e) const {
        if (!use_diversity_) return SqrtInv::identity(e.u.values.size());
        return sqrt_inv(e.sigma_regularized);
    }

    bool use_diversity() const { return use_diversity_; }

private:
    SampleGeometry train_;
    SampleGeometry null_;
    Ridge ridge_;
    bool use_diversity_;
};

/// Objective on W_tr with the null resample drawn from `resample_seed`.
inline double objective(const Pool& pool, const Sample& tr, const Ridge& ridge, std::uint64_t resample_seed,
                        bool use_diversity = true) {
    Rng rng = make_rng(resample_seed);
    const Sample null = null_resample(tr, rng);
    return TrainingObjective(tr, null, ridge, use_diversity).value(pool);
}

inline VectorXd grad_objective(const Pool& pool, const Sample& tr, const Ridge& ridge, std::uint64_t resample_seed,
                               bool use_diversity = true) {
    Rng rng = make_rng(resample_seed);
    const Sample null = null_resample(tr, rng);
    return TrainingObjective(tr, null, ridge, use_diversity).gradient(pool);
}

struct TrainedPool {
    Pool pool;
    SignVector f_tr;
    std::vector<double> objective_trace;
    bool halted = false;
    std::string diagnostic;
    int guard_hits = 0;
};

/// Adam ascent on the training objective for cfg.epochs steps, starting
/// from init_pool_median, then the training sign vector of the final pool.
inline TrainedPool learn_kernels(const Sample& tr, const TrainConfig& cfg) {
    validate(cfg);
    TrainedPool out;
    out.pool = init_pool_median(tr, cfg);
    Rng rng = make_rng(cfg.resample_seed);
    const Sample null = cfg.use_diversity ? null_resample(tr, rng) : Sample{};
    const TrainingObjective obj(tr, null, cfg.ridge, cfg.use_diversity);

    VectorXd theta = pack_params(out.pool);
    VectorXd m = VectorXd::Zero(theta.size()), s = VectorXd::Zero(theta.size());
    Pool work = out.pool;

    auto finite = [](const TrainingObjective::Evaluation& e, bool grad) {
        return std::isfinite(e.value) && (!grad || e.gradient.allFinite());
    };

    TrainingObjective::Evaluation e = obj.evaluate(work, cfg.epochs > 0);
    out.guard_hits += e.guard_hits;
    if (!finite(e, cfg.epochs > 0)) throw NumericalError("training objective is not finite at initialization");
    out.objective_trace.push_back(e.value);
    VectorXd best_theta = theta;
    double best_value = e.value;
    double b1t = 1.0, b2t = 1.0;

    for (int t = 1; t <= cfg.epochs; ++t) {
        const auto& a = cfg.adam;
        b1t *= a.beta1;
        b2t *= a.beta2;
        m = a.beta1 * m + (1.0 - a.beta1) * e.gradient;
        s = a.beta2 * s + (1.0 - a.beta2) * e.gradient.cwiseAbs2();
        const VectorXd mhat = m / (1.0 - b1t);
        const VectorXd shat = s / (1.0 - b2t);
        theta += cfg.learning_rate * mhat.cwiseQuotient((shat.cwiseSqrt().array() + a.epsilon).matrix());

        const bool need_grad = t < cfg.epochs;
        bool ok = theta.allFinite();
        if (ok) {
            unpack_params(work, theta);
            try {
                e = obj.evaluate(work, need_grad);
                ok = finite(e, need_grad);
            } catch (const NumericalError&) {
                ok = false;
            }
        }
        if (!ok) {
            out.halted = true;
            out.diagnostic = "non-finite objective at epoch " + std::to_string(t) + "; kept best parameters";
            theta = best_theta;
            unpack_params(work, theta);
            e = obj.evaluate(work, false);
            break;
        }
        out.guard_hits += e.guard_hits;
        out.objective_trace.push_back(e.value);
        if (e.value > best_value) {
            best_value = e.value;
            best_theta = theta;
        }
    }

    out.pool = work;
    out.f_tr = signum(whiten(e.u, obj.whitening(e)));
    return out;
}

} // namespace dual
