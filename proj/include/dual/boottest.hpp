#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dual/errors.hpp"
#include "dual/hstack.hpp"
#include "dual/rng.hpp"
#include "dual/selection.hpp"
#include "dual/ustat.hpp"

namespace dual {

/// i.i.d. Rademacher signs, one per sample item.
inline VectorXd draw_rademacher(Index n, Rng& rng) {
    detail::require(n >= 1, "rademacher vector needs n >= 1");
    VectorXd eps(n);
    for (Index i = 0; i < n; ++i) eps[i] = (rng() >> 63) ? 1.0 : -1.0;
    return eps;
}

/// Wild-bootstrap U vector: binom(n,2)^-1 sum_{i<j} eps_i eps_j h_ij per kernel.
inline MultiU bootstrap_multi_u(const HStack& stack, const Eigen::Ref<const VectorXd>& eps) {
    detail::require(eps.size() == stack.n, "rademacher vector length does not match the sample size");
    detail::require(stack.n >= 2, "U-statistic needs n >= 2");
    MultiU u{VectorXd(stack.c()), stack.n};
    const double np = pair_count(stack.n);
    for (Index k = 0; k < stack.c(); ++k) u.values[k] = detail::signed_pair_sum(stack.mats[k], eps) / np;
    return u;
}

/// One wild-bootstrap replicate of the selection statistic.
inline double bootstrap_stat(const HStack& stack, const SqrtInv& linv, const SignVector& f_tr,
                             const Eigen::Ref<const VectorXd>& eps, bool use_selection = true) {
    detail::require(f_tr.size() == stack.c(), "training sign vector length does not match the pool");
    const MultiU ub = bootstrap_multi_u(stack, eps);
    if (!use_selection) return aggregated_stat(ub, linv);
    const AlignMask mask = alignment(f_tr, signum(whiten(ub, linv)));
    return selected_stat(ub, linv, mask);
}

/// Smallest tau with at least a (1 - alpha) fraction of `all_stats` <= tau,
/// i.e. the ceil((1 - alpha) * m)-th order statistic.
inline double threshold(std::span<const double> all_stats, double alpha) {
    detail::require(!all_stats.empty(), "threshold needs at least one statistic");
    detail::require(alpha > 0.0 && alpha < 1.0, "alpha must be in (0,1)");
    std::vector<double> sorted(all_stats.begin(), all_stats.end());
    std::sort(sorted.begin(), sorted.end());
    const auto m = static_cast<double>(sorted.size());
    // The small offset keeps exact products such as 0.95 * 200 from rounding up.
    auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * m - 1e-9));
    k = std::clamp<std::size_t>(k, 1, sorted.size());
    return sorted[k - 1];
}

/// (1 + #{b : T^b >= T}) / (B + 1).
inline double p_value(std::span<const double> boot_stats, double statistic) {
    const auto hits = std::count_if(boot_stats.begin(), boot_stats.end(),
                                    [statistic](double t) { return t >= statistic; });
    return (1.0 + static_cast<double>(hits)) / (static_cast<double>(boot_stats.size()) + 1.0);
}

struct TestOptions {
    double alpha = 0.05;
    int bootstraps = 300;
    Ridge ridge = Ridge::relative();
    bool use_diversity = true; // false: L^-1 = I
    bool use_selection = true; // false: all-ones mask
};

struct TestResult {
    double statistic = 0.0;
    double threshold = 0.0;
    double p_value = 1.0;
    bool reject = false;
    AlignMask mask;
    std::vector<double> boot_stats;
    Index n = 0;
    double alpha = 0.05;

    // The same test without selection, on the same bootstrap draws.
    double statistic_unselected = 0.0;
    double threshold_unselected = 0.0;
    double p_value_unselected = 1.0;
    bool reject_unselected = false;

    SignVector f_te;
    VectorXd alignment_rate; // per kernel, fraction of b with F^b_i = 1
    double lambda = 0.0;
};

/// Wild-bootstrap test on a prebuilt testing h-stack. `stack_h0` (built on a
/// null resample of the testing split) feeds the covariance; it is ignored
/// when `use_diversity` is off.
inline TestResult run_test(const HStack& stack_te, const HStack& stack_h0, const SignVector& f_tr,
                           const TestOptions& opt, Rng& rng) {
    detail::require(opt.bootstraps >= 1, "number of bootstraps must be >= 1");
    detail::require(opt.alpha > 0.0 && opt.alpha < 1.0, "alpha must be in (0,1)");
    detail::require(f_tr.size() == stack_te.c(), "training sign vector length does not match the pool");
    const Index c = stack_te.c(), n = stack_te.n;

    TestResult r;
    r.n = n;
    r.alpha = opt.alpha;

    SqrtInv linv = SqrtInv::identity(c);
    if (opt.use_diversity) {
        detail::require(stack_h0.c() == c, "null h-stack has a different number of kernels");
        const NullCov cov = estimate_null_cov(stack_h0, opt.ridge);
        r.lambda = cov.lambda;
        linv = sqrt_inv(cov);
    }

    const MultiU u = multi_u(stack_te);
    const VectorXd z = whiten(u, linv);
    r.f_te = signum(z);
    const AlignMask observed_mask = alignment(f_tr, r.f_te);
    r.statistic_unselected = detail::masked_norm(z, nullptr, n);
    const double selected = detail::masked_norm(z, &observed_mask.mask, n);

    const auto B = static_cast<Index>(opt.bootstraps);
    MatrixXd eps(n, B);
    for (Index b = 0; b < B; ++b) eps.col(b) = draw_rademacher(n, rng);

    // Kernel-major loop keeps one h matrix hot in cache across replicates.
    MatrixXd ub(c, B);
    const double np = pair_count(n);
    for (Index k = 0; k < c; ++k)
        for (Index b = 0; b < B; ++b) ub(k, b) = detail::signed_pair_sum(stack_te.mats[k], eps.col(b)) / np;
    std::vector<double> boot_selected(B), boot_all(B);
    Eigen::VectorXi aligned = Eigen::VectorXi::Zero(c);
    for (Index b = 0; b < B; ++b) {
        const VectorXd col = detail::whiten_vector(linv.linv, ub.col(b));
        const AlignMask mb = alignment(f_tr, signum(col));
        aligned += mb.mask;
        boot_selected[b] = detail::masked_norm(col, &mb.mask, n);
        boot_all[b] = detail::masked_norm(col, nullptr, n);
    }
    r.alignment_rate = aligned.cast<double>() / static_cast<double>(B);

    auto with_observed = [](std::vector<double> v, double t) {
        v.push_back(t);
        return v;
    };
    r.threshold_unselected = threshold(with_observed(boot_all, r.statistic_unselected), opt.alpha);
    r.p_value_unselected = p_value(boot_all, r.statistic_unselected);
    r.reject_unselected = r.statistic_unselected > r.threshold_unselected;

    if (opt.use_selection) {
        r.mask = observed_mask;
        r.statistic = selected;
        r.threshold = threshold(with_observed(boot_selected, selected), opt.alpha);
        r.p_value = p_value(boot_selected, selected);
        r.reject = r.statistic > r.threshold;
        r.boot_stats = std::move(boot_selected);
    } else {
        r.mask = AlignMask::all_ones(c);
        r.statistic = r.statistic_unselected;
        r.threshold = r.threshold_unselected;
        r.p_value = r.p_value_unselected;
        r.reject = r.reject_unselected;
        r.boot_stats = std::move(boot_all);
    }
    return r;
}

/// Full testing step on the held-out split: null-resamples W_te for the
/// covariance, builds the h-stacks and runs the wild bootstrap. Both
/// random streams derive from `seed`.
inline TestResult run_test(const Sample& te, const Pool& pool, const SignVector& f_tr, const TestOptions& opt,
                           std::uint64_t seed) {
    validate(te);
    const HStack stack_te = build_h_stack(pool, te);
    HStack stack_h0;
    if (opt.use_diversity) {
        Rng resample_rng = make_rng(mix(seed, Stream::TestResample));
        stack_h0 = build_h_stack(pool, null_resample(te, resample_rng));
    }
    Rng boot_rng = make_rng(mix(seed, Stream::Bootstrap));
    return run_test(stack_te, stack_h0, f_tr, opt, boot_rng);
}

} // namespace dual
