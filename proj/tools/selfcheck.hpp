#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "dual/dual.hpp"
#include "dual/reference.hpp"

namespace dual::selfcheck {

struct Check {
    std::string name;
    bool ok = true;
    double worst = 0.0; // largest relative error seen
};

inline double rel_err(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Entry-wise error of h values relative to their bound |h| <= 2.
inline double h_err(const MatrixXd& a, const MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff() / 2.0; }

inline double rel_err(const MatrixXd& a, const MatrixXd& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

/// Random kernel pool for `problem` with c entries on d-dimensional data.
inline Pool random_pool(Problem problem, int c, int d, Rng& rng) {
    std::uniform_real_distribution<double> bw(0.5, 2.0), off(-0.3, 0.3);
    std::uniform_int_distribution<int> fam(0, 2);
    auto one = [&]() {
        const auto f = static_cast<Family>(fam(rng));
        if (f != Family::Mahalanobis) return Kernel::of_family(f, d, bw(rng));
        MatrixXd m = MatrixXd::Zero(d, d);
        for (int p = 0; p < d; ++p) {
            m(p, p) = 1.0 / bw(rng);
            for (int q = 0; q < p; ++q) m(p, q) = off(rng);
        }
        return Kernel::mahalanobis(m);
    };
    Pool pool;
    for (int k = 0; k < c; ++k) {
        KernelSpec s{one(), std::nullopt};
        if (problem == Problem::Independence) s.second = one();
        pool.push_back(s);
    }
    return pool;
}

inline Sample random_sample(Problem problem, Index n, int d, Rng& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    auto mat = [&]() {
        MatrixXd m(n, d);
        for (Index i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) m(i, j) = z(rng);
        return m;
    };
    if (problem == Problem::TwoSample) return make_two_sample(mat(), mat() * 1.3);
    return Sample{Problem::Independence, PairSample{mat(), mat()}, PairSample{mat(), mat()}};
}

/// Brute-force comparisons of the core quantities on `instances` random
/// problems with n <= 8, c <= 3, d = 2.
inline std::vector<Check> run_oracle_suite(int instances, std::uint64_t seed, double tol = 1e-12) {
    std::vector<Check> checks{{"h_stack"},       {"u_stat"},      {"null_cov"},     {"sqrt_inv"},
                              {"aggregated_stat"}, {"bootstrap_multi_u"}, {"selected_stat"}, {"degeneracy"}};
    auto record = [&](std::size_t i, double err, double limit) {
        checks[i].worst = std::max(checks[i].worst, err);
        if (!(err <= limit)) checks[i].ok = false;
    };
    Rng rng = make_rng(seed);
    std::uniform_int_distribution<int> n_dist(3, 8), c_dist(1, 3);
    for (int inst = 0; inst < instances; ++inst) {
        const Problem problem = inst % 2 == 0 ? Problem::TwoSample : Problem::Independence;
        const Index n = n_dist(rng);
        const int c = c_dist(rng);
        const Pool pool = random_pool(problem, c, 2, rng);
        const Sample w = random_sample(problem, n, 2, rng);
        const Sample w0 = null_resample(w, rng);

        const HStack stack = build_h_stack(pool, w);
        const HStack stack0 = build_h_stack(pool, w0);
        const auto ref = reference::h_stack(pool, w);
        const auto ref0 = reference::h_stack(pool, w0);
        for (int k = 0; k < c; ++k) record(0, h_err(stack.mats[k], ref[k]), tol);

        // The U-statistic oracles take the same h matrices as the fast path.
        const MultiU u = multi_u(stack);
        const VectorXd ref_u = reference::multi_u(stack.mats, VectorXd::Ones(n));
        for (int k = 0; k < c; ++k) record(1, rel_err(u.values[k], ref_u[k]), tol);

        const NullCov cov = estimate_null_cov(stack0, Ridge::relative());
        const MatrixXd ref_cov = reference::null_cov(stack0.mats, cov.lambda);
        for (int k = 0; k < c; ++k) record(0, h_err(stack0.mats[k], ref0[k]), tol);
        record(2, rel_err(cov.regularized(), ref_cov), tol);

        const SqrtInv li = sqrt_inv(cov);
        record(3, rel_err(li.linv * cov.regularized() * li.linv, MatrixXd::Identity(c, c)), 1e-10);
        record(3, rel_err(li.linv, reference::inv_sqrt(cov.regularized())), 1e-10);

        // Downstream oracles take the library's own inputs (checked above);
        // with a condition number near 1e6 an independent recomputation of
        // u or Sigma would differ in the last bits and be amplified.
        record(4, rel_err(aggregated_stat(u, li), reference::aggregated_stat(u.values, cov.regularized(), n)), tol);

        Eigen::VectorXi f_tr(c);
        for (int k = 0; k < c; ++k) f_tr[k] = (rng() >> 63) ? 1 : -1;
        for (int b = 0; b < 5; ++b) {
            const VectorXd eps = draw_rademacher(n, rng);
            const MultiU ub = bootstrap_multi_u(stack, eps);
            const VectorXd ref_ub = reference::multi_u(stack.mats, eps);
            for (int k = 0; k < c; ++k) record(5, rel_err(ub.values[k], ref_ub[k]), tol);
            const double sel = bootstrap_stat(stack, li, SignVector{f_tr}, eps);
            record(6, rel_err(sel, reference::selected_stat(ub.values, li.linv, f_tr, n)), tol);
        }

        if (problem == Problem::TwoSample) {
            const Sample same = make_two_sample(w.first.x, w.first.x);
            const HStack zero = build_h_stack(pool, same);
            double worst = 0.0;
            for (const auto& m : zero.mats) worst = std::max(worst, m.cwiseAbs().maxCoeff());
            record(7, worst, 0.0);
        }
    }
    return checks;
}

struct GradientInstance {
    Pool pool;
    Sample data;
    std::uint64_t resample_seed = 0;
};

/// A training-like configuration: n = 20 items of generated alternative
/// data, a c = 3 median-heuristic pool cycling through all three families,
/// and a random jitter of every parameter.
inline GradientInstance gradient_instance(Problem problem, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    DatasetSpec spec;
    spec.problem = problem;
    spec.hypothesis = Hypothesis::Alt;
    spec.n = 10;
    spec.seed = rng();
    GradientInstance g;
    g.data = generate(spec);
    TrainConfig cfg;
    cfg.c = 3;
    cfg.families = {Family::Gaussian, Family::Laplacian, Family::Mahalanobis};
    g.pool = init_pool_median(g.data, cfg);
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    for (auto& spec_k : g.pool) {
        VectorXd p = spec_k.params();
        for (Index i = 0; i < p.size(); ++i) p[i] += jitter(rng);
        spec_k.set_params(p);
    }
    g.resample_seed = rng();
    return g;
}

/// Central differences of the objective with step h in every parameter.
inline VectorXd finite_difference_gradient(const GradientInstance& g, const Ridge& ridge, double h) {
    const VectorXd theta = pack_params(g.pool);
    VectorXd fd(theta.size());
    for (Index p = 0; p < theta.size(); ++p) {
        VectorXd tp = theta, tm = theta;
        tp[p] += h;
        tm[p] -= h;
        Pool pp = g.pool, pm = g.pool;
        unpack_params(pp, tp);
        unpack_params(pm, tm);
        fd[p] = (objective(pp, g.data, ridge, g.resample_seed) - objective(pm, g.data, ridge, g.resample_seed)) /
                (2.0 * h);
    }
    return fd;
}

/// Analytic gradient vs central differences (step 1e-4) on gradient_instance
/// configurations, alternating the two problems.
inline Check run_gradient_check(int instances, std::uint64_t seed, double tol = 1e-4) {
    Check check{"grad_objective"};
    const Ridge ridge = Ridge::relative();
    for (int inst = 0; inst < instances; ++inst) {
        const Problem problem = inst % 2 == 0 ? Problem::TwoSample : Problem::Independence;
        const GradientInstance g = gradient_instance(problem, mix(seed, static_cast<std::uint64_t>(inst)));
        const VectorXd analytic = grad_objective(g.pool, g.data, ridge, g.resample_seed);
        const double err = rel_err(analytic, finite_difference_gradient(g, ridge, 1e-4));
        check.worst = std::max(check.worst, err);
        if (!(err < tol)) check.ok = false;
    }
    return check;
}

inline bool run_all(std::ostream& os, std::uint64_t seed = 20240601) {
    auto checks = run_oracle_suite(50, seed);
    checks.push_back(run_gradient_check(20, seed + 1));
    bool all = true;
    for (const auto& c : checks) {
        os << (c.ok ? "ok    " : "FAIL  ") << c.name << "  max_rel_err=" << c.worst << '\n';
        all = all && c.ok;
    }
    return all;
}

} // namespace dual::selfcheck
