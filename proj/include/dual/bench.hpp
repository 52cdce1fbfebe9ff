#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dual/boottest.hpp"
#include "dual/datagen.hpp"
#include "dual/errors.hpp"
#include "dual/rng.hpp"
#include "dual/trainer.hpp"

namespace dual {

struct Variant {
    std::string name;
    bool use_diversity = true;
    bool use_selection = true;

    static Variant dual() { return {"DUAL", true, true}; }
    static Variant au_d() { return {"AU+D", true, false}; }
    static Variant au_s() { return {"AU+S", false, true}; }
    static Variant au() { return {"AU", false, false}; }
    static std::vector<Variant> all() { return {dual(), au_d(), au_s(), au()}; }
};

inline Variant parse_variant(const std::string& name) {
    for (const auto& v : Variant::all())
        if (v.name == name) return v;
    throw InvalidInput("unknown variant '" + name + "' (expected DUAL, AU+D, AU+S or AU)");
}

struct BenchConfig {
    TrainConfig train;
    TestOptions test;
    unsigned workers = 1;
    bool record_time = false; // false: reports carry seconds = 0
};

struct TrialOutcome {
    bool reject = false;
    bool failed = false;
    std::string error;
    double statistic = 0.0;
    double threshold = 0.0;
    double p_value = 1.0;
    Eigen::VectorXi mask;
    VectorXd alignment_rate;
    std::vector<double> objective_trace;
};

namespace detail {

inline TrialOutcome outcome_of(const TestResult& r, bool selected) {
    TrialOutcome o;
    o.statistic = selected ? r.statistic : r.statistic_unselected;
    o.threshold = selected ? r.threshold : r.threshold_unselected;
    o.p_value = selected ? r.p_value : r.p_value_unselected;
    o.reject = selected ? r.reject : r.reject_unselected;
    o.mask = selected ? r.mask.mask : AlignMask::all_ones(r.mask.size()).mask;
    o.alignment_rate = r.alignment_rate;
    return o;
}

} // namespace detail

/// Split, train and test one 2n-item sample for several variants. Variants
/// that share a diversity setting share one training run and one bootstrap;
/// the selection toggle only changes which statistic is read off.
inline std::vector<TrialOutcome> run_pipeline(const Sample& w, const std::vector<Variant>& variants,
                                              const BenchConfig& cfg, std::uint64_t trial_seed) {
    const auto [tr, te] = split_train_test(w, mix(trial_seed, Stream::Split));
    std::vector<TrialOutcome> out(variants.size());
    for (bool diversity : {true, false}) {
        bool needed = false;
        for (const auto& v : variants) needed = needed || v.use_diversity == diversity;
        if (!needed) continue;
        TrainConfig tc = cfg.train;
        tc.use_diversity = diversity;
        tc.resample_seed = mix(trial_seed, Stream::TrainResample);
        const TrainedPool trained = learn_kernels(tr, tc);
        TestOptions opt = cfg.test;
        opt.use_diversity = diversity;
        opt.use_selection = true;
        const TestResult r = run_test(te, trained.pool, trained.f_tr, opt, trial_seed);
        for (std::size_t i = 0; i < variants.size(); ++i) {
            if (variants[i].use_diversity != diversity) continue;
            out[i] = detail::outcome_of(r, variants[i].use_selection);
            out[i].objective_trace = trained.objective_trace;
        }
    }
    return out;
}

inline TrialOutcome run_pipeline(const Sample& w, const Variant& variant, const BenchConfig& cfg,
                                 std::uint64_t trial_seed) {
    return run_pipeline(w, std::vector<Variant>{variant}, cfg, trial_seed)[0];
}

/// One trial: data from mix(trial_seed, Data), then run_pipeline. Errors are
/// caught and recorded; a failed trial counts as a non-rejection.
inline std::vector<TrialOutcome> run_trial(DatasetSpec spec, const std::vector<Variant>& variants,
                                           const BenchConfig& cfg, std::uint64_t trial_seed) {
    try {
        spec.seed = mix(trial_seed, Stream::Data);
        return run_pipeline(generate(spec), variants, cfg, trial_seed);
    } catch (const std::exception& e) {
        std::vector<TrialOutcome> out(variants.size());
        for (auto& o : out) {
            o.failed = true;
            o.error = e.what();
        }
        return out;
    }
}

inline TrialOutcome run_trial(const DatasetSpec& spec, const Variant& variant, const BenchConfig& cfg,
                              std::uint64_t trial_seed) {
    return run_trial(spec, std::vector<Variant>{variant}, cfg, trial_seed)[0];
}

/// Runs body(i) for i in [0, count) on up to `workers` threads. Each index
/// writes only its own slot, so results do not depend on scheduling.
inline void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& body) {
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) body(i);
        });
    for (auto& t : pool) t.join();
}

struct PowerReport {
    std::string variant;
    Problem problem = Problem::TwoSample;
    Hypothesis hypothesis = Hypothesis::Null;
    Index n = 0;
    int R = 0;
    int rejections = 0;
    int failures = 0;
    double rate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double mean_threshold = 0.0;
    double mean_statistic = 0.0;
    double seconds = 0.0;
    VectorXd selection_frequency; // per kernel, fraction of trials with mask = 1
    std::vector<TrialOutcome> trials;

    double standard_error() const { return R > 0 ? std::sqrt(rate * (1.0 - rate) / R) : 0.0; }
};

inline PowerReport summarize(const std::string& variant, const DatasetSpec& spec, std::vector<TrialOutcome> trials,
                             double seconds) {
    PowerReport r;
    r.variant = variant;
    r.problem = spec.problem;
    r.hypothesis = spec.hypothesis;
    r.n = spec.n;
    r.R = static_cast<int>(trials.size());
    r.seconds = seconds;
    double thr = 0.0, stat = 0.0;
    int ok = 0;
    for (const auto& t : trials) {
        if (t.failed) {
            ++r.failures;
            continue;
        }
        ++ok;
        r.rejections += t.reject ? 1 : 0;
        thr += t.threshold;
        stat += t.statistic;
        const VectorXd m = t.mask.cast<double>();
        if (r.selection_frequency.size() == 0) r.selection_frequency = VectorXd::Zero(m.size());
        if (r.selection_frequency.size() == m.size()) r.selection_frequency += m;
    }
    if (r.R > 0) {
        r.rate = static_cast<double>(r.rejections) / r.R;
        const double half = 1.96 * r.standard_error();
        r.ci_low = r.rate - half;
        r.ci_high = r.rate + half;
    }
    if (ok > 0) {
        r.mean_threshold = thr / ok;
        r.mean_statistic = stat / ok;
        r.selection_frequency /= ok;
    }
    r.trials = std::move(trials);
    return r;
}

/// R trials with seeds mix(base_seed, t), all variants on the same data per
/// trial. One report per variant.
inline std::vector<PowerReport> run_experiment(const DatasetSpec& spec, const std::vector<Variant>& variants,
                                               const BenchConfig& cfg, int R, std::uint64_t base_seed) {
    detail::require(R >= 1, "R must be >= 1");
    detail::require(!variants.empty(), "at least one variant is required");
    validate(spec);
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::vector<TrialOutcome>> per_trial(static_cast<std::size_t>(R));
    parallel_for(per_trial.size(), cfg.workers, [&](std::size_t t) {
        per_trial[t] = run_trial(spec, variants, cfg, mix(base_seed, t));
    });
    const double elapsed =
        cfg.record_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() : 0.0;
    std::vector<PowerReport> out;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        std::vector<TrialOutcome> trials;
        trials.reserve(per_trial.size());
        for (auto& t : per_trial) trials.push_back(std::move(t[v]));
        out.push_back(summarize(variants[v].name, spec, std::move(trials), elapsed));
    }
    return out;
}

inline PowerReport estimate_rate(const DatasetSpec& spec, const Variant& variant, const BenchConfig& cfg, int R,
                                 std::uint64_t base_seed) {
    return run_experiment(spec, {variant}, cfg, R, base_seed)[0];
}

inline std::vector<PowerReport> ablation_suite(const DatasetSpec& spec, const BenchConfig& cfg, int R,
                                               std::uint64_t base_seed) {
    return run_experiment(spec, Variant::all(), cfg, R, base_seed);
}

/// Rate estimates for each n in `sizes`; the base seed is mixed with n so
/// different sizes use independent data.
inline std::vector<PowerReport> power_curve(DatasetSpec spec, const std::vector<Index>& sizes,
                                            const std::vector<Variant>& variants, const BenchConfig& cfg, int R,
                                            std::uint64_t base_seed) {
    std::vector<PowerReport> out;
    for (Index n : sizes) {
        spec.n = n;
        auto rows = run_experiment(spec, variants, cfg, R, mix(base_seed, static_cast<std::uint64_t>(n)));
        for (auto& r : rows) out.push_back(std::move(r));
    }
    return out;
}

struct SelectionRow {
    std::string variant;
    Hypothesis hypothesis = Hypothesis::Null;
    Index n = 0;
    int kernel = 0;
    double probability = 0.0;
};

/// Per-kernel selection probability per report.
inline std::vector<SelectionRow> selection_diagnostics(const std::vector<PowerReport>& reports) {
    std::vector<SelectionRow> out;
    for (const auto& r : reports)
        for (Index k = 0; k < r.selection_frequency.size(); ++k)
            out.push_back({r.variant, r.hypothesis, r.n, static_cast<int>(k), r.selection_frequency[k]});
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

} // namespace detail

inline const char* report_csv_header() {
    return "variant,problem,hypothesis,n,R,rejections,rate,ci_low,ci_high,mean_threshold,mean_statistic,seconds";
}

inline void write_report_csv(std::ostream& os, const std::vector<PowerReport>& reports) {
    using detail::format_number;
    os << report_csv_header() << '\n';
    for (const auto& r : reports)
        os << r.variant << ',' << to_string(r.problem) << ',' << to_string(r.hypothesis) << ',' << r.n << ','
           << r.R << ',' << r.rejections << ',' << format_number(r.rate) << ',' << format_number(r.ci_low) << ','
           << format_number(r.ci_high) << ',' << format_number(r.mean_threshold) << ','
           << format_number(r.mean_statistic) << ',' << format_number(r.seconds) << '\n';
}

inline void write_selection_csv(std::ostream& os, const std::vector<SelectionRow>& rows) {
    os << "variant,hypothesis,n,kernel,probability\n";
    for (const auto& s : rows)
        os << s.variant << ',' << to_string(s.hypothesis) << ',' << s.n << ',' << s.kernel << ','
           << detail::format_number(s.probability) << '\n';
}

inline nlohmann::ordered_json report_json(const PowerReport& r) {
    nlohmann::ordered_json j;
    j["variant"] = r.variant;
    j["problem"] = std::string(to_string(r.problem));
    j["hypothesis"] = std::string(to_string(r.hypothesis));
    j["n"] = r.n;
    j["R"] = r.R;
    j["rejections"] = r.rejections;
    j["rate"] = r.rate;
    j["ci_low"] = r.ci_low;
    j["ci_high"] = r.ci_high;
    j["mean_threshold"] = r.mean_threshold;
    j["mean_statistic"] = r.mean_statistic;
    j["seconds"] = r.seconds;
    j["failures"] = r.failures;
    j["selection_frequency"] = std::vector<double>(r.selection_frequency.data(),
                                                   r.selection_frequency.data() + r.selection_frequency.size());
    nlohmann::ordered_json errors = nlohmann::ordered_json::array();
    for (std::size_t t = 0; t < r.trials.size(); ++t)
        if (r.trials[t].failed) errors.push_back({{"trial", t}, {"error", r.trials[t].error}});
    j["trial_errors"] = errors;
    return j;
}

inline void write_report_json(std::ostream& os, const std::vector<PowerReport>& reports) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) arr.push_back(report_json(r));
    os << arr.dump(2) << '\n';
}

} // namespace dual
