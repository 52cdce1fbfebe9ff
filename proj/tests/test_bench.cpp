#include "test_util.hpp"

#include <sstream>

using Catch::Approx;
using namespace dual;

namespace {

BenchConfig small_config(int epochs = 5, int bootstraps = 100) {
    BenchConfig cfg;
    cfg.train.c = 3;
    cfg.train.epochs = epochs;
    cfg.test.bootstraps = bootstraps;
    return cfg;
}

DatasetSpec blob(Hypothesis h, Index n) {
    DatasetSpec s;
    s.hypothesis = h;
    s.n = n;
    return s;
}

} // namespace

TEST_CASE("variants", "[bench]") {
    const auto all = Variant::all();
    REQUIRE(all.size() == 4);
    CHECK((all[0].use_diversity && all[0].use_selection));
    CHECK((all[1].use_diversity && !all[1].use_selection));
    CHECK((!all[2].use_diversity && all[2].use_selection));
    CHECK((!all[3].use_diversity && !all[3].use_selection));
    CHECK(parse_variant("AU+S").name == "AU+S");
    CHECK_THROWS_AS(parse_variant("dual"), InvalidInput);
}

TEST_CASE("AU without selection is the plain aggregated statistic", "[bench]") {
    const BenchConfig cfg = small_config();
    DatasetSpec spec = blob(Hypothesis::Alt, 20);
    spec.seed = 3;
    const Sample w = generate(spec);
    const std::uint64_t seed = 44;
    const TrialOutcome o = run_pipeline(w, Variant::au(), cfg, seed);

    const auto [tr, te] = split_train_test(w, mix(seed, Stream::Split));
    TrainConfig tc = cfg.train;
    tc.use_diversity = false;
    tc.resample_seed = mix(seed, Stream::TrainResample);
    const TrainedPool trained = learn_kernels(tr, tc);
    const MultiU u = multi_u(build_h_stack(trained.pool, te));
    const double n = static_cast<double>(te.size());
    CHECK(o.statistic == Approx(n * n * u.values.squaredNorm()).epsilon(1e-12));
    CHECK(o.mask == Eigen::VectorXi::Ones(3));

    // The threshold comes from the unmasked bootstrap with the same draws.
    TestOptions opt = cfg.test;
    opt.use_diversity = false;
    opt.use_selection = false;
    const TestResult r = run_test(te, trained.pool, trained.f_tr, opt, seed);
    CHECK(o.threshold == r.threshold);
}

TEST_CASE("trials are reproducible and paired", "[bench]") {
    const BenchConfig cfg = small_config();
    const DatasetSpec spec = blob(Hypothesis::Alt, 15);
    const auto a = run_trial(spec, Variant::all(), cfg, 99);
    const auto b = run_trial(spec, Variant::all(), cfg, 99);
    for (std::size_t v = 0; v < 4; ++v) {
        CHECK(a[v].statistic == b[v].statistic);
        CHECK(a[v].threshold == b[v].threshold);
        CHECK(a[v].mask == b[v].mask);
        const TrialOutcome alone = run_trial(spec, Variant::all()[v], cfg, 99);
        CHECK(alone.statistic == a[v].statistic);
        CHECK(alone.p_value == a[v].p_value);
    }
    // Variants that differ only in selection share training and bootstrap.
    CHECK(a[0].objective_trace == a[1].objective_trace);
    CHECK(a[2].objective_trace == a[3].objective_trace);
    CHECK(a[0].statistic <= a[1].statistic);
}

TEST_CASE("summarize", "[bench]") {
    std::vector<TrialOutcome> trials(4);
    for (int t = 0; t < 4; ++t) {
        trials[t].reject = t < 2;
        trials[t].statistic = t;
        trials[t].threshold = 1.0;
        trials[t].mask = Eigen::VectorXi::Ones(2);
        trials[t].mask[1] = t % 2;
    }
    trials[3].failed = true;
    trials[3].reject = false;
    trials[3].error = "boom";
    const PowerReport r = summarize("DUAL", blob(Hypothesis::Null, 10), trials, 0.0);
    CHECK(r.R == 4);
    CHECK(r.rejections == 2);
    CHECK(r.failures == 1);
    CHECK(r.rate == 0.5);
    CHECK(r.ci_low == Approx(0.5 - 1.96 * std::sqrt(0.25 / 4)));
    CHECK(r.ci_high == Approx(0.5 + 1.96 * std::sqrt(0.25 / 4)));
    CHECK(r.mean_statistic == Approx(1.0));
    CHECK(r.selection_frequency[0] == 1.0);
    CHECK(r.selection_frequency[1] == Approx(1.0 / 3.0));
    const auto json = report_json(r);
    CHECK(json["trial_errors"].size() == 1);
    CHECK(json["trial_errors"][0]["error"] == "boom");
}

TEST_CASE("estimate_rate", "[bench]") {
    const BenchConfig cfg = small_config(0, 50);
    SECTION("R = 1 gives a degenerate interval") {
        const PowerReport r = estimate_rate(blob(Hypothesis::Alt, 10), Variant::dual(), cfg, 1, 5);
        CHECK((r.rate == 0.0 || r.rate == 1.0));
        CHECK(r.ci_low == r.rate);
        CHECK(r.ci_high == r.rate);
    }
    SECTION("same base seed, same numbers, any worker count") {
        BenchConfig par = cfg;
        par.workers = 3;
        const PowerReport a = estimate_rate(blob(Hypothesis::Null, 10), Variant::dual(), cfg, 12, 8);
        const PowerReport b = estimate_rate(blob(Hypothesis::Null, 10), Variant::dual(), par, 12, 8);
        CHECK(a.rejections == b.rejections);
        CHECK(a.mean_statistic == b.mean_statistic);
        CHECK(a.mean_threshold == b.mean_threshold);
        CHECK(a.seconds == 0.0);
    }
    SECTION("R must be positive") {
        CHECK_THROWS_AS(estimate_rate(blob(Hypothesis::Null, 10), Variant::dual(), cfg, 0, 1), InvalidInput);
    }
}

TEST_CASE("degenerate data forces the all-positive sign pattern", "[bench]") {
    Rng rng = make_rng(6);
    const MatrixXd x = test::normal_matrix(20, 2, rng, 4.0);
    const Sample w = make_two_sample(x, x);
    const BenchConfig cfg = small_config(3, 50);
    std::vector<TrialOutcome> trials;
    for (std::uint64_t s = 0; s < 5; ++s) {
        for (const auto& v : Variant::all()) {
            const TrialOutcome o = run_pipeline(w, v, cfg, s);
            CHECK(o.statistic == 0.0);
            CHECK_FALSE(o.reject);
            if (v.use_selection) trials.push_back(o);
        }
    }
    const PowerReport r = summarize("DUAL", blob(Hypothesis::Null, 10), trials, 0.0);
    CHECK(r.selection_frequency == VectorXd::Ones(3));
}

TEST_CASE("rejecting trials keep the dominant whitened coordinate", "[bench]") {
    const BenchConfig cfg = small_config(30, 200);
    int rejections = 0;
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        DatasetSpec spec = blob(Hypothesis::Alt, 200);
        spec.rho = 0.8;
        spec.seed = mix(seed, Stream::Data);
        const auto [tr, te] = split_train_test(generate(spec), mix(seed, Stream::Split));
        TrainConfig tc = cfg.train;
        tc.resample_seed = mix(seed, Stream::TrainResample);
        const TrainedPool trained = learn_kernels(tr, tc);
        const TestResult r = run_test(te, trained.pool, trained.f_tr, cfg.test, seed);
        if (!r.reject) continue;
        ++rejections;
        Rng rng = make_rng(mix(seed, Stream::TestResample));
        const HStack h0 = build_h_stack(trained.pool, null_resample(te, rng));
        const VectorXd z = whiten(multi_u(build_h_stack(trained.pool, te)),
                                  sqrt_inv(estimate_null_cov(h0, Ridge::relative())));
        Index top = 0;
        z.cwiseAbs().maxCoeff(&top);
        CHECK(r.mask.mask[top] == 1);
        CHECK(r.statistic >= 0.5 * r.statistic_unselected);
    }
    CHECK(rejections >= 6);
}

TEST_CASE("power_curve and report serialization", "[bench]") {
    const BenchConfig cfg = small_config(0, 50);
    const auto reports = power_curve(blob(Hypothesis::Alt, 10), {6, 8}, {Variant::dual(), Variant::au()}, cfg, 3, 1);
    REQUIRE(reports.size() == 4);
    CHECK(reports[0].n == 6);
    CHECK(reports[2].n == 8);

    std::ostringstream csv;
    write_report_csv(csv, reports);
    std::istringstream lines(csv.str());
    std::string header;
    std::getline(lines, header);
    CHECK(header == "variant,problem,hypothesis,n,R,rejections,rate,ci_low,ci_high,mean_threshold,mean_statistic,seconds");
    int rows = 0;
    for (std::string line; std::getline(lines, line);) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 11);
    }
    CHECK(rows == 4);

    std::ostringstream js;
    write_report_json(js, reports);
    const auto parsed = nlohmann::json::parse(js.str());
    REQUIRE(parsed.size() == 4);
    for (const char* key : {"variant", "problem", "hypothesis", "n", "R", "rejections", "rate", "ci_low", "ci_high",
                            "mean_threshold", "mean_statistic", "seconds"})
        CHECK(parsed[0].contains(key));

    const auto sel = selection_diagnostics(reports);
    CHECK(sel.size() == 12);
    std::ostringstream sc;
    write_selection_csv(sc, sel);
    CHECK(sc.str().rfind("variant,hypothesis,n,kernel,probability\n", 0) == 0);
}
