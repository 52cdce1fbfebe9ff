#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "dual/dual.hpp"
#include "selfcheck.hpp"

namespace dual::cli {

/// Training allocates many n x n matrices per step. Keeping freed memory in
/// the heap instead of returning it to the OS avoids refaulting those pages
/// on every step. Process-wide; call once from main.
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 1024 * 1024 * 1024);
#endif
}

struct RunConfig {
    std::string command;
    std::string dataset = "blob"; // blob | indep
    Hypothesis hypothesis = Hypothesis::Alt;
    Index n = 100;
    std::vector<Index> sizes; // power: defaults to {n}
    int d = 2;
    double rho = 0.5;
    double a = 0.5;
    double noise = 1.0;
    int k = -1;
    std::string variant = "DUAL";
    int c = 6;
    std::vector<Family> families{Family::Gaussian, Family::Mahalanobis};
    int epochs = 200;
    double lr = 5e-4;
    std::optional<double> lambda; // empty: relative rule
    int B = 300;
    double alpha = 0.05;
    int R = 200;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::string output = "-";
    std::string format = "csv";
    std::string input;
    bool timing = false;

    DatasetSpec dataset_spec() const {
        DatasetSpec s;
        s.problem = dataset == "blob" ? Problem::TwoSample : Problem::Independence;
        s.hypothesis = hypothesis;
        s.n = n;
        s.d = d;
        s.rho = rho;
        s.a = a;
        s.noise = noise;
        s.k = k;
        return s;
    }

    BenchConfig bench_config() const {
        BenchConfig b;
        b.train.c = c;
        b.train.families = families;
        b.train.epochs = epochs;
        b.train.learning_rate = lr;
        b.train.ridge = lambda ? Ridge::fixed(*lambda) : Ridge::relative();
        b.test.alpha = alpha;
        b.test.bootstraps = B;
        b.test.ridge = b.train.ridge;
        b.workers = workers;
        b.record_time = timing;
        return b;
    }
};

/// Thrown for --help; carries the help text.
struct HelpRequested {
    std::string text;
};

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> names{"single-test", "type1", "power", "ablation", "selfcheck"};
    return names;
}

namespace detail {

// key=value lines -> "--key=value" arguments placed before the real ones,
// so command-line flags take precedence.
inline std::vector<std::string> config_arguments(const std::string& text) {
    std::istringstream is(text);
    std::vector<std::string> out;
    for (const auto& item : CLI::ConfigINI().from_config(is)) {
        if (item.name == "++" || item.name == "--") continue;
        const std::string key = item.fullname();
        if (!item.parents.empty() || key == "config" || key == "command")
            throw InvalidInput("config: unknown key '" + key + "'");
        std::string value;
        for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
        out.push_back("--" + key + "=" + value);
    }
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("config: cannot read '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

template <class T>
std::vector<T> split_list(const std::string& s, const std::string& key, T (*parse)(const std::string&)) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(parse(item));
        } catch (const std::exception&) {
            throw InvalidInput(key + ": bad list entry '" + item + "'");
        }
    }
    if (out.empty()) throw InvalidInput(key + ": empty list");
    return out;
}

} // namespace detail

/// Parses `args` (without the program name). `config_text`, or the file
/// named by --config, supplies key=value defaults that flags override.
inline RunConfig parse_config(std::vector<std::string> args, const std::optional<std::string>& config_text = {}) {
    RunConfig cfg;
    CLI::App app{"Kernel two-sample and independence testing with learned, diverse kernel pools"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_help_flag("-h,--help", "Show help");

    std::string command, families = "gaussian,mahalanobis", sizes, lambda = "auto", config_path;
    bool alt = false, null = false;
    long long n = cfg.n;
    app.add_option("command", command, "single-test | type1 | power | ablation | selfcheck")->required();
    app.add_option("--config", config_path, "key=value file with option defaults");
    app.add_option("--dataset", cfg.dataset, "blob (two-sample) or indep (independence)");
    app.add_flag("--alt", alt, "Generate data under the alternative");
    app.add_flag("--null", null, "Generate data under the null");
    app.add_option("--n", n, "Items per split");
    app.add_option("--sizes", sizes, "Comma-separated items per split (power)");
    app.add_option("--d", cfg.d, "Dimension (indep)");
    app.add_option("--rho", cfg.rho, "Blob correlation");
    app.add_option("--a", cfg.a, "Indep perturbation strength");
    app.add_option("--noise", cfg.noise, "Indep noise scale");
    app.add_option("--k", cfg.k, "Indep perturbed dimensions (-1: min(3,d))");
    app.add_option("--variant", cfg.variant, "DUAL | AU+D | AU+S | AU");
    app.add_option("--c", cfg.c, "Kernel count");
    app.add_option("--families", families, "Comma-separated kernel families, cycled over the pool");
    app.add_option("--epochs,--M", cfg.epochs, "Training epochs");
    app.add_option("--lr", cfg.lr, "Learning rate");
    app.add_option("--lambda", lambda, "Ridge: 'auto' (relative rule) or a fixed value");
    app.add_option("--B", cfg.B, "Bootstrap replicates");
    app.add_option("--alpha", cfg.alpha, "Significance level");
    app.add_option("--R", cfg.R, "Trials");
    app.add_option("--seed", cfg.seed, "Base seed");
    app.add_option("--workers", cfg.workers, "Worker threads")->envname("DUAL_WORKERS");
    app.add_option("--output,-o", cfg.output, "Report path ('-' for stdout)");
    app.add_option("--format", cfg.format, "csv | json");
    app.add_option("--input", cfg.input, "CSV sample for single-test");
    app.add_flag("--timing", cfg.timing, "Write wall-clock seconds into reports");

    std::optional<std::string> file_text = config_text;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) file_text = detail::read_file(args[i + 1]);
        else if (args[i].rfind("--config=", 0) == 0) file_text = detail::read_file(args[i].substr(9));
    }
    if (file_text) {
        auto pre = detail::config_arguments(*file_text);
        args.insert(args.begin(), pre.begin(), pre.end());
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        throw HelpRequested{app.help()};
    } catch (const CLI::ParseError& e) {
        throw InvalidInput(e.what());
    }

    cfg.command = command;
    auto req = [](bool ok, const std::string& msg) { dual::detail::require(ok, msg); };
    req(std::find(commands().begin(), commands().end(), command) != commands().end(),
        "unknown command '" + command + "'");
    req(cfg.dataset == "blob" || cfg.dataset == "indep", "dataset must be blob or indep");
    req(!(alt && null), "--alt and --null are mutually exclusive");
    cfg.hypothesis = null || command == "type1" ? Hypothesis::Null : Hypothesis::Alt;
    req(!(alt && command == "type1"), "type1 runs under the null; drop --alt");
    req(n >= 2, "n must be >= 2");
    cfg.n = static_cast<Index>(n);
    cfg.sizes = sizes.empty() ? std::vector<Index>{cfg.n}
                              : detail::split_list<Index>(sizes, "sizes", [](const std::string& s) {
                                    return static_cast<Index>(std::stoll(s));
                                });
    for (Index s : cfg.sizes) req(s >= 2, "sizes: every entry must be >= 2");
    cfg.families = detail::split_list<Family>(families, "families",
                                              [](const std::string& s) { return parse_family(s); });
    if (lambda != "auto") {
        try {
            std::size_t used = 0;
            cfg.lambda = std::stod(lambda, &used);
            req(used == lambda.size(), "");
        } catch (const std::exception&) {
            throw InvalidInput("lambda must be 'auto' or a number >= 0");
        }
        req(*cfg.lambda >= 0.0 && std::isfinite(*cfg.lambda), "lambda must be 'auto' or a number >= 0");
    }
    parse_variant(cfg.variant);
    req(cfg.alpha > 0.0 && cfg.alpha < 1.0, "alpha must be in (0,1)");
    req(cfg.B >= 1, "B must be >= 1");
    req(cfg.R >= 1, "R must be >= 1");
    req(cfg.c >= 1, "c must be >= 1");
    req(cfg.epochs >= 0, "epochs must be >= 0");
    req(cfg.lr > 0.0 && std::isfinite(cfg.lr), "lr must be > 0");
    req(cfg.workers >= 1, "workers must be >= 1");
    req(cfg.format == "csv" || cfg.format == "json", "format must be csv or json");
    req(cfg.d >= 1, "d must be >= 1");
    if (cfg.dataset == "blob") req(cfg.d == 2, "d: blob data is two-dimensional");
    req(std::abs(cfg.rho) < 1.0, "rho must satisfy |rho| < 1");
    req(cfg.k >= -1 && cfg.k <= cfg.d, "k must be -1 or in [0, d]");
    req(cfg.noise >= 0.0, "noise must be >= 0");
    return cfg;
}

namespace detail {

class Output {
public:
    Output(const std::string& path, std::ostream& fallback) : path_(path) {
        if (path == "-") {
            os_ = &fallback;
            return;
        }
        file_.open(path);
        if (!file_) throw std::runtime_error("cannot open '" + path + "' for writing");
        os_ = &file_;
    }
    std::ostream& stream() { return *os_; }
    void close() {
        if (file_.is_open()) {
            file_.close();
            if (file_.fail()) throw std::runtime_error("write to '" + path_ + "' failed");
        }
    }

private:
    std::string path_;
    std::ofstream file_;
    std::ostream* os_ = nullptr;
};

inline std::string mask_string(const Eigen::VectorXi& m) {
    std::string s;
    for (Index i = 0; i < m.size(); ++i) s += (i ? "," : "") + std::to_string(m[i]);
    return s;
}

inline void write_reports(const RunConfig& cfg, const std::vector<PowerReport>& reports, std::ostream& out) {
    Output o(cfg.output, out);
    if (cfg.format == "json") write_report_json(o.stream(), reports);
    else write_report_csv(o.stream(), reports);
    o.close();
}

inline int single_test(const RunConfig& cfg, std::ostream& out) {
    const DatasetSpec spec = cfg.dataset_spec();
    Sample w;
    if (!cfg.input.empty()) {
        w = read_csv_file(cfg.input, spec.problem);
    } else {
        DatasetSpec s = spec;
        s.seed = mix(cfg.seed, Stream::Data);
        w = generate(s);
    }
    const TrialOutcome r = run_pipeline(w, parse_variant(cfg.variant), cfg.bench_config(), cfg.seed);
    std::ostringstream text;
    text << std::setprecision(10);
    if (cfg.format == "json") {
        nlohmann::ordered_json j;
        j["variant"] = cfg.variant;
        j["n"] = w.size() / 2;
        j["statistic"] = r.statistic;
        j["threshold"] = r.threshold;
        j["p_value"] = r.p_value;
        j["reject"] = r.reject;
        j["mask"] = std::vector<int>(r.mask.data(), r.mask.data() + r.mask.size());
        text << j.dump(2) << '\n';
    } else {
        text << "statistic=" << r.statistic << '\n'
             << "threshold=" << r.threshold << '\n'
             << "p_value=" << r.p_value << '\n'
             << "reject=" << (r.reject ? "true" : "false") << '\n'
             << "mask=" << mask_string(r.mask) << '\n';
    }
    out << text.str();
    if (cfg.output != "-") {
        Output o(cfg.output, out);
        o.stream() << text.str();
        o.close();
    }
    return 0;
}

} // namespace detail

/// Executes the configured command. Reports go to cfg.output; progress and
/// timing go to `err`.
inline int run(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    const auto start = std::chrono::steady_clock::now();
    int code = 0;
    if (cfg.command == "selfcheck") {
        code = selfcheck::run_all(out, cfg.seed == 0 ? 20240601 : cfg.seed) ? 0 : 1;
    } else if (cfg.command == "single-test") {
        code = detail::single_test(cfg, out);
    } else {
        const BenchConfig bench = cfg.bench_config();
        const DatasetSpec spec = cfg.dataset_spec();
        std::vector<PowerReport> reports;
        if (cfg.command == "type1") {
            reports = run_experiment(spec, {parse_variant(cfg.variant)}, bench, cfg.R, cfg.seed);
        } else if (cfg.command == "power") {
            reports = power_curve(spec, cfg.sizes, {parse_variant(cfg.variant)}, bench, cfg.R, cfg.seed);
        } else {
            reports = power_curve(spec, cfg.sizes, Variant::all(), bench, cfg.R, cfg.seed);
        }
        detail::write_reports(cfg, reports, out);
        if (cfg.command == "ablation" && cfg.output != "-") {
            detail::Output o(cfg.output + ".selection.csv", out);
            write_selection_csv(o.stream(), selection_diagnostics(reports));
            o.close();
        }
        for (const auto& r : reports)
            if (r.failures > 0) err << r.variant << " n=" << r.n << ": " << r.failures << " failed trial(s)\n";
    }
    err << cfg.command << " finished in " << std::fixed << std::setprecision(2)
        << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << " s\n";
    return code;
}

/// Full entry point: parse, run, map errors to exit codes.
inline int main_entry(const std::vector<std::string>& args, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
    try {
        return run(parse_config(args), out, err);
    } catch (const HelpRequested& h) {
        out << h.text;
        return 0;
    } catch (const InvalidInput& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace dual::cli
