#include "test_util.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

using namespace dual;
using dual::cli::parse_config;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("dual_cli_test_" + name)).string();
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr, std::string* err = nullptr) {
    std::ostringstream o, e;
    const int code = cli::main_entry(args, o, e);
    if (out) *out = o.str();
    if (err) *err = e.str();
    return code;
}

} // namespace

TEST_CASE("parse_config fills documented defaults", "[cli]") {
    const auto cfg = parse_config({"power", "--dataset", "blob", "--n", "100", "--alt"});
    CHECK(cfg.command == "power");
    CHECK(cfg.dataset == "blob");
    CHECK(cfg.hypothesis == Hypothesis::Alt);
    CHECK(cfg.n == 100);
    CHECK(cfg.sizes == std::vector<Index>{100});
    CHECK(cfg.alpha == 0.05);
    CHECK(cfg.B == 300);
    CHECK_FALSE(cfg.lambda.has_value());
    CHECK(cfg.epochs == 200);
    CHECK(cfg.lr == 5e-4);
    CHECK(cfg.c == 6);
    CHECK(cfg.R == 200);
    CHECK(cfg.variant == "DUAL");
    CHECK(cfg.workers >= 1);
}

TEST_CASE("parse_config validation names the offending value", "[cli]") {
    CHECK_THROWS_WITH(parse_config({"power", "--alpha", "1.5"}), Catch::Matchers::ContainsSubstring("alpha must be in (0,1)"));
    CHECK_THROWS_WITH(parse_config({"power", "--dataset", "mnist"}), Catch::Matchers::ContainsSubstring("dataset"));
    CHECK_THROWS_WITH(parse_config({"explode"}), Catch::Matchers::ContainsSubstring("unknown command"));
    CHECK_THROWS_WITH(parse_config({"power", "--B", "0"}), Catch::Matchers::ContainsSubstring("B must be"));
    CHECK_THROWS_WITH(parse_config({"power", "--lambda", "-1"}), Catch::Matchers::ContainsSubstring("lambda"));
    CHECK_THROWS_WITH(parse_config({"power", "--variant", "XYZ"}), Catch::Matchers::ContainsSubstring("variant"));
    CHECK_THROWS_WITH(parse_config({"power", "--families", "gaussian,cauchy"}),
                      Catch::Matchers::ContainsSubstring("families"));
    CHECK_THROWS_AS(parse_config({"power", "--bogus", "3"}), InvalidInput);
    CHECK_THROWS_AS(parse_config({"power", "--alt", "--null"}), InvalidInput);
    CHECK_THROWS_AS(parse_config({}), InvalidInput);
}

TEST_CASE("config file values yield to flags", "[cli]") {
    SECTION("precedence") {
        const auto cfg = parse_config({"power", "--B", "500"}, std::string("B=100\nR=7\n"));
        CHECK(cfg.B == 500);
        CHECK(cfg.R == 7);
    }
    SECTION("file on disk via --config") {
        const std::string path = temp_path("config.ini");
        std::ofstream(path) << "# comment\ndataset=indep\nn=40\nlambda=0.001\nsizes=20,40\n";
        const auto cfg = parse_config({"power", "--config", path, "--n", "50"});
        CHECK(cfg.dataset == "indep");
        CHECK(cfg.n == 50);
        REQUIRE(cfg.lambda.has_value());
        CHECK(*cfg.lambda == 0.001);
        CHECK(cfg.sizes == std::vector<Index>{20, 40});
        std::remove(path.c_str());
    }
    SECTION("unknown keys are rejected by name") {
        CHECK_THROWS_WITH(parse_config({"power"}, std::string("colour=blue\n")),
                          Catch::Matchers::ContainsSubstring("colour"));
        CHECK_THROWS_AS(parse_config({"power"}, std::string("[section]\nB=3\n")), InvalidInput);
    }
    SECTION("missing config file") {
        CHECK_THROWS_AS(parse_config({"power", "--config", temp_path("does_not_exist")}), InvalidInput);
    }
}

TEST_CASE("type1 forces the null", "[cli]") {
    CHECK(parse_config({"type1"}).hypothesis == Hypothesis::Null);
    CHECK_THROWS_AS(parse_config({"type1", "--alt"}), InvalidInput);
}

TEST_CASE("exit codes", "[cli]") {
    std::string out, err;
    CHECK(run_cli({"selfcheck"}, &out) == 0);
    CHECK(out.find("FAIL") == std::string::npos);
    CHECK(run_cli({"power", "--alpha", "2"}, nullptr, &err) == 2);
    CHECK(err.find("alpha must be in (0,1)") != std::string::npos);
    CHECK(run_cli({"--help"}, &out) == 0);
    CHECK(out.find("--alpha") != std::string::npos);
    CHECK(run_cli({"type1", "--n", "4", "--R", "1", "--M", "0", "--B", "20", "-o", "/nonexistent-dir/x.csv"}) == 1);
}

TEST_CASE("single-test on identical halves", "[cli]") {
    Rng rng = make_rng(3);
    const MatrixXd x = test::normal_matrix(20, 2, rng, 3.0);
    const std::string path = temp_path("same.csv");
    write_csv_file(path, make_two_sample(x, x));
    std::string out;
    REQUIRE(run_cli({"single-test", "--input", path, "--M", "5", "--B", "50", "--c", "3"}, &out) == 0);
    CHECK(out.find("statistic=0\n") != std::string::npos);
    CHECK(out.find("reject=false") != std::string::npos);
    CHECK(out.find("mask=1,1,1") != std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("report files are byte-identical across reruns", "[cli]") {
    const std::string a = temp_path("a.json"), b = temp_path("b.json");
    const std::vector<std::string> base{"type1", "--n", "10", "--R", "4", "--M", "2", "--B", "30", "--c", "2",
                                        "--format", "json", "--seed", "5"};
    auto with_output = [&](const std::string& p) {
        auto v = base;
        v.push_back("-o");
        v.push_back(p);
        return v;
    };
    REQUIRE(run_cli(with_output(a)) == 0);
    REQUIRE(run_cli(with_output(b)) == 0);
    const std::string ta = slurp(a);
    CHECK(!ta.empty());
    CHECK(ta == slurp(b));
    const auto parsed = nlohmann::json::parse(ta);
    CHECK(parsed[0]["R"] == 4);
    CHECK(parsed[0]["hypothesis"] == "null");
    std::remove(a.c_str());
    std::remove(b.c_str());
}

TEST_CASE("ablation writes the selection table", "[cli]") {
    const std::string p = temp_path("abl.csv");
    REQUIRE(run_cli({"ablation", "--sizes", "6,8", "--R", "2", "--M", "1", "--B", "20", "--c", "2", "-o", p}) == 0);
    const std::string report = slurp(p);
    CHECK(std::count(report.begin(), report.end(), '\n') == 9);
    const std::string sel = slurp(p + ".selection.csv");
    CHECK(sel.rfind("variant,hypothesis,n,kernel,probability", 0) == 0);
    std::remove(p.c_str());
    std::remove((p + ".selection.csv").c_str());
}
