#include "test_util.hpp"

#include <algorithm>
#include <sstream>

using Catch::Approx;
using namespace dual;

namespace {

DatasetSpec blob_spec(Hypothesis h, Index n, std::uint64_t seed) {
    DatasetSpec s;
    s.problem = Problem::TwoSample;
    s.hypothesis = h;
    s.n = n;
    s.seed = seed;
    return s;
}

DatasetSpec indep_spec(Hypothesis h, Index n, int d, std::uint64_t seed) {
    DatasetSpec s;
    s.problem = Problem::Independence;
    s.hypothesis = h;
    s.n = n;
    s.d = d;
    s.seed = seed;
    return s;
}

// |mean of a*b| against 4 standard errors, for centred columns.
bool cross_moment_vanishes(const VectorXd& a, const VectorXd& b) {
    const VectorXd ac = a.array() - a.mean(), bc = b.array() - b.mean();
    const VectorXd prod = ac.cwiseProduct(bc);
    const double mean = prod.mean();
    const double sd = std::sqrt((prod.array() - mean).square().sum() / static_cast<double>(prod.size() - 1));
    return std::abs(mean) < 4.0 * sd / std::sqrt(static_cast<double>(prod.size()));
}

} // namespace

TEST_CASE("gen_blob", "[datagen]") {
    SECTION("size and reproducibility") {
        const Sample a = gen_blob(blob_spec(Hypothesis::Alt, 30, 5));
        const Sample b = gen_blob(blob_spec(Hypothesis::Alt, 30, 5));
        CHECK(a.size() == 60);
        CHECK(a.first.dim() == 2);
        CHECK(a.first.x == b.first.x);
        CHECK(a.first.y == b.first.y);
        CHECK(a.first.x != gen_blob(blob_spec(Hypothesis::Alt, 30, 6)).first.x);
    }
    SECTION("rho = 0 under the alternative reproduces the null generator") {
        DatasetSpec alt = blob_spec(Hypothesis::Alt, 40, 7);
        alt.rho = 0.0;
        const Sample a = gen_blob(alt);
        const Sample n = gen_blob(blob_spec(Hypothesis::Null, 40, 7));
        CHECK(a.first.x == n.first.x);
        CHECK(a.first.y == n.first.y);
    }
    SECTION("null: x and y have matching moments") {
        const Sample w = gen_blob(blob_spec(Hypothesis::Null, 10000, 8));
        for (int j = 0; j < 2; ++j) {
            const VectorXd dx = w.first.x.col(j).array() - w.first.y.col(j).array();
            const double sd = std::sqrt((dx.array() - dx.mean()).square().sum() / (dx.size() - 1));
            CHECK(std::abs(dx.mean()) < 4.0 * sd / std::sqrt(static_cast<double>(dx.size())));
        }
        CHECK(cross_moment_vanishes(w.first.y.col(0), w.first.y.col(1)));
    }
    SECTION("alternative: checkerboard correlation inside the modes") {
        const Sample w = gen_blob(blob_spec(Hypothesis::Alt, 20000, 9));
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                std::vector<double> u, v;
                for (Index r = 0; r < w.size(); ++r) {
                    const double a = w.first.y(r, 0) - 5.0 * i, b = w.first.y(r, 1) - 5.0 * j;
                    if (std::abs(a) < 2.5 && std::abs(b) < 2.5) {
                        u.push_back(a);
                        v.push_back(b);
                    }
                }
                const VectorXd uu = VectorXd::Map(u.data(), static_cast<Index>(u.size()));
                const VectorXd vv = VectorXd::Map(v.data(), static_cast<Index>(v.size()));
                const VectorXd uc = uu.array() - uu.mean(), vc = vv.array() - vv.mean();
                const double cor = uc.dot(vc) / std::sqrt(uc.squaredNorm() * vc.squaredNorm());
                const double sign = (i + j) % 2 == 0 ? 1.0 : -1.0;
                CHECK(sign * cor > 0.3);
            }
        }
    }
    SECTION("invalid parameters") {
        DatasetSpec s = blob_spec(Hypothesis::Alt, 10, 1);
        s.rho = 1.0;
        CHECK_THROWS_AS(gen_blob(s), InvalidInput);
        s.rho = 0.5;
        s.d = 3;
        CHECK_THROWS_AS(gen_blob(s), InvalidInput);
    }
}

TEST_CASE("gen_indep", "[datagen]") {
    SECTION("stream and quadruples") {
        const IndepData data = gen_indep(indep_spec(Hypothesis::Alt, 25, 4, 3));
        CHECK(data.x.rows() == 100);
        CHECK(data.y.cols() == 4);
        CHECK(data.quads.size() == 50);
        CHECK(data.quads.first.x == data.x.topRows(50));
        CHECK(data.quads.first.y == data.x.bottomRows(50));
        CHECK(data.quads.second.x == data.y.topRows(50));
        CHECK(data.quads.second.y == data.y.bottomRows(50));
    }
    SECTION("a = 0 reproduces the null generator") {
        DatasetSpec alt = indep_spec(Hypothesis::Alt, 20, 3, 4);
        alt.a = 0.0;
        const IndepData a = gen_indep(alt);
        const IndepData n = gen_indep(indep_spec(Hypothesis::Null, 20, 3, 4));
        CHECK(a.x == n.x);
        CHECK(a.y == n.y);
    }
    SECTION("pairing drops an odd trailing observation") {
        Rng rng = make_rng(1);
        const MatrixXd x = test::normal_matrix(7, 2, rng), y = test::normal_matrix(7, 2, rng);
        const Sample q = pair_quads(x, y);
        CHECK(q.size() == 3);
        CHECK(q.first.y.row(2) == x.row(5));
        CHECK(q.second.y.row(2) == y.row(5));
    }
    SECTION("alternative: linear perturbation on the first k coordinates only") {
        DatasetSpec s = indep_spec(Hypothesis::Alt, 5000, 5, 6);
        s.a = 0.7;
        const IndepData d = gen_indep(s);
        for (int j = 0; j < 5; ++j) {
            const double slope = d.x.col(j).dot(d.y.col(j)) / d.x.col(j).squaredNorm();
            if (j < 3) CHECK(slope == Approx(0.7).margin(0.05));
            else CHECK(cross_moment_vanishes(d.x.col(j), d.y.col(j)));
        }
    }
    SECTION("null: x and y are uncorrelated in every coordinate pair") {
        const IndepData d = gen_indep(indep_spec(Hypothesis::Null, 5000, 3, 7));
        int violations = 0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) violations += cross_moment_vanishes(d.x.col(i), d.y.col(j)) ? 0 : 1;
        CHECK(violations == 0);
    }
    SECTION("invalid k") {
        DatasetSpec s = indep_spec(Hypothesis::Alt, 10, 2, 1);
        s.k = 3;
        CHECK_THROWS_AS(gen_indep(s), InvalidInput);
        s.k = -2;
        CHECK_THROWS_AS(gen_indep(s), InvalidInput);
        s.k = 0;
        CHECK_NOTHROW(gen_indep(s));
    }
}

TEST_CASE("split_train_test", "[datagen]") {
    SECTION("four items") {
        const Sample w = gen_blob(blob_spec(Hypothesis::Null, 2, 1));
        const auto [tr, te] = split_train_test(w, 3);
        CHECK(tr.size() == 2);
        CHECK(te.size() == 2);
    }
    SECTION("union is the input multiset and the split is seeded") {
        for (Problem problem : {Problem::TwoSample, Problem::Independence}) {
            const Sample w = problem == Problem::TwoSample ? gen_blob(blob_spec(Hypothesis::Alt, 15, 2))
                                                           : gen_indep(indep_spec(Hypothesis::Alt, 15, 2, 2)).quads;
            const auto [tr, te] = split_train_test(w, 11);
            const auto [tr2, te2] = split_train_test(w, 11);
            CHECK(tr.first.x == tr2.first.x);
            CHECK(te.first.y == te2.first.y);
            std::vector<std::vector<double>> in, out;
            auto key = [](const Sample& s, Index i) {
                std::vector<double> k;
                for (Index j = 0; j < s.first.dim(); ++j) {
                    k.push_back(s.first.x(i, j));
                    k.push_back(s.first.y(i, j));
                }
                if (s.problem == Problem::Independence)
                    for (Index j = 0; j < s.second.dim(); ++j) {
                        k.push_back(s.second.x(i, j));
                        k.push_back(s.second.y(i, j));
                    }
                return k;
            };
            for (Index i = 0; i < w.size(); ++i) in.push_back(key(w, i));
            for (Index i = 0; i < tr.size(); ++i) out.push_back(key(tr, i));
            for (Index i = 0; i < te.size(); ++i) out.push_back(key(te, i));
            std::sort(in.begin(), in.end());
            std::sort(out.begin(), out.end());
            CHECK(in == out);
        }
    }
    SECTION("odd or tiny inputs are rejected") {
        Rng rng = make_rng(4);
        CHECK_THROWS_AS(split_train_test(make_two_sample(test::normal_matrix(5, 2, rng), test::normal_matrix(5, 2, rng)), 1),
                        InvalidInput);
        CHECK_THROWS_AS(split_train_test(make_two_sample(test::normal_matrix(2, 2, rng), test::normal_matrix(2, 2, rng)), 1),
                        InvalidInput);
    }
}

TEST_CASE("delimited text round trip", "[datagen]") {
    SECTION("two-sample") {
        const Sample w = gen_blob(blob_spec(Hypothesis::Alt, 6, 12));
        std::stringstream ss;
        write_csv(ss, w);
        const std::string text = ss.str();
        CHECK(text.rfind("x0,x1,y0,y1\n", 0) == 0);
        const Sample r = read_csv(ss, Problem::TwoSample);
        CHECK(r.first.x == w.first.x);
        CHECK(r.first.y == w.first.y);
    }
    SECTION("independence keeps the raw stream layout") {
        const IndepData d = gen_indep(indep_spec(Hypothesis::Alt, 5, 3, 13));
        std::stringstream ss;
        write_csv(ss, d.quads);
        const Sample r = read_csv(ss, Problem::Independence);
        CHECK(r.first.x == d.quads.first.x);
        CHECK(r.first.y == d.quads.first.y);
        CHECK(r.second.x == d.quads.second.x);
        CHECK(r.second.y == d.quads.second.y);
    }
    SECTION("malformed input is rejected") {
        std::stringstream bad1("x0,z1\n1,2\n");
        CHECK_THROWS_AS(read_csv(bad1, Problem::TwoSample), InvalidInput);
        std::stringstream bad2("x0,y0\n1,abc\n");
        CHECK_THROWS_AS(read_csv(bad2, Problem::TwoSample), InvalidInput);
        std::stringstream bad3("x0,y0\n1\n");
        CHECK_THROWS_AS(read_csv(bad3, Problem::TwoSample), InvalidInput);
        std::stringstream empty("");
        CHECK_THROWS_AS(read_csv(empty, Problem::TwoSample), InvalidInput);
    }
}
