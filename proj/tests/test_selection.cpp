#include "test_util.hpp"

using Catch::Approx;
using namespace dual;

namespace {

Eigen::VectorXi ivec(std::initializer_list<int> v) {
    Eigen::VectorXi out(static_cast<Index>(v.size()));
    Index i = 0;
    for (int x : v) out[i++] = x;
    return out;
}

} // namespace

TEST_CASE("signum examples", "[selection]") {
    VectorXd v(3);
    v << 0.3, -2.0, 0.0;
    CHECK(signum(v).signs == ivec({1, -1, 1}));
    CHECK(signum(VectorXd::Constant(4, 0.5)).signs == Eigen::VectorXi::Ones(4));
    Rng rng = make_rng(1);
    const VectorXd r = test::normal_matrix(6, 1, rng);
    CHECK(signum(r) == signum(5.0 * r));
    CHECK(signum(-0.0 * r).signs == Eigen::VectorXi::Ones(6));
    VectorXd bad = r;
    bad[2] = std::nan("");
    CHECK_THROWS_AS(signum(bad), InvalidInput);
}

TEST_CASE("alignment examples", "[selection]") {
    const SignVector f{ivec({1, -1, -1, 1})};
    const SignVector neg{ivec({-1, 1, 1, -1})};
    CHECK(alignment(f, f).mask == Eigen::VectorXi::Ones(4));
    CHECK(alignment(f, neg).mask == Eigen::VectorXi::Zero(4));
    CHECK(alignment(SignVector{ivec({1, -1})}, SignVector{ivec({1, 1})}).mask == ivec({1, 0}));
    CHECK_THROWS_AS(alignment(f, SignVector{ivec({1})}), InvalidInput);
}

TEST_CASE("selected_stat examples", "[selection]") {
    Rng rng = make_rng(2);
    const std::vector<MatrixXd> hs{test::random_h(8, rng), test::random_h(8, rng), test::random_h(8, rng)};
    const HStack s = test::stack_of(hs);
    const MultiU u = multi_u(s);
    const SqrtInv li = sqrt_inv(estimate_null_cov(s, Ridge::relative()));
    SECTION("all-ones mask equals the aggregated statistic") {
        CHECK(selected_stat(u, li, AlignMask::all_ones(3)) == aggregated_stat(u, li));
    }
    SECTION("all-zeros mask gives zero") {
        CHECK(selected_stat(u, li, AlignMask{Eigen::VectorXi::Zero(3)}) == 0.0);
    }
    SECTION("random masks match the coordinate-wise oracle") {
        for (int m = 0; m < 8; ++m) {
            const Eigen::VectorXi mask = ivec({m & 1, (m >> 1) & 1, (m >> 2) & 1});
            const VectorXd z = li.linv * u.values;
            double expected = 0.0;
            for (int k = 0; k < 3; ++k)
                if (mask[k]) expected += 64.0 * z[k] * z[k];
            CHECK(selected_stat(u, li, AlignMask{mask}) == Approx(expected).epsilon(1e-12).margin(1e-300));
        }
    }
    SECTION("oracle with a training sign vector") {
        for (int rep = 0; rep < 10; ++rep) {
            Eigen::VectorXi f(3);
            for (int k = 0; k < 3; ++k) f[k] = (rng() >> 63) ? 1 : -1;
            const AlignMask mask = alignment(SignVector{f}, signum(whiten(u, li)));
            CHECK(test::rel(selected_stat(u, li, mask), reference::selected_stat(u.values, li.linv, f, 8)) < 1e-12);
        }
    }
    SECTION("turning a mask entry on never lowers the statistic") {
        for (int m = 0; m < 8; ++m) {
            const Eigen::VectorXi mask = ivec({m & 1, (m >> 1) & 1, (m >> 2) & 1});
            for (int k = 0; k < 3; ++k) {
                if (mask[k]) continue;
                Eigen::VectorXi more = mask;
                more[k] = 1;
                CHECK(selected_stat(u, li, AlignMask{more}) >= selected_stat(u, li, AlignMask{mask}));
            }
        }
    }
    SECTION("length mismatch is rejected") {
        CHECK_THROWS_AS(selected_stat(u, li, AlignMask::all_ones(2)), InvalidInput);
    }
}
