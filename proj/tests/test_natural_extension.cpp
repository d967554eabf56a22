#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "endo/natural_extension.hpp"

using namespace endo;

namespace {

IntMatrix cat_matrix() {
    IntMatrix m(2, 2);
    m << 3, 1, 1, 1;
    return m;
}

}  // namespace

TEST_CASE("preimage tree of the doubling map at depth 2") {
    Endomorphism f = Endomorphism::circle_mul(2);
    PreimageTree t = grow_preimage_tree(f, torus_point({0.0}), 2);
    REQUIRE(t.depth() == 2);
    REQUIRE(t.levels()[1].size() == 2);
    CHECK(t.levels()[1][0].point.x[0] == doctest::Approx(0.0));
    CHECK(t.levels()[1][1].point.x[0] == doctest::Approx(0.5));
    REQUIRE(t.levels()[2].size() == 4);
    CHECK(t.levels()[2][0].point.x[0] == doctest::Approx(0.0));
    CHECK(t.levels()[2][1].point.x[0] == doctest::Approx(0.5));
    CHECK(t.levels()[2][2].point.x[0] == doctest::Approx(0.25));
    CHECK(t.levels()[2][3].point.x[0] == doctest::Approx(0.75));
    CHECK(enumerate_branches(t).size() == 4);
}

TEST_CASE("leaf counts equal degree^N off critical values") {
    Endomorphism a = Endomorphism::torus_linear(cat_matrix());
    PreimageTree t = grow_preimage_tree(a, torus_point({0.37, 0.21}), 10);
    CHECK(t.leaf_count() == 1024);

    Endomorphism q = Endomorphism::quadratic({0.0, 0.0});
    PreimageTree tq = grow_preimage_tree(q, sphere_point({1.0, 0.0}), 3);
    CHECK(tq.leaf_count() == 8);
    for (const auto& node : tq.levels().back()) CHECK(std::abs(std::abs(node.point.z()) - 1.0) < 1e-12);
}

TEST_CASE("tree children match the preimage oracle at every node") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Endomorphism f = Endomorphism::product(2, 0.1);
    PreimageTree t = grow_preimage_tree(f, torus_point({u(rng), u(rng)}), 5);
    for (int level = 0; level + 1 <= t.depth(); ++level) {
        for (const auto& node : t.levels()[static_cast<std::size_t>(level)]) {
            auto expected = f.preimages(node.point);
            REQUIRE(node.children.size() == expected.size());
            for (std::size_t i = 0; i < expected.size(); ++i) {
                const Point& child = t.levels()[static_cast<std::size_t>(level) + 1][static_cast<std::size_t>(node.children[i])].point;
                CHECK(distance(child, expected[i]) < 1e-9);
                CHECK(distance(f.eval(child), node.point) < 1e-9);
            }
        }
    }
}

TEST_CASE("node budget fails loudly") {
    Endomorphism f = Endomorphism::circle_mul(2);
    CHECK_THROWS_AS(grow_preimage_tree(f, torus_point({0.1}), 24), Error);  // 2^24 > 1e6
    try {
        grow_preimage_tree(f, torus_point({0.1}), 24);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BudgetExceeded);
    }
}

TEST_CASE("branch enumeration order and depth-0 tree") {
    Endomorphism f = Endomorphism::circle_mul(2);
    PreimageTree t0 = grow_preimage_tree(f, torus_point({0.3}), 0);
    auto b0 = enumerate_branches(t0);
    REQUIRE(b0.size() == 1);
    CHECK(b0[0].depth() == 0);

    PreimageTree t = grow_preimage_tree(f, torus_point({0.0}), 2);
    auto branches = enumerate_branches(t);
    REQUIRE(branches.size() == 4);
    CHECK(branches[0].points[0].x[0] == doctest::Approx(0.0));
    CHECK(branches[0].points[1].x[0] == doctest::Approx(0.0));
    CHECK(branches[0].points[2].x[0] == doctest::Approx(0.0));
    for (const auto& b : branches)
        for (int i = 0; i < b.depth(); ++i) CHECK(distance(f.eval(b.at_level(i + 1)), b.at_level(i)) < 1e-9);
}

TEST_CASE("branch_within finds in-set pasts and respects the tie order") {
    Endomorphism f = Endomorphism::product(2, 0.1);
    Point x = torus_point({0.3, 0.0});
    PreimageTree t = grow_preimage_tree(f, x, 8);

    auto in_row = [](const Point& p) { return std::min(p.x[1], 1.0 - p.x[1]) < 1e-9; };
    auto branch = branch_within(t, in_row);
    REQUIRE(branch.has_value());
    CHECK(branch->depth() == 8);
    double expect = 0.3;
    for (int i = 0; i <= 8; ++i) {
        CHECK(std::min(branch->at_level(i).x[1], 1.0 - branch->at_level(i).x[1]) < 1e-9);
        CHECK(branch->at_level(i).x[0] == doctest::Approx(expect).epsilon(1e-9));
        expect = expect / 2.0;  // the first qualifying child halves the circle coordinate
    }

    auto all = branch_within(t, [](const Point&) { return true; });
    REQUIRE(all.has_value());
    CHECK(branch_distance(*all, enumerate_branches(t)[0]) == 0.0);

    auto only_root = branch_within(t, [&](const Point& p) { return distance(p, x) < 1e-12; });
    CHECK_FALSE(only_root.has_value());
}

TEST_CASE("lazy branch search agrees with the materialized tree search") {
    Endomorphism f = Endomorphism::product(2, 0.1);
    Point x = torus_point({0.3, 0.0});
    PreimageTree t = grow_preimage_tree(f, x, 8);
    auto member = [](const Point& p) { return p.x[1] < 0.25 || p.x[1] > 0.75; };
    auto eager = branch_within(t, member);
    auto lazy = branch_within_lazy(f, x, 8, member);
    REQUIRE(eager.has_value());
    REQUIRE(lazy.has_value());
    REQUIRE(eager->depth() == lazy->depth());
    CHECK(branch_distance(*eager, *lazy) == 0.0);
}

TEST_CASE("shift_forward drops the deepest point and prepends the image") {
    Endomorphism f = Endomorphism::circle_mul(2);
    BackwardBranch b;
    b.points = {torus_point({0.5}), torus_point({0.25}), torus_point({0.125})};
    BackwardBranch s = shift_forward(f, b);
    REQUIRE(s.depth() == 2);
    CHECK(s.points[0].x[0] == doctest::Approx(0.0));
    CHECK(s.points[1].x[0] == doctest::Approx(0.5));
    CHECK(s.points[2].x[0] == doctest::Approx(0.25));

    BackwardBranch single;
    single.points = {torus_point({0.3})};
    BackwardBranch s1 = shift_forward(f, single);
    REQUIRE(s1.depth() == 0);
    CHECK(s1.points[0].x[0] == doctest::Approx(0.6));
}

TEST_CASE("extend below, drop the top, shift forward: copied entries are exact") {
    std::mt19937_64 rng(59);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Endomorphism> models{Endomorphism::circle_mul(2), Endomorphism::circle_mul(3),
                                     Endomorphism::torus_linear(cat_matrix()), Endomorphism::product(2, 0.1)};
    for (const Endomorphism& f : models) {
        for (int trial = 0; trial < 250; ++trial) {
            std::array<double, 3> c{{u(rng), u(rng), u(rng)}};
            Point x = wrap(c, f.manifold());
            BackwardBranch b = first_branch(f, x, 6);
            auto deeper = f.preimages(b.deepest());
            const Point& extension = deeper[static_cast<std::size_t>(trial) % deeper.size()];
            BackwardBranch dropped;  // (x_-1, ..., x_-6, extension)
            dropped.points.assign(b.points.begin() + 1, b.points.end());
            dropped.points.push_back(extension);
            BackwardBranch back = shift_forward(f, dropped);
            REQUIRE(back.depth() == b.depth());
            for (int i = 1; i <= back.depth(); ++i) CHECK(back.at_level(i).exactly_equal(b.at_level(i)));
            CHECK(distance(back.top(), b.top()) < 1e-9);
        }
    }
}

TEST_CASE("branch_distance is a sup metric over levels") {
    Endomorphism f = Endomorphism::circle_mul(2);
    BackwardBranch a, b;
    a.points = {torus_point({0.5}), torus_point({0.25})};
    b.points = {torus_point({0.5}), torus_point({0.75})};
    CHECK(branch_distance(a, a) == 0.0);
    CHECK(branch_distance(a, b) == doctest::Approx(0.5));
    CHECK(branch_distance(a, b) == branch_distance(b, a));
    BackwardBranch c;
    c.points = {torus_point({0.5})};
    CHECK_THROWS_AS(branch_distance(a, c), Error);
}
