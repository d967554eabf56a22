#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "endo/local_manifolds.hpp"

using namespace endo;

namespace {

IntMatrix cat_matrix() {
    IntMatrix m(2, 2);
    m << 3, 1, 1, 1;
    return m;
}

bool near_row0(const Point& p) { return std::min(p.x[1], 1.0 - p.x[1]) < 1e-9; }
bool near_row_half(const Point& p) { return std::fabs(p.x[1] - 0.5) < 1e-9; }

BackwardBranch row_branch(const Endomorphism& f, double x, double y, int depth) {
    auto member = (y == 0.0) ? near_row0 : near_row_half;
    auto b = branch_within_lazy(f, torus_point({x, y}), depth, member);
    REQUIRE(b.has_value());
    REQUIRE(b->depth() == depth);
    return *b;
}

}  // namespace

TEST_CASE("in_local_stable on the product model") {
    Endomorphism f = Endomorphism::product(2, 0.1);
    Point x = torus_point({0.2, 0.0});
    CHECK(in_local_stable(f, x, x, 0.1, 30));
    CHECK(in_local_stable(f, x, torus_point({0.2, 0.05}), 0.1, 30));
    CHECK_FALSE(in_local_stable(f, x, torus_point({0.25, 0.0}), 0.1, 30));
    CHECK_THROWS_AS(in_local_stable(f, x, x, -1.0, 30), Error);
}

TEST_CASE("in_local_unstable: doubling map shadows on the same side") {
    Endomorphism f = Endomorphism::circle_mul(2);
    BackwardBranch xb = first_branch(f, torus_point({0.2}), 16);
    CHECK(in_local_unstable(f, xb, xb.top(), 0.15));
    CHECK(in_local_unstable(f, xb, torus_point({0.3}), 0.15));
    CHECK_FALSE(in_local_unstable(f, xb, torus_point({0.6}), 0.15));
}

TEST_CASE("in_local_unstable: transverse displacement on the product attractor fails") {
    Endomorphism f = Endomorphism::product(2, 0.1);
    BackwardBranch xb = row_branch(f, 0.2, 0.0, 16);
    CHECK(in_local_unstable(f, xb, torus_point({0.2, 0.05}), 0.05) == false);
    CHECK(in_local_unstable(f, xb, torus_point({0.2, 0.03}), 0.05) == false);
    // along the row the doubling-side shadow exists
    CHECK(in_local_unstable(f, xb, torus_point({0.21, 0.0}), 0.05));
}

TEST_CASE("in_local_unstable monotone in eps; stable membership monotone too") {
    Endomorphism f = Endomorphism::circle_mul(2);
    BackwardBranch xb = first_branch(f, torus_point({0.41}), 14);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int i = 0; i < 60; ++i) {
        Point y = torus_point({0.41 + u(rng)});
        bool small = in_local_unstable(f, xb, y, 0.08);
        bool large = in_local_unstable(f, xb, y, 0.2);
        if (small) CHECK(large);
    }
    Endomorphism p = Endomorphism::product(2, 0.1);
    Point x = torus_point({0.3, 0.0});
    for (int i = 0; i < 60; ++i) {
        Point y = torus_point({0.3, 0.04 * u(rng)});
        bool small = in_local_stable(p, x, y, 0.05, 20);
        bool large = in_local_stable(p, x, y, 0.15, 20);
        if (small) CHECK(large);
    }
}

TEST_CASE("depth robustness of unstable membership between depths 16 and 24") {
    Endomorphism f = Endomorphism::circle_mul(2);
    const double eps = 0.15;
    const double boundary_band = 2.0 * std::pow(0.5, 16);
    BackwardBranch b24 = first_branch(f, torus_point({0.2}), 24);
    BackwardBranch b16;
    b16.points.assign(b24.points.begin(), b24.points.begin() + 17);
    for (int i = 0; i <= 400; ++i) {
        Point y = torus_point({0.2 + (i - 200) * 0.002});
        bool at16 = in_local_unstable(f, b16, y, eps);
        bool at24 = in_local_unstable(f, b24, y, eps);
        if (at16 && !at24) {
            // a true verdict may only flip within the contraction band of the boundary
            double gap = std::fabs(distance(y, b16.top()) - eps);
            CHECK(gap <= boundary_band);
        }
    }
}

TEST_CASE("unstable disk of the doubling map is an eps arc") {
    Endomorphism f = Endomorphism::circle_mul(2);
    BackwardBranch b = first_branch(f, torus_point({0.3}), 20);
    LocalDisk disk = grow_unstable_disk(f, b, 0.1, 32);
    REQUIRE(disk.samples.size() > 16);
    double spread = 0.0;
    for (const Point& s : disk.samples) {
        double d = distance(s, disk.base);
        CHECK(d < 0.1);
        spread = std::max(spread, d);
    }
    CHECK(spread > 0.05);
    CHECK(pca_rank(disk.samples, disk.base) == 1);
}

TEST_CASE("disk dimension equals dim Eu: product rows") {
    Endomorphism f = Endomorphism::product(2, 0.1);
    BackwardBranch attractor = row_branch(f, 0.3, 0.0, 24);
    LocalDisk d1 = grow_unstable_disk(f, attractor, 0.05, 64);
    CHECK(pca_rank(d1.samples, d1.base) == 1);
    for (const Point& s : d1.samples) CHECK(std::min(s.x[1], 1.0 - s.x[1]) < 1e-6);

    BackwardBranch repeller = row_branch(f, 0.3, 0.5, 24);
    LocalDisk d2 = grow_unstable_disk(f, repeller, 0.05, 64);
    CHECK(pca_rank(d2.samples, d2.base) == 2);
}

TEST_CASE("empty disk is reported when no usable sample survives") {
    // keep the backward circle coordinate of order one, so that seeds whose
    // displacement falls below one ulp collapse onto the base point
    Endomorphism f = Endomorphism::product(2, 0.1);
    auto member = [](const Point& p) { return std::min(p.x[1], 1.0 - p.x[1]) < 1e-9 && p.x[0] >= 0.2; };
    auto b = branch_within_lazy(f, torus_point({0.7, 0.0}), 24, member);
    REQUIRE(b.has_value());
    REQUIRE(b->depth() == 24);
    CHECK_THROWS_AS(grow_unstable_disk(f, *b, 1e-12, 4), Error);
    try {
        grow_unstable_disk(f, *b, 1e-12, 4);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyDisk);
    }
}

TEST_CASE("stable contraction rate: product attractor reaches g'(0)") {
    Endomorphism f = Endomorphism::product(2, 0.1);
    double rate = stable_contraction_rate(f, torus_point({0.2, 0.0}), 64, 0.1, 30);
    CHECK(rate == doctest::Approx(1.0 - 0.2 * M_PI).epsilon(5e-3 / 0.37));
    CHECK(rate < 1.0 - 0.05);
}

TEST_CASE("stable contraction rate: torus endomorphism reaches 2 - sqrt(2)") {
    Endomorphism a = Endomorphism::torus_linear(cat_matrix());
    // past ~8 steps the pair separation along Es falls toward the rounding
    // floor and the unstable contamination takes over, so measure short
    double rate = stable_contraction_rate(a, torus_point({0.37, 0.81}), 64, 0.1, 8);
    CHECK(rate == doctest::Approx(2.0 - std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("stable rate requires a stable direction") {
    Endomorphism f = Endomorphism::circle_mul(2);
    CHECK_THROWS_AS(stable_contraction_rate(f, torus_point({0.5}), 16, 0.1, 10), Error);
}

TEST_CASE("unstable backward contraction rates") {
    Endomorphism dbl = Endomorphism::circle_mul(2);
    BackwardBranch b = first_branch(dbl, torus_point({0.3}), 24);
    CHECK(unstable_backward_contraction(dbl, b, 0.15) == doctest::Approx(0.5).epsilon(1e-6 / 0.5));

    Endomorphism a = Endomorphism::torus_linear(cat_matrix());
    BackwardBranch ba = first_branch(a, torus_point({0.41, 0.17}), 24);
    CHECK(unstable_backward_contraction(a, ba, 0.1) ==
          doctest::Approx(1.0 / (2.0 + std::sqrt(2.0))).epsilon(1e-3 / 0.29));

    Endomorphism f = Endomorphism::product(2, 0.1);
    BackwardBranch bp = row_branch(f, 0.3, 0.0, 24);
    CHECK(unstable_backward_contraction(f, bp, 0.1) == doctest::Approx(0.5).epsilon(1e-6 / 0.5));
}

TEST_CASE("backward contraction stays below 1 with margin across the zoo sets") {
    Endomorphism f = Endomorphism::product(2, 0.1);
    for (double x : {0.11, 0.52, 0.88}) {
        CHECK(unstable_backward_contraction(f, row_branch(f, x, 0.0, 24), 0.1) < 0.95);
        CHECK(unstable_backward_contraction(f, row_branch(f, x, 0.5, 24), 0.1) < 0.95);
    }
    Endomorphism q = Endomorphism::quadratic({0.0, 0.0});
    auto on_circle = [](const Point& p) { return std::fabs(std::abs(p.z()) - 1.0) < 0.05; };
    auto b = branch_within_lazy(q, sphere_point({1.0, 0.0}), 24, on_circle);
    REQUIRE(b.has_value());
    REQUIRE(b->depth() == 24);
    CHECK(unstable_backward_contraction(q, *b, 0.1) < 0.95);
}
