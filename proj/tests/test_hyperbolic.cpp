#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "endo/hyperbolic.hpp"

using namespace endo;

namespace {

IntMatrix cat_matrix() {
    IntMatrix m(2, 2);
    m << 3, 1, 1, 1;
    return m;
}

// sine of the angle between lines: robust for angles far below sqrt(eps),
// where acos of the dot product saturates.
double col_angle(const SmallVector& a, const SmallVector& b) {
    SmallVector u = a.normalized(), v = b.normalized();
    if (u.dot(v) < 0.0) v = -v;
    return (u - v).norm();
}

bool near_row(const Point& p) { return std::min(p.x[1], 1.0 - p.x[1]) < 1e-9; }

BackwardBranch product_row_branch(const Endomorphism& f, double x, int depth) {
    auto b = branch_within_lazy(f, torus_point({x, 0.0}), depth, near_row);
    REQUIRE(b.has_value());
    REQUIRE(b->depth() == depth);
    return *b;
}

}  // namespace

TEST_CASE("splitting of the torus endomorphism matches the eigenanalysis") {
    Endomorphism a = Endomorphism::torus_linear(cat_matrix());
    BackwardBranch b = first_branch(a, torus_point({0.21, 0.43}), 24);
    Splitting s = estimate_splitting(a, b, 16);
    REQUIRE(s.dim_u == 1);
    REQUIRE(s.dim_s == 1);
    SmallVector eu_expected(2), es_expected(2);
    eu_expected << 1.0, std::sqrt(2.0) - 1.0;            // eigenvector for 2 + sqrt(2)
    es_expected << 1.0, -(1.0 + std::sqrt(2.0));         // eigenvector for 2 - sqrt(2)
    CHECK(col_angle(s.eu.col(0), eu_expected) < 1e-10);
    CHECK(col_angle(s.es.col(0), es_expected) < 1e-10);
    CHECK(std::fabs(s.eu.col(0)[0]) == doctest::Approx(0.92388).epsilon(1e-4));
    CHECK(std::fabs(s.eu.col(0)[1]) == doctest::Approx(0.38268).epsilon(1e-4));
}

TEST_CASE("splitting of the product model on the attractor row is diagonal") {
    Endomorphism f = Endomorphism::product(2, 0.1);
    BackwardBranch b = product_row_branch(f, 0.3, 24);
    Splitting s = estimate_splitting(f, b, 16);
    REQUIRE(s.dim_u == 1);
    REQUIRE(s.dim_s == 1);
    SmallVector ex(2), ey(2);
    ex << 1.0, 0.0;
    ey << 0.0, 1.0;
    CHECK(col_angle(s.eu.col(0), ex) < 1e-10);
    CHECK(col_angle(s.es.col(0), ey) < 1e-10);
}

TEST_CASE("circle_mul splits as type (1,0)") {
    Endomorphism f = Endomorphism::circle_mul(2);
    BackwardBranch b = first_branch(f, torus_point({0.37}), 16);
    Splitting s = estimate_splitting(f, b, 12);
    CHECK(s.dim_u == 1);
    CHECK(s.dim_s == 0);
    CHECK(s.es.cols() == 0);
}

TEST_CASE("splitting errors: singular branch points and preconditions") {
    Endomorphism q = Endomorphism::quadratic({0.0, 0.0});
    BackwardBranch at_zero;
    at_zero.points = {sphere_point({0.0, 0.0}), sphere_point({0.0, 0.0})};
    CHECK_THROWS_AS(estimate_splitting(q, at_zero, 8), Error);
    try {
        estimate_splitting(q, at_zero, 8);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SingularPointOnBranch);
        CHECK(std::string(e.what()).find("level") != std::string::npos);
    }
    Endomorphism f = Endomorphism::circle_mul(2);
    BackwardBranch too_short;
    too_short.points = {torus_point({0.1})};
    CHECK_THROWS_AS(estimate_splitting(f, too_short, 8), Error);
}

TEST_CASE("Df carries the estimated splitting one step forward (Definition-style invariance)") {
    std::vector<Endomorphism> models{Endomorphism::torus_linear(cat_matrix()), Endomorphism::product(2, 0.1),
                                     Endomorphism::forced_circle(2, 0.1, 0.02)};
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const Endomorphism& f : models) {
        int checked = 0;
        for (int trial = 0; trial < 100 && checked < 25; ++trial) {
            Point x;
            std::optional<BackwardBranch> b;
            if (std::get_if<TorusLinear>(&f.descriptor())) {
                x = torus_point({u(rng), u(rng)});
                b = first_branch(f, x, 25);
            } else {
                // points on/near the invariant rows carry in-set branches
                x = torus_point({u(rng), 0.0});
                Point settled = f.iterate(x, 24);
                if (std::min(settled.x[1], 1.0 - settled.x[1]) >= 0.08) continue;
                b = branch_within_lazy(f, settled, 25, [](const Point& p) {
                    return std::min(p.x[1], 1.0 - p.x[1]) < 0.08;
                });
            }
            if (!b || b->depth() < 25) continue;
            ++checked;
            BackwardBranch sub;
            sub.points.assign(b->points.begin() + 1, b->points.end());  // branch of x_-1
            Splitting below = estimate_splitting(f, sub, 16);
            Splitting here = estimate_splitting(f, *b, 16);
            SmallMatrix j = f.jacobian(sub.top()).entries;
            for (int c = 0; c < below.dim_s; ++c)
                CHECK(col_angle(j * below.es.col(c), here.es.col(c)) < 1e-4);
            for (int c = 0; c < below.dim_u; ++c)
                CHECK(col_angle(j * below.eu.col(c), here.eu.col(c)) < 1e-4);
        }
        CHECK(checked >= 20);
    }
}

TEST_CASE("Es is branch-independent; Eu agrees only for constant coefficients") {
    Endomorphism f = Endomorphism::product(2, 0.1);
    Point x = torus_point({0.3, 0.5});
    PreimageTree t = grow_preimage_tree(f, x, 10);
    auto branches = enumerate_branches(t);
    REQUIRE(branches.size() == 1024);
    Splitting s0 = estimate_splitting(f, branches.front(), 16);
    Splitting s1 = estimate_splitting(f, branches.back(), 16);
    REQUIRE(s0.dim_s == s1.dim_s);
    for (int c = 0; c < s0.dim_s; ++c) CHECK(col_angle(s0.es.col(c), s1.es.col(c)) < 1e-6);

    Endomorphism a = Endomorphism::torus_linear(cat_matrix());
    PreimageTree ta = grow_preimage_tree(a, torus_point({0.4, 0.7}), 10);
    auto ba = enumerate_branches(ta);
    Splitting a0 = estimate_splitting(a, ba.front(), 16);
    Splitting a1 = estimate_splitting(a, ba.back(), 16);
    CHECK(col_angle(a0.es.col(0), a1.es.col(0)) < 1e-6);
    CHECK(col_angle(a0.eu.col(0), a1.eu.col(0)) < 1e-6);  // constant coefficients only
}

TEST_CASE("verify_hyperbolic fits the exact constants of the torus endomorphism") {
    Endomorphism a = Endomorphism::torus_linear(cat_matrix());
    std::vector<BackwardBranch> samples;
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 12; ++i) samples.push_back(first_branch(a, torus_point({u(rng), u(rng)}), 24));
    HyperbolicityEstimate est = verify_hyperbolic(a, samples, 16);
    CHECK(est.hyperbolic);
    CHECK(est.lambda == doctest::Approx(2.0 - std::sqrt(2.0)).epsilon(2e-6));
    CHECK(est.C == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(est.worst_violation <= 1e-12);
    CHECK(est.sample_count == 12);
}

TEST_CASE("verify_hyperbolic on pure expansion reports lambda = 1/k") {
    Endomorphism f = Endomorphism::circle_mul(3);
    std::vector<BackwardBranch> samples{first_branch(f, torus_point({0.11}), 20),
                                        first_branch(f, torus_point({0.73}), 20)};
    HyperbolicityEstimate est = verify_hyperbolic(f, samples, 16);
    CHECK(est.hyperbolic);
    CHECK(est.lambda == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(est.C == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("verify_hyperbolic on the product attractor row: rate max(1/2, g'(0)) = 1/2") {
    Endomorphism f = Endomorphism::product(2, 0.1);
    std::vector<BackwardBranch> samples;
    for (double x : {0.1, 0.35, 0.62, 0.81}) samples.push_back(product_row_branch(f, x, 24));
    HyperbolicityEstimate est = verify_hyperbolic(f, samples, 16);
    CHECK(est.hyperbolic);
    CHECK(est.lambda == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("adapted norm satisfies one-step inequalities (constant coefficients)") {
    Endomorphism a = Endomorphism::torus_linear(cat_matrix());
    AdaptedNorm norm(a, 0.9, 12);
    std::mt19937_64 rng(83);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int violations = 0, checked = 0;
    for (int i = 0; i < 50; ++i) {
        BackwardBranch b = first_branch(a, torus_point({u(rng), u(rng)}), 24);
        Splitting s = estimate_splitting(a, b, 16);
        auto check = norm.verify_one_step(a, s);
        checked += check.checked;
        violations += check.violations;
    }
    CHECK(checked == 100);
    CHECK(violations == 0);
}

TEST_CASE("adapted norm on the product rows: lambda* = 0.8, m = 8, no violations") {
    Endomorphism f = Endomorphism::product(2, 0.1);
    AdaptedNorm norm(f, 0.8, 8);
    int violations = 0, checked = 0;
    for (int i = 0; i < 200; ++i) {
        double x = (i + 0.5) / 200.0;
        BackwardBranch b = product_row_branch(f, x, 24);
        Splitting s = estimate_splitting(f, b, 16);
        auto check = norm.verify_one_step(f, s);
        checked += check.checked;
        violations += check.violations;
    }
    CHECK(checked == 400);
    CHECK(violations == 0);
}

TEST_CASE("adapted norm basics: zero vector, homogeneity, equivalence bound") {
    Endomorphism a = Endomorphism::torus_linear(cat_matrix());
    AdaptedNorm norm(a, 0.9, 12);
    BackwardBranch b = first_branch(a, torus_point({0.15, 0.65}), 24);
    Splitting s = estimate_splitting(a, b, 16);
    SmallVector zero = SmallVector::Zero(2);
    CHECK(norm.evaluate(s, zero) == 0.0);

    std::mt19937_64 rng(97);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double k_ratio = 1.0;
    for (int i = 0; i < 2000; ++i) {
        SmallVector v(2);
        v << u(rng), u(rng);
        if (v.norm() < 1e-3) continue;
        double n1 = norm.evaluate(s, v);
        double n2 = norm.evaluate(s, SmallVector(2.5 * v));
        CHECK(n2 == doctest::Approx(2.5 * n1).epsilon(1e-12));
        CHECK(n1 > 0.0);
        double ratio = n1 / v.norm();
        k_ratio = std::max({k_ratio, ratio, 1.0 / ratio});
    }
    CHECK(k_ratio < 50.0);  // equivalent to the background norm with a finite constant

    CHECK_THROWS_AS(AdaptedNorm(a, 1.2, 12), Error);
    CHECK_THROWS_AS(AdaptedNorm(a, 0.9, 0), Error);
}

TEST_CASE("adapted norm rejects lambda* below the true contraction rate") {
    Endomorphism a = Endomorphism::torus_linear(cat_matrix());
    AdaptedNorm norm(a, 0.3, 12);  // true stable rate is 2 - sqrt(2) = 0.586
    BackwardBranch b = first_branch(a, torus_point({0.25, 0.35}), 24);
    Splitting s = estimate_splitting(a, b, 16);
    SmallVector stable = s.es.col(0);
    CHECK_THROWS_AS(norm.evaluate(s, stable), Error);
    try {
        norm.evaluate(s, stable);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DivergentSum);
    }
}

TEST_CASE("one-step factor gap between unstable and stable directions exceeds 1.5") {
    struct SetCase {
        Endomorphism f;
        std::function<BackwardBranch(double)> branch;
    };
    Endomorphism prod = Endomorphism::product(2, 0.1);
    Endomorphism cat = Endomorphism::torus_linear(cat_matrix());
    std::vector<SetCase> cases;
    cases.push_back({prod, [&](double x) { return product_row_branch(prod, x, 24); }});
    cases.push_back({cat, [&](double x) { return first_branch(cat, torus_point({x, wrap1(3.0 * x)}), 24); }});
    for (const auto& sc : cases) {
        for (double x : {0.12, 0.41, 0.77}) {
            BackwardBranch b = sc.branch(x);
            Splitting s = estimate_splitting(sc.f, b, 16);
            SmallMatrix j = effective_jacobian(sc.f, s.base);
            double min_unstable = std::numeric_limits<double>::infinity();
            double max_stable = 0.0;
            for (int c = 0; c < s.dim_u; ++c) min_unstable = std::min(min_unstable, (j * s.eu.col(c)).norm());
            for (int c = 0; c < s.dim_s; ++c) max_stable = std::max(max_stable, (j * s.es.col(c)).norm());
            if (s.dim_s == 0) max_stable = 1.0;
            CHECK(min_unstable / max_stable > 1.5);
        }
    }
}
