#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "endo/models.hpp"

using namespace endo;

namespace {

IntMatrix mat2(long long a, long long b, long long c, long long d) {
    IntMatrix m(2, 2);
    m << a, b, c, d;
    return m;
}

Point random_point(const ManifoldSpec& m, std::mt19937_64& rng) {
    if (m.is_sphere()) {
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        return sphere_point({u(rng), u(rng)});
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::array<double, 3> c{{u(rng), u(rng), u(rng)}};
    return wrap(c, m);
}

std::vector<Endomorphism> zoo() {
    return {Endomorphism::circle_mul(2),
            Endomorphism::circle_mul(3),
            Endomorphism::torus_linear(mat2(3, 1, 1, 1)),
            Endomorphism::quadratic({0.0, 0.0}),
            Endomorphism::quadratic({0.2, 0.2}),
            Endomorphism::product(2, 0.1),
            Endomorphism::forced_circle(2, 0.1, 0.02)};
}

// central finite differences of eval in the chart of p
SmallMatrix fd_jacobian(const Endomorphism& f, const Point& p, double h) {
    const int d = f.dim();
    SmallMatrix j(d, d);
    for (int c = 0; c < d; ++c) {
        Point hi = p, lo = p;
        hi.x[c] += h;
        lo.x[c] -= h;
        if (f.manifold().is_torus()) {
            hi.x[c] = wrap1(hi.x[c]);
            lo.x[c] = wrap1(lo.x[c]);
        }
        Point fhi = f.eval(hi), flo = f.eval(lo);
        for (int r = 0; r < d; ++r) {
            double delta = fhi.x[r] - flo.x[r];
            if (f.manifold().is_torus()) delta -= std::round(delta);
            j(r, c) = delta / (2.0 * h);
        }
    }
    return j;
}

}  // namespace

TEST_CASE("eval matches the closed forms") {
    CHECK(Endomorphism::circle_mul(2).eval(torus_point({0.3})).x[0] == doctest::Approx(0.6).epsilon(1e-15));
    Endomorphism a = Endomorphism::torus_linear(mat2(3, 1, 1, 1));
    Point img = a.eval(torus_point({0.5, 0.5}));
    CHECK(img.x[0] == doctest::Approx(0.0));
    CHECK(img.x[1] == doctest::Approx(0.0));
    Point q = Endomorphism::quadratic({0.0, 0.0}).eval(sphere_point({0.0, 2.0}));
    CHECK(q.x[0] == doctest::Approx(-4.0));
    CHECK(q.x[1] == doctest::Approx(0.0));
    CHECK(Endomorphism::quadratic({0.3, 0.0}).eval(sphere_infinity()).at_infinity);
}

TEST_CASE("jacobians match the closed forms") {
    CHECK(Endomorphism::circle_mul(2).jacobian(torus_point({0.77})).entries(0, 0) == 2.0);
    Endomorphism a = Endomorphism::torus_linear(mat2(3, 1, 1, 1));
    SmallMatrix ja = a.jacobian(torus_point({0.1, 0.2})).entries;
    CHECK(ja(0, 0) == 3.0);
    CHECK(ja(0, 1) == 1.0);
    CHECK(ja(1, 0) == 1.0);
    CHECK(ja(1, 1) == 1.0);
    SmallMatrix jq = Endomorphism::quadratic({0.0, 0.0}).jacobian(sphere_point({1.0, 1.0})).entries;
    CHECK(jq(0, 0) == doctest::Approx(2.0));
    CHECK(jq(0, 1) == doctest::Approx(-2.0));
    CHECK(jq(1, 0) == doctest::Approx(2.0));
    CHECK(jq(1, 1) == doctest::Approx(2.0));
    CHECK_THROWS_AS(Endomorphism::quadratic({0.0, 0.0}).jacobian(sphere_infinity()), Error);
}

TEST_CASE("jacobian agrees with central finite differences") {
    std::mt19937_64 rng(3);
    for (const Endomorphism& f : zoo()) {
        for (int i = 0; i < 150; ++i) {
            Point p = random_point(f.manifold(), rng);
            SmallMatrix analytic = f.jacobian(p).entries;
            SmallMatrix fd = fd_jacobian(f, p, 1e-6);
            CHECK((analytic - fd).cwiseAbs().maxCoeff() < 1e-5);
        }
    }
}

TEST_CASE("preimages: closed-form examples") {
    Endomorphism dbl = Endomorphism::circle_mul(2);
    auto pre = dbl.preimages(torus_point({0.5}));
    REQUIRE(pre.size() == 2);
    CHECK(pre[0].x[0] == doctest::Approx(0.25));
    CHECK(pre[1].x[0] == doctest::Approx(0.75));

    auto roots = Endomorphism::quadratic({0.0, 0.0}).preimages(sphere_point({-4.0, 0.0}));
    REQUIRE(roots.size() == 2);
    CHECK(std::abs(roots[0].z() - std::complex<double>{0.0, -2.0}) < 1e-12);
    CHECK(std::abs(roots[1].z() - std::complex<double>{0.0, 2.0}) < 1e-12);

    // critical value: the double root appears once
    auto crit = Endomorphism::quadratic({0.2, 0.2}).preimages(sphere_point({0.2, 0.2}));
    REQUIRE(crit.size() == 1);
    CHECK(std::abs(crit[0].z()) < 1e-15);
    auto inf = Endomorphism::quadratic({0.2, 0.2}).preimages(sphere_infinity());
    REQUIRE(inf.size() == 1);
    CHECK(inf[0].at_infinity);
}

TEST_CASE("torus_linear preimages match the brute-force oracle") {
    Endomorphism a = Endomorphism::torus_linear(mat2(3, 1, 1, 1));
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::Matrix2d ad;
    ad << 3, 1, 1, 1;
    Eigen::Matrix2d inv = ad.inverse();
    for (int trial = 0; trial < 100; ++trial) {
        Point q = torus_point({u(rng), u(rng)});
        // oracle: enumerate A^{-1}(q + k) over k in {0,1}^2 and dedupe mod Z^2
        std::vector<Point> expected;
        for (int k0 = 0; k0 < 2; ++k0)
            for (int k1 = 0; k1 < 2; ++k1) {
                Eigen::Vector2d rhs{q.x[0] + k0, q.x[1] + k1};
                Eigen::Vector2d x = inv * rhs;
                Point cand = torus_point({x[0], x[1]});
                bool dup = false;
                for (const Point& e : expected)
                    if (distance(e, cand) < 1e-9) dup = true;
                if (!dup) expected.push_back(cand);
            }
        auto got = a.preimages(q);
        REQUIRE(got.size() == 2);
        REQUIRE(expected.size() == 2);
        for (const Point& e : expected) {
            bool found = false;
            for (const Point& g : got)
                if (distance(e, g) < 1e-9) found = true;
            CHECK(found);
        }
    }
}

TEST_CASE("preimage completeness across the zoo") {
    std::mt19937_64 rng(23);
    for (const Endomorphism& f : zoo()) {
        int critical_hits = 0;
        for (int i = 0; i < 1000; ++i) {
            Point q = random_point(f.manifold(), rng);
            auto pre = f.preimages(q);
            for (const Point& r : pre) CHECK(distance(f.eval(r), q) < 1e-9);
            if (static_cast<int>(pre.size()) != f.degree()) ++critical_hits;
        }
        CHECK(critical_hits == 0);  // random points miss the measure-zero critical values
    }
}

TEST_CASE("is_regular flags the quadratic critical points and nothing else") {
    CHECK(Endomorphism::circle_mul(2).is_regular(torus_point({0.123})));
    Endomorphism q = Endomorphism::quadratic({0.0, 0.0});
    CHECK_FALSE(q.is_regular(sphere_point({0.0, 0.0})));
    CHECK_FALSE(q.is_regular(sphere_infinity()));
    CHECK(q.is_regular(sphere_point({1.0, 0.0})));
    Endomorphism p = Endomorphism::product(2, 0.1);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        Point x = torus_point({u(rng), u(rng)});
        CHECK(p.is_regular(x));
        double det = p.jacobian(x).entries.determinant();
        CHECK(det >= 2.0 * (1.0 - 0.2 * M_PI) - 1e-12);
    }
}

TEST_CASE("degree") {
    CHECK(Endomorphism::circle_mul(3).degree() == 3);
    CHECK(Endomorphism::torus_linear(mat2(3, 1, 1, 1)).degree() == 2);
    CHECK(Endomorphism::quadratic({0.1, 0.0}).degree() == 2);
    CHECK(Endomorphism::product(2, 0.1).degree() == 2);
    CHECK(Endomorphism::forced_circle(2, 0.1, 0.02).degree() == 2);
}

TEST_CASE("torus_linear eigenvalue gate") {
    // eigenvalues 2 +- sqrt(2), roots of lambda^2 - 4 lambda + 2
    Eigen::Matrix2d ad;
    ad << 3, 1, 1, 1;
    Eigen::EigenSolver<Eigen::Matrix2d> es(ad);
    double hi = std::max(std::abs(es.eigenvalues()[0]), std::abs(es.eigenvalues()[1]));
    double lo = std::min(std::abs(es.eigenvalues()[0]), std::abs(es.eigenvalues()[1]));
    CHECK(hi == doctest::Approx(2.0 + std::sqrt(2.0)).epsilon(1e-12));
    CHECK(lo == doctest::Approx(2.0 - std::sqrt(2.0)).epsilon(1e-12));
    CHECK_NOTHROW(Endomorphism::torus_linear(mat2(3, 1, 1, 1)));
    CHECK_THROWS_AS(Endomorphism::torus_linear(mat2(1, 1, 0, 1)), Error);   // eigenvalue 1
    CHECK_THROWS_AS(Endomorphism::torus_linear(mat2(2, 0, 0, 0)), Error);   // singular
}

TEST_CASE("morse-smale fiber: attracting 0, repelling 1/2, monotone inverse") {
    MorseSmale g{0.1};
    CHECK(g.derivative(0.0) == doctest::Approx(1.0 - 0.2 * M_PI).epsilon(1e-12));
    CHECK(g.derivative(0.5) == doctest::Approx(1.0 + 0.2 * M_PI).epsilon(1e-12));
    CHECK(g.derivative(0.0) < 1.0);
    CHECK(g.derivative(0.5) > 1.0);
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        double y = u(rng);
        CHECK(g.eval(g.inverse(y)) == doctest::Approx(y).epsilon(1e-12));
    }
    CHECK_THROWS_AS(Endomorphism::product(2, 0.2), Error);       // amplitude >= 1/(2 pi)
    CHECK_THROWS_AS(Endomorphism::product(2, 0.0), Error);       // amplitude must be positive
    CHECK_THROWS_AS(Endomorphism::circle_mul(1), Error);
}

TEST_CASE("forced_circle normal-hyperbolicity margin") {
    CHECK_NOTHROW(Endomorphism::forced_circle(2, 0.1, 0.02));
    // 2 pi kappa must stay below (1 - g'(0))/2 = pi a
    CHECK_THROWS_AS(Endomorphism::forced_circle(2, 0.1, 0.06), Error);
}
