#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <string>

#include "endo/util.hpp"

namespace endo {

// Ambient manifolds: flat tori T^d (d = 1, 2, 3) as [0,1)^d with wrap, and
// the Riemann sphere as the extended complex plane with the chordal metric.
struct ManifoldSpec {
    enum class Kind : std::uint8_t { Torus, Sphere };

    Kind kind = Kind::Torus;
    int dim = 1;

    static ManifoldSpec torus(int d);
    static ManifoldSpec sphere() { return ManifoldSpec{Kind::Sphere, 2}; }

    bool is_torus() const { return kind == Kind::Torus; }
    bool is_sphere() const { return kind == Kind::Sphere; }
    bool operator==(const ManifoldSpec& o) const { return kind == o.kind && dim == o.dim; }
    bool operator!=(const ManifoldSpec& o) const { return !(*this == o); }
    std::string describe() const;
};

// A point in chart coordinates. Torus coordinates are stored wrapped into
// [0,1)^d. Sphere points are either a finite complex value stored as
// (re, im) or the point at infinity, flagged explicitly so maps like
// z -> z^2 can send it around exactly.
struct Point {
    ManifoldSpec manifold;
    std::array<double, 3> x{{0.0, 0.0, 0.0}};
    bool at_infinity = false;

    std::complex<double> z() const { return {x[0], x[1]}; }
    bool exactly_equal(const Point& o) const;
};

struct TangentVector {
    Point base;
    std::array<double, 3> v{{0.0, 0.0, 0.0}};
};

// Reduce one coordinate into [0,1). 1.0 maps to 0.0.
double wrap1(double t);

// Build a wrapped torus point; rejects sphere manifolds.
Point wrap(const std::array<double, 3>& coords, const ManifoldSpec& m);
Point torus_point(std::initializer_list<double> coords);
Point sphere_point(std::complex<double> z);
Point sphere_infinity();

// Distance induced by the background metric: flat wrap-around metric on
// tori, chordal metric on the sphere.
double distance(const Point& p, const Point& q);

// Norm of a tangent vector in the chart at its base point. Flat tori use
// the Euclidean norm; the sphere uses the round conformal factor
// 2/(1+|z|^2) (in the 1/z chart at infinity).
double norm(const TangentVector& v);

// Conformal factor of the round metric in the chart that owns p.
double sphere_conformal_factor(const Point& p);

// Deterministic lexicographic order on chart coordinates (infinity sorts
// last on the sphere); used to fix child orderings in preimage trees.
bool lex_less(const Point& a, const Point& b);

// Tolerance comparison helper for tests and dedup: true when the metric
// distance is below tol.
bool approx_equal(const Point& a, const Point& b, double tol);

}  // namespace endo
