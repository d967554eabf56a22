#include "endo/geometry.hpp"

#include <cmath>

namespace endo {

ManifoldSpec ManifoldSpec::torus(int d) {
    if (d < 1 || d > 3) fail(ErrorCode::BadConfig, "torus dimension must be 1, 2 or 3");
    return ManifoldSpec{Kind::Torus, d};
}

std::string ManifoldSpec::describe() const {
    if (is_torus()) return "torus(" + std::to_string(dim) + ")";
    return "riemann_sphere";
}

bool Point::exactly_equal(const Point& o) const {
    if (manifold != o.manifold) return false;
    if (manifold.is_sphere()) {
        if (at_infinity || o.at_infinity) return at_infinity == o.at_infinity;
        return x[0] == o.x[0] && x[1] == o.x[1];
    }
    for (int i = 0; i < manifold.dim; ++i)
        if (x[i] != o.x[i]) return false;
    return true;
}

double wrap1(double t) {
    double r = t - std::floor(t);
    if (r >= 1.0) r = 0.0;  // guards against rounding of tiny negatives
    return r;
}

Point wrap(const std::array<double, 3>& coords, const ManifoldSpec& m) {
    if (!m.is_torus()) fail(ErrorCode::BadConfig, "wrap: no wrap semantics on the sphere");
    Point p;
    p.manifold = m;
    for (int i = 0; i < m.dim; ++i) p.x[i] = wrap1(coords[i]);
    return p;
}

Point torus_point(std::initializer_list<double> coords) {
    std::array<double, 3> c{{0.0, 0.0, 0.0}};
    int d = 0;
    for (double v : coords) c[d++] = v;
    return wrap(c, ManifoldSpec::torus(d));
}

Point sphere_point(std::complex<double> z) {
    Point p;
    p.manifold = ManifoldSpec::sphere();
    p.x[0] = z.real();
    p.x[1] = z.imag();
    return p;
}

Point sphere_infinity() {
    Point p;
    p.manifold = ManifoldSpec::sphere();
    p.at_infinity = true;
    return p;
}

double distance(const Point& p, const Point& q) {
    if (p.manifold != q.manifold) fail(ErrorCode::Mismatch, "distance: mismatched manifolds");
    if (p.manifold.is_torus()) {
        double s = 0.0;
        for (int i = 0; i < p.manifold.dim; ++i) {
            double d = std::fabs(p.x[i] - q.x[i]);
            d = std::min(d, 1.0 - d);
            s += d * d;
        }
        return std::sqrt(s);
    }
    if (p.at_infinity && q.at_infinity) return 0.0;
    if (p.at_infinity) return 2.0 / std::sqrt(1.0 + std::norm(q.z()));
    if (q.at_infinity) return 2.0 / std::sqrt(1.0 + std::norm(p.z()));
    return 2.0 * std::abs(p.z() - q.z()) / std::sqrt((1.0 + std::norm(p.z())) * (1.0 + std::norm(q.z())));
}

double sphere_conformal_factor(const Point& p) {
    // In the chart that owns p: the z-chart at finite points, the 1/z chart
    // (w = 0) at infinity, where the factor is 2/(1+|w|^2) = 2.
    if (p.at_infinity) return 2.0;
    return 2.0 / (1.0 + std::norm(p.z()));
}

double norm(const TangentVector& v) {
    const ManifoldSpec& m = v.base.manifold;
    double s = 0.0;
    for (int i = 0; i < m.dim; ++i) s += v.v[i] * v.v[i];
    double e = std::sqrt(s);
    if (m.is_sphere()) return sphere_conformal_factor(v.base) * e;
    return e;
}

bool lex_less(const Point& a, const Point& b) {
    if (a.manifold.is_sphere()) {
        if (a.at_infinity != b.at_infinity) return !a.at_infinity;
        if (a.at_infinity) return false;
    }
    for (int i = 0; i < a.manifold.dim; ++i) {
        if (a.x[i] < b.x[i]) return true;
        if (a.x[i] > b.x[i]) return false;
    }
    return false;
}

bool approx_equal(const Point& a, const Point& b, double tol) { return distance(a, b) < tol; }

}  // namespace endo
