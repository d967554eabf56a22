#include "endo/models.hpp"

#include <algorithm>
#include <cmath>

namespace endo {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

IntegerDiagonalForm integer_diagonalize(IntMatrix a) {
    const int d = static_cast<int>(a.rows());
    IntMatrix v = IntMatrix::Identity(d, d);
    for (int k = 0; k < d; ++k) {
        for (;;) {
            int pr = -1, pc = -1;
            long long best = 0;
            for (int i = k; i < d; ++i)
                for (int j = k; j < d; ++j)
                    if (a(i, j) != 0 && (pr < 0 || std::llabs(a(i, j)) < best)) {
                        best = std::llabs(a(i, j));
                        pr = i;
                        pc = j;
                    }
            if (pr < 0) fail(ErrorCode::BadConfig, "integer matrix is singular");
            if (pr != k) a.row(pr).swap(a.row(k));
            if (pc != k) {
                a.col(pc).swap(a.col(k));
                v.col(pc).swap(v.col(k));
            }
            bool reduced = true;
            for (int i = k + 1; i < d; ++i) {
                long long f = a(i, k) / a(k, k);
                if (f != 0) a.row(i) -= f * a.row(k);
                if (a(i, k) != 0) reduced = false;
            }
            for (int j = k + 1; j < d; ++j) {
                long long f = a(k, j) / a(k, k);
                if (f != 0) {
                    a.col(j) -= f * a.col(k);
                    v.col(j) -= f * v.col(k);
                }
                if (a(k, j) != 0) reduced = false;
            }
            if (reduced) break;
        }
    }
    IntegerDiagonalForm out;
    out.v = v;
    out.s.resize(d);
    for (int k = 0; k < d; ++k) out.s[k] = std::llabs(a(k, k));
    return out;
}

long long integer_determinant(const IntMatrix& a) {
    const int d = static_cast<int>(a.rows());
    if (d == 1) return a(0, 0);
    if (d == 2) return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

namespace {

void sort_points(std::vector<Point>& pts) {
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return lex_less(a, b); });
}

}  // namespace

double MorseSmale::lift(double y) const { return y - amplitude * std::sin(kTwoPi * y); }

double MorseSmale::lift_derivative(double y) const { return 1.0 - amplitude * kTwoPi * std::cos(kTwoPi * y); }

double MorseSmale::eval(double y) const { return wrap1(lift(y)); }

double MorseSmale::inverse(double y) const {
    // lift is a strictly increasing bijection of [0,1] with fixed endpoints,
    // so the unique preimage of y in [0,1) is found by bisection.
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 80 && hi - lo > 1e-17; ++it) {
        double mid = 0.5 * (lo + hi);
        if (lift(mid) < y)
            lo = mid;
        else
            hi = mid;
    }
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 3; ++it) {
        double step = (lift(t) - y) / lift_derivative(t);
        t -= step;
    }
    if (t < 0.0) t = 0.0;
    if (t >= 1.0) t = std::nextafter(1.0, 0.0);
    return t;
}

namespace {

void validate_circle_k(int k) {
    if (std::abs(k) < 2) fail(ErrorCode::BadConfig, "circle factor needs |k| >= 2");
}

void validate_morse_smale(const MorseSmale& g) {
    if (!(g.amplitude > 0.0 && g.amplitude < 1.0 / kTwoPi))
        fail(ErrorCode::BadConfig, "morse_smale amplitude must lie in (0, 1/(2 pi))");
}

ManifoldSpec validate(const ModelDescriptor& d) {
    if (const auto* m = std::get_if<CircleMul>(&d)) {
        validate_circle_k(m->k);
        return ManifoldSpec::torus(1);
    }
    if (const auto* m = std::get_if<TorusLinear>(&d)) {
        const auto& a = m->matrix;
        if (a.rows() != a.cols() || a.rows() < 1 || a.rows() > 3)
            fail(ErrorCode::BadConfig, "torus_linear needs a square matrix of size 1..3");
        if (integer_determinant(a) == 0) fail(ErrorCode::BadConfig, "torus_linear matrix must have det != 0");
        Eigen::MatrixXd ad = a.cast<double>();
        Eigen::EigenSolver<Eigen::MatrixXd> es(ad);
        for (int i = 0; i < ad.rows(); ++i) {
            double mod = std::abs(es.eigenvalues()[i]);
            if (std::fabs(1.0 - mod) <= 1e-9)
                fail(ErrorCode::BadConfig, "torus_linear eigenvalue on the unit circle: |lambda| = " + std::to_string(mod));
        }
        return ManifoldSpec::torus(static_cast<int>(a.rows()));
    }
    if (std::get_if<Quadratic>(&d)) return ManifoldSpec::sphere();
    if (const auto* m = std::get_if<ProductExpandingMS>(&d)) {
        validate_circle_k(m->k);
        validate_morse_smale(m->fiber);
        return ManifoldSpec::torus(2);
    }
    const auto& m = std::get<ForcedCircle>(d);
    validate_circle_k(m.k);
    validate_morse_smale(m.fiber);
    double margin = (1.0 - m.fiber.lift_derivative(0.0)) / 2.0;
    if (!(kTwoPi * std::fabs(m.kappa) < margin))
        fail(ErrorCode::BadConfig, "forced_circle kappa too large: 2 pi |kappa| must stay below " + std::to_string(margin));
    return ManifoldSpec::torus(2);
}

std::vector<Point> circle_preimages(double q, int k, const ManifoldSpec& m) {
    std::vector<Point> out;
    int n = std::abs(k);
    out.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        Point p;
        p.manifold = m;
        p.x[0] = wrap1((q + j) / k);
        out.push_back(p);
    }
    return out;
}

}  // namespace

Endomorphism::Endomorphism(ModelDescriptor descriptor)
    : descriptor_(std::move(descriptor)), manifold_(validate(descriptor_)) {}

std::string Endomorphism::describe() const {
    if (const auto* m = std::get_if<CircleMul>(&descriptor_)) return "circle_mul(k=" + std::to_string(m->k) + ")";
    if (const auto* m = std::get_if<TorusLinear>(&descriptor_)) {
        std::string s = "torus_linear([";
        for (int i = 0; i < m->matrix.rows(); ++i) {
            if (i) s += "; ";
            for (int j = 0; j < m->matrix.cols(); ++j) {
                if (j) s += " ";
                s += std::to_string(m->matrix(i, j));
            }
        }
        return s + "])";
    }
    if (const auto* m = std::get_if<Quadratic>(&descriptor_))
        return "quadratic(c=" + std::to_string(m->c.real()) + "+" + std::to_string(m->c.imag()) + "i)";
    if (const auto* m = std::get_if<ProductExpandingMS>(&descriptor_))
        return "product(k=" + std::to_string(m->k) + ", a=" + std::to_string(m->fiber.amplitude) + ")";
    const auto& m = std::get<ForcedCircle>(descriptor_);
    return "forced_circle(k=" + std::to_string(m.k) + ", a=" + std::to_string(m.fiber.amplitude) +
           ", kappa=" + std::to_string(m.kappa) + ")";
}

Point Endomorphism::eval(const Point& p) const {
    if (p.manifold != manifold_) fail(ErrorCode::Mismatch, "eval: point on the wrong manifold");
    Point out = p;
    if (const auto* m = std::get_if<CircleMul>(&descriptor_)) {
        out.x[0] = wrap1(static_cast<double>(m->k) * p.x[0]);
        return out;
    }
    if (const auto* m = std::get_if<TorusLinear>(&descriptor_)) {
        const auto& a = m->matrix;
        for (int i = 0; i < a.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < a.cols(); ++j) s += static_cast<double>(a(i, j)) * p.x[j];
            out.x[i] = wrap1(s);
        }
        return out;
    }
    if (const auto* m = std::get_if<Quadratic>(&descriptor_)) {
        if (p.at_infinity) return sphere_infinity();
        std::complex<double> w = p.z() * p.z() + m->c;
        if (!std::isfinite(w.real()) || !std::isfinite(w.imag())) return sphere_infinity();
        return sphere_point(w);
    }
    if (const auto* m = std::get_if<ProductExpandingMS>(&descriptor_)) {
        out.x[0] = wrap1(static_cast<double>(m->k) * p.x[0]);
        out.x[1] = m->fiber.eval(p.x[1]);
        return out;
    }
    const auto& m = std::get<ForcedCircle>(descriptor_);
    out.x[0] = wrap1(static_cast<double>(m.k) * p.x[0]);
    out.x[1] = wrap1(m.fiber.lift(p.x[1]) + m.kappa * std::sin(kTwoPi * p.x[0]));
    return out;
}

Point Endomorphism::iterate(const Point& p, int n) const {
    Point q = p;
    for (int i = 0; i < n; ++i) q = eval(q);
    return q;
}

JacobianMatrix Endomorphism::jacobian(const Point& p) const {
    if (p.manifold != manifold_) fail(ErrorCode::Mismatch, "jacobian: point on the wrong manifold");
    if (p.at_infinity) fail(ErrorCode::Mismatch, "jacobian: point at infinity has no z-chart Jacobian");
    JacobianMatrix jm;
    jm.base = p;
    const int d = dim();
    jm.entries = SmallMatrix::Zero(d, d);
    if (const auto* m = std::get_if<CircleMul>(&descriptor_)) {
        jm.entries(0, 0) = static_cast<double>(m->k);
        return jm;
    }
    if (const auto* m = std::get_if<TorusLinear>(&descriptor_)) {
        jm.entries = m->matrix.cast<double>();
        return jm;
    }
    if (std::get_if<Quadratic>(&descriptor_)) {
        // Cauchy-Riemann form of d/dz (z^2 + c) = 2z.
        double u = 2.0 * p.x[0], v = 2.0 * p.x[1];
        jm.entries(0, 0) = u;
        jm.entries(0, 1) = -v;
        jm.entries(1, 0) = v;
        jm.entries(1, 1) = u;
        return jm;
    }
    if (const auto* m = std::get_if<ProductExpandingMS>(&descriptor_)) {
        jm.entries(0, 0) = static_cast<double>(m->k);
        jm.entries(1, 1) = m->fiber.derivative(p.x[1]);
        return jm;
    }
    const auto& m = std::get<ForcedCircle>(descriptor_);
    jm.entries(0, 0) = static_cast<double>(m.k);
    jm.entries(1, 0) = m.kappa * kTwoPi * std::cos(kTwoPi * p.x[0]);
    jm.entries(1, 1) = m.fiber.derivative(p.x[1]);
    return jm;
}

std::vector<Point> Endomorphism::preimages(const Point& q) const {
    if (q.manifold != manifold_) fail(ErrorCode::Mismatch, "preimages: point on the wrong manifold");
    std::vector<Point> out;
    if (const auto* m = std::get_if<CircleMul>(&descriptor_)) {
        out = circle_preimages(q.x[0], m->k, manifold_);
    } else if (const auto* m = std::get_if<TorusLinear>(&descriptor_)) {
        const auto& a = m->matrix;
        const int d = dim();
        Eigen::MatrixXd ad = a.cast<double>();
        Eigen::VectorXd qv(d);
        for (int i = 0; i < d; ++i) qv[i] = q.x[i];
        Eigen::VectorXd base = ad.partialPivLu().solve(qv);
        IntegerDiagonalForm df = integer_diagonalize(a);
        std::vector<long long> idx(static_cast<std::size_t>(d), 0);
        for (;;) {
            Eigen::VectorXd t(d);
            for (int i = 0; i < d; ++i) t[i] = static_cast<double>(idx[static_cast<std::size_t>(i)]) / static_cast<double>(df.s[static_cast<std::size_t>(i)]);
            Eigen::VectorXd h = df.v.cast<double>() * t;
            Point p;
            p.manifold = manifold_;
            for (int i = 0; i < d; ++i) p.x[i] = wrap1(base[i] + h[i]);
            out.push_back(p);
            int axis = 0;
            while (axis < d) {
                if (++idx[static_cast<std::size_t>(axis)] < df.s[static_cast<std::size_t>(axis)]) break;
                idx[static_cast<std::size_t>(axis)] = 0;
                ++axis;
            }
            if (axis == d) break;
        }
    } else if (const auto* m = std::get_if<Quadratic>(&descriptor_)) {
        if (q.at_infinity) {
            out.push_back(sphere_infinity());
        } else {
            std::complex<double> s = q.z() - m->c;
            std::complex<double> r = std::sqrt(s);
            out.push_back(sphere_point(r));
            if (std::abs(r) > 0.0) out.push_back(sphere_point(-r));  // double root at the critical value appears once
        }
    } else if (const auto* m = std::get_if<ProductExpandingMS>(&descriptor_)) {
        double y = m->fiber.inverse(q.x[1]);
        for (const Point& xp : circle_preimages(q.x[0], m->k, ManifoldSpec::torus(1))) {
            Point p;
            p.manifold = manifold_;
            p.x[0] = xp.x[0];
            p.x[1] = y;
            out.push_back(p);
        }
    } else {
        const auto& fc = std::get<ForcedCircle>(descriptor_);
        for (const Point& xp : circle_preimages(q.x[0], fc.k, ManifoldSpec::torus(1))) {
            double target = wrap1(q.x[1] - fc.kappa * std::sin(kTwoPi * xp.x[0]));
            Point p;
            p.manifold = manifold_;
            p.x[0] = xp.x[0];
            p.x[1] = fc.fiber.inverse(target);
            out.push_back(p);
        }
    }
    sort_points(out);
    return out;
}

bool Endomorphism::is_regular(const Point& p) const {
    if (std::get_if<Quadratic>(&descriptor_)) {
        // d/dz (z^2 + c) vanishes at z = 0; in the 1/z chart the map is
        // w -> w^2/(1 + c w^2) whose derivative vanishes at w = 0, so the
        // point at infinity is singular as well.
        if (p.at_infinity) return false;
        double det = 4.0 * std::norm(p.z());
        return det > 1e-12;
    }
    double det = jacobian(p).entries.determinant();
    return std::fabs(det) > 1e-12;
}

int Endomorphism::degree() const {
    if (const auto* m = std::get_if<CircleMul>(&descriptor_)) return std::abs(m->k);
    if (const auto* m = std::get_if<TorusLinear>(&descriptor_))
        return static_cast<int>(std::llabs(integer_determinant(m->matrix)));
    if (std::get_if<Quadratic>(&descriptor_)) return 2;
    if (const auto* m = std::get_if<ProductExpandingMS>(&descriptor_)) return std::abs(m->k);
    return std::abs(std::get<ForcedCircle>(descriptor_).k);
}

}  // namespace endo
