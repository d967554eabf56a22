#pragma once

#include <complex>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "endo/geometry.hpp"

namespace endo {

using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using IntMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

struct JacobianMatrix {
    Point base;
    SmallMatrix entries;
};

// Integer diagonalization S = U A V (Smith-style, d <= 3): only V and the
// diagonal |s_i| are kept, enough to enumerate the |det A| solutions of
// A x = 0 (mod Z^d) as x = V (t_1/s_1, ..., t_d/s_d).
struct IntegerDiagonalForm {
    IntMatrix v;
    std::vector<long long> s;
};
IntegerDiagonalForm integer_diagonalize(IntMatrix a);
long long integer_determinant(const IntMatrix& a);

// x -> k x (mod 1) on the circle, |k| >= 2.
struct CircleMul {
    int k = 2;
};

// x -> A x (mod Z^d) on T^d; A integer, det != 0, no eigenvalue on the unit
// circle (|1 - |lambda|| > 1e-9 at construction).
struct TorusLinear {
    IntMatrix matrix;
};

// z -> z^2 + c on the Riemann sphere.
struct Quadratic {
    std::complex<double> c{0.0, 0.0};
};

// One-harmonic Morse-Smale circle diffeomorphism g(y) = y - a sin(2 pi y),
// 0 < a < 1/(2 pi): attracting fixed point at 0, repelling at 1/2.
struct MorseSmale {
    double amplitude = 0.1;

    double lift(double y) const;       // strictly increasing lift on R
    double lift_derivative(double y) const;
    double eval(double y) const;       // wrapped
    double derivative(double y) const { return lift_derivative(y); }
    double inverse(double y) const;    // unique preimage in [0,1)
};

// F(x, y) = (k x mod 1, g(y)) on T^2.
struct ProductExpandingMS {
    int k = 2;
    MorseSmale fiber;
};

// F(x, y) = (k x mod 1, g(y) + kappa sin(2 pi x) mod 1) on T^2; kappa small
// enough that 2 pi |kappa| < (1 - g'(0)) / 2 (normal hyperbolicity margin).
struct ForcedCircle {
    int k = 2;
    MorseSmale fiber;
    double kappa = 0.02;
};

using ModelDescriptor = std::variant<CircleMul, TorusLinear, Quadratic, ProductExpandingMS, ForcedCircle>;

// A concrete endomorphism of the zoo: evaluation, chart Jacobian, complete
// preimage enumeration, degree and singular-point test. Values are immutable
// and all operations are pure, so instances may be shared across threads.
class Endomorphism {
public:
    explicit Endomorphism(ModelDescriptor descriptor);

    static Endomorphism circle_mul(int k) { return Endomorphism(CircleMul{k}); }
    static Endomorphism torus_linear(const IntMatrix& a) { return Endomorphism(TorusLinear{a}); }
    static Endomorphism quadratic(std::complex<double> c) { return Endomorphism(Quadratic{c}); }
    static Endomorphism product(int k, double amplitude) {
        return Endomorphism(ProductExpandingMS{k, MorseSmale{amplitude}});
    }
    static Endomorphism forced_circle(int k, double amplitude, double kappa) {
        return Endomorphism(ForcedCircle{k, MorseSmale{amplitude}, kappa});
    }

    const ModelDescriptor& descriptor() const { return descriptor_; }
    const ManifoldSpec& manifold() const { return manifold_; }
    int dim() const { return manifold_.dim; }
    std::string describe() const;

    Point eval(const Point& p) const;
    Point iterate(const Point& p, int n) const;
    JacobianMatrix jacobian(const Point& p) const;
    std::vector<Point> preimages(const Point& q) const;
    bool is_regular(const Point& p) const;
    int degree() const;

private:
    ModelDescriptor descriptor_;
    ManifoldSpec manifold_;
};

}  // namespace endo
