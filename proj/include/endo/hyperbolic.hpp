#pragma once

#include "endo/natural_extension.hpp"

namespace endo {

// Chart Jacobian rescaled so that Euclidean norms of accumulated products
// equal metric norm ratios (the factor is conformal on the sphere, 1 on
// flat tori).
SmallMatrix effective_jacobian(const Endomorphism& f, const Point& p);
SmallMatrix effective_jacobian_inverse(const Endomorphism& f, const Point& p);

// Estimated stable/unstable splitting at the top point of a branch.
// Columns of eu/es are chart-orthonormal within each block; on conformal
// charts chart angles equal metric angles.
struct Splitting {
    Point base;
    BackwardBranch branch;
    SmallMatrix eu;  // dim x u
    SmallMatrix es;  // dim x s
    int dim_u = 0;
    int dim_s = 0;

    // Coordinates of a chart vector v in the (possibly oblique) frame
    // [eu | es]; returns (unstable part, stable part).
    std::pair<SmallVector, SmallVector> split_vector(const SmallVector& v) const;
};

// Eu from a frame pushed forward along the whole branch with per-step QR
// (power iteration); Es from the most-contracted right-singular directions
// of the forward Jacobian product over `fwd` steps at the top point. The
// number of singular values above 1 of the branch product fixes dim_u.
// Throws SingularPointOnBranch naming the offending level, or
// DegenerateSplitting when the joint frame drops rank.
Splitting estimate_splitting(const Endomorphism& f, const BackwardBranch& branch, int fwd = 16);

struct HyperbolicityEstimate {
    double C = 1.0;
    double lambda = 0.0;          // fitted contraction rate, < 1 when hyperbolic
    int sample_count = 0;
    double worst_violation = 0.0; // <= 0 when hyperbolic at sampled resolution
    bool hyperbolic = false;
};

// Fits the smallest C and largest lambda < 1 such that the stable and
// unstable growth inequalities hold for all sampled branches over a fixed
// frame of test vectors, all k <= horizon. Violations are reported, never
// thrown.
HyperbolicityEstimate verify_hyperbolic(const Endomorphism& f, const std::vector<BackwardBranch>& samples,
                                        int horizon);

// Finite-sum Lyapunov norm:
//   |v|^2 = sum_{j=0}^{m} lambda*^{-2j} |Df^j v_s|^2
//         + sum_{j=0}^{m} lambda*^{+2j} |(Df^j along branch)^{-1} v_u|^2
// with all norms metric norms. Guarantees sampled one-step inequalities
// |Df v|_L <= lambda* |v|_L on Es and >= (1/lambda*) |v|_L on Eu once
// lambda* sits strictly between the true contraction rate and 1.
class AdaptedNorm {
public:
    AdaptedNorm(const Endomorphism& f, double lambda_star, int depth_m);

    double lambda_star() const { return lambda_star_; }
    int depth() const { return m_; }

    // Norm of the chart vector v at the base of the splitting. Throws
    // DivergentSum when the stable terms grow, i.e. lambda* sits below the
    // true contraction rate. The splitting's branch must have depth >= m.
    double evaluate(const Splitting& split, const SmallVector& v) const;

    // One-step inequality residuals at a sampled splitting: positive values
    // are violations. Checks every Es and Eu basis vector.
    struct OneStepCheck {
        int checked = 0;
        int violations = 0;
        double worst_margin = 0.0;  // max positive residual observed
    };
    OneStepCheck verify_one_step(const Endomorphism& f, const Splitting& split) const;

private:
    const Endomorphism* f_;
    double lambda_star_;
    int m_;
};

}  // namespace endo
