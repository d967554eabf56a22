#include "endo/hyperbolic.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace endo {
namespace {

double metric_scale(const Endomorphism& f, const Point& p) {
    if (!p.manifold.is_sphere()) return 1.0;
    return sphere_conformal_factor(f.eval(p)) / sphere_conformal_factor(p);
}

double conformal_or_one(const Point& p) { return p.manifold.is_sphere() ? sphere_conformal_factor(p) : 1.0; }

void require_regular(const Endomorphism& f, const Point& p, int level) {
    if (f.is_regular(p)) return;
    fail(ErrorCode::SingularPointOnBranch,
         "singular point on branch at level " + std::to_string(level) + " (" + f.describe() + ")");
}

}  // namespace

SmallMatrix effective_jacobian(const Endomorphism& f, const Point& p) {
    return metric_scale(f, p) * f.jacobian(p).entries;
}

SmallMatrix effective_jacobian_inverse(const Endomorphism& f, const Point& p) {
    SmallMatrix j = effective_jacobian(f, p);
    return j.inverse();
}

std::pair<SmallVector, SmallVector> Splitting::split_vector(const SmallVector& v) const {
    const int d = dim_u + dim_s;
    SmallMatrix frame(d, d);
    if (dim_u > 0) frame.leftCols(dim_u) = eu;
    if (dim_s > 0) frame.rightCols(dim_s) = es;
    SmallVector coords = frame.partialPivLu().solve(v);
    SmallVector vu = SmallVector::Zero(d), vs = SmallVector::Zero(d);
    if (dim_u > 0) vu = eu * coords.head(dim_u);
    if (dim_s > 0) vs = es * coords.tail(dim_s);
    return {vu, vs};
}

Splitting estimate_splitting(const Endomorphism& f, const BackwardBranch& branch, int fwd) {
    if (branch.depth() < 1) fail(ErrorCode::BadConfig, "estimate_splitting: branch depth must be >= 1");
    if (fwd < 1) fail(ErrorCode::BadConfig, "estimate_splitting: fwd must be >= 1");
    const int d = f.dim();
    const int depth = branch.depth();
    for (int i = 0; i <= depth; ++i) require_regular(f, branch.at_level(i), -i);

    // Unstable directions: push an orthonormal frame forward along the
    // branch, re-orthonormalizing each step; accumulated R diagonals give
    // the per-direction growth.
    SmallMatrix q = SmallMatrix::Identity(d, d);
    SmallVector log_growth = SmallVector::Zero(d);
    for (int i = depth; i >= 1; --i) {
        SmallMatrix m = effective_jacobian(f, branch.at_level(i)) * q;
        Eigen::HouseholderQR<SmallMatrix> qr(m);
        SmallMatrix r = qr.matrixQR().template triangularView<Eigen::Upper>();
        q = qr.householderQ() * SmallMatrix::Identity(d, d);
        for (int j = 0; j < d; ++j) log_growth[j] += std::log(std::fabs(r(j, j)));
    }
    int dim_u = 0;
    for (int j = 0; j < d; ++j)
        if (log_growth[j] > 0.0) ++dim_u;
    const int dim_s = d - dim_u;

    // Stable directions: most-contracted right-singular directions of the
    // forward Jacobian product at the top point.
    SmallMatrix p = SmallMatrix::Identity(d, d);
    Point cur = branch.top();
    for (int i = 0; i < fwd; ++i) {
        require_regular(f, cur, i);
        p = effective_jacobian(f, cur) * p;
        cur = f.eval(cur);
    }
    Eigen::JacobiSVD<SmallMatrix> svd(p, Eigen::ComputeFullV);

    Splitting out;
    out.base = branch.top();
    out.branch = branch;
    out.dim_u = dim_u;
    out.dim_s = dim_s;
    out.eu = q.leftCols(dim_u);
    out.es = svd.matrixV().rightCols(dim_s);
    if (dim_u > 0 && dim_s > 0) {
        SmallMatrix frame(d, d);
        frame.leftCols(dim_u) = out.eu;
        frame.rightCols(dim_s) = out.es;
        if (std::fabs(frame.determinant()) <= 1e-8)
            fail(ErrorCode::DegenerateSplitting, "estimate_splitting: Gram determinant below 1e-8");
    }
    return out;
}

namespace {

std::vector<SmallVector> test_frame(const SmallMatrix& block) {
    std::vector<SmallVector> out;
    for (int j = 0; j < block.cols(); ++j) out.push_back(block.col(j));
    for (int a = 0; a < block.cols(); ++a)
        for (int b = a + 1; b < block.cols(); ++b) {
            SmallVector v = block.col(a) + block.col(b);
            v.normalize();
            out.push_back(v);
        }
    return out;
}

}  // namespace

HyperbolicityEstimate verify_hyperbolic(const Endomorphism& f, const std::vector<BackwardBranch>& samples,
                                        int horizon) {
    if (horizon < 1) fail(ErrorCode::BadConfig, "verify_hyperbolic: horizon must be >= 1");
    HyperbolicityEstimate est;
    std::vector<std::vector<double>> stable_runs, unstable_runs;
    for (const BackwardBranch& b : samples) {
        Splitting split;
        try {
            split = estimate_splitting(f, b, horizon);
        } catch (const Error&) {
            continue;  // violations and unusable samples are reported, not thrown
        }
        // Effective Jacobians along the forward orbit of the top point.
        std::vector<SmallMatrix> jac;
        Point cur = split.base;
        bool ok = true;
        for (int k = 0; k < horizon; ++k) {
            if (!f.is_regular(cur)) {
                ok = false;
                break;
            }
            jac.push_back(effective_jacobian(f, cur));
            cur = f.eval(cur);
        }
        if (!ok) continue;
        ++est.sample_count;
        for (const SmallVector& v0 : test_frame(split.es)) {
            std::vector<double> run{1.0};
            SmallVector w = v0;
            for (int k = 0; k < horizon; ++k) {
                w = jac[static_cast<std::size_t>(k)] * w;
                run.push_back(w.norm());
            }
            stable_runs.push_back(std::move(run));
        }
        for (const SmallVector& v0 : test_frame(split.eu)) {
            std::vector<double> run{1.0};
            SmallVector w = v0;
            for (int k = 0; k < horizon; ++k) {
                w = jac[static_cast<std::size_t>(k)] * w;
                run.push_back(w.norm());
            }
            unstable_runs.push_back(std::move(run));
        }
    }
    if (stable_runs.empty() && unstable_runs.empty()) {
        est.hyperbolic = false;
        est.worst_violation = 1.0;
        return est;
    }

    double lambda = 0.0;
    const double h = static_cast<double>(horizon);
    for (const auto& run : stable_runs) lambda = std::max(lambda, std::pow(run.back(), 1.0 / h));
    for (const auto& run : unstable_runs) lambda = std::max(lambda, std::pow(run.back(), -1.0 / h));
    est.lambda = lambda;
    est.hyperbolic = lambda < 1.0;

    double c = 1.0;
    for (const auto& run : stable_runs)
        for (std::size_t k = 0; k < run.size(); ++k) c = std::max(c, run[k] / std::pow(lambda, static_cast<double>(k)));
    for (const auto& run : unstable_runs)
        for (std::size_t k = 0; k < run.size(); ++k)
            c = std::max(c, std::pow(lambda, -static_cast<double>(k)) / run[k]);
    est.C = c;

    if (!est.hyperbolic) {
        est.worst_violation = lambda - 1.0;
        return est;
    }
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& run : stable_runs)
        for (std::size_t k = 0; k < run.size(); ++k)
            worst = std::max(worst, run[k] - c * std::pow(lambda, static_cast<double>(k)));
    for (const auto& run : unstable_runs)
        for (std::size_t k = 0; k < run.size(); ++k)
            worst = std::max(worst, std::pow(lambda, -static_cast<double>(k)) / c - run[k]);
    est.worst_violation = worst;
    return est;
}

AdaptedNorm::AdaptedNorm(const Endomorphism& f, double lambda_star, int depth_m)
    : f_(&f), lambda_star_(lambda_star), m_(depth_m) {
    if (!(lambda_star > 0.0 && lambda_star < 1.0))
        fail(ErrorCode::BadConfig, "adapted_norm: lambda_star must lie in (0,1)");
    if (depth_m < 1) fail(ErrorCode::BadConfig, "adapted_norm: depth m must be >= 1");
}

double AdaptedNorm::evaluate(const Splitting& split, const SmallVector& v) const {
    if (v.norm() == 0.0) return 0.0;
    if (split.branch.depth() < m_)
        fail(ErrorCode::BadConfig, "adapted_norm: branch depth " + std::to_string(split.branch.depth()) +
                                       " below norm depth m = " + std::to_string(m_));
    auto [vu, vs] = split.split_vector(v);
    double total = 0.0;
    const double ls2 = lambda_star_ * lambda_star_;

    if (vs.norm() > 0.0) {
        SmallVector w = vs;
        Point cur = split.base;
        double weight = 1.0, first = w.squaredNorm(), last = first;
        total += first;
        for (int j = 1; j <= m_; ++j) {
            w = effective_jacobian(*f_, cur) * w;
            cur = f_->eval(cur);
            weight /= ls2;
            last = weight * w.squaredNorm();
            total += last;
        }
        if (last > first)
            fail(ErrorCode::DivergentSum, "adapted_norm: stable terms grow; lambda_star below the true rate");
    }
    if (vu.norm() > 0.0) {
        SmallVector w = vu;
        double weight = 1.0, first = w.squaredNorm(), last = first;
        total += first;
        for (int j = 1; j <= m_; ++j) {
            const Point& prev = split.branch.at_level(j);
            w = effective_jacobian_inverse(*f_, prev) * w;
            weight *= ls2;
            last = weight * w.squaredNorm();
            total += last;
        }
        if (last > first)
            fail(ErrorCode::DivergentSum, "adapted_norm: unstable terms grow; lambda_star below the true rate");
    }
    return conformal_or_one(split.base) * std::sqrt(total);
}

AdaptedNorm::OneStepCheck AdaptedNorm::verify_one_step(const Endomorphism& f, const Splitting& split) const {
    OneStepCheck check;
    BackwardBranch shifted = shift_forward(f, split.branch);
    Splitting ahead = estimate_splitting(f, shifted);
    SmallMatrix j = f.jacobian(split.base).entries;
    const double tol = 1e-9;
    for (int c = 0; c < split.dim_s; ++c) {
        SmallVector v = split.es.col(c);
        double lhs = evaluate(ahead, j * v);
        double rhs = lambda_star_ * evaluate(split, v);
        ++check.checked;
        double resid = lhs - rhs;
        if (resid > tol * rhs) {
            ++check.violations;
            check.worst_margin = std::max(check.worst_margin, resid);
        }
    }
    for (int c = 0; c < split.dim_u; ++c) {
        SmallVector v = split.eu.col(c);
        double lhs = evaluate(ahead, j * v);
        double rhs = evaluate(split, v) / lambda_star_;
        ++check.checked;
        double resid = rhs - lhs;
        if (resid > tol * rhs) {
            ++check.violations;
            check.worst_margin = std::max(check.worst_margin, resid);
        }
    }
    return check;
}

}  // namespace endo
