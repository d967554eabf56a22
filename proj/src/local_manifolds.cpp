#include "endo/local_manifolds.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace endo {
namespace {

constexpr double kStrictSlack = 1e-12;

Point chart_add(const Point& base, const SmallVector& delta) {
    Point p = base;
    if (base.manifold.is_torus()) {
        for (int i = 0; i < base.manifold.dim; ++i) p.x[i] = wrap1(base.x[i] + delta[i]);
        return p;
    }
    if (base.at_infinity) fail(ErrorCode::BadConfig, "chart_add: cannot displace the point at infinity");
    p.x[0] = base.x[0] + delta[0];
    p.x[1] = base.x[1] + delta[1];
    return p;
}

struct PulledFrame {
    SmallMatrix frame;       // d x u, orthonormal at the deepest branch point
    SmallVector contraction; // total backward contraction per column
};

PulledFrame pull_back_unstable(const Endomorphism& f, const Splitting& split) {
    const int d = split.base.manifold.dim;
    const int u = split.dim_u;
    PulledFrame out;
    out.frame = split.eu;
    out.contraction = SmallVector::Ones(u);
    for (int i = 1; i <= split.branch.depth(); ++i) {
        SmallMatrix w = effective_jacobian_inverse(f, split.branch.at_level(i)) * out.frame;
        Eigen::HouseholderQR<SmallMatrix> qr(w);
        SmallMatrix r = qr.matrixQR().template triangularView<Eigen::Upper>();
        out.frame = qr.householderQ() * SmallMatrix::Identity(d, u);
        for (int j = 0; j < u; ++j) out.contraction[j] *= std::fabs(r(j, j));
    }
    return out;
}

struct TrackedSample {
    Point top;
    BackwardBranch branch;
    bool shadowing = false;  // whole tracked branch within eps of the base branch
};

// Seeds points in the pulled-back Eu plane at the deepest branch point and
// pushes them forward, recording each forward history as a candidate
// shadowing branch.
std::vector<TrackedSample> tracked_unstable_samples(const Endomorphism& f, const BackwardBranch& branch,
                                                    const Splitting& split, double eps, int n_samples) {
    const int depth = branch.depth();
    const int u = split.dim_u;
    std::vector<TrackedSample> out;
    if (u == 0 || n_samples <= 0) return out;
    PulledFrame pulled = pull_back_unstable(f, split);

    int per_axis = std::max(2, static_cast<int>(std::ceil(std::pow(static_cast<double>(n_samples), 1.0 / u))));
    std::vector<int> idx(static_cast<std::size_t>(u), 0);
    for (;;) {
        SmallVector delta = SmallVector::Zero(split.base.manifold.dim);
        bool center = true;
        for (int j = 0; j < u; ++j) {
            double t = -1.0 + 2.0 * static_cast<double>(idx[static_cast<std::size_t>(j)]) / (per_axis - 1);
            if (t != 0.0) center = false;
            delta += (0.95 * eps * pulled.contraction[j] * t) * pulled.frame.col(j);
        }
        if (!center) {
            TrackedSample s;
            s.branch.points.resize(static_cast<std::size_t>(depth) + 1);
            Point p = chart_add(branch.deepest(), delta);
            s.branch.points[static_cast<std::size_t>(depth)] = p;
            for (int level = depth - 1; level >= 0; --level) {
                p = f.eval(p);
                s.branch.points[static_cast<std::size_t>(level)] = p;
            }
            s.top = s.branch.top();
            s.shadowing = branch_distance(s.branch, branch) < eps - kStrictSlack;
            out.push_back(std::move(s));
        }
        int axis = 0;
        while (axis < u) {
            if (++idx[static_cast<std::size_t>(axis)] < per_axis) break;
            idx[static_cast<std::size_t>(axis)] = 0;
            ++axis;
        }
        if (axis == u) break;
    }
    return out;
}

}  // namespace

bool in_local_stable(const Endomorphism& f, const Point& x, const Point& y, double eps, int n_steps) {
    if (eps <= 0.0) fail(ErrorCode::BadConfig, "in_local_stable: eps must be positive");
    if (n_steps < 1) fail(ErrorCode::BadConfig, "in_local_stable: N must be >= 1");
    Point a = x, b = y;
    for (int n = 0; n <= n_steps; ++n) {
        if (!(distance(a, b) < eps - kStrictSlack)) return false;
        a = f.eval(a);
        b = f.eval(b);
    }
    return true;
}

namespace {

bool unstable_dfs(const Endomorphism& f, const BackwardBranch& x_branch, const Point& p, int level, double eps,
                  std::size_t& visited, std::size_t node_budget) {
    if (++visited > node_budget) fail(ErrorCode::BudgetExceeded, "in_local_unstable: node budget exceeded");
    if (!(distance(p, x_branch.at_level(level)) < eps - kStrictSlack)) return false;
    if (level == x_branch.depth()) return true;
    for (const Point& c : f.preimages(p))
        if (unstable_dfs(f, x_branch, c, level + 1, eps, visited, node_budget)) return true;
    return false;
}

}  // namespace

bool in_local_unstable(const Endomorphism& f, const BackwardBranch& x_branch, const Point& y, double eps,
                       std::size_t node_budget) {
    if (eps <= 0.0) fail(ErrorCode::BadConfig, "in_local_unstable: eps must be positive");
    std::size_t visited = 0;
    return unstable_dfs(f, x_branch, y, 0, eps, visited, node_budget);
}

LocalDisk grow_unstable_disk(const Endomorphism& f, const BackwardBranch& branch, double eps, int n_samples) {
    Splitting split = estimate_splitting(f, branch);
    LocalDisk disk;
    disk.kind = LocalDisk::Kind::Unstable;
    disk.base = branch.top();
    disk.branch = branch;
    disk.epsilon = eps;
    disk.samples.push_back(branch.top());
    if (split.dim_u == 0) return disk;  // the local unstable set is the point itself

    for (const TrackedSample& s : tracked_unstable_samples(f, branch, split, eps, n_samples)) {
        if (distance(s.top, disk.base) < 1e-15) continue;  // collapsed seed, not a disk point
        bool member = s.shadowing;
        if (!member) member = in_local_unstable(f, branch, s.top, eps);
        if (member) disk.samples.push_back(s.top);
    }
    if (disk.samples.size() < 2)
        fail(ErrorCode::EmptyDisk, "grow_unstable_disk: no usable off-center sample survived (check eps and depth)");
    return disk;
}

int pca_rank(const std::vector<Point>& samples, const Point& base, double threshold) {
    if (samples.empty()) return 0;
    const int d = base.manifold.dim;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(samples.size()), d);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (int j = 0; j < d; ++j) {
            double delta = samples[i].x[j] - base.x[j];
            if (base.manifold.is_torus()) {
                delta -= std::round(delta);
            }
            x(static_cast<Eigen::Index>(i), j) = delta;
        }
    }
    Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(x / std::sqrt(static_cast<double>(samples.size())));
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] > threshold) ++rank;
    return rank;
}

double stable_contraction_rate(const Endomorphism& f, const Point& x, int pairs, double eps, int n_steps) {
    BackwardBranch b = first_branch(f, x, 16);
    Splitting split = estimate_splitting(f, b);
    if (split.dim_s == 0) fail(ErrorCode::BadConfig, "stable_contraction_rate: W^s has dimension 0 at x");

    const double scale = std::min(eps / 4.0, 1e-3);
    double worst = 0.0;
    bool any = false;
    for (int i = 0; i < pairs; ++i) {
        SmallVector dir = split.es.col(i % split.dim_s);
        double t1 = scale * (2.0 * radical_inverse(static_cast<std::uint64_t>(2 * i + 1), 2) - 1.0);
        double t2 = scale * (2.0 * radical_inverse(static_cast<std::uint64_t>(2 * i + 2), 2) - 1.0);
        Point y = chart_add(x, t1 * dir);
        Point z = chart_add(x, t2 * dir);
        if (!in_local_stable(f, x, y, eps, n_steps) || !in_local_stable(f, x, z, eps, n_steps)) continue;
        double prev = distance(y, z);
        for (int n = 0; n < n_steps; ++n) {
            y = f.eval(y);
            z = f.eval(z);
            double next = distance(y, z);
            if (prev > 1e-14) {
                worst = std::max(worst, next / prev);
                any = true;
            }
            prev = next;
        }
    }
    if (!any) fail(ErrorCode::BadConfig, "stable_contraction_rate: no usable pair (all pairs degenerate)");
    return worst;
}

double unstable_backward_contraction(const Endomorphism& f, const BackwardBranch& branch, double eps) {
    Splitting split = estimate_splitting(f, branch);
    // Ratios are measured on a truncation of at most 12 levels: deeper along
    // the branch the unstable separation falls under the floating-point
    // noise floor, whose stable component the backward dynamics amplifies.
    const int measure_depth = std::min(branch.depth(), 12);
    BackwardBranch measured = branch;
    measured.points.resize(static_cast<std::size_t>(measure_depth) + 1);
    Splitting msplit = split;
    msplit.branch = measured;
    std::vector<BackwardBranch> members{measured};
    for (const TrackedSample& s : tracked_unstable_samples(f, measured, msplit, eps, 9))
        if (s.shadowing) members.push_back(s.branch);
    double worst = 0.0;
    bool any = false;
    for (std::size_t a = 0; a < members.size(); ++a)
        for (std::size_t b = a + 1; b < members.size(); ++b) {
            for (int n = 0; n < measure_depth; ++n) {
                double cur = distance(members[a].at_level(n), members[b].at_level(n));
                double deeper = distance(members[a].at_level(n + 1), members[b].at_level(n + 1));
                if (cur > 1e-14) {
                    worst = std::max(worst, deeper / cur);
                    any = true;
                }
            }
        }
    if (!any) fail(ErrorCode::BadConfig, "unstable_backward_contraction: no shadowing pair available");
    return worst;
}

}  // namespace endo
