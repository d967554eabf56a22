#pragma once

#include "endo/hyperbolic.hpp"

namespace endo {

struct LocalDisk {
    enum class Kind { Stable, Unstable };

    Kind kind = Kind::Unstable;
    Point base;
    BackwardBranch branch;  // unstable disks only
    double epsilon = 0.0;
    std::vector<Point> samples;
};

// True iff distance(f^n x, f^n y) < eps for all 0 <= n <= N. Strict
// inequalities are applied as "< eps - 1e-12" to avoid boundary flapping.
bool in_local_stable(const Endomorphism& f, const Point& x, const Point& y, double eps, int n_steps);

// True iff the preimage tree of y (same depth as x_branch) contains a branch
// within sup-distance eps of x_branch. The search prunes any subtree whose
// current level already violates eps; a "true" is certain up to arithmetic,
// a "false" is certified only at the branch depth.
bool in_local_unstable(const Endomorphism& f, const BackwardBranch& x_branch, const Point& y, double eps,
                       std::size_t node_budget = kDefaultNodeBudget);

// Samples the local unstable manifold of the branch: seeds a grid in the
// pulled-back Eu plane at the deepest branch point, pushes it forward, and
// retains the points that pass in_local_unstable. Throws EmptyDisk when no
// off-center sample survives (eps too large or depth too small).
LocalDisk grow_unstable_disk(const Endomorphism& f, const BackwardBranch& branch, double eps, int n_samples);

// Rank of the sample cloud: number of singular values of the centered,
// wrap-aware displacement matrix above the threshold.
int pca_rank(const std::vector<Point>& samples, const Point& base, double threshold = 1e-4);

// Maximal observed one-step distance ratio over sampled pairs in the local
// stable disk of x, over forward steps n < n_steps; the empirical 1/mu of
// the stable contraction. Pairs are seeded at scale min(eps/4, 1e-3) so the
// ratio reflects the rate at the base point. Equal pairs are skipped.
double stable_contraction_rate(const Endomorphism& f, const Point& x, int pairs, double eps, int n_steps);

// Maximal observed backward one-step ratio over shadowing branch pairs
// inside the unstable disk of the branch.
double unstable_backward_contraction(const Endomorphism& f, const BackwardBranch& branch, double eps);

}  // namespace endo
