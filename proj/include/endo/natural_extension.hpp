#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "endo/models.hpp"

namespace endo {

constexpr std::size_t kDefaultNodeBudget = 1000000;

// Finite-depth truncation of one element x-bar of the natural extension:
// points = (x_0, x_-1, ..., x_-N) with f(x_-(i+1)) = x_-i.
struct BackwardBranch {
    std::vector<Point> points;

    int depth() const { return static_cast<int>(points.size()) - 1; }
    const Point& top() const { return points.front(); }
    const Point& deepest() const { return points.back(); }
    const Point& at_level(int i) const { return points[static_cast<std::size_t>(i)]; }  // level -i
};

// Complete preimage tree of depth N rooted at x: every node at level -i
// carries the full preimage list of its parent, children sorted
// lexicographically by chart coordinates.
class PreimageTree {
public:
    struct Node {
        Point point;
        int parent = -1;                // index in the previous level
        std::vector<int> children;      // indices in the next level
    };

    Point root() const { return levels_[0][0].point; }
    int depth() const { return static_cast<int>(levels_.size()) - 1; }
    const std::vector<std::vector<Node>>& levels() const { return levels_; }
    std::size_t leaf_count() const { return levels_.back().size(); }
    std::size_t node_count() const;

    friend PreimageTree grow_preimage_tree(const Endomorphism& f, const Point& x, int depth, std::size_t node_budget);

private:
    std::vector<std::vector<Node>> levels_;
};

// Grows the complete tree; throws BudgetExceeded when degree^depth (or the
// actual node count) would exceed the budget.
PreimageTree grow_preimage_tree(const Endomorphism& f, const Point& x, int depth,
                                std::size_t node_budget = kDefaultNodeBudget);

// All root-to-leaf paths in deterministic (lexicographic) order.
std::vector<BackwardBranch> enumerate_branches(const PreimageTree& tree);

using PointPredicate = std::function<bool(const Point&)>;

// Deepest branch of the tree whose points all satisfy member, ties broken
// by child order; nullopt when no level -1 child qualifies. member(root)
// must hold.
std::optional<BackwardBranch> branch_within(const PreimageTree& tree, const PointPredicate& member);

// Equivalent search that grows preimages lazily instead of materializing
// the tree, so member-pruned searches stay cheap at depths where
// degree^depth would blow the node budget. Explores children in the same
// lexicographic order and returns the identical branch. The budget counts
// visited nodes.
std::optional<BackwardBranch> branch_within_lazy(const Endomorphism& f, const Point& root, int depth,
                                                 const PointPredicate& member,
                                                 std::size_t node_budget = kDefaultNodeBudget);

// First branch in lexicographic order at the given depth (no membership
// constraint), grown lazily.
BackwardBranch first_branch(const Endomorphism& f, const Point& root, int depth);

// (f(x_0), x_0, ..., x_-(N-1)): the shift applied to a truncated branch,
// depth preserved by dropping the deepest entry.
BackwardBranch shift_forward(const Endomorphism& f, const BackwardBranch& b);

// Sup metric over levels; requires equal depths.
double branch_distance(const BackwardBranch& a, const BackwardBranch& b);

}  // namespace endo
