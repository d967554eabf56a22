#include "endo/natural_extension.hpp"

#include <algorithm>
#include <cmath>

namespace endo {

std::size_t PreimageTree::node_count() const {
    std::size_t n = 0;
    for (const auto& level : levels_) n += level.size();
    return n;
}

PreimageTree grow_preimage_tree(const Endomorphism& f, const Point& x, int depth, std::size_t node_budget) {
    if (depth < 0) fail(ErrorCode::BadConfig, "grow_preimage_tree: depth must be >= 0");
    double leaves = std::pow(static_cast<double>(f.degree()), static_cast<double>(depth));
    if (leaves > static_cast<double>(node_budget))
        fail(ErrorCode::BudgetExceeded,
             "grow_preimage_tree: degree^depth = " + std::to_string(leaves) + " exceeds node budget " +
                 std::to_string(node_budget));

    PreimageTree tree;
    tree.levels_.resize(static_cast<std::size_t>(depth) + 1);
    tree.levels_[0].push_back(PreimageTree::Node{x, -1, {}});
    std::size_t nodes = 1;
    for (int level = 0; level < depth; ++level) {
        auto& cur = tree.levels_[static_cast<std::size_t>(level)];
        auto& next = tree.levels_[static_cast<std::size_t>(level) + 1];
        for (std::size_t pi = 0; pi < cur.size(); ++pi) {
            std::vector<Point> pre = f.preimages(cur[pi].point);  // already sorted
            for (const Point& c : pre) {
                if (++nodes > node_budget)
                    fail(ErrorCode::BudgetExceeded, "grow_preimage_tree: node budget exceeded at level " +
                                                        std::to_string(level + 1));
                cur[pi].children.push_back(static_cast<int>(next.size()));
                next.push_back(PreimageTree::Node{c, static_cast<int>(pi), {}});
            }
        }
    }
    return tree;
}

std::vector<BackwardBranch> enumerate_branches(const PreimageTree& tree) {
    std::vector<BackwardBranch> out;
    const int depth = tree.depth();
    // Walk leaves in order; they are stored in DFS-compatible (parent-major,
    // child-sorted) order, so reconstructing each path keeps the global
    // lexicographic ordering.
    const auto& levels = tree.levels();
    for (std::size_t leaf = 0; leaf < levels.back().size(); ++leaf) {
        BackwardBranch b;
        b.points.resize(static_cast<std::size_t>(depth) + 1);
        int idx = static_cast<int>(leaf);
        for (int level = depth; level >= 0; --level) {
            const auto& node = levels[static_cast<std::size_t>(level)][static_cast<std::size_t>(idx)];
            b.points[static_cast<std::size_t>(level)] = node.point;
            idx = node.parent;
        }
        out.push_back(std::move(b));
    }
    return out;
}

namespace {

struct LazySearch {
    const Endomorphism& f;
    const PointPredicate& member;
    int target_depth;
    std::size_t node_budget;
    std::size_t visited = 0;
    std::vector<Point> stack;
    std::vector<Point> best;

    bool dfs(const Point& p) {
        if (++visited > node_budget)
            fail(ErrorCode::BudgetExceeded, "branch search: node budget exceeded");
        stack.push_back(p);
        if (stack.size() > best.size()) best = stack;
        if (static_cast<int>(stack.size()) == target_depth + 1) {
            stack.pop_back();
            return true;
        }
        for (const Point& c : f.preimages(p)) {
            if (!member(c)) continue;
            if (dfs(c)) {
                stack.pop_back();
                return true;
            }
        }
        stack.pop_back();
        return false;
    }
};

}  // namespace

std::optional<BackwardBranch> branch_within_lazy(const Endomorphism& f, const Point& root, int depth,
                                                 const PointPredicate& member, std::size_t node_budget) {
    if (!member(root)) fail(ErrorCode::BadConfig, "branch_within: member(root) must hold");
    LazySearch search{f, member, depth, node_budget};
    search.dfs(root);
    if (search.best.size() <= 1) return std::nullopt;
    BackwardBranch b;
    b.points = std::move(search.best);
    return b;
}

std::optional<BackwardBranch> branch_within(const PreimageTree& tree, const PointPredicate& member) {
    if (!member(tree.root())) fail(ErrorCode::BadConfig, "branch_within: member(root) must hold");
    const auto& levels = tree.levels();
    const int depth = tree.depth();
    std::vector<int> stack;          // node index per level
    std::vector<int> best;
    std::function<bool(int, int)> dfs = [&](int level, int idx) -> bool {
        stack.push_back(idx);
        if (stack.size() > best.size()) best = stack;
        if (level == depth) {
            stack.pop_back();
            return true;
        }
        for (int c : levels[static_cast<std::size_t>(level)][static_cast<std::size_t>(idx)].children) {
            if (!member(levels[static_cast<std::size_t>(level) + 1][static_cast<std::size_t>(c)].point)) continue;
            if (dfs(level + 1, c)) {
                stack.pop_back();
                return true;
            }
        }
        stack.pop_back();
        return false;
    };
    dfs(0, 0);
    if (best.size() <= 1) return std::nullopt;
    BackwardBranch b;
    b.points.reserve(best.size());
    for (std::size_t level = 0; level < best.size(); ++level)
        b.points.push_back(levels[level][static_cast<std::size_t>(best[level])].point);
    return b;
}

BackwardBranch first_branch(const Endomorphism& f, const Point& root, int depth) {
    BackwardBranch b;
    b.points.reserve(static_cast<std::size_t>(depth) + 1);
    b.points.push_back(root);
    Point cur = root;
    for (int i = 0; i < depth; ++i) {
        cur = f.preimages(cur).front();
        b.points.push_back(cur);
    }
    return b;
}

BackwardBranch shift_forward(const Endomorphism& f, const BackwardBranch& b) {
    BackwardBranch out;
    out.points.reserve(b.points.size());
    out.points.push_back(f.eval(b.top()));
    for (std::size_t i = 0; i + 1 < b.points.size(); ++i) out.points.push_back(b.points[i]);
    return out;
}

double branch_distance(const BackwardBranch& a, const BackwardBranch& b) {
    if (a.depth() != b.depth()) fail(ErrorCode::Mismatch, "branch_distance: depth mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.points.size(); ++i) worst = std::max(worst, distance(a.points[i], b.points[i]));
    return worst;
}

}  // namespace endo
