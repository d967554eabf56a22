#include "endo/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <map>

#include <Eigen/Dense>

namespace endo {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::vector<char> bitmap_of(const std::vector<int>& cells, int total) {
    std::vector<char> b(static_cast<std::size_t>(total), 0);
    for (int c : cells) b[static_cast<std::size_t>(c)] = 1;
    return b;
}

// Iterative Tarjan over an adjacency list restricted to `alive` nodes.
std::vector<std::vector<int>> strongly_connected_components(const std::vector<std::vector<int>>& adj,
                                                            const std::vector<char>& alive) {
    const int n = static_cast<int>(adj.size());
    std::vector<int> index(static_cast<std::size_t>(n), -1), low(static_cast<std::size_t>(n), 0);
    std::vector<char> on_stack(static_cast<std::size_t>(n), 0);
    std::vector<int> stack;
    std::vector<std::vector<int>> comps;
    int next_index = 0;

    struct Frame {
        int v;
        std::size_t child;
    };
    for (int root = 0; root < n; ++root) {
        if (!alive[static_cast<std::size_t>(root)] || index[static_cast<std::size_t>(root)] != -1) continue;
        std::vector<Frame> call;
        call.push_back({root, 0});
        index[static_cast<std::size_t>(root)] = low[static_cast<std::size_t>(root)] = next_index++;
        stack.push_back(root);
        on_stack[static_cast<std::size_t>(root)] = 1;
        while (!call.empty()) {
            Frame& fr = call.back();
            const auto& edges = adj[static_cast<std::size_t>(fr.v)];
            bool descended = false;
            while (fr.child < edges.size()) {
                int w = edges[fr.child++];
                if (!alive[static_cast<std::size_t>(w)]) continue;
                if (index[static_cast<std::size_t>(w)] == -1) {
                    index[static_cast<std::size_t>(w)] = low[static_cast<std::size_t>(w)] = next_index++;
                    stack.push_back(w);
                    on_stack[static_cast<std::size_t>(w)] = 1;
                    call.push_back({w, 0});
                    descended = true;
                    break;
                }
                if (on_stack[static_cast<std::size_t>(w)])
                    low[static_cast<std::size_t>(fr.v)] =
                        std::min(low[static_cast<std::size_t>(fr.v)], index[static_cast<std::size_t>(w)]);
            }
            if (descended) continue;
            int v = fr.v;
            call.pop_back();
            if (!call.empty())
                low[static_cast<std::size_t>(call.back().v)] =
                    std::min(low[static_cast<std::size_t>(call.back().v)], low[static_cast<std::size_t>(v)]);
            if (low[static_cast<std::size_t>(v)] == index[static_cast<std::size_t>(v)]) {
                std::vector<int> comp;
                for (;;) {
                    int w = stack.back();
                    stack.pop_back();
                    on_stack[static_cast<std::size_t>(w)] = 0;
                    comp.push_back(w);
                    if (w == v) break;
                }
                std::sort(comp.begin(), comp.end());
                comps.push_back(std::move(comp));
            }
        }
    }
    return comps;
}

bool has_self_loop(const TransitionGraph& t, int cell) {
    const auto& e = t.out[static_cast<std::size_t>(cell)];
    return std::binary_search(e.begin(), e.end(), cell);
}

}  // namespace

std::vector<std::vector<int>> TransitionGraph::reversed() const {
    std::vector<std::vector<int>> rev(out.size());
    for (std::size_t c = 0; c < out.size(); ++c)
        for (int d : out[c]) rev[static_cast<std::size_t>(d)].push_back(static_cast<int>(c));
    for (auto& e : rev) {
        std::sort(e.begin(), e.end());
        e.erase(std::unique(e.begin(), e.end()), e.end());
    }
    return rev;
}

TransitionGraph build_transition_graph(const Endomorphism& f, const BoxGrid& grid, int samples_per_cell,
                                       double bloat_factor, std::uint64_t seed, int threads) {
    if (samples_per_cell < 4) fail(ErrorCode::BadConfig, "build_transition_graph: samples_per_cell must be >= 4");
    TransitionGraph t{&f, grid, samples_per_cell, bloat_factor, seed, {}};
    t.out.resize(static_cast<std::size_t>(grid.cell_count()));
    const double bloat = bloat_factor * grid.cell_diameter();
    parallel_for(static_cast<std::size_t>(grid.cell_count()), threads, [&](std::size_t cell) {
        if (!grid.cell_usable(static_cast<int>(cell))) return;
        std::vector<int> edges;
        for (const Point& x : grid.cell_samples(static_cast<int>(cell), samples_per_cell, seed)) {
            Point y = f.eval(x);
            for (int target : grid.rasterize_ball(y, bloat)) edges.push_back(target);
        }
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        t.out[cell] = std::move(edges);
    });
    return t;
}

namespace {

// Probes whether a strongly connected class is genuinely recurrent rather
// than a resolution halo: some sampled forward orbit or backward branch has
// to linger in the class (all steps within one ring, at least half inside).
bool scc_persists(const TransitionGraph& t, const std::vector<int>& scc_cells) {
    const Endomorphism& f = *t.f;
    const int horizon = 32;
    std::vector<char> inside = bitmap_of(scc_cells, t.grid.cell_count());
    std::vector<char> ring = bitmap_of(t.grid.fatten(scc_cells, 1), t.grid.cell_count());

    std::size_t stride = std::max<std::size_t>(1, scc_cells.size() / 4);
    for (std::size_t s = 0; s < scc_cells.size(); s += stride) {
        for (const Point& start : t.grid.cell_samples(scc_cells[s], 2, t.seed)) {
            Point p = start;
            bool confined = true;
            int inside_count = 0;
            for (int step = 0; step < horizon; ++step) {
                p = f.eval(p);
                int c = t.grid.cell_of(p);
                if (!ring[static_cast<std::size_t>(c)]) {
                    confined = false;
                    break;
                }
                if (inside[static_cast<std::size_t>(c)]) ++inside_count;
            }
            if (confined && inside_count >= horizon / 2) return true;

            auto member = [&](const Point& q) { return ring[static_cast<std::size_t>(t.grid.cell_of(q))] != 0; };
            try {
                auto branch = branch_within_lazy(f, start, horizon, member, 20000);
                if (branch && branch->depth() == horizon) {
                    int inner = 0;
                    for (const Point& q : branch->points)
                        if (inside[static_cast<std::size_t>(t.grid.cell_of(q))]) ++inner;
                    if (inner >= horizon / 2) return true;
                }
            } catch (const Error&) {
            }
        }
    }
    return false;
}

}  // namespace

std::vector<int> chain_recurrent_cells(const TransitionGraph& t) {
    std::vector<char> alive(static_cast<std::size_t>(t.grid.cell_count()), 1);
    std::vector<int> recurrent;
    for (const auto& comp : strongly_connected_components(t.out, alive)) {
        bool nontrivial = comp.size() > 1 || has_self_loop(t, comp[0]);
        if (!nontrivial) continue;
        if (!scc_persists(t, comp)) continue;
        recurrent.insert(recurrent.end(), comp.begin(), comp.end());
    }
    std::sort(recurrent.begin(), recurrent.end());
    return recurrent;
}

std::vector<BackwardBranch> sample_in_set_branches(const Endomorphism& f, const TransitionGraph& t,
                                                   const std::vector<int>& cells, int count, int depth) {
    if (cells.empty()) fail(ErrorCode::NoInSetBranch, "sample_in_set_branches: empty cell set");
    std::vector<char> member_cells = bitmap_of(t.grid.fatten(cells, 1), t.grid.cell_count());
    auto member = [&](const Point& q) { return member_cells[static_cast<std::size_t>(t.grid.cell_of(q))] != 0; };
    // A deep search re-rooted by its slack keeps the returned top point close
    // to the invariant set: backward tails refine repeller-side samples, a
    // forward burn-in refines attractor-side ones. Seeds are low-discrepancy
    // points, not cell centers: expanding circle factors annihilate dyadics.
    const int extra = 24;

    auto attempt = [&](const Point& start) -> std::optional<BackwardBranch> {
        try {
            return branch_within_lazy(f, start, depth + extra, member, 20000);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::BudgetExceeded) throw;
            return std::nullopt;
        }
    };

    std::vector<BackwardBranch> out;
    std::size_t stride = std::max<std::size_t>(1, cells.size() / static_cast<std::size_t>(count));
    for (std::size_t s = 0; s < cells.size() && static_cast<int>(out.size()) < count; s += stride) {
        std::vector<Point> seeds = t.grid.cell_samples(cells[s], 1, t.seed);
        if (seeds.empty()) continue;
        Point raw = seeds.front();
        Point burned = raw;
        for (int burn = 0; burn < 36; ++burn) {
            Point q = f.eval(burned);
            if (!member(q)) break;
            burned = q;
        }
        std::optional<BackwardBranch> best = attempt(raw);
        std::optional<BackwardBranch> alt = attempt(burned);
        if (alt && (!best || alt->depth() > best->depth())) best = std::move(alt);
        if (!best || best->depth() < depth) continue;
        int slack = best->depth() - depth;
        BackwardBranch rooted;
        rooted.points.assign(best->points.begin() + slack, best->points.end());
        out.push_back(std::move(rooted));
    }
    if (out.empty()) fail(ErrorCode::NoInSetBranch, "no in-set backward branch found at depth " + std::to_string(depth));
    return out;
}

std::vector<Point> refined_set_points(const Endomorphism& f, const TransitionGraph& t, const std::vector<int>& cells,
                                      int count) {
    std::vector<Point> out;
    for (const BackwardBranch& b : sample_in_set_branches(f, t, cells, count, 24)) out.push_back(b.top());
    return out;
}

TypeVote basic_set_type(const Endomorphism& f, const TransitionGraph& t, const std::vector<int>& cells,
                        int branch_depth) {
    int target = std::max<int>(17, std::min<int>(33, static_cast<int>(cells.size() / 8)));
    std::vector<BackwardBranch> branches = sample_in_set_branches(f, t, cells, target, branch_depth);
    TypeVote vote;
    std::map<std::pair<int, int>, int> tally;
    for (const BackwardBranch& b : branches) {
        try {
            Splitting s = estimate_splitting(f, b);
            ++tally[{s.dim_u, s.dim_s}];
            ++vote.voters;
        } catch (const Error& e) {
            vote.note = e.what();
        }
    }
    if (vote.voters == 0)
        fail(ErrorCode::NoInSetBranch, "basic_set_type: no regular sampled point with an in-set branch" +
                                           (vote.note.empty() ? std::string() : " (" + vote.note + ")"));
    auto best = std::max_element(tally.begin(), tally.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    vote.dim_u = best->first.first;
    vote.dim_s = best->first.second;
    vote.conclusive = 3 * best->second >= 2 * vote.voters;
    return vote;
}

std::vector<BasicSetApprox> decompose_basic_sets(const TransitionGraph& t, const std::vector<int>& recurrent,
                                                 int branch_depth) {
    std::vector<char> alive(static_cast<std::size_t>(t.grid.cell_count()), 0);
    for (int c : recurrent) alive[static_cast<std::size_t>(c)] = 1;
    std::vector<std::vector<int>> comps = strongly_connected_components(t.out, alive);
    std::vector<BasicSetApprox> sets;
    for (auto& comp : comps) {
        if (comp.size() == 1 && !has_self_loop(t, comp[0])) continue;
        BasicSetApprox set;
        set.cells = std::move(comp);
        sets.push_back(std::move(set));
    }
    std::sort(sets.begin(), sets.end(), [](const BasicSetApprox& a, const BasicSetApprox& b) {
        if (a.cells.size() != b.cells.size()) return a.cells.size() > b.cells.size();
        return a.cells.front() < b.cells.front();
    });
    for (BasicSetApprox& set : sets) {
        try {
            TypeVote v = basic_set_type(*t.f, t, set.cells, branch_depth);
            set.type_uv = {v.dim_u, v.dim_s};
            set.type_conclusive = v.conclusive;
            set.type_note = v.note;
        } catch (const Error& e) {
            set.type_uv = {-1, -1};
            set.type_conclusive = false;
            set.type_note = e.what();
        }
    }
    return sets;
}

SpectralDecomposition spectral_decomposition(const Endomorphism& f, const BoxGrid& grid, int samples_per_cell,
                                             double bloat_factor, std::uint64_t seed, int threads, int branch_depth) {
    SpectralDecomposition d{build_transition_graph(f, grid, samples_per_cell, bloat_factor, seed, threads), {}, {}};
    d.recurrent = chain_recurrent_cells(d.graph);
    d.sets = decompose_basic_sets(d.graph, d.recurrent, branch_depth);
    return d;
}

namespace {

long long ipow(long long base, int exp) {
    long long r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

void push_verified(const Endomorphism& f, int period, Point candidate, std::vector<Point>& out) {
    Point q = f.iterate(candidate, period);
    if (distance(q, candidate) > 1e-9) return;
    for (const Point& p : out)
        if (distance(p, candidate) < 1e-8) return;
    out.push_back(candidate);
}

// Fixed points of a monotone degree-one lift H on the circle: roots of
// H(y) - y = c over integer offsets c, located by scan plus bisection.
std::vector<double> circle_lift_fixed_points(const std::function<double(double)>& lift) {
    const int scan = 1024;
    std::vector<double> values(scan + 1);
    for (int i = 0; i <= scan; ++i) values[static_cast<std::size_t>(i)] = lift(static_cast<double>(i) / scan) - static_cast<double>(i) / scan;
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    std::vector<double> roots;
    for (long long c = static_cast<long long>(std::floor(lo)); c <= static_cast<long long>(std::ceil(hi)); ++c) {
        for (int i = 0; i < scan; ++i) {
            double a = values[static_cast<std::size_t>(i)] - static_cast<double>(c);
            double b = values[static_cast<std::size_t>(i) + 1] - static_cast<double>(c);
            if (std::fabs(a) < 1e-13) {
                roots.push_back(static_cast<double>(i) / scan);
                continue;
            }
            if (a * b < 0.0) {
                double ylo = static_cast<double>(i) / scan, yhi = static_cast<double>(i + 1) / scan;
                for (int it = 0; it < 60; ++it) {
                    double mid = 0.5 * (ylo + yhi);
                    double v = lift(mid) - mid - static_cast<double>(c);
                    if ((v < 0.0) == (a < 0.0))
                        ylo = mid;
                    else
                        yhi = mid;
                }
                roots.push_back(0.5 * (ylo + yhi));
            }
        }
    }
    return roots;
}

std::vector<std::complex<double>> polynomial_roots(std::vector<std::complex<double>> monic) {
    // Durand-Kerner on a monic polynomial given by ascending coefficients
    // (the leading 1 omitted).
    const int n = static_cast<int>(monic.size());
    std::vector<std::complex<double>> z(static_cast<std::size_t>(n));
    std::complex<double> seed{0.4, 0.9};
    z[0] = seed;
    for (int i = 1; i < n; ++i) z[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(i - 1)] * seed;
    auto eval = [&](std::complex<double> x) {
        std::complex<double> v{1.0, 0.0};
        for (int i = n - 1; i >= 0; --i) v = v * x + monic[static_cast<std::size_t>(i)];
        return v;
    };
    for (int it = 0; it < 500; ++it) {
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
            std::complex<double> denom{1.0, 0.0};
            for (int j = 0; j < n; ++j)
                if (j != i) denom *= z[static_cast<std::size_t>(i)] - z[static_cast<std::size_t>(j)];
            std::complex<double> step = eval(z[static_cast<std::size_t>(i)]) / denom;
            z[static_cast<std::size_t>(i)] -= step;
            worst = std::max(worst, std::abs(step));
        }
        if (worst < 1e-13) break;
    }
    return z;
}

}  // namespace

PeriodicPointSet periodic_points(const Endomorphism& f, int period, const BoxGrid& grid) {
    if (period < 1) fail(ErrorCode::BadConfig, "periodic_points: period must be >= 1");
    (void)grid;
    PeriodicPointSet out;
    out.period = period;
    const ModelDescriptor& d = f.descriptor();
    if (const auto* m = std::get_if<CircleMul>(&d)) {
        long long denom = std::llabs(ipow(m->k, period) - 1);
        for (long long j = 0; j < denom; ++j) {
            Point p;
            p.manifold = f.manifold();
            p.x[0] = wrap1(static_cast<double>(j) / static_cast<double>(denom));
            push_verified(f, period, p, out.points);
        }
    } else if (const auto* m = std::get_if<TorusLinear>(&d)) {
        const int dim = f.dim();
        IntMatrix ap = IntMatrix::Identity(dim, dim);
        for (int i = 0; i < period; ++i) ap = (ap * m->matrix).eval();
        IntMatrix mm = ap - IntMatrix::Identity(dim, dim);
        IntegerDiagonalForm df = integer_diagonalize(mm);
        std::vector<long long> idx(static_cast<std::size_t>(dim), 0);
        for (;;) {
            Eigen::VectorXd tvec(dim);
            for (int i = 0; i < dim; ++i)
                tvec[i] = static_cast<double>(idx[static_cast<std::size_t>(i)]) / static_cast<double>(df.s[static_cast<std::size_t>(i)]);
            Eigen::VectorXd x = df.v.cast<double>() * tvec;
            Point p;
            p.manifold = f.manifold();
            for (int i = 0; i < dim; ++i) p.x[i] = wrap1(x[i]);
            push_verified(f, period, p, out.points);
            int axis = 0;
            while (axis < dim) {
                if (++idx[static_cast<std::size_t>(axis)] < df.s[static_cast<std::size_t>(axis)]) break;
                idx[static_cast<std::size_t>(axis)] = 0;
                ++axis;
            }
            if (axis == dim) break;
        }
    } else if (const auto* m = std::get_if<Quadratic>(&d)) {
        if (period > 4)
            fail(ErrorCode::BadConfig, "periodic_points: quadratic models support period <= 4 (degree 2^p roots)");
        std::vector<std::complex<double>> poly{m->c, {0.0, 0.0}};  // z^2 + c, leading 1 implicit
        for (int it = 1; it < period; ++it) {
            // compose: p <- p^2 + c (monic squares to monic)
            std::size_t n = poly.size();
            std::vector<std::complex<double>> sq(2 * n, std::complex<double>{0.0, 0.0});
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) sq[i + j] += poly[i] * poly[j];
                sq[i + n] += 2.0 * poly[i];  // cross terms with the monic leading 1
            }
            sq[0] += m->c;
            poly = std::move(sq);
        }
        poly[1] -= 1.0;  // subtract z
        for (const std::complex<double>& z : polynomial_roots(poly)) push_verified(f, period, sphere_point(z), out.points);
        push_verified(f, period, sphere_infinity(), out.points);
    } else {
        int k = (std::get_if<ProductExpandingMS>(&d)) ? std::get<ProductExpandingMS>(d).k : std::get<ForcedCircle>(d).k;
        const MorseSmale& g = (std::get_if<ProductExpandingMS>(&d)) ? std::get<ProductExpandingMS>(d).fiber
                                                                    : std::get<ForcedCircle>(d).fiber;
        double kappa = (std::get_if<ForcedCircle>(&d)) ? std::get<ForcedCircle>(d).kappa : 0.0;
        long long denom = std::llabs(ipow(k, period) - 1);
        for (long long j = 0; j < denom; ++j) {
            double x0 = wrap1(static_cast<double>(j) / static_cast<double>(denom));
            std::vector<double> orbit(static_cast<std::size_t>(period));
            double x = x0;
            for (int t = 0; t < period; ++t) {
                orbit[static_cast<std::size_t>(t)] = x;
                x = wrap1(static_cast<double>(k) * x);
            }
            auto lift = [&](double y) {
                double v = y;
                for (int t = 0; t < period; ++t)
                    v = g.lift(v) + kappa * std::sin(kTwoPi * orbit[static_cast<std::size_t>(t)]);
                return v;
            };
            for (double y : circle_lift_fixed_points(lift)) {
                Point p;
                p.manifold = f.manifold();
                p.x[0] = x0;
                p.x[1] = wrap1(y);
                push_verified(f, period, p, out.points);
            }
        }
    }
    std::sort(out.points.begin(), out.points.end(), [](const Point& a, const Point& b) { return lex_less(a, b); });
    return out;
}

namespace {

// |det Df| evaluated in the chart that owns the point; at infinity the 1/z
// chart is used, where the quadratic family degenerates.
double chart_abs_det(const Endomorphism& f, const Point& p) {
    if (p.manifold.is_sphere()) {
        if (p.at_infinity) return f.is_regular(p) ? 1.0 : 0.0;
        double det = std::fabs(f.jacobian(p).entries.determinant());
        std::complex<double> z = p.z();
        if (std::abs(z) > 1.0) {
            Point img = f.eval(p);
            if (img.at_infinity) return 0.0;
            double zfac = std::norm(z);                      // |z|^2
            double ffac = std::norm(img.z());                // |f(z)|^2
            return det * zfac * zfac / (ffac * ffac);        // w-chart determinant
        }
        return det;
    }
    return std::fabs(f.jacobian(p).entries.determinant());
}

// Compass pattern search for the minimum of |det Df| inside a cell.
double refine_min_det(const Endomorphism& f, const BoxGrid& grid, int cell, const Point& start, Point* arg_min) {
    const int d = f.manifold().dim;
    Point best = start;
    double best_val = chart_abs_det(f, best);
    double step = 0.25 / grid.subdivisions();
    if (f.manifold().is_sphere()) step = 0.5 / grid.subdivisions();
    for (int it = 0; it < 80; ++it) {
        bool improved = false;
        for (int axis = 0; axis < d; ++axis) {
            for (int sign = -1; sign <= 1; sign += 2) {
                Point trial = best;
                if (trial.at_infinity) continue;
                trial.x[axis] += sign * step;
                if (f.manifold().is_torus()) trial.x[axis] = wrap1(trial.x[axis]);
                if (grid.cell_of(trial) != cell) continue;
                double v = chart_abs_det(f, trial);
                if (v < best_val) {
                    best_val = v;
                    best = trial;
                    improved = true;
                }
            }
        }
        if (!improved) step *= 0.5;
        if (step < 1e-14) break;
    }
    // The point at infinity sits at a cell center and has no chart
    // displacement; test it directly when it belongs to this cell.
    if (f.manifold().is_sphere()) {
        Point inf = sphere_infinity();
        if (grid.cell_of(inf) == cell && !f.is_regular(inf)) {
            best = inf;
            best_val = 0.0;
        }
    }
    if (arg_min) *arg_min = best;
    return best_val;
}

}  // namespace

AxiomAReport verify_axiom_a(const Endomorphism& f, const TransitionGraph& t, int max_period) {
    AxiomAReport report;
    std::vector<int> recurrent = chain_recurrent_cells(t);

    for (int cell : recurrent) {
        std::vector<Point> samples = t.grid.cell_samples(cell, t.samples_per_cell, t.seed);
        if (samples.empty()) continue;
        Point best = samples.front();
        double best_val = std::numeric_limits<double>::infinity();
        for (const Point& p : samples) {
            double v = chart_abs_det(f, p);
            if (v < best_val) {
                best_val = v;
                best = p;
            }
        }
        if (best_val < 0.05) {
            Point witness;
            double refined = refine_min_det(f, t.grid, cell, best, &witness);
            if (refined < 1e-12) {
                report.singular_free = false;
                report.singular_witnesses.emplace_back(cell, witness);
            }
        }
    }

    int cap = max_period;
    if (std::get_if<Quadratic>(&f.descriptor()) && cap > 4) {
        cap = 4;
        report.periodic_search_partial = true;
    }
    report.max_period_used = cap;
    std::vector<Point> pps;
    for (int p = 1; p <= cap; ++p) {
        PeriodicPointSet set = periodic_points(f, p, t.grid);
        for (const Point& q : set.points) {
            bool dup = false;
            for (const Point& r : pps)
                if (distance(q, r) < 1e-10) {
                    dup = true;
                    break;
                }
            if (!dup) pps.push_back(q);
        }
    }
    report.periodic_count = static_cast<int>(pps.size());

    // Bucket periodic points by cell, then test each recurrent cell against
    // the points in its 2-ring.
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(t.grid.cell_count()));
    for (std::size_t i = 0; i < pps.size(); ++i)
        buckets[static_cast<std::size_t>(t.grid.cell_of(pps[i]))].push_back(static_cast<int>(i));
    const double diam = t.grid.cell_diameter();
    int near = 0;
    for (int cell : recurrent) {
        Point center = t.grid.cell_center(cell);
        bool found = false;
        std::vector<int> zone = t.grid.fatten({cell}, 2);
        for (int zc : zone) {
            for (int pi : buckets[static_cast<std::size_t>(zc)])
                if (distance(center, pps[static_cast<std::size_t>(pi)]) <= diam) {
                    found = true;
                    break;
                }
            if (found) break;
        }
        if (found) ++near;
    }
    report.periodic_density = recurrent.empty() ? 0.0 : static_cast<double>(near) / static_cast<double>(recurrent.size());

    try {
        std::vector<BackwardBranch> branches = sample_in_set_branches(f, t, recurrent, 16, 24);
        report.hyperbolicity = verify_hyperbolic(f, branches, 16);
    } catch (const Error&) {
        report.hyperbolicity = HyperbolicityEstimate{};
    }
    report.passes = report.singular_free && report.hyperbolicity.hyperbolic;
    return report;
}

AttractorEvidence classify_attractor(const Endomorphism& f, const TransitionGraph& t, const BasicSetApprox& set,
                                     const std::vector<double>& eps_list, int depth, int n_test) {
    if (set.cells.empty()) fail(ErrorCode::BadConfig, "classify_attractor: empty basic set");
    AttractorEvidence ev;
    ev.branch_depth = depth;
    std::vector<BackwardBranch> branches = sample_in_set_branches(f, t, set.cells, n_test, depth);
    std::vector<char> contained_cells = bitmap_of(t.grid.fatten(set.cells, 1), t.grid.cell_count());
    const double diam = t.grid.cell_diameter();

    for (double eps : eps_list) {
        AttractorEvidence::PerEps rec;
        rec.eps = eps;
        rec.all_contained = true;
        for (const BackwardBranch& b : branches) {
            LocalDisk disk;
            try {
                disk = grow_unstable_disk(f, b, eps, 64);
                ++rec.disks_grown;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::EmptyDisk) throw;
                ++rec.disks_failed;
                rec.all_contained = false;
                continue;
            }
            for (const Point& s : disk.samples) {
                if (contained_cells[static_cast<std::size_t>(t.grid.cell_of(s))]) continue;
                rec.all_contained = false;
                double dist = t.grid.distance_to_cells(s, set.cells);
                if (dist > diam && (!rec.has_escape_witness || dist > rec.witness_distance)) {
                    rec.has_escape_witness = true;
                    rec.witness = s;
                    rec.witness_distance = dist;
                }
            }
        }
        ev.per_eps.push_back(rec);
    }
    bool any_contained = false, all_witnessed = true;
    for (const auto& rec : ev.per_eps) {
        any_contained = any_contained || rec.all_contained;
        all_witnessed = all_witnessed && rec.has_escape_witness;
    }
    if (any_contained)
        ev.verdict = AttractorVerdict::Attractor;
    else if (all_witnessed)
        ev.verdict = AttractorVerdict::Neither;
    else
        ev.verdict = AttractorVerdict::Inconclusive;
    return ev;
}

RepellerEvidence classify_repeller(const Endomorphism& f, const TransitionGraph& t, const BasicSetApprox& set,
                                   int fattenings) {
    (void)f;
    RepellerEvidence ev;
    std::vector<std::vector<int>> rev = t.reversed();
    for (int r = 1; r <= fattenings; ++r) {
        RepellerEvidence::PerFattening rec;
        rec.r = r;
        std::vector<int> u = t.grid.fatten(set.cells, r);
        std::vector<char> in_u = bitmap_of(u, t.grid.cell_count());

        rec.covered_from_inside = true;
        for (int c : u) {
            bool covered = false;
            for (int d : rev[static_cast<std::size_t>(c)])
                if (in_u[static_cast<std::size_t>(d)]) {
                    covered = true;
                    break;
                }
            if (!covered) {
                rec.covered_from_inside = false;
                break;
            }
        }

        // Greatest subset of U whose forward edges stay inside: the cell
        // version of the intersection of backward images of U.
        std::vector<char> v = in_u;
        for (int it = 0; it < 64; ++it) {
            bool changed = false;
            for (int c : u) {
                if (!v[static_cast<std::size_t>(c)]) continue;
                bool keeps = false;
                for (int d : t.out[static_cast<std::size_t>(c)])
                    if (v[static_cast<std::size_t>(d)]) {
                        keeps = true;
                        break;
                    }
                if (!keeps) {
                    v[static_cast<std::size_t>(c)] = 0;
                    changed = true;
                }
            }
            if (!changed) break;
        }
        std::vector<int> tolerated = (r >= 2) ? t.grid.fatten(set.cells, r - 1) : set.cells;
        std::vector<char> tol = bitmap_of(tolerated, t.grid.cell_count());
        bool contains_set = true;
        for (int c : set.cells)
            if (!v[static_cast<std::size_t>(c)]) {
                contains_set = false;
                break;
            }
        int excess = 0;
        for (int c : u)
            if (v[static_cast<std::size_t>(c)] && !tol[static_cast<std::size_t>(c)]) ++excess;
        rec.final_excess_cells = excess;
        rec.shrinks_to_set = contains_set && excess == 0;
        ev.per_r.push_back(rec);
        if (rec.covered_from_inside && rec.shrinks_to_set) ev.verdict = RepellerVerdict::Repeller;
    }
    return ev;
}

MetricExpansionEstimate verify_expanding_metric(const Endomorphism& f, const TransitionGraph& t,
                                                const BasicSetApprox& set, double eps, int n_pairs) {
    double scale = injectivity_scale(f, t, set, std::max(8, n_pairs / 8));
    if (!(eps < scale))
        fail(ErrorCode::BadConfig, "verify_expanding_metric: eps = " + std::to_string(eps) +
                                       " not below the injectivity scale " + std::to_string(scale));
    std::vector<Point> pts = refined_set_points(f, t, set.cells, std::max(24, n_pairs / 4));
    MetricExpansionEstimate est;
    est.mu = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.size() && est.pairs_used < n_pairs; ++i) {
        for (std::size_t j = i + 1; j < pts.size() && est.pairs_used < n_pairs; ++j) {
            double d0 = distance(pts[i], pts[j]);
            if (d0 <= 1e-12 || d0 >= eps) continue;
            double d1 = distance(f.eval(pts[i]), f.eval(pts[j]));
            est.mu = std::min(est.mu, d1 / d0);
            ++est.pairs_used;
        }
    }
    if (est.pairs_used == 0) {
        est.mu = std::numeric_limits<double>::quiet_NaN();
        est.expanding = false;
        return est;
    }
    est.expanding = est.mu > 1.0 + 1e-3;
    return est;
}

DerivativeExpansionEstimate verify_expanding_derivative(const Endomorphism& f, const TransitionGraph& t,
                                                        const BasicSetApprox& set, int horizon) {
    std::vector<BackwardBranch> branches = sample_in_set_branches(f, t, set.cells, 16, 24);
    DerivativeExpansionEstimate est;
    est.lambda = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> runs;
    for (const BackwardBranch& b : branches) {
        Splitting split;
        try {
            split = estimate_splitting(f, b);
        } catch (const Error&) {
            continue;
        }
        SmallMatrix frame;
        if (split.dim_s == 0)
            frame = SmallMatrix::Identity(f.dim(), f.dim());
        else
            frame = split.eu;
        if (frame.cols() == 0) continue;
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
        ++est.samples;
        for (int c = 0; c < frame.cols(); ++c) {
            std::vector<double> run{1.0};
            SmallVector w = frame.col(c);
            w.normalize();
            for (int k = 0; k < horizon; ++k) {
                w = jac[static_cast<std::size_t>(k)] * w;
                run.push_back(w.norm());
            }
            runs.push_back(std::move(run));
        }
    }
    if (runs.empty()) {
        est.lambda = 0.0;
        return est;
    }
    for (const auto& run : runs)
        est.lambda = std::min(est.lambda, std::pow(run.back(), 1.0 / static_cast<double>(horizon)));
    est.C = 1.0;
    for (const auto& run : runs)
        for (std::size_t k = 0; k < run.size(); ++k)
            est.C = std::min(est.C, run[k] / std::pow(est.lambda, static_cast<double>(k)));
    est.expanding = est.lambda > 1.0 + 1e-3;
    return est;
}

double injectivity_scale(const Endomorphism& f, const TransitionGraph& t, const BasicSetApprox& set, int n_pairs) {
    std::vector<Point> pts = refined_set_points(f, t, set.cells, std::max(8, n_pairs));
    std::vector<char> near_set = bitmap_of(t.grid.fatten(set.cells, 3), t.grid.cell_count());
    double best = std::numeric_limits<double>::infinity();
    for (const Point& q : pts) {
        if (!f.is_regular(q))
            fail(ErrorCode::SingularPointOnBranch, "injectivity_scale: singular sampled point");
        std::vector<Point> pre = f.preimages(f.eval(q));
        for (std::size_t i = 0; i < pre.size(); ++i) {
            if (!near_set[static_cast<std::size_t>(t.grid.cell_of(pre[i]))]) continue;
            for (std::size_t j = i + 1; j < pre.size(); ++j) {
                if (!near_set[static_cast<std::size_t>(t.grid.cell_of(pre[j]))]) continue;
                best = std::min(best, distance(pre[i], pre[j]));
            }
        }
    }
    return best;
}

bool check_preimage_purity(const Endomorphism& f, const TransitionGraph& t, const BasicSetApprox& set, int r) {
    int cap = std::get_if<Quadratic>(&f.descriptor()) ? 4 : 8;
    std::vector<char> set_cells = bitmap_of(t.grid.fatten(set.cells, 1), t.grid.cell_count());
    std::vector<Point> reps;
    for (int p = 1; p <= cap; ++p)
        for (const Point& q : periodic_points(f, p, t.grid).points)
            if (set_cells[static_cast<std::size_t>(t.grid.cell_of(q))]) {
                bool dup = false;
                for (const Point& s : reps)
                    if (distance(q, s) < 1e-10) {
                        dup = true;
                        break;
                    }
                if (!dup) reps.push_back(q);
            }
    if (reps.empty()) reps = refined_set_points(f, t, set.cells, 16);
    std::vector<char> u = bitmap_of(t.grid.fatten(set.cells, r), t.grid.cell_count());
    for (const Point& q : reps)
        for (const Point& pre : f.preimages(q)) {
            int cell = t.grid.cell_of(pre);
            if (u[static_cast<std::size_t>(cell)] && !set_cells[static_cast<std::size_t>(cell)]) return false;
        }
    return true;
}

int omega_limit(const Endomorphism& f, const TransitionGraph& t, const std::vector<BasicSetApprox>& sets,
                const Point& x, int burn_in) {
    if (sets.empty()) fail(ErrorCode::BadConfig, "omega_limit: empty decomposition");
    std::vector<std::vector<char>> members;
    members.reserve(sets.size());
    for (const BasicSetApprox& s : sets) members.push_back(bitmap_of(t.grid.fatten(s.cells, 1), t.grid.cell_count()));
    Point p = f.iterate(x, burn_in);
    std::vector<int> streak(sets.size(), 0);
    const int budget = 4096;
    for (int step = 0; step < budget; ++step) {
        int cell = t.grid.cell_of(p);
        for (std::size_t i = 0; i < sets.size(); ++i) {
            if (members[i][static_cast<std::size_t>(cell)]) {
                if (++streak[i] >= 64) return static_cast<int>(i);
            } else {
                streak[i] = 0;
            }
        }
        p = f.eval(p);
    }
    fail(ErrorCode::NonconvergentAtBudget, "omega_limit: orbit tail not absorbed within budget");
}

double uniform_margin(const std::vector<Point>& k_points, const std::vector<int>& u_cells, const BoxGrid& grid) {
    std::vector<char> in_u = bitmap_of(u_cells, grid.cell_count());
    std::vector<int> ring;
    for (int c : grid.fatten(u_cells, 1))
        if (!in_u[static_cast<std::size_t>(c)]) ring.push_back(c);
    double margin = std::numeric_limits<double>::infinity();
    for (const Point& p : k_points) {
        if (!in_u[static_cast<std::size_t>(grid.cell_of(p))])
            fail(ErrorCode::PointOutsideSet, "uniform_margin: point outside the cell union");
        for (int c : ring) margin = std::min(margin, grid.distance_to_cell(p, c));
    }
    return margin;
}

SmoothnessReport attractor_smoothness(const Endomorphism& f, const TransitionGraph& t, const BasicSetApprox& set,
                                      int resolution) {
    const int d = f.dim();
    if (!(set.type_conclusive && set.type_uv == std::make_pair(d - 1, 1)))
        fail(ErrorCode::BadConfig, "attractor_smoothness: set is not of conclusive type (n-1, 1)");
    int k;
    const MorseSmale* g;
    double kappa;
    if (const auto* m = std::get_if<ProductExpandingMS>(&f.descriptor())) {
        k = m->k;
        g = &m->fiber;
        kappa = 0.0;
    } else if (const auto* m = std::get_if<ForcedCircle>(&f.descriptor())) {
        k = m->k;
        g = &m->fiber;
        kappa = m->kappa;
    } else {
        fail(ErrorCode::BadConfig, "attractor_smoothness: graph-fitting supports skew-product models only");
    }

    // The cells must form a graph over the expanding coordinate: one short
    // wrap-contiguous run of rows per column.
    const int n = t.grid.subdivisions();
    std::vector<std::vector<int>> columns(static_cast<std::size_t>(n));
    for (int cell : set.cells) columns[static_cast<std::size_t>(cell % n)].push_back(cell / n);
    std::vector<double> col_value(static_cast<std::size_t>(n));
    for (int ix = 0; ix < n; ++ix) {
        auto& rows = columns[static_cast<std::size_t>(ix)];
        if (rows.empty()) fail(ErrorCode::NotAGraph, "attractor_smoothness: empty column " + std::to_string(ix));
        std::sort(rows.begin(), rows.end());
        int gaps = 0, gap_at = -1;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            int cur = rows[i];
            int nxt = rows[(i + 1) % rows.size()];
            int diff = (nxt - cur + n) % n;
            if (diff != 1 && !(rows.size() == 1)) {
                ++gaps;
                gap_at = static_cast<int>(i);
            }
        }
        if (rows.size() > 4 || (rows.size() > 1 && gaps != 1))
            fail(ErrorCode::NotAGraph, "attractor_smoothness: column " + std::to_string(ix) + " is not a short run");
        // circular mean of the run, anchored at the row after the gap
        int anchor = rows.size() == 1 ? rows[0] : rows[static_cast<std::size_t>((gap_at + 1) % static_cast<int>(rows.size()))];
        double sum = 0.0;
        for (int row : rows) {
            int off = (row - anchor + n) % n;
            sum += anchor + off;
        }
        double y = (sum / static_cast<double>(rows.size()) + 0.5) / n;
        y = wrap1(y);
        col_value[static_cast<std::size_t>(ix)] = (y > 0.5) ? y - 1.0 : y;
    }

    // Initialize h on the requested resolution by periodic interpolation of
    // the column values, then iterate the fiber map to its fixed point.
    std::vector<double> h(static_cast<std::size_t>(resolution));
    for (int j = 0; j < resolution; ++j) {
        double x = (static_cast<double>(j) + 0.5) / resolution;
        double pos = x * n - 0.5;
        int i0 = static_cast<int>(std::floor(pos));
        double w = pos - i0;
        double a = col_value[static_cast<std::size_t>(((i0 % n) + n) % n)];
        double b = col_value[static_cast<std::size_t>(((i0 + 1) % n + n) % n)];
        h[static_cast<std::size_t>(j)] = (1.0 - w) * a + w * b;
    }
    auto interp = [&](const std::vector<double>& values, double x) {
        double pos = wrap1(x) * resolution - 0.5;
        int i0 = static_cast<int>(std::floor(pos));
        double w = pos - i0;
        double a = values[static_cast<std::size_t>(((i0 % resolution) + resolution) % resolution)];
        double b = values[static_cast<std::size_t>(((i0 + 1) % resolution + resolution) % resolution)];
        return (1.0 - w) * a + w * b;
    };
    std::vector<double> next(static_cast<std::size_t>(resolution));
    for (int it = 0; it < 500; ++it) {
        double change = 0.0;
        for (int j = 0; j < resolution; ++j) {
            double xj = static_cast<double>(j) / resolution;
            double xpre = xj / k;
            double v = g->lift(interp(h, xpre)) + kappa * std::sin(kTwoPi * xpre);
            change = std::max(change, std::fabs(v - h[static_cast<std::size_t>(j)]));
            next[static_cast<std::size_t>(j)] = v;
        }
        h.swap(next);
        if (change < 1e-13) break;
    }

    SmoothnessReport rep;
    rep.resolution = resolution;
    const double dx = 1.0 / resolution;
    for (int j = 0; j < resolution; ++j) {
        double h0 = h[static_cast<std::size_t>(j)];
        double h1 = h[static_cast<std::size_t>((j + 1) % resolution)];
        double h2 = h[static_cast<std::size_t>((j + 2) % resolution)];
        rep.sup_h = std::max(rep.sup_h, std::fabs(h0));
        rep.max_first_quotient = std::max(rep.max_first_quotient, std::fabs(h1 - h0) / dx);
        rep.max_second_quotient = std::max(rep.max_second_quotient, std::fabs(h2 - 2.0 * h1 + h0) / (dx * dx));
    }
    return rep;
}

RadialRoughness radial_graph_roughness(const Endomorphism& f, int resolution) {
    const auto* m = std::get_if<Quadratic>(&f.descriptor());
    if (!m) fail(ErrorCode::BadConfig, "radial_graph_roughness: quadratic models only");
    auto escapes = [&](std::complex<double> z) {
        for (int it = 0; it < 400; ++it) {
            if (std::norm(z) > 16.0) return true;
            z = z * z + m->c;
        }
        return false;
    };
    if (escapes({0.0, 0.0}))
        fail(ErrorCode::BadConfig, "radial_graph_roughness: critical orbit escapes; no bounded inner region");
    RadialRoughness rep;
    rep.resolution = resolution;
    std::vector<double> radius(static_cast<std::size_t>(resolution));
    for (int j = 0; j < resolution; ++j) {
        double theta = kTwoPi * static_cast<double>(j) / resolution;
        std::complex<double> dir{std::cos(theta), std::sin(theta)};
        double lo = 0.0, hi = 3.0;
        for (int it = 0; it < 100; ++it) {
            double mid = 0.5 * (lo + hi);
            if (escapes(mid * dir))
                hi = mid;
            else
                lo = mid;
        }
        radius[static_cast<std::size_t>(j)] = 0.5 * (lo + hi);
        rep.sup_r = std::max(rep.sup_r, radius[static_cast<std::size_t>(j)]);
    }
    const double dtheta = kTwoPi / resolution;
    for (int j = 0; j < resolution; ++j) {
        double a = radius[static_cast<std::size_t>(j)];
        double b = radius[static_cast<std::size_t>((j + 1) % resolution)];
        rep.max_first_quotient = std::max(rep.max_first_quotient, std::fabs(b - a) / dtheta);
    }
    return rep;
}

}  // namespace endo
