#pragma once

#include <optional>
#include <string>

#include "endo/grid.hpp"
#include "endo/hyperbolic.hpp"
#include "endo/local_manifolds.hpp"

namespace endo {

// Combinatorial enclosure of the map: one node per grid cell, an edge
// cell -> cell whenever the bloated image ball of some cell sample meets
// the target cell.
struct TransitionGraph {
    const Endomorphism* f = nullptr;
    BoxGrid grid;
    int samples_per_cell = 16;
    double bloat_factor = 0.5;
    std::uint64_t seed = 0;
    std::vector<std::vector<int>> out;

    std::vector<std::vector<int>> reversed() const;
};

TransitionGraph build_transition_graph(const Endomorphism& f, const BoxGrid& grid, int samples_per_cell,
                                       double bloat_factor = 0.5, std::uint64_t seed = 0, int threads = 1);

// Union of the nontrivial strongly connected classes that survive a direct
// orbit-persistence probe. At any finite resolution the sampled graph grows
// a halo of self-looping cells around expanding invariant sets whose true
// orbits leave immediately; classes are therefore kept only when a sampled
// forward orbit or a backward branch genuinely lingers in them.
std::vector<int> chain_recurrent_cells(const TransitionGraph& t);

enum class AttractorVerdict { Attractor, Neither, Inconclusive };
enum class RepellerVerdict { Repeller, NotRepeller };

struct BasicSetApprox {
    std::vector<int> cells;  // sorted cell ids, one strongly connected class
    std::pair<int, int> type_uv{-1, -1};
    bool type_conclusive = false;
    std::string type_note;
};

// One BasicSetApprox per SCC of the recurrent subgraph, ordered by cell
// count descending; types filled by basic_set_type, with failures recorded
// in type_note instead of thrown.
std::vector<BasicSetApprox> decompose_basic_sets(const TransitionGraph& t, const std::vector<int>& recurrent,
                                                 int branch_depth = 24);

struct SpectralDecomposition {
    TransitionGraph graph;
    std::vector<int> recurrent;
    std::vector<BasicSetApprox> sets;
};

SpectralDecomposition spectral_decomposition(const Endomorphism& f, const BoxGrid& grid, int samples_per_cell,
                                             double bloat_factor = 0.5, std::uint64_t seed = 0, int threads = 1,
                                             int branch_depth = 24);

struct TypeVote {
    int dim_u = -1;
    int dim_s = -1;
    bool conclusive = false;
    int voters = 0;
    std::string note;
};

// Majority-vote type over >= 17 sampled in-set points carrying in-set
// branches; throws NoInSetBranch when no sampled point admits one.
TypeVote basic_set_type(const Endomorphism& f, const TransitionGraph& t, const std::vector<int>& cells,
                        int branch_depth = 24);

// Samples points essentially on the invariant set: cell centers are pushed
// forward while they stay in the fattened cell set, then a member-pruned
// backward branch is grown and re-rooted a few levels down so both the top
// point and its past lie on the set up to the hyperbolic contraction.
std::vector<BackwardBranch> sample_in_set_branches(const Endomorphism& f, const TransitionGraph& t,
                                                   const std::vector<int>& cells, int count, int depth);
std::vector<Point> refined_set_points(const Endomorphism& f, const TransitionGraph& t,
                                      const std::vector<int>& cells, int count);

struct PeriodicPointSet {
    int period = 1;
    std::vector<Point> points;
};

// All fixed points of f^period; closed-form for circle/torus-linear models,
// per-itinerary bisection for product/forced, polynomial roots for
// quadratic (capped at period 4; higher periods are reported as partial).
PeriodicPointSet periodic_points(const Endomorphism& f, int period, const BoxGrid& grid);

struct AxiomAReport {
    bool singular_free = true;
    std::vector<std::pair<int, Point>> singular_witnesses;  // recurrent cell, witness point
    double periodic_density = 0.0;
    int periodic_count = 0;
    int max_period_used = 0;
    bool periodic_search_partial = false;
    HyperbolicityEstimate hyperbolicity;
    bool passes = false;
};

AxiomAReport verify_axiom_a(const Endomorphism& f, const TransitionGraph& t, int max_period);

struct AttractorEvidence {
    struct PerEps {
        double eps = 0.0;
        bool all_contained = false;
        bool has_escape_witness = false;
        Point witness;
        double witness_distance = 0.0;
        int disks_grown = 0;
        int disks_failed = 0;
    };
    std::vector<PerEps> per_eps;
    int branch_depth = 0;
    AttractorVerdict verdict = AttractorVerdict::Inconclusive;
};

// Theorem-1 style test: unstable disks of in-set branches must stay inside
// the set (bloated by one cell) for some eps in the list.
AttractorEvidence classify_attractor(const Endomorphism& f, const TransitionGraph& t, const BasicSetApprox& set,
                                     const std::vector<double>& eps_list, int depth, int n_test);

struct RepellerEvidence {
    struct PerFattening {
        int r = 0;
        bool covered_from_inside = false;  // cl(U) subset f(U) at cell resolution
        bool shrinks_to_set = false;
        int final_excess_cells = 0;
    };
    std::vector<PerFattening> per_r;
    RepellerVerdict verdict = RepellerVerdict::NotRepeller;
};

RepellerEvidence classify_repeller(const Endomorphism& f, const TransitionGraph& t, const BasicSetApprox& set,
                                   int fattenings);

struct MetricExpansionEstimate {
    double mu = 0.0;
    int pairs_used = 0;
    bool expanding = false;
};

// min over close sampled pairs on the set of d(f x, f y)/d(x, y); requires
// eps below the injectivity scale of the set.
MetricExpansionEstimate verify_expanding_metric(const Endomorphism& f, const TransitionGraph& t,
                                                const BasicSetApprox& set, double eps, int n_pairs);

struct DerivativeExpansionEstimate {
    double C = 1.0;
    double lambda = 0.0;
    int samples = 0;
    bool expanding = false;
};

DerivativeExpansionEstimate verify_expanding_derivative(const Endomorphism& f, const TransitionGraph& t,
                                                        const BasicSetApprox& set, int horizon);

// Largest eps such that sampled pairs closer than eps never collide under
// f: the minimal distance between distinct preimages of common image
// points near the set.
double injectivity_scale(const Endomorphism& f, const TransitionGraph& t, const BasicSetApprox& set, int n_pairs);

// True iff no preimage of an on-set representative that lands in the
// r-fattened neighborhood falls outside the set's cells.
bool check_preimage_purity(const Endomorphism& f, const TransitionGraph& t, const BasicSetApprox& set, int r);

// Index of the basic set absorbing the orbit tail (64 consecutive steps)
// after burn_in; throws NonconvergentAtBudget otherwise.
int omega_limit(const Endomorphism& f, const TransitionGraph& t, const std::vector<BasicSetApprox>& sets,
                const Point& x, int burn_in);

// min over K of the distance to the complement of the cell union; throws
// PointOutsideSet if some point of K lies outside U.
double uniform_margin(const std::vector<Point>& k_points, const std::vector<int>& u_cells, const BoxGrid& grid);

struct SmoothnessReport {
    int resolution = 0;
    double sup_h = 0.0;
    double max_first_quotient = 0.0;
    double max_second_quotient = 0.0;
};

// Fits the invariant graph y = h(x) of a type (1,1) codimension-one
// attractor by fixed-point iteration of the fiber map and reports
// difference-quotient statistics as C^1 evidence.
SmoothnessReport attractor_smoothness(const Endomorphism& f, const TransitionGraph& t, const BasicSetApprox& set,
                                      int resolution = 256);

struct RadialRoughness {
    int resolution = 0;
    double sup_r = 0.0;
    double max_first_quotient = 0.0;
};

// Smoothness probe for sphere repellers that are radial graphs over the
// angle: the escape-time boundary radius R(theta) is located by bisection
// per ray and its difference quotients are reported.
RadialRoughness radial_graph_roughness(const Endomorphism& f, int resolution);

}  // namespace endo
