#pragma once

#include <cstdint>
#include <vector>

#include "endo/models.hpp"

namespace endo {

// Uniform cell grid over a supported manifold. Tori get n^d axis-aligned
// cells. The sphere gets two n x n square charts covering [-1,1)^2: the
// z chart owns |z| <= 1, the 1/z chart owns |z| > 1, and the point at
// infinity lives in the w = 0 cell of the second chart. Chart cells whose
// rectangle misses the owned region are dead: they never receive points.
class BoxGrid {
public:
    BoxGrid(const ManifoldSpec& manifold, int subdivisions);

    const ManifoldSpec& manifold() const { return manifold_; }
    int subdivisions() const { return n_; }
    int cell_count() const { return cell_count_; }

    int cell_of(const Point& p) const;
    Point cell_center(int cell) const;
    bool cell_usable(int cell) const;

    // Upper bound on the metric diameter of any usable cell.
    double cell_diameter() const;

    // All usable cells meeting the metric ball around a point.
    std::vector<int> rasterize_ball(const Point& center, double radius) const;

    // Deterministic low-discrepancy samples inside the cell's owned region;
    // the seed only rotates the sample pattern. May return fewer than
    // requested for nearly-dead sphere cells.
    std::vector<Point> cell_samples(int cell, int count, std::uint64_t seed) const;

    // Ring-1 neighborhood (wrapped on tori, chart-aware on the sphere).
    std::vector<int> neighbors(int cell) const;

    // Cells within r rings of the given set, including the set itself.
    std::vector<int> fatten(const std::vector<int>& cells, int rings) const;

    // Metric distance estimate from a point to the cell's region (exact on
    // tori, rect-sampled on the sphere).
    double distance_to_cell(const Point& p, int cell) const;

    // Minimal distance from p to a cell set given as a sorted vector; 0 when
    // p's own cell belongs to it.
    double distance_to_cells(const Point& p, const std::vector<int>& sorted_cells) const;

private:
    ManifoldSpec manifold_;
    int n_;
    int cell_count_;

    int torus_index(const int* idx) const;
    void torus_coords(int cell, int* idx) const;
    std::vector<int> neighbors_same_chart(int cell) const;
};

bool cell_set_contains(const std::vector<int>& sorted_cells, int cell);

}  // namespace endo
