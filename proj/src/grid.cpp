#include "endo/grid.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>

namespace endo {
namespace {

int clamp_index(int i, int n) { return std::max(0, std::min(n - 1, i)); }

// Distance from the origin to an axis-aligned rectangle (chart units).
double rect_origin_distance(double lo_u, double hi_u, double lo_v, double hi_v) {
    double du = 0.0, dv = 0.0;
    if (lo_u > 0.0) du = lo_u;
    else if (hi_u < 0.0) du = -hi_u;
    if (lo_v > 0.0) dv = lo_v;
    else if (hi_v < 0.0) dv = -hi_v;
    return std::hypot(du, dv);
}

}  // namespace

bool cell_set_contains(const std::vector<int>& sorted_cells, int cell) {
    return std::binary_search(sorted_cells.begin(), sorted_cells.end(), cell);
}

BoxGrid::BoxGrid(const ManifoldSpec& manifold, int subdivisions) : manifold_(manifold), n_(subdivisions) {
    if (subdivisions < 2) fail(ErrorCode::BadConfig, "grid: subdivisions must be >= 2");
    if (manifold.is_torus()) {
        int c = 1;
        for (int i = 0; i < manifold.dim; ++i) c *= n_;
        cell_count_ = c;
    } else {
        cell_count_ = 2 * n_ * n_;
    }
}

int BoxGrid::torus_index(const int* idx) const {
    int c = 0;
    for (int i = manifold_.dim - 1; i >= 0; --i) c = c * n_ + idx[i];
    return c;
}

void BoxGrid::torus_coords(int cell, int* idx) const {
    for (int i = 0; i < manifold_.dim; ++i) {
        idx[i] = cell % n_;
        cell /= n_;
    }
}

int BoxGrid::cell_of(const Point& p) const {
    if (manifold_.is_torus()) {
        int idx[3] = {0, 0, 0};
        for (int i = 0; i < manifold_.dim; ++i)
            idx[i] = clamp_index(static_cast<int>(std::floor(p.x[i] * n_)), n_);
        return torus_index(idx);
    }
    int chart;
    double u, v;
    if (p.at_infinity) {
        chart = 1;
        u = 0.0;
        v = 0.0;
    } else {
        std::complex<double> z = p.z();
        if (std::abs(z) <= 1.0) {
            chart = 0;
            u = z.real();
            v = z.imag();
        } else {
            chart = 1;
            std::complex<double> w = 1.0 / z;
            u = w.real();
            v = w.imag();
        }
    }
    int iu = clamp_index(static_cast<int>(std::floor((u + 1.0) * 0.5 * n_)), n_);
    int iv = clamp_index(static_cast<int>(std::floor((v + 1.0) * 0.5 * n_)), n_);
    return chart * n_ * n_ + iv * n_ + iu;
}

Point BoxGrid::cell_center(int cell) const {
    if (manifold_.is_torus()) {
        int idx[3] = {0, 0, 0};
        torus_coords(cell, idx);
        Point p;
        p.manifold = manifold_;
        for (int i = 0; i < manifold_.dim; ++i) p.x[i] = (idx[i] + 0.5) / n_;
        return p;
    }
    int chart = cell / (n_ * n_);
    int rest = cell % (n_ * n_);
    double u = -1.0 + 2.0 * (rest % n_ + 0.5) / n_;
    double v = -1.0 + 2.0 * (rest / n_ + 0.5) / n_;
    std::complex<double> c{u, v};
    if (chart == 0) return sphere_point(c);
    if (std::abs(c) == 0.0) return sphere_infinity();
    return sphere_point(1.0 / c);
}

bool BoxGrid::cell_usable(int cell) const {
    if (manifold_.is_torus()) return true;
    int chart = cell / (n_ * n_);
    int rest = cell % (n_ * n_);
    double lo_u = -1.0 + 2.0 * (rest % n_) / n_;
    double lo_v = -1.0 + 2.0 * (rest / n_) / n_;
    double hi_u = lo_u + 2.0 / n_, hi_v = lo_v + 2.0 / n_;
    double d = rect_origin_distance(lo_u, hi_u, lo_v, hi_v);
    (void)chart;
    return d <= 1.0;
}

double BoxGrid::cell_diameter() const {
    if (manifold_.is_torus()) return std::sqrt(static_cast<double>(manifold_.dim)) / n_;
    // chart cell diagonal is 2*sqrt(2)/n; the round conformal factor on the
    // owned regions is at most 2.
    return 4.0 * std::sqrt(2.0) / n_;
}

std::vector<int> BoxGrid::rasterize_ball(const Point& center, double radius) const {
    std::vector<int> out;
    if (manifold_.is_torus()) {
        if (radius >= 0.5) {
            out.resize(static_cast<std::size_t>(cell_count_));
            for (int i = 0; i < cell_count_; ++i) out[static_cast<std::size_t>(i)] = i;
            return out;
        }
        int lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
        for (int i = 0; i < manifold_.dim; ++i) {
            lo[i] = static_cast<int>(std::floor((center.x[i] - radius) * n_));
            hi[i] = static_cast<int>(std::floor((center.x[i] + radius) * n_));
        }
        int idx[3] = {0, 0, 0};
        std::function<void(int)> rec = [&](int axis) {
            if (axis == manifold_.dim) {
                int wrapped[3] = {0, 0, 0};
                for (int i = 0; i < manifold_.dim; ++i) wrapped[i] = ((idx[i] % n_) + n_) % n_;
                out.push_back(torus_index(wrapped));
                return;
            }
            for (int d = lo[axis]; d <= hi[axis]; ++d) {
                idx[axis] = d;
                rec(axis + 1);
            }
        };
        rec(0);
    } else {
        // On both charts the chordal metric dominates the chart Euclidean
        // metric, so a chart ball of the same radius encloses the metric
        // ball; collect its cells in whichever charts the ball can reach.
        auto collect = [&](int chart, std::complex<double> c) {
            int iu0 = static_cast<int>(std::floor((c.real() - radius + 1.0) * 0.5 * n_));
            int iu1 = static_cast<int>(std::floor((c.real() + radius + 1.0) * 0.5 * n_));
            int iv0 = static_cast<int>(std::floor((c.imag() - radius + 1.0) * 0.5 * n_));
            int iv1 = static_cast<int>(std::floor((c.imag() + radius + 1.0) * 0.5 * n_));
            for (int iv = std::max(0, iv0); iv <= std::min(n_ - 1, iv1); ++iv)
                for (int iu = std::max(0, iu0); iu <= std::min(n_ - 1, iu1); ++iu) {
                    int cell = chart * n_ * n_ + iv * n_ + iu;
                    if (cell_usable(cell)) out.push_back(cell);
                }
        };
        if (center.at_infinity) {
            collect(1, {0.0, 0.0});
        } else {
            std::complex<double> z = center.z();
            double az = std::abs(z);
            if (az - radius <= 1.0) collect(0, z);
            if (az + radius >= 1.0 && az > 0.0) collect(1, 1.0 / z);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<Point> BoxGrid::cell_samples(int cell, int count, std::uint64_t seed) const {
    std::vector<Point> out;
    double rot[3];
    for (int i = 0; i < 3; ++i) rot[i] = unit_double(splitmix64(seed + 0x9e37u * static_cast<std::uint64_t>(i + 1)));
    if (manifold_.is_torus()) {
        int idx[3] = {0, 0, 0};
        torus_coords(cell, idx);
        for (int k = 0; k < count; ++k) {
            std::uint64_t gi = static_cast<std::uint64_t>(cell) * static_cast<std::uint64_t>(count) +
                               static_cast<std::uint64_t>(k) + 1;
            Point p;
            p.manifold = manifold_;
            for (int i = 0; i < manifold_.dim; ++i) {
                double t = radical_inverse(gi, halton_base(i)) + rot[i];
                t -= std::floor(t);
                p.x[i] = (idx[i] + t) / n_;
            }
            out.push_back(p);
        }
        return out;
    }
    int chart = cell / (n_ * n_);
    int rest = cell % (n_ * n_);
    double lo_u = -1.0 + 2.0 * (rest % n_) / n_;
    double lo_v = -1.0 + 2.0 * (rest / n_) / n_;
    int attempts = 8 * count;
    for (int k = 0; k < attempts && static_cast<int>(out.size()) < count; ++k) {
        std::uint64_t gi = static_cast<std::uint64_t>(cell) * static_cast<std::uint64_t>(attempts) +
                           static_cast<std::uint64_t>(k) + 1;
        double tu = radical_inverse(gi, 2) + rot[0];
        tu -= std::floor(tu);
        double tv = radical_inverse(gi, 3) + rot[1];
        tv -= std::floor(tv);
        std::complex<double> c{lo_u + 2.0 * tu / n_, lo_v + 2.0 * tv / n_};
        double ac = std::abs(c);
        if (chart == 0) {
            if (ac > 1.0) continue;
            out.push_back(sphere_point(c));
        } else {
            if (ac >= 1.0 || ac == 0.0) continue;
            out.push_back(sphere_point(1.0 / c));
        }
    }
    return out;
}

std::vector<int> BoxGrid::neighbors(int cell) const {
    std::vector<int> out;
    if (manifold_.is_torus()) {
        int base[3] = {0, 0, 0};
        torus_coords(cell, base);
        int idx[3] = {0, 0, 0};
        std::function<void(int)> rec = [&](int axis) {
            if (axis == manifold_.dim) {
                int wrapped[3] = {0, 0, 0};
                for (int i = 0; i < manifold_.dim; ++i) wrapped[i] = ((idx[i] % n_) + n_) % n_;
                out.push_back(torus_index(wrapped));
                return;
            }
            for (int d = -1; d <= 1; ++d) {
                idx[axis] = base[axis] + d;
                rec(axis + 1);
            }
        };
        rec(0);
    } else {
        int chart = cell / (n_ * n_);
        int rest = cell % (n_ * n_);
        int iu = rest % n_, iv = rest / n_;
        for (int dv = -1; dv <= 1; ++dv)
            for (int du = -1; du <= 1; ++du) {
                int ju = iu + du, jv = iv + dv;
                if (ju < 0 || ju >= n_ || jv < 0 || jv >= n_) continue;
                int c = chart * n_ * n_ + jv * n_ + ju;
                if (cell_usable(c)) out.push_back(c);
            }
        // Near the chart seam, also adopt the mirror cell across inversion.
        double lo_u = -1.0 + 2.0 * iu / n_;
        double lo_v = -1.0 + 2.0 * iv / n_;
        double hi_u = lo_u + 2.0 / n_, hi_v = lo_v + 2.0 / n_;
        double inner = rect_origin_distance(lo_u, hi_u, lo_v, hi_v);
        double outer = std::hypot(std::max(std::fabs(lo_u), std::fabs(hi_u)), std::max(std::fabs(lo_v), std::fabs(hi_v)));
        if (inner <= 1.0 && outer >= 1.0 - 2.0 / n_) {
            std::complex<double> c{lo_u + 1.0 / n_, lo_v + 1.0 / n_};
            if (std::abs(c) > 0.0) {
                std::complex<double> o = 1.0 / c;  // same manifold point in the other chart
                int ju = clamp_index(static_cast<int>(std::floor((o.real() + 1.0) * 0.5 * n_)), n_);
                int jv = clamp_index(static_cast<int>(std::floor((o.imag() + 1.0) * 0.5 * n_)), n_);
                int mc = (1 - chart) * n_ * n_ + jv * n_ + ju;
                for (int x : neighbors_same_chart(mc)) out.push_back(x);
                if (cell_usable(mc)) out.push_back(mc);
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<int> BoxGrid::neighbors_same_chart(int cell) const {
    std::vector<int> out;
    int chart = cell / (n_ * n_);
    int rest = cell % (n_ * n_);
    int iu = rest % n_, iv = rest / n_;
    for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
            int ju = iu + du, jv = iv + dv;
            if (ju < 0 || ju >= n_ || jv < 0 || jv >= n_) continue;
            int c = chart * n_ * n_ + jv * n_ + ju;
            if (cell_usable(c)) out.push_back(c);
        }
    return out;
}

std::vector<int> BoxGrid::fatten(const std::vector<int>& cells, int rings) const {
    std::vector<char> in(static_cast<std::size_t>(cell_count_), 0);
    std::vector<int> frontier = cells;
    for (int c : cells) in[static_cast<std::size_t>(c)] = 1;
    for (int r = 0; r < rings; ++r) {
        std::vector<int> next;
        for (int c : frontier)
            for (int nb : neighbors(c))
                if (!in[static_cast<std::size_t>(nb)]) {
                    in[static_cast<std::size_t>(nb)] = 1;
                    next.push_back(nb);
                }
        frontier = std::move(next);
        if (frontier.empty()) break;
    }
    std::vector<int> out;
    for (int c = 0; c < cell_count_; ++c)
        if (in[static_cast<std::size_t>(c)]) out.push_back(c);
    return out;
}

double BoxGrid::distance_to_cell(const Point& p, int cell) const {
    if (manifold_.is_torus()) {
        int idx[3] = {0, 0, 0};
        torus_coords(cell, idx);
        double s = 0.0;
        for (int i = 0; i < manifold_.dim; ++i) {
            double lo = static_cast<double>(idx[i]) / n_;
            double len = 1.0 / n_;
            double delta = wrap1(p.x[i] - lo);
            double d = 0.0;
            if (delta > len) d = std::min(delta - len, 1.0 - delta);
            s += d * d;
        }
        return std::sqrt(s);
    }
    int chart = cell / (n_ * n_);
    int rest = cell % (n_ * n_);
    double lo_u = -1.0 + 2.0 * (rest % n_) / n_;
    double lo_v = -1.0 + 2.0 * (rest / n_) / n_;
    double hi_u = lo_u + 2.0 / n_, hi_v = lo_v + 2.0 / n_;
    // Sample the cell rectangle and take the best chordal distance; exact
    // enough for margins and escape witnesses.
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a <= 2; ++a)
        for (int b = 0; b <= 2; ++b) {
            std::complex<double> c{lo_u + 0.5 * a * (hi_u - lo_u), lo_v + 0.5 * b * (hi_v - lo_v)};
            Point q;
            if (chart == 0) {
                if (std::abs(c) > 1.0) continue;
                q = sphere_point(c);
            } else {
                if (std::abs(c) >= 1.0) continue;
                q = (std::abs(c) == 0.0) ? sphere_infinity() : sphere_point(1.0 / c);
            }
            best = std::min(best, distance(p, q));
        }
    return best;
}

double BoxGrid::distance_to_cells(const Point& p, const std::vector<int>& sorted_cells) const {
    if (sorted_cells.empty()) return std::numeric_limits<double>::infinity();
    if (cell_set_contains(sorted_cells, cell_of(p))) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (int c : sorted_cells) best = std::min(best, distance_to_cell(p, c));
    return best;
}

}  // namespace endo
