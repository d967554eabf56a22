#include "endo/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace endo {

using ordered_json = nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_any(const std::string& s, const std::string& seps) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (seps.find(c) != std::string::npos) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::BadConfig, path + ": cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str(), path);
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text, const std::string& name) {
    KeyValueConfig kv;
    kv.name_ = name;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string body = line;
        std::size_t hash = body.find('#');
        if (hash != std::string::npos) body = body.substr(0, hash);
        body = trim(body);
        if (body.empty()) continue;
        std::size_t eq = body.find('=');
        if (eq == std::string::npos)
            fail(ErrorCode::BadConfig, name + ":" + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        if (key.empty()) fail(ErrorCode::BadConfig, name + ":" + std::to_string(lineno) + ": empty key");
        if (kv.values_.count(key))
            fail(ErrorCode::BadConfig, name + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        kv.values_[key] = value;
        kv.lines_[key] = lineno;
    }
    return kv;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    values_[key] = value;
    lines_[key] = 0;
}

void KeyValueConfig::type_error(const std::string& key, const std::string& expected) const {
    int line = lines_.count(key) ? lines_.at(key) : 0;
    fail(ErrorCode::BadConfig, name_ + ":" + std::to_string(line) + ": key '" + key + "': expected " + expected +
                                   ", got '" + values_.at(key) + "'");
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        long long v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) type_error(key, "integer");
        return v;
    } catch (const std::logic_error&) {
        type_error(key, "integer");
    }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) type_error(key, "unsigned integer");
        return v;
    } catch (const std::logic_error&) {
        type_error(key, "unsigned integer");
    }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) type_error(key, "number");
        return v;
    } catch (const std::logic_error&) {
        type_error(key, "number");
    }
}

std::vector<double> KeyValueConfig::get_double_list(const std::string& key, const std::vector<double>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<double> out;
    for (const std::string& tok : split_any(it->second, ", ")) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(tok, &pos));
            if (pos != tok.size()) type_error(key, "comma-separated numbers");
        } catch (const std::logic_error&) {
            type_error(key, "comma-separated numbers");
        }
    }
    if (out.empty()) type_error(key, "comma-separated numbers");
    return out;
}

void KeyValueConfig::require(const std::string& key) const {
    if (!values_.count(key)) fail(ErrorCode::BadConfig, name_ + ": missing required key '" + key + "'");
}

void KeyValueConfig::reject_unknown_keys(const std::vector<std::string>& allowed) const {
    for (const auto& [key, value] : values_) {
        (void)value;
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            int line = lines_.count(key) ? lines_.at(key) : 0;
            fail(ErrorCode::BadConfig, name_ + ":" + std::to_string(line) + ": unknown key '" + key + "'");
        }
    }
}

RunConfig RunConfig::from(const KeyValueConfig& kv) {
    kv.reject_unknown_keys({"model", "k", "matrix", "c_re", "c_im", "amplitude", "kappa", "grid", "samples_per_cell",
                            "bloat", "depth", "eps", "eps_metric", "seed", "threads", "horizon", "n_test", "fattenings",
                            "adapted_m", "max_period", "burn_in", "out", "x0", "iters", "pre_depth", "render_what"});
    kv.require("model");
    RunConfig c;
    c.model = kv.get_string("model", "");
    c.k = static_cast<int>(kv.get_int("k", c.k));
    if (kv.has("matrix")) {
        std::vector<std::vector<long long>> rows;
        for (const std::string& row : split_any(kv.get_string("matrix", ""), ";")) {
            std::vector<long long> r;
            for (const std::string& tok : split_any(row, ", ")) {
                try {
                    r.push_back(std::stoll(tok));
                } catch (const std::logic_error&) {
                    fail(ErrorCode::BadConfig, "key 'matrix': expected integer rows like '3 1; 1 1'");
                }
            }
            if (!r.empty()) rows.push_back(r);
        }
        if (rows.empty() || rows.size() > 3) fail(ErrorCode::BadConfig, "key 'matrix': expected 1..3 rows");
        c.matrix = IntMatrix::Zero(static_cast<int>(rows.size()), static_cast<int>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.size()) fail(ErrorCode::BadConfig, "key 'matrix': matrix must be square");
            for (std::size_t j = 0; j < rows[i].size(); ++j)
                c.matrix(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
        }
    }
    c.c_re = kv.get_double("c_re", c.c_re);
    c.c_im = kv.get_double("c_im", c.c_im);
    c.amplitude = kv.get_double("amplitude", c.amplitude);
    c.kappa = kv.get_double("kappa", c.kappa);
    c.grid = static_cast<int>(kv.get_int("grid", c.grid));
    c.samples_per_cell = static_cast<int>(kv.get_int("samples_per_cell", c.samples_per_cell));
    c.bloat = kv.get_double("bloat", c.bloat);
    c.depth = static_cast<int>(kv.get_int("depth", c.depth));
    c.eps_list = kv.get_double_list("eps", c.eps_list);
    c.eps_metric = kv.get_double("eps_metric", c.eps_metric);
    c.seed = kv.get_u64("seed", c.seed);
    c.threads = static_cast<int>(kv.get_int("threads", c.threads));
    c.horizon = static_cast<int>(kv.get_int("horizon", c.horizon));
    c.n_test = static_cast<int>(kv.get_int("n_test", c.n_test));
    c.fattenings = static_cast<int>(kv.get_int("fattenings", c.fattenings));
    c.adapted_m = static_cast<int>(kv.get_int("adapted_m", c.adapted_m));
    c.max_period = static_cast<int>(kv.get_int("max_period", c.max_period));
    c.burn_in = static_cast<int>(kv.get_int("burn_in", c.burn_in));
    c.out_dir = kv.get_string("out", c.out_dir);
    if (kv.has("x0")) {
        std::vector<double> x;
        for (const std::string& tok : split_any(kv.get_string("x0", ""), ", ")) {
            try {
                x.push_back(std::stod(tok));
            } catch (const std::logic_error&) {
                fail(ErrorCode::BadConfig, "key 'x0': expected coordinates like '0.2 0.3'");
            }
        }
        if (x.empty() || x.size() > 3) fail(ErrorCode::BadConfig, "key 'x0': expected 1..3 coordinates");
        c.x0.assign(3, 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) c.x0[i] = x[i];
    }
    c.iters = static_cast<int>(kv.get_int("iters", c.iters));
    c.pre_depth = static_cast<int>(kv.get_int("pre_depth", c.pre_depth));
    c.render_what = kv.get_string("render_what", c.render_what);

    if (c.grid < 2) fail(ErrorCode::BadConfig, "key 'grid': must be >= 2");
    if (c.samples_per_cell < 4) fail(ErrorCode::BadConfig, "key 'samples_per_cell': must be >= 4");
    if (c.depth < 1) fail(ErrorCode::BadConfig, "key 'depth': must be >= 1");
    if (c.threads < 1) fail(ErrorCode::BadConfig, "key 'threads': must be >= 1");
    if (c.iters < 0) fail(ErrorCode::BadConfig, "key 'iters': must be >= 0");
    if (c.pre_depth < 0) fail(ErrorCode::BadConfig, "key 'pre_depth': must be >= 0");
    for (double e : c.eps_list)
        if (!(e > 0.0)) fail(ErrorCode::BadConfig, "key 'eps': entries must be positive");
    return c;
}

Endomorphism make_model(const RunConfig& c) {
    if (c.model == "circle_mul") return Endomorphism::circle_mul(c.k);
    if (c.model == "torus_linear") {
        if (c.matrix.rows() == 0) fail(ErrorCode::BadConfig, "model 'torus_linear' needs key 'matrix'");
        return Endomorphism::torus_linear(c.matrix);
    }
    if (c.model == "quadratic") return Endomorphism::quadratic({c.c_re, c.c_im});
    if (c.model == "product") return Endomorphism::product(c.k, c.amplitude);
    if (c.model == "forced_circle") return Endomorphism::forced_circle(c.k, c.amplitude, c.kappa);
    fail(ErrorCode::BadConfig, "key 'model': unknown model '" + c.model + "'");
}

void write_pgm(const std::string& path, int width, int height, const std::vector<unsigned char>& pixels) {
    if (static_cast<std::size_t>(width) * static_cast<std::size_t>(height) != pixels.size())
        fail(ErrorCode::Mismatch, "write_pgm: pixel count does not match dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::BadConfig, path + ": cannot open for writing");
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

namespace {

std::pair<int, int> pixel_of_cell(const BoxGrid& grid, int cell) {
    int n = grid.subdivisions();
    if (grid.manifold().is_torus()) {
        int ix = cell % n, iy = cell / n;
        return {n - 1 - iy, ix};
    }
    int chart = cell / (n * n);
    int rest = cell % (n * n);
    int iu = rest % n, iv = rest / n;
    return {n - 1 - iv, chart * n + iu};
}

void check_renderable(const BoxGrid& grid) {
    const ManifoldSpec& m = grid.manifold();
    if (m.is_sphere()) return;
    if (m.is_torus() && m.dim == 2) return;
    fail(ErrorCode::BadConfig, "render: only torus(2) and sphere grids are supported, got " + m.describe());
}

}  // namespace

void render_cells(const std::vector<int>& cells, const BoxGrid& grid, const std::string& path) {
    check_renderable(grid);
    int n = grid.subdivisions();
    int width = grid.manifold().is_sphere() ? 2 * n : n;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * static_cast<std::size_t>(n), 0);
    for (int cell : cells) {
        auto [row, col] = pixel_of_cell(grid, cell);
        pixels[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)] = 255;
    }
    write_pgm(path, width, n, pixels);
}

void render_basins(const std::vector<int>& basin_index, const BoxGrid& grid, int n_sets, const std::string& path) {
    check_renderable(grid);
    int n = grid.subdivisions();
    int width = grid.manifold().is_sphere() ? 2 * n : n;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * static_cast<std::size_t>(n), 0);
    for (int cell = 0; cell < grid.cell_count(); ++cell) {
        int idx = basin_index[static_cast<std::size_t>(cell)];
        if (idx < 0) continue;
        auto [row, col] = pixel_of_cell(grid, cell);
        unsigned char gray = static_cast<unsigned char>(255 * (idx + 1) / std::max(1, n_sets));
        pixels[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)] = gray;
    }
    write_pgm(path, width, n, pixels);
}

namespace {

ordered_json config_echo(const RunConfig& c) {
    ordered_json j;
    j["model"] = c.model;
    j["k"] = c.k;
    if (c.matrix.rows() > 0) {
        ordered_json rows = ordered_json::array();
        for (int i = 0; i < c.matrix.rows(); ++i) {
            ordered_json row = ordered_json::array();
            for (int jj = 0; jj < c.matrix.cols(); ++jj) row.push_back(c.matrix(i, jj));
            rows.push_back(row);
        }
        j["matrix"] = rows;
    }
    j["c_re"] = c.c_re;
    j["c_im"] = c.c_im;
    j["amplitude"] = c.amplitude;
    j["kappa"] = c.kappa;
    j["grid"] = c.grid;
    j["samples_per_cell"] = c.samples_per_cell;
    j["bloat"] = c.bloat;
    j["depth"] = c.depth;
    j["eps"] = c.eps_list;
    j["eps_metric"] = c.eps_metric;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["horizon"] = c.horizon;
    j["n_test"] = c.n_test;
    j["fattenings"] = c.fattenings;
    j["adapted_m"] = c.adapted_m;
    j["max_period"] = c.max_period;
    j["burn_in"] = c.burn_in;
    return j;
}

ordered_json point_json(const Point& p) {
    ordered_json j;
    if (p.manifold.is_sphere()) {
        j["re"] = p.x[0];
        j["im"] = p.x[1];
        j["at_infinity"] = p.at_infinity;
    } else {
        ordered_json coords = ordered_json::array();
        for (int i = 0; i < p.manifold.dim; ++i) coords.push_back(p.x[i]);
        j["coords"] = coords;
    }
    return j;
}

ordered_json grid_json(const BoxGrid& grid) {
    ordered_json j;
    j["manifold"] = grid.manifold().describe();
    j["subdivisions"] = grid.subdivisions();
    j["cells"] = grid.cell_count();
    j["cell_diameter"] = grid.cell_diameter();
    return j;
}

std::string verdict_name(AttractorVerdict v) {
    switch (v) {
        case AttractorVerdict::Attractor: return "attractor";
        case AttractorVerdict::Neither: return "neither";
        default: return "inconclusive";
    }
}

ordered_json attractor_json(const AttractorEvidence& ev) {
    ordered_json j;
    j["verdict"] = verdict_name(ev.verdict);
    j["branch_depth"] = ev.branch_depth;
    ordered_json per = ordered_json::array();
    for (const auto& rec : ev.per_eps) {
        ordered_json r;
        r["eps"] = rec.eps;
        r["all_contained"] = rec.all_contained;
        r["disks_grown"] = rec.disks_grown;
        r["disks_failed"] = rec.disks_failed;
        r["has_escape_witness"] = rec.has_escape_witness;
        if (rec.has_escape_witness) {
            r["witness"] = point_json(rec.witness);
            r["witness_distance"] = rec.witness_distance;
        }
        per.push_back(r);
    }
    j["per_eps"] = per;
    return j;
}

ordered_json repeller_json(const RepellerEvidence& ev) {
    ordered_json j;
    j["verdict"] = ev.verdict == RepellerVerdict::Repeller ? "repeller" : "not_repeller";
    ordered_json per = ordered_json::array();
    for (const auto& rec : ev.per_r) {
        ordered_json r;
        r["r"] = rec.r;
        r["covered_from_inside"] = rec.covered_from_inside;
        r["shrinks_to_set"] = rec.shrinks_to_set;
        r["final_excess_cells"] = rec.final_excess_cells;
        per.push_back(r);
    }
    j["per_fattening"] = per;
    return j;
}

struct StageTimer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    ordered_json stages = ordered_json::object();
    std::chrono::steady_clock::time_point last = start;

    void mark(const std::string& stage) {
        auto now = std::chrono::steady_clock::now();
        stages[stage] = std::chrono::duration<double, std::milli>(now - last).count();
        last = now;
    }
    ordered_json finish() {
        stages["total_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        return stages;
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::BadConfig, path + ": cannot open for writing");
    out << text;
}

void write_report(const RunConfig& c, const ordered_json& report) {
    write_text(c.out_dir + "/report.json", report.dump(2) + "\n");
}

std::string csv_point(const Point& p) {
    std::string s;
    if (p.manifold.is_sphere()) {
        s = format_double(p.x[0]) + "," + format_double(p.x[1]) + "," + (p.at_infinity ? "1" : "0");
    } else {
        for (int i = 0; i < p.manifold.dim; ++i) {
            if (i) s += ",";
            s += format_double(p.x[i]);
        }
    }
    return s;
}

Point start_point(const Endomorphism& f, const RunConfig& c) {
    if (f.manifold().is_sphere()) return sphere_point({c.x0[0], c.x0[1]});
    std::array<double, 3> coords{{c.x0[0], c.x0[1], c.x0[2]}};
    return wrap(coords, f.manifold());
}

int run_orbit(const RunConfig& c) {
    Endomorphism f = make_model(c);
    Point p = start_point(f, c);
    std::string csv;
    if (f.manifold().is_sphere())
        csv = "step,re,im,at_infinity\n";
    else {
        csv = "step";
        for (int i = 0; i < f.dim(); ++i) csv += ",x" + std::to_string(i);
        csv += "\n";
    }
    for (int s = 0; s <= c.iters; ++s) {
        csv += std::to_string(s) + "," + csv_point(p) + "\n";
        if (s < c.iters) p = f.eval(p);
    }
    write_text(c.out_dir + "/orbit.csv", csv);
    return 0;
}

int run_preimages(const RunConfig& c) {
    Endomorphism f = make_model(c);
    Point p = start_point(f, c);
    PreimageTree tree = grow_preimage_tree(f, p, c.pre_depth);
    std::string csv = "level,index,parent," +
                      std::string(f.manifold().is_sphere() ? "re,im,at_infinity" : [&] {
                          std::string h;
                          for (int i = 0; i < f.dim(); ++i) {
                              if (i) h += ",";
                              h += "x" + std::to_string(i);
                          }
                          return h;
                      }()) +
                      "\n";
    const auto& levels = tree.levels();
    for (std::size_t level = 0; level < levels.size(); ++level)
        for (std::size_t i = 0; i < levels[level].size(); ++i)
            csv += std::to_string(level) + "," + std::to_string(i) + "," + std::to_string(levels[level][i].parent) +
                   "," + csv_point(levels[level][i].point) + "\n";
    write_text(c.out_dir + "/preimages.csv", csv);
    return 0;
}

bool renderable(const BoxGrid& grid) {
    return grid.manifold().is_sphere() || (grid.manifold().is_torus() && grid.manifold().dim == 2);
}

ordered_json basic_set_json(const TransitionGraph& graph, const BasicSetApprox& set) {
    ordered_json j;
    j["cells"] = set.cells.size();
    j["type"] = ordered_json::array({set.type_uv.first, set.type_uv.second});
    j["type_conclusive"] = set.type_conclusive;
    if (!set.type_note.empty()) j["type_note"] = set.type_note;
    (void)graph;
    return j;
}

int run_spectral(const RunConfig& c) {
    StageTimer timer;
    Endomorphism f = make_model(c);
    BoxGrid grid(f.manifold(), c.grid);
    SpectralDecomposition dec = spectral_decomposition(f, grid, c.samples_per_cell, c.bloat, c.seed, c.threads, c.depth);
    timer.mark("decomposition_ms");

    ordered_json report;
    report["tool"] = {{"name", "endoscope"}, {"version", "0.1.0"}};
    report["subcommand"] = "spectral";
    report["config"] = config_echo(c);
    report["grid"] = grid_json(grid);
    report["recurrent_cells"] = dec.recurrent.size();
    ordered_json sets = ordered_json::array();
    for (std::size_t i = 0; i < dec.sets.size(); ++i) {
        ordered_json j = basic_set_json(dec.graph, dec.sets[i]);
        j["index"] = i;
        sets.push_back(j);
    }
    report["basic_sets"] = sets;
    write_report(c, report);
    if (renderable(grid)) {
        render_cells(dec.recurrent, grid, c.out_dir + "/recurrent.pgm");
        for (std::size_t i = 0; i < dec.sets.size(); ++i)
            render_cells(dec.sets[i].cells, grid, c.out_dir + "/set_" + std::to_string(i) + ".pgm");
    }
    write_text(c.out_dir + "/timing.json", timer.finish().dump(2) + "\n");
    return 0;
}

int run_classify(const RunConfig& c) {
    StageTimer timer;
    Endomorphism f = make_model(c);
    BoxGrid grid(f.manifold(), c.grid);
    SpectralDecomposition dec = spectral_decomposition(f, grid, c.samples_per_cell, c.bloat, c.seed, c.threads, c.depth);
    timer.mark("decomposition_ms");

    ordered_json report;
    report["tool"] = {{"name", "endoscope"}, {"version", "0.1.0"}};
    report["subcommand"] = "classify";
    report["config"] = config_echo(c);
    report["grid"] = grid_json(grid);
    report["recurrent_cells"] = dec.recurrent.size();

    ordered_json sets = ordered_json::array();
    for (std::size_t i = 0; i < dec.sets.size(); ++i) {
        const BasicSetApprox& set = dec.sets[i];
        ordered_json j = basic_set_json(dec.graph, set);
        j["index"] = i;

        AttractorVerdict av = AttractorVerdict::Inconclusive;
        RepellerVerdict rv = RepellerVerdict::NotRepeller;
        bool av_known = false, rv_known = false;
        try {
            AttractorEvidence ev = classify_attractor(f, dec.graph, set, c.eps_list, c.depth, c.n_test);
            j["attractor"] = attractor_json(ev);
            av = ev.verdict;
            av_known = true;
        } catch (const Error& e) {
            j["attractor"] = {{"error", e.what()}};
        }
        try {
            RepellerEvidence ev = classify_repeller(f, dec.graph, set, c.fattenings);
            j["repeller"] = repeller_json(ev);
            rv = ev.verdict;
            rv_known = true;
        } catch (const Error& e) {
            j["repeller"] = {{"error", e.what()}};
        }
        try {
            MetricExpansionEstimate est = verify_expanding_metric(f, dec.graph, set, c.eps_metric, 512);
            j["expanding_metric"] = {{"mu", est.mu}, {"pairs", est.pairs_used}, {"expanding", est.expanding}};
        } catch (const Error& e) {
            j["expanding_metric"] = {{"error", e.what()}};
        }
        try {
            DerivativeExpansionEstimate est = verify_expanding_derivative(f, dec.graph, set, c.horizon);
            j["expanding_derivative"] = {{"lambda", est.lambda}, {"C", est.C}, {"samples", est.samples},
                                         {"expanding", est.expanding}};
        } catch (const Error& e) {
            j["expanding_derivative"] = {{"error", e.what()}};
        }
        try {
            j["injectivity_scale"] = injectivity_scale(f, dec.graph, set, 64);
        } catch (const Error& e) {
            j["injectivity_scale"] = {{"error", e.what()}};
        }
        try {
            j["preimage_purity"] = check_preimage_purity(f, dec.graph, set, std::max(1, c.fattenings));
        } catch (const Error& e) {
            j["preimage_purity"] = {{"error", e.what()}};
        }
        if (f.manifold().is_torus() && f.dim() == 2 && set.type_conclusive &&
            set.type_uv == std::make_pair(1, 1)) {
            try {
                ordered_json sm = ordered_json::array();
                for (int res : {128, 1024}) {
                    SmoothnessReport rep = attractor_smoothness(f, dec.graph, set, res);
                    sm.push_back({{"resolution", rep.resolution},
                                  {"sup_h", rep.sup_h},
                                  {"max_first_quotient", rep.max_first_quotient},
                                  {"max_second_quotient", rep.max_second_quotient}});
                }
                j["smoothness"] = sm;
            } catch (const Error& e) {
                j["smoothness"] = {{"error", e.what()}};
            }
        }
        if (f.manifold().is_sphere() && i == 0) {
            try {
                ordered_json rr = ordered_json::array();
                for (int res : {128, 1024}) {
                    RadialRoughness rep = radial_graph_roughness(f, res);
                    rr.push_back({{"resolution", rep.resolution},
                                  {"sup_r", rep.sup_r},
                                  {"max_first_quotient", rep.max_first_quotient}});
                }
                report["radial_roughness"] = rr;
            } catch (const Error& e) {
                report["radial_roughness"] = {{"error", e.what()}};
            }
        }

        std::string classification = "inconclusive";
        if (av_known && av == AttractorVerdict::Attractor)
            classification = "attractor";
        else if (rv_known && rv == RepellerVerdict::Repeller)
            classification = "repeller";
        else if (av_known && av == AttractorVerdict::Neither)
            classification = "neither";
        j["classification"] = classification;
        sets.push_back(j);
    }
    report["basic_sets"] = sets;
    timer.mark("classification_ms");
    write_report(c, report);
    if (renderable(grid)) {
        render_cells(dec.recurrent, grid, c.out_dir + "/recurrent.pgm");
        for (std::size_t i = 0; i < dec.sets.size(); ++i)
            render_cells(dec.sets[i].cells, grid, c.out_dir + "/set_" + std::to_string(i) + ".pgm");
    }
    write_text(c.out_dir + "/timing.json", timer.finish().dump(2) + "\n");
    return 0;
}

int run_verify_expanding(const RunConfig& c) {
    Endomorphism f = make_model(c);
    BoxGrid grid(f.manifold(), c.grid);
    SpectralDecomposition dec = spectral_decomposition(f, grid, c.samples_per_cell, c.bloat, c.seed, c.threads, c.depth);

    ordered_json report;
    report["tool"] = {{"name", "endoscope"}, {"version", "0.1.0"}};
    report["subcommand"] = "verify-expanding";
    report["config"] = config_echo(c);
    report["grid"] = grid_json(grid);
    ordered_json sets = ordered_json::array();
    for (std::size_t i = 0; i < dec.sets.size(); ++i) {
        const BasicSetApprox& set = dec.sets[i];
        ordered_json j = basic_set_json(dec.graph, set);
        j["index"] = i;
        try {
            MetricExpansionEstimate est = verify_expanding_metric(f, dec.graph, set, c.eps_metric, 512);
            j["expanding_metric"] = {{"mu", est.mu}, {"pairs", est.pairs_used}, {"expanding", est.expanding}};
        } catch (const Error& e) {
            j["expanding_metric"] = {{"error", e.what()}};
        }
        try {
            DerivativeExpansionEstimate est = verify_expanding_derivative(f, dec.graph, set, c.horizon);
            j["expanding_derivative"] = {{"lambda", est.lambda}, {"C", est.C}, {"samples", est.samples},
                                         {"expanding", est.expanding}};
        } catch (const Error& e) {
            j["expanding_derivative"] = {{"error", e.what()}};
        }
        sets.push_back(j);
    }
    report["basic_sets"] = sets;
    write_report(c, report);
    return 0;
}

int run_axiom_a(const RunConfig& c) {
    Endomorphism f = make_model(c);
    BoxGrid grid(f.manifold(), c.grid);
    TransitionGraph graph = build_transition_graph(f, grid, c.samples_per_cell, c.bloat, c.seed, c.threads);
    AxiomAReport rep = verify_axiom_a(f, graph, c.max_period);

    ordered_json report;
    report["tool"] = {{"name", "endoscope"}, {"version", "0.1.0"}};
    report["subcommand"] = "axiom-a";
    report["config"] = config_echo(c);
    report["grid"] = grid_json(grid);
    report["singular_free"] = rep.singular_free;
    ordered_json witnesses = ordered_json::array();
    for (const auto& [cell, point] : rep.singular_witnesses)
        witnesses.push_back({{"cell", cell}, {"point", point_json(point)}});
    report["singular_witnesses"] = witnesses;
    report["periodic_density"] = rep.periodic_density;
    report["periodic_count"] = rep.periodic_count;
    report["max_period_used"] = rep.max_period_used;
    report["periodic_search_partial"] = rep.periodic_search_partial;
    report["hyperbolicity"] = {{"lambda", rep.hyperbolicity.lambda},
                               {"C", rep.hyperbolicity.C},
                               {"samples", rep.hyperbolicity.sample_count},
                               {"worst_violation", rep.hyperbolicity.worst_violation},
                               {"hyperbolic", rep.hyperbolicity.hyperbolic}};
    report["passes"] = rep.passes;
    write_report(c, report);
    return 0;
}

int run_render(const RunConfig& c) {
    Endomorphism f = make_model(c);
    BoxGrid grid(f.manifold(), c.grid);
    check_renderable(grid);
    SpectralDecomposition dec = spectral_decomposition(f, grid, c.samples_per_cell, c.bloat, c.seed, c.threads, c.depth);
    if (c.render_what == "recurrent") {
        render_cells(dec.recurrent, grid, c.out_dir + "/recurrent.pgm");
        return 0;
    }
    if (c.render_what == "basins") {
        std::vector<int> basin(static_cast<std::size_t>(grid.cell_count()), -1);
        for (int cell = 0; cell < grid.cell_count(); ++cell) {
            if (!grid.cell_usable(cell)) continue;
            try {
                basin[static_cast<std::size_t>(cell)] =
                    omega_limit(f, dec.graph, dec.sets, grid.cell_center(cell), c.burn_in);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NonconvergentAtBudget) throw;
            }
        }
        render_basins(basin, grid, static_cast<int>(dec.sets.size()), c.out_dir + "/basins.pgm");
        return 0;
    }
    if (c.render_what.rfind("set:", 0) == 0) {
        std::size_t idx = static_cast<std::size_t>(std::stoll(c.render_what.substr(4)));
        if (idx >= dec.sets.size())
            fail(ErrorCode::BadConfig, "render_what: set index out of range (have " +
                                           std::to_string(dec.sets.size()) + " basic sets)");
        render_cells(dec.sets[idx].cells, grid, c.out_dir + "/set_" + std::to_string(idx) + ".pgm");
        return 0;
    }
    fail(ErrorCode::BadConfig, "render_what: expected 'recurrent', 'basins' or 'set:<index>'");
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"endoscope: numerics for hyperbolic basic sets of noninvertible maps"};
    app.require_subcommand(1);
    app.fallthrough(true);

    std::string config_path, out_dir, eps_override;
    long long threads = -1, grid = -1, depth = -1;
    std::string seed_str;
    app.add_option("--config", config_path, "path to key = value config file");
    app.add_option("--out", out_dir, "output directory (overrides config)");
    app.add_option("--threads", threads, "worker thread cap (overrides config)");
    app.add_option("--seed", seed_str, "sample-placement seed (overrides config)");
    app.add_option("--grid", grid, "grid subdivisions (overrides config)");
    app.add_option("--depth", depth, "branch depth (overrides config)");
    app.add_option("--eps", eps_override, "comma-separated eps list (overrides config)");

    std::vector<std::string> names{"orbit", "preimages", "spectral", "classify", "verify-expanding", "axiom-a",
                                   "render"};
    for (const std::string& n : names) app.add_subcommand(n);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (config_path.empty()) fail(ErrorCode::BadConfig, "--config is required");
        KeyValueConfig kv = KeyValueConfig::parse_file(config_path);
        if (!out_dir.empty()) kv.set("out", out_dir);
        if (threads >= 0) kv.set("threads", std::to_string(threads));
        if (!seed_str.empty()) kv.set("seed", seed_str);
        if (grid >= 0) kv.set("grid", std::to_string(grid));
        if (depth >= 0) kv.set("depth", std::to_string(depth));
        if (!eps_override.empty()) kv.set("eps", eps_override);
        RunConfig config = RunConfig::from(kv);
        std::filesystem::create_directories(config.out_dir);

        std::string sub = app.get_subcommands().front()->get_name();
        if (sub == "orbit") return run_orbit(config);
        if (sub == "preimages") return run_preimages(config);
        if (sub == "spectral") return run_spectral(config);
        if (sub == "classify") return run_classify(config);
        if (sub == "verify-expanding") return run_verify_expanding(config);
        if (sub == "axiom-a") return run_axiom_a(config);
        if (sub == "render") return run_render(config);
        fail(ErrorCode::BadConfig, "unknown subcommand '" + sub + "'");
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        if (e.code() == ErrorCode::BadConfig) return 2;
        if (e.code() == ErrorCode::BudgetExceeded) return 3;
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace endo
