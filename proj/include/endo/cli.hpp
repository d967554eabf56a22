#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "endo/spectral.hpp"

namespace endo {

// Plain-text config: one `key = value` per line, `#` comments. Parse errors
// and type errors carry file:line diagnostics and map to exit status 2.
class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_text(const std::string& text, const std::string& name = "<config>");

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    void set(const std::string& key, const std::string& value);  // CLI overrides

    std::string get_string(const std::string& key, const std::string& fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::vector<double> get_double_list(const std::string& key, const std::vector<double>& fallback) const;

    void require(const std::string& key) const;
    void reject_unknown_keys(const std::vector<std::string>& allowed) const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::string name_;
    std::map<std::string, std::string> values_;
    std::map<std::string, int> lines_;

    [[noreturn]] void type_error(const std::string& key, const std::string& expected) const;
};

struct RunConfig {
    // model
    std::string model;
    int k = 2;
    IntMatrix matrix;
    double c_re = 0.0, c_im = 0.0;
    double amplitude = 0.1;
    double kappa = 0.02;
    // analysis
    int grid = 128;
    int samples_per_cell = 16;
    double bloat = 0.5;
    int depth = 24;
    std::vector<double> eps_list{0.2, 0.1, 0.05, 0.025};
    double eps_metric = 0.05;
    std::uint64_t seed = 0;
    int threads = 1;
    int horizon = 16;
    int n_test = 12;
    int fattenings = 3;
    int adapted_m = 12;
    int max_period = 8;
    int burn_in = 64;
    // io & per-subcommand
    std::string out_dir = "out";
    std::vector<double> x0{0.0, 0.0, 0.0};
    int iters = 100;
    int pre_depth = 8;
    std::string render_what = "recurrent";

    static RunConfig from(const KeyValueConfig& kv);
};

Endomorphism make_model(const RunConfig& config);

// Binary P5 writer; pixels row-major, top row first.
void write_pgm(const std::string& path, int width, int height, const std::vector<unsigned char>& pixels);

// One pixel per cell, 255 = member. Torus(2): n x n; sphere: the two charts
// side by side (2n x n). Other manifolds are rejected.
void render_cells(const std::vector<int>& cells, const BoxGrid& grid, const std::string& path);
void render_basins(const std::vector<int>& basin_index, const BoxGrid& grid, int n_sets, const std::string& path);

int run_cli(int argc, const char* const* argv);

}  // namespace endo
