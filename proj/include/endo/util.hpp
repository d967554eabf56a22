#pragma once

#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace endo {

// Error codes shared across modules. The CLI maps BudgetExceeded to exit
// status 3 and BadConfig to exit status 2.
enum class ErrorCode {
    BadConfig,
    BudgetExceeded,
    SingularPointOnBranch,
    DegenerateSplitting,
    DivergentSum,
    EmptyDisk,
    NoInSetBranch,
    NotAGraph,
    NonconvergentAtBudget,
    PointOutsideSet,
    Mismatch,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

// splitmix64, used to derive deterministic sub-seeds and sample rotations.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline double unit_double(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Van der Corput radical inverse. Bases 2, 3, 5 cover up to three axes.
inline double radical_inverse(std::uint64_t i, std::uint32_t base) {
    double inv = 1.0 / base, f = inv, r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

inline std::uint32_t halton_base(int axis) {
    static constexpr std::uint32_t bases[3] = {2, 3, 5};
    return bases[axis % 3];
}

// Static-partition parallel loop. Work items must be independent and write
// only to their own slots so results do not depend on the thread count.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    pool.reserve(nw);
    std::exception_ptr first_error;
    std::mutex guard;
    for (std::size_t w = 0; w < nw; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (std::size_t i = w; i < n; i += nw) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(guard);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace endo
