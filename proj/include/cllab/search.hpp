#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace cllab {

// SplitMix64 step applied to (master, index); used to give every start its own stream.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// mt19937_64 with fixed bit-to-double transforms, so draws do not depend on the standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    std::uint64_t bits() { return eng_(); }
    double uniform();                       // [0,1)
    double uniform(double lo, double hi);
    double normal();                        // Box-Muller, one draw per call
    std::size_t index(std::size_t n);       // uniform in [0, n)

private:
    std::mt19937_64 eng_;
};

// Runs fn(0..count-1) on up to `threads` workers (0 = hardware concurrency). If any call throws,
// the exception of the lowest index is rethrown after all workers finish.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

struct PatternOptions {
    int iters = 200;
    double step = 0.5;
    double min_step = 1e-10;
    int random_dirs = 2;
};

struct SearchPoint {
    std::vector<double> z;
    double value = 0.0;
    std::size_t start = 0;
    long evals = 0;
};

// Opportunistic compass search with a few random directions per sweep; the step halves after a
// sweep without improvement. `project` (optional) maps trial points back into the domain.
SearchPoint pattern_search(const std::function<double(const std::vector<double>&)>& F, std::vector<double> z0,
                           Rng& rng, const PatternOptions& opts,
                           const std::function<void(std::vector<double>&)>& project = {});

// Independent pattern searches from init(start, rng); the best value wins, ties go to the lowest
// start index, so the result does not depend on scheduling.
SearchPoint multistart_minimize(std::size_t starts, std::uint64_t seed, unsigned threads,
                                const std::function<std::vector<double>(std::size_t, Rng&)>& init,
                                const std::function<double(const std::vector<double>&)>& F,
                                const PatternOptions& opts,
                                const std::function<void(std::vector<double>&)>& project = {});

}  // namespace cllab
