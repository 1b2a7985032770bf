#include "cllab/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <thread>

namespace cllab {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::index(std::size_t n) {
    return n == 0 ? 0 : static_cast<std::size_t>(eng_() % n);
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    unsigned workers = threads == 0 ? hw : threads;
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
    std::vector<std::exception_ptr> errors(count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

SearchPoint pattern_search(const std::function<double(const std::vector<double>&)>& F, std::vector<double> z0,
                           Rng& rng, const PatternOptions& opts,
                           const std::function<void(std::vector<double>&)>& project) {
    SearchPoint best;
    if (project) project(z0);
    best.z = std::move(z0);
    best.value = F(best.z);
    best.evals = 1;
    const std::size_t k = best.z.size();
    if (k == 0) return best;
    double step = opts.step;
    std::vector<double> trial(k), dir(k);
    auto attempt = [&](const std::vector<double>& d, double scale) {
        for (std::size_t i = 0; i < k; ++i) trial[i] = best.z[i] + scale * d[i];
        if (project) project(trial);
        double v = F(trial);
        ++best.evals;
        if (v < best.value) {
            best.value = v;
            best.z = trial;
            return true;
        }
        return false;
    };
    for (int it = 0; it < opts.iters && step >= opts.min_step; ++it) {
        bool improved = false;
        for (std::size_t i = 0; i < k; ++i) {
            std::fill(dir.begin(), dir.end(), 0.0);
            dir[i] = 1.0;
            if (attempt(dir, step) || attempt(dir, -step)) improved = true;
        }
        for (int r = 0; r < opts.random_dirs && k > 1; ++r) {
            double len = 0.0;
            for (auto& d : dir) {
                d = rng.normal();
                len += d * d;
            }
            len = std::sqrt(len);
            if (!(len > 0.0)) continue;
            for (auto& d : dir) d /= len;
            if (attempt(dir, step) || attempt(dir, -step)) improved = true;
        }
        if (!improved) step *= 0.5;
    }
    return best;
}

SearchPoint multistart_minimize(std::size_t starts, std::uint64_t seed, unsigned threads,
                                const std::function<std::vector<double>(std::size_t, Rng&)>& init,
                                const std::function<double(const std::vector<double>&)>& F,
                                const PatternOptions& opts,
                                const std::function<void(std::vector<double>&)>& project) {
    std::vector<SearchPoint> results(starts);
    parallel_for(starts, threads, [&](std::size_t s) {
        Rng rng(derive_seed(seed, s));
        auto z0 = init(s, rng);
        results[s] = pattern_search(F, std::move(z0), rng, opts, project);
        results[s].start = s;
    });
    SearchPoint best;
    best.value = std::numeric_limits<double>::infinity();
    long evals = 0;
    bool have = false;
    for (const auto& r : results) {
        evals += r.evals;
        if (!have || r.value < best.value) {
            best = r;
            have = true;
        }
    }
    best.evals = evals;
    return best;
}

}  // namespace cllab
