#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "cllab/errors.hpp"
#include "cllab/quasiconcave.hpp"

using namespace cllab;
using F = InterpolationFunction;

namespace {

std::vector<double> log_grid(int lo, int hi, int per_octave = 1) {
    std::vector<double> g;
    for (int j = lo * per_octave; j <= hi * per_octave; ++j) g.push_back(std::exp2(double(j) / per_octave));
    return g;
}

std::vector<F> shipped_families() {
    return {F::power(0.25), F::power(0.5), F::power(0.75), F::min(), F::max(), F::sum(), F::harmonic(),
            F::affine_power(1.0, 1.0, 0.5), F::affine_power(2.0, 0.5, 0.3)};
}

// Upper hull by checking every chord: a point is a vertex iff no chord passes strictly above it.
double brute_hull_at(const std::vector<double>& xs, const std::vector<double>& ys, double t) {
    double best = -INFINITY;
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = i; j < xs.size(); ++j) {
            if (xs[i] > t || xs[j] < t) continue;
            double v = (i == j) ? ys[i] : ys[i] + (ys[j] - ys[i]) * (t - xs[i]) / (xs[j] - xs[i]);
            best = std::max(best, v);
        }
    return best;
}

}  // namespace

TEST_CASE("eval_phi examples and boundary extension") {
    CHECK(eval_phi(F::power(0.5), 4, 1) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(eval_phi(F::power(0.5), 0, 5) == 0.0);
    CHECK(eval_phi(F::min(), 2, 3) == 2.0);
    CHECK(eval_phi(F::sum(), 3, 0) == 3.0);
    CHECK(eval_phi(F::sum(), 0, 3) == 3.0);
    CHECK(eval_phi(F::harmonic(), 0, 0) == 0.0);
    CHECK_THROWS_AS(eval_phi(F::min(), INFINITY, 1), DomainError);
    CHECK_THROWS_AS(eval_phi(F::min(), 1, NAN), DomainError);
    CHECK_THROWS_AS(eval_phi(F::min(), -1, 1), DomainError);
}

TEST_CASE("quasi-concavity, homogeneity and the phi_0 identity on a grid") {
    auto grid = log_grid(-20, 20, 4);
    for (const auto& f : shipped_families()) {
        CAPTURE(f.describe());
        for (std::size_t i = 1; i < grid.size(); ++i) {
            CHECK(f.phi1(grid[i]) >= f.phi1(grid[i - 1]));
            CHECK(f.slope(grid[i]) <= f.slope(grid[i - 1]));
        }
        for (double s : {0.25, 1.0, 3.0})
            for (double t : {0.125, 1.0, 7.0}) {
                CHECK(eval_phi(f, s, t) == doctest::Approx(s * f.phi1(t / s)).epsilon(1e-14));
                for (double lam : {0.5, 2.0, 10.0})
                    CHECK(eval_phi(f, lam * s, lam * t) == doctest::Approx(lam * eval_phi(f, s, t)).epsilon(1e-14));
            }
        for (double t : grid) CHECK(f.phi1(t) == doctest::Approx(t * f.phi0(1.0 / t)).epsilon(1e-14));
    }
}

TEST_CASE("normalization is recorded, not rescaled") {
    auto f = F::affine_power(2.0, 0.5, 0.3);
    CHECK(f.normalization() == doctest::Approx(2.5));
    CHECK(eval_phi(f, 1, 1) == doctest::Approx(2.5));
}

TEST_CASE("concave_majorant") {
    SUBCASE("concave input is its own envelope") {
        auto grid = log_grid(-6, 6, 2);
        auto env = concave_majorant(F::power(0.5), grid);
        for (double t : grid) CHECK(env(t) == std::sqrt(t));
    }
    SUBCASE("max(1,t) on {1/4,4} is the chord") {
        auto env = concave_majorant(F::max(), {0.25, 4.0});
        CHECK(env(1.0) == doctest::Approx(1.6).epsilon(1e-15));
        CHECK(env(0.25) == 1.0);
        CHECK(env(4.0) == 4.0);
        for (double t : {0.25, 1.0, 2.0, 4.0}) CHECK(env(t) <= 2.0 * F::max().phi1(t));
    }
    SUBCASE("matches a brute-force hull and dominates samples") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> t, v;
            double x = 0.1, y = 0.5;
            for (int i = 0; i < 12; ++i) {
                x += 0.1 + u(rng);
                y = std::max(y, y * x / (x - 0.05) * u(rng) + y * 0.9);
                t.push_back(x);
                v.push_back(y);
            }
            auto f = F::tabulated(t, v, 0.0, 0.0);
            auto env = concave_majorant(f, t);
            std::vector<double> ys;
            for (double s : t) ys.push_back(f.phi1(s));
            for (std::size_t i = 0; i < t.size(); ++i) {
                CHECK(env(t[i]) >= ys[i] * (1 - 1e-14));
                CHECK(env(t[i]) == doctest::Approx(brute_hull_at(t, ys, t[i])).epsilon(1e-12));
            }
        }
    }
    SUBCASE("too short grid") {
        CHECK_THROWS_AS(concave_majorant(F::min(), {1.0}), DomainError);
        CHECK_THROWS_AS(concave_majorant(F::min(), {}), DomainError);
        auto env = concave_majorant(F::min(), {1.0, 2.0});
        CHECK_THROWS_AS(env(3.0), DomainError);
    }
}

TEST_CASE("bk_decompose on sqrt with q'=4 follows the closed-form recurrence") {
    BKOptions opts;
    opts.q_prime = 4.0;
    auto d = bk_decompose(F::power(0.5), 16.0, 8, opts);
    CHECK(d.node(1) == 1.0);
    CHECK(d.node(0) == doctest::Approx(1.0 / 16).epsilon(1e-13));
    CHECK(d.node(2) == doctest::Approx(16.0).epsilon(1e-13));
    CHECK(d.node(3) == doctest::Approx(256.0).epsilon(1e-13));
    CHECK(d.node(-1) == doctest::Approx(1.0 / 256).epsilon(1e-13));
    CHECK_FALSE(d.lower_finite);
    CHECK_FALSE(d.upper_finite);
    // t_{2k+2} = 16 t_{2k+1}, t_{2k} = t_{2k+1}/16 for every stored odd node
    for (int k = d.k_lo; k <= d.k_hi; ++k) {
        CHECK(d.node(2 * k + 2) == doctest::Approx(16 * d.odd(k)).epsilon(1e-12));
        CHECK(d.node(2 * k) == doctest::Approx(d.odd(k) / 16).epsilon(1e-12));
        CHECK(d.odd(k) == doctest::Approx(std::pow(256.0, k)).epsilon(1e-11));
    }
    CHECK(d.relation_residual < 1e-12);
    for (int k = d.k_lo; k <= d.k_hi; ++k) {
        double eps = d.slack(k);
        CHECK(eps > 0.0);
        CHECK(eps < std::min(d.node(2 * k) - d.node(2 * k - 1), d.node(2 * k + 3) - d.node(2 * k + 2)));
        CHECK(eps <= 1.0);
    }
    auto grid = log_grid(-16, 16);
    auto rep = verify_bk(d, F::power(0.5), grid);
    CHECK(rep.bound2 == doctest::Approx(17.0 / 15.0));
    CHECK(rep.max_ratio2 <= 17.0 / 15.0 * (1 + 1e-9));
    CHECK(rep.pass2);
    CHECK(rep.pass3);
    CHECK_FALSE(rep.partial_coverage);
}

TEST_CASE("bk_sum equals a closed-form geometric sum for sqrt") {
    // Odd nodes 256^k, so at t=1 the sum is 1 + 2*sum_{j>=1} 16^{-j} truncated at depth.
    BKOptions opts;
    opts.q_prime = 4.0;
    auto d = bk_decompose(F::power(0.5), 16.0, 8, opts);
    double expect = 1.0;
    for (int j = 1; j <= 8; ++j) expect += 2.0 * std::pow(16.0, -j);
    CHECK(bk_sum(d, 1.0, 1.0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("bk_decompose on min terminates on both sides") {
    for (double q : {2.0, 4.0, 16.0}) {
        auto d = bk_decompose(F::min(), q, 8);
        CHECK(d.lower_finite);
        CHECK(d.upper_finite);
        CHECK(d.lower_end() == 0.0);
        CHECK(std::isinf(d.upper_end()));
        CHECK(d.k_lo == d.k_hi);
        CHECK(d.slack(d.k_lo) == 0.0);
        // single surviving term min(1, t/1) at s=t=1
        CHECK(bk_sum(d, 1.0, 1.0) == doctest::Approx(1.0));
        auto rep = verify_bk(d, F::min(), {1.0});
        CHECK(rep.max_ratio2 <= (q + 1) / (q - 1));
        CHECK(rep.pass());
    }
}

TEST_CASE("bk_decompose anchors at 0 and infinity for nonzero limits") {
    auto grid = log_grid(-16, 16, 2);
    SUBCASE("phi_1(0+) > 0 starts at an odd node at 0") {
        auto f = F::affine_power(1.0, 1.0, 0.5);
        auto d = bk_decompose(f, 4.0, 8);
        CHECK(d.node(0) == 0.0);
        CHECK(d.node(1) == 0.0);
        CHECK(d.lower_finite);
        CHECK(d.node(2) == doctest::Approx(std::pow(2.5 - 1.0, 2)).epsilon(1e-12));
        auto rep = verify_bk(d, f, grid);
        CHECK(rep.pass());
    }
    SUBCASE("linear phi_1 anchors at infinity") {
        auto f = F::max(0.0, 2.0);
        auto d = bk_decompose(f, 4.0, 8);
        CHECK(std::isinf(d.odd(d.k_hi)));
        CHECK(bk_sum(d, 1.0, 3.0) == doctest::Approx(6.0));
        CHECK(verify_bk(d, f, grid).pass());
    }
    SUBCASE("1+t hits both anchors") {
        auto d = bk_decompose(F::sum(), 2.0, 8);
        CHECK(d.lower_finite);
        CHECK(d.upper_finite);
        CHECK(verify_bk(d, F::sum(), grid).pass());
    }
}

TEST_CASE("node sum bound and endpoint domination hold for shipped families") {
    auto grid = log_grid(-16, 16, 2);
    for (const auto& f : shipped_families())
        for (double q : {2.0, 4.0, 16.0}) {
            CAPTURE(f.describe());
            CAPTURE(q);
            auto d = bk_decompose(f, q, 8);
            auto rep = verify_bk(d, f, grid);
            CHECK(rep.pass2);
            CHECK(rep.pass3);
            CHECK(rep.max_ratio3 <= 1.0);
        }
}

TEST_CASE("endpoint domination at an odd node is 1/q of the bound") {
    auto f = F::power(0.5);
    auto d = bk_decompose(f, 4.0, 4);
    for (int k = d.k_lo; k <= d.k_hi; ++k) {
        double o = d.odd(k);
        CHECK(f.phi1(o) / (4.0 * f.phi1(o)) == doctest::Approx(0.25));
    }
}

TEST_CASE("verify_bk flags grid points outside the covered range") {
    auto d = bk_decompose(F::power(0.5), 4.0, 1);
    auto rep = verify_bk(d, F::power(0.5), {1e-30, 1.0, 1e30});
    CHECK(rep.partial_coverage);
    CHECK(rep.uncovered_points == 2);
}

TEST_CASE("bk_decompose argument errors") {
    CHECK_THROWS_AS(bk_decompose(F::power(0.5), 1.0, 4), DomainError);
    CHECK_THROWS_AS(bk_decompose(F::power(0.5), 2.0, -1), DomainError);
    BKOptions bad;
    bad.q_prime = 3.0;
    CHECK_THROWS_AS(bk_decompose(F::power(0.5), 2.0, 4, bad), DomainError);
    CHECK_THROWS_AS(bk_decompose(F::affine_power(0, 0, 1), 2.0, 4), InvalidFunctionError);
}

TEST_CASE("is_doubly_bounded") {
    auto m = is_doubly_bounded(F::min());
    CHECK(m.doubly_bounded);
    CHECK(m.C == 1.0);
    CHECK_FALSE(is_doubly_bounded(F::power(0.5)).doubly_bounded);
    CHECK_FALSE(is_doubly_bounded(F::sum()).doubly_bounded);
    auto h = is_doubly_bounded(F::harmonic());
    CHECK(h.doubly_bounded);
    CHECK(h.C == 1.0);
    auto grid = log_grid(-10, 10, 2);
    for (double s : grid)
        for (double t : grid) {
            double phi = eval_phi(F::harmonic(), s, t);
            double mn = std::min(s, t);
            CHECK(phi <= mn);
            CHECK(phi >= 0.5 * mn);
            CHECK(phi >= h.lower * mn * (1 - 1e-15));
            CHECK(phi <= h.C * mn);
        }
}

TEST_CASE("doubly bounded implies the two-sided min comparison") {
    for (const auto& f : {F::min(), F::harmonic(), F::min(2.0, 3.0)}) {
        auto r = is_doubly_bounded(f);
        REQUIRE(r.doubly_bounded);
        auto grid = log_grid(-8, 8, 2);
        for (double s : grid)
            for (double t : grid) {
                double phi = eval_phi(f, s, t);
                CHECK(phi <= r.C * std::min(s, t) * (1 + 1e-15));
            }
    }
}

TEST_CASE("split_convex_part") {
    auto grid = log_grid(-20, 20, 2);
    SUBCASE("1+t") {
        auto sp = split_convex_part(F::sum());
        for (double t : grid) {
            CHECK(sp.pl_part.phi1(t) == std::max(1.0, t));
            CHECK(sp.eta_part.phi1(t) == std::min(1.0, t));
        }
    }
    SUBCASE("sqrt t") {
        auto sp = split_convex_part(F::power(0.5));
        for (double t : grid) {
            CHECK(sp.pl_part.phi1(t) == 0.0);
            CHECK(sp.eta_part.phi1(t) == doctest::Approx(std::sqrt(t)).epsilon(1e-15));
        }
    }
    SUBCASE("1+sqrt t") {
        auto sp = split_convex_part(F::affine_power(1, 1, 0.5));
        for (double t : grid) {
            CHECK(sp.pl_part.phi1(t) == 1.0);
            CHECK(sp.eta_part.phi1(t) == doctest::Approx(std::sqrt(t)).epsilon(1e-15));
        }
    }
    SUBCASE("recomposition and vanishing limits for every family") {
        for (const auto& f : shipped_families()) {
            CAPTURE(f.describe());
            auto sp = split_convex_part(f);
            for (double t : grid)
                CHECK(std::fabs(f.phi1(t) - sp.pl_part.phi1(t) - sp.eta_part.phi1(t)) <= 1e-12 * f.phi1(t));
            CHECK(sp.eta_part.phi1_at_zero() == 0.0);
            CHECK(sp.eta_part.slope_at_infinity() == 0.0);
            CHECK(sp.eta_part.phi1(1e-300) <= 1e-50);
            CHECK(sp.eta_part.slope(1e300) <= 1e-50);
        }
    }
}

TEST_CASE("tabulated functions") {
    SUBCASE("monotone repair is reported") {
        auto f = F::tabulated({1, 2, 3, 4}, {1, 0.9, 3, 3.5});
        CHECK(f.table()->repair > 0.0);
        auto grid = log_grid(-4, 6, 4);
        for (std::size_t i = 1; i < grid.size(); ++i) {
            CHECK(f.phi1(grid[i]) >= f.phi1(grid[i - 1]));
            CHECK(f.slope(grid[i]) <= f.slope(grid[i - 1]) * (1 + 1e-15));
        }
    }
    SUBCASE("extrapolated limits of sampled sqrt and min") {
        std::vector<double> t, v, w;
        for (int j = -20; j <= 20; ++j) {
            t.push_back(std::exp2(j));
            v.push_back(std::sqrt(std::exp2(j)));
            w.push_back(std::min(1.0, std::exp2(j)));
        }
        auto f = F::tabulated(t, v);
        CHECK(f.phi1_at_zero() == 0.0);
        CHECK(f.slope_at_infinity() == 0.0);
        CHECK(f.limits_estimated());
        CHECK_FALSE(is_doubly_bounded(f).doubly_bounded);
        auto g = F::tabulated(t, w);
        auto r = is_doubly_bounded(g);
        CHECK(r.doubly_bounded);
        CHECK(r.C == doctest::Approx(1.0));
        auto d = bk_decompose(f, 4.0, 6);
        CHECK(verify_bk(d, f, log_grid(-16, 16)).pass());
    }
    SUBCASE("sampled 1+t keeps both limits") {
        std::vector<double> t, v;
        for (int j = -10; j <= 10; ++j) {
            t.push_back(std::exp2(j));
            v.push_back(1.0 + std::exp2(j));
        }
        auto f = F::tabulated(t, v);
        CHECK(f.phi1_at_zero() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(f.slope_at_infinity() == doctest::Approx(1.0).epsilon(1e-9));
        auto sp = split_convex_part(f);
        for (double s : log_grid(-12, 12, 3))
            CHECK(std::fabs(f.phi1(s) - sp.pl_part.phi1(s) - sp.eta_part.phi1(s)) <= 1e-12 * f.phi1(s));
    }
    SUBCASE("descriptor with a file") {
        const char* path = "test_quasiconcave_table.csv";
        {
            std::ofstream out(path);
            out << "t,phi\n0.5,0.5\n1,1\n2,1.5\n4,2\n";
        }
        auto f = parse_function(std::string("table:") + path);
        CHECK(f.family() == Family::tabulated);
        CHECK(f.phi1(1.0) == 1.0);
        std::remove(path);
        CHECK_THROWS_AS(parse_function("table:/nonexistent/file.csv"), ParseError);
    }
}

TEST_CASE("parse_function") {
    CHECK(parse_function("power:0.5").theta() == 0.5);
    CHECK(parse_function("min").family() == Family::min);
    CHECK(parse_function("max").family() == Family::max);
    CHECK(parse_function("sum").family() == Family::sum);
    CHECK(parse_function("harmonic").family() == Family::harmonic);
    auto ap = parse_function("affinepower:1,2,0.25");
    CHECK(ap.a() == 1.0);
    CHECK(ap.b() == 2.0);
    CHECK(ap.theta() == 0.25);
    CHECK_THROWS_AS(parse_function("power"), ParseError);
    CHECK_THROWS_AS(parse_function("power:x"), ParseError);
    CHECK_THROWS_AS(parse_function("power:2"), ParseError);
    CHECK_THROWS_AS(parse_function("bogus"), ParseError);
    CHECK_THROWS_AS(parse_function("sum:1"), ParseError);
    try {
        parse_function("affinepower:1,zz,0.5");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.position() == 14);
    }
    for (const auto& f : shipped_families()) CHECK(parse_function(f.describe()).describe() == f.describe());
}

TEST_CASE("non-concave input is decomposed through its concave majorant") {
    auto f = F::max();
    auto g = concave_majorant_function(f);
    for (double t : log_grid(-10, 10, 2)) CHECK(g.phi1(t) == 1.0 + t);
    auto d = bk_decompose(f, 4.0, 8);
    CHECK(d.on_majorant);
    auto rep = verify_bk(d, f, log_grid(-16, 16, 2));
    CHECK(rep.pass());
    // Both anchors survive, so against max(1,t) itself the sum reaches (1+t)/max(1,t) = 2 at t = 1.
    CHECK(rep.max_ratio2_raw == doctest::Approx(2.0));
}

TEST_CASE("majorant of a non-concave table dominates it and is concave") {
    std::vector<double> t{0.5, 1, 2, 3, 4, 8};
    std::vector<double> v{0.5, 0.6, 1.8, 2.0, 2.1, 4.0};
    auto f = F::tabulated(t, v, 0.2, 0.1);
    REQUIRE_FALSE(f.certified_concave());
    auto g = concave_majorant_function(f);
    CHECK(g.certified_concave());
    for (double x : log_grid(-6, 8, 8)) CHECK(g.phi1(x) >= f.phi1(x) * (1 - 1e-14));
    for (double x : t) CHECK(g.phi1(x) <= 2.0 * f.phi1(x) + 1e-12);
}

TEST_CASE("phi_1 inverse is the smallest preimage") {
    std::vector<F> fs = shipped_families();
    fs.push_back(F::tabulated({0.5, 1, 2, 4}, {0.4, 0.7, 1.0, 1.2}, 0.0, 0.05));
    fs.push_back(F::min(2.0, 3.0));
    for (const auto& f : fs) {
        CAPTURE(f.describe());
        for (double y : {0.0, 1e-3, 0.3, 0.5, 0.99, 1.0, 1.7, 3.0, 40.0}) {
            double t = f.phi1_inverse(y);
            if (std::isinf(t)) {
                CHECK(y >= f.sup_phi1());
                continue;
            }
            CHECK(f.phi1(t) >= y);
            if (t > 0.0) CHECK(f.phi1(t * (1 - 1e-9)) < y);
        }
    }
    CHECK(F::min(2.0, 3.0).phi1_inverse(2.0) == doctest::Approx(2.0 / 3.0));
    CHECK(std::isinf(F::harmonic().phi1_inverse(1.0)));
    CHECK(F::sum().phi1_inverse(0.5) == 0.0);
}

TEST_CASE("minimal second argument") {
    auto f = F::power(0.5);
    CHECK(min_second_argument(f, 4.0, 2.0) == doctest::Approx(1.0));
    CHECK(eval_phi(f, 4.0, min_second_argument(f, 4.0, 2.0)) >= 2.0);
    CHECK(std::isinf(min_second_argument(f, 0.0, 1.0)));
    CHECK(min_second_argument(F::sum(), 0.0, 2.0) == doctest::Approx(2.0));
    CHECK(min_second_argument(F::sum(), 3.0, 2.0) == 0.0);
    CHECK(std::isinf(min_second_argument(F::min(), 1.0, 2.0)));
    CHECK(min_second_argument(F::min(), 3.0, 2.0) == doctest::Approx(2.0));
}

TEST_CASE("phi at extreme ratios") {
    const double big = std::ldexp(1.0, 1023), tiny = std::ldexp(1.0, -1074);
    CHECK(eval_phi(InterpolationFunction::power(0.5), 0.5, big) == doctest::Approx(std::ldexp(1.0, 511)).epsilon(1e-12));
    CHECK(eval_phi(InterpolationFunction::power(0.5), big, tiny) == doctest::Approx(std::pow(2.0, -25.5)).epsilon(1e-12));
    CHECK(eval_phi(InterpolationFunction::affine_power(2.0, 1.0, 0.5), 0.5, big) ==
          doctest::Approx(1.0 + std::ldexp(1.0, 511)).epsilon(1e-12));
    CHECK(eval_phi(InterpolationFunction::harmonic(), big, 0.25) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(eval_phi(InterpolationFunction::min(), 0.5, big) == 0.5);
    CHECK(eval_phi(InterpolationFunction::sum(), tiny, big) == big);
}
