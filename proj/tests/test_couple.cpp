#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "cllab/couple.hpp"
#include "cllab/errors.hpp"

using namespace cllab;

namespace {

SearchOptions quick(std::uint64_t seed = 1) {
    SearchOptions o;
    o.seed = seed;
    o.starts = 8;
    o.iters = 150;
    o.threads = 1;
    return o;
}

Vec random_vec(std::mt19937_64& rng, std::size_t n, bool allow_zero = false) {
    std::uniform_real_distribution<double> U(0.05, 3.0);
    std::bernoulli_distribution zero(0.2), neg(0.5);
    Vec x(n);
    bool any = false;
    for (auto& v : x) {
        v = (allow_zero && zero(rng)) ? 0.0 : U(rng) * (neg(rng) ? -1.0 : 1.0);
        any = any || v != 0.0;
    }
    if (!any) x[0] = 1.0;
    return x;
}

double lp_of(double p, const Vec& x) {
    if (std::isinf(p)) {
        double m = 0.0;
        for (double v : x) m = std::max(m, std::fabs(v));
        return m;
    }
    double s = 0.0;
    for (double v : x) s += std::pow(std::fabs(v), p);
    return std::pow(s, 1.0 / p);
}

// 1/p = (1-theta)/p0 + theta/p1
double calderon_p(double p0, double p1, double theta) {
    double r = (1.0 - theta) / p0 + theta / p1;
    return 1.0 / r;
}

}  // namespace

TEST_CASE("couple descriptors") {
    auto c = parse_couple("lp:1:2|linf:2");
    CHECK(c.dim() == 2);
    CHECK(c.X0.p == 1.0);
    CHECK(std::isinf(c.X1.p));
    CHECK(parse_couple(c.describe()).describe() == c.describe());
    CHECK_THROWS_AS(parse_couple("lp:1:2|linf:3"), DimensionError);
    auto position = [](const std::string& d) -> std::size_t {
        try {
            parse_couple(d);
        } catch (const ParseError& e) {
            return e.position();
        }
        return 999;
    };
    CHECK(position("lp:1:2") == 0);
    CHECK(position("lp:1:2|lp:x:2") == 10);
    CHECK(position("lp:1:2|linf:2|linf:2") == 13);
}

TEST_CASE("intersection norm") {
    auto c = parse_couple("lp:1:2|linf:2");
    CHECK(intersection_norm(c, {1, 1}) == 2.0);
    CHECK(intersection_norm(c, {0, 0}) == 0.0);
    auto same = parse_couple("lp:2:3|lp:2:3");
    CHECK(intersection_norm(same, {3, 4, 0}) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK_THROWS_AS(intersection_norm(c, {1, 2, 3}), DimensionError);
}

TEST_CASE("sum norm against a brute-force split grid") {
    auto c = parse_couple("lp:1:2|linf:2");
    auto est = sum_norm(c, {3, 1}, quick());
    CHECK(est.upper == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(est.lower <= est.upper);
    double grid = 1e300;
    for (int i = 0; i <= 300; ++i)
        for (int j = 0; j <= 100; ++j) {
            double a = 0.01 * i, b = 0.01 * j;
            grid = std::min(grid, a + b + std::max(3.0 - a, 1.0 - b));
        }
    CHECK(est.upper <= grid + 1e-12);
    CHECK(est.lower >= grid * (1.0 - 1e-4));

    auto zero = sum_norm(c, {0, 0}, quick());
    CHECK(zero.upper == 0.0);
    CHECK(zero.lower == 0.0);

    std::mt19937_64 rng(3);
    for (const char* d : {"lp:2:3|lp:2:3", "lp:1:3|lp:1:3", "linf:3|linf:3"}) {
        auto s = parse_couple(d);
        for (int t = 0; t < 10; ++t) {
            Vec x = random_vec(rng, 3);
            auto e = sum_norm(s, x, quick(t));
            CHECK(e.upper == doctest::Approx(norm(s.X0, x)).epsilon(1e-9));
            CHECK(e.lower <= e.upper);
        }
    }
    CHECK_THROWS_AS(sum_norm(c, {1}, quick()), DimensionError);
}

TEST_CASE("sum norm of a quasi-normed couple can fall below the single-space norm") {
    auto c = parse_couple("lp:0.5:2|lp:0.5:2");
    auto e = sum_norm(c, {1, 1}, quick());
    // Splitting (1,1) = (1,0) + (0,1) costs 2 while ||(1,1)||_{1/2} = 4.
    CHECK(e.upper == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(norm(c.X0, {1, 1}) == doctest::Approx(4.0).epsilon(1e-15));
    CHECK(e.lower <= e.upper);
}

TEST_CASE("sum norm witness is a split of |x|") {
    std::mt19937_64 rng(4);
    for (const char* d : {"lp:1:4|linf:4", "lp:2:4|lp:1:4", "lp:0.5:3|linf:3", "sub:0.5:3|lp:1:3"}) {
        auto c = parse_couple(d);
        for (int t = 0; t < 5; ++t) {
            Vec x = random_vec(rng, c.dim(), true);
            auto e = sum_norm(c, x, quick(t));
            CHECK(e.lower <= e.upper);
            for (std::size_t j = 0; j < x.size(); ++j) {
                CHECK(e.w0[j] >= 0.0);
                CHECK(e.w1[j] >= 0.0);
                CHECK(e.w0[j] + e.w1[j] == doctest::Approx(std::fabs(x[j])).epsilon(1e-15));
            }
            CHECK(norm(c.X0, e.w0) + norm(c.X1, e.w1) == doctest::Approx(e.upper).epsilon(1e-12));
        }
    }
}

TEST_CASE("cl norm examples") {
    auto c = parse_couple("lp:1:2|linf:2");
    auto e = cl_norm(c, InterpolationFunction::power(0.5), {1, 1}, quick());
    CHECK(e.lower <= std::sqrt(2.0));
    CHECK(e.upper >= std::sqrt(2.0) * (1.0 - 1e-12));
    CHECK(e.upper == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
    CHECK(e.certified);

    auto inf = parse_couple("linf:3|linf:3");
    std::mt19937_64 rng(5);
    for (const auto& f : {InterpolationFunction::power(0.3), InterpolationFunction::min(),
                          InterpolationFunction::affine_power(0.0, 1.0, 0.7)}) {
        Vec x = random_vec(rng, 3);
        auto r = cl_norm(inf, f, x, quick());
        CHECK(r.upper == doctest::Approx(lp_of(INFINITY, x)).epsilon(1e-6));
        CHECK(r.lower <= r.upper);
    }
    auto z = cl_norm(c, InterpolationFunction::power(0.5), {0, 0}, quick());
    CHECK(z.upper == 0.0);
}

TEST_CASE("cl norm of power couples matches the Calderon product") {
    std::mt19937_64 rng(6);
    const double ps[] = {0.5, 1.0, 2.0, INFINITY};
    std::uniform_real_distribution<double> Th(0.1, 0.9);
    for (int t = 0; t < 40; ++t) {
        double p0 = ps[t % 4], p1 = ps[(t / 4) % 4];
        double th = Th(rng);
        std::size_t n = 2 + t % 3;
        Couple c(LatticeSpec::lp(p0, n), LatticeSpec::lp(p1, n));
        Vec x = random_vec(rng, n, true);
        double exact = lp_of(calderon_p(p0, p1, th), x);
        auto e = cl_norm(c, InterpolationFunction::power(th), x, quick(t));
        CHECK(e.lower <= exact * (1.0 + 1e-9));
        CHECK(e.upper >= exact * (1.0 - 1e-9));
        CHECK(e.upper == doctest::Approx(exact).epsilon(1e-6));
        CHECK(e.certified);
        // The same phi through the generic inversion path.
        auto g = cl_norm(c, InterpolationFunction::affine_power(0.0, 1.0, th), x, quick(t));
        CHECK(g.upper == doctest::Approx(exact).epsilon(1e-6));
        CHECK(g.lower <= g.upper);
    }
}

TEST_CASE("cl norm of min is the intersection norm") {
    std::mt19937_64 rng(7);
    for (const char* d : {"lp:1:3|linf:3", "lp:0.5:4|lp:2:4", "lp:2:2|lp:1:2", "sub:0.5:3|lp:1:3"}) {
        auto c = parse_couple(d);
        for (int t = 0; t < 5; ++t) {
            Vec x = random_vec(rng, c.dim(), true);
            auto e = cl_norm(c, InterpolationFunction::min(), x, quick(t));
            double exact = intersection_norm(c, x);
            CHECK(std::fabs(e.upper - exact) <= 1e-9 * exact);
            CHECK(e.lower <= e.upper);
        }
    }
}

TEST_CASE("cl witness is admissible") {
    std::mt19937_64 rng(8);
    auto c = parse_couple("lp:0.5:3|lp:1:3");
    for (const auto& f : {InterpolationFunction::power(0.4), InterpolationFunction::sum(),
                          InterpolationFunction::harmonic()}) {
        Vec x = random_vec(rng, 3);
        auto e = cl_norm(c, f, x, quick());
        CHECK(norm(c.X0, e.w0) <= 1.0 + 1e-12);
        CHECK(norm(c.X1, e.w1) <= 1.0 + 1e-12);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::fabs(x[j]) <= e.upper * eval_phi(f, e.w0[j], e.w1[j]) * (1.0 + 1e-12));
        CHECK(e.lower <= e.upper);
    }
}

TEST_CASE("cl norm of phi = s + t lies between half the sum norm and the sum norm") {
    std::mt19937_64 rng(9);
    auto c = parse_couple("lp:1:3|linf:3");
    for (int t = 0; t < 5; ++t) {
        Vec x = random_vec(rng, 3);
        auto cl = cl_norm(c, InterpolationFunction::sum(), x, quick(t));
        auto s = sum_norm(c, x, quick(t));
        CHECK(cl.upper <= s.upper * (1.0 + 1e-6));
        CHECK(cl.upper >= 0.5 * s.lower * (1.0 - 1e-6));
        CHECK(cl.lower <= cl.upper);
    }
}

TEST_CASE("cl norm homogeneity and monotonicity") {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> L(0.1, 10.0), S(0.0, 1.0);
    const char* couples[] = {"lp:1:3|linf:3", "lp:0.5:3|lp:2:3", "lp:2:3|lp:1:3"};
    for (int t = 0; t < 12; ++t) {
        auto c = parse_couple(couples[t % 3]);
        auto f = t % 2 ? InterpolationFunction::power(0.35) : InterpolationFunction::affine_power(0.0, 1.0, 0.6);
        Vec x = random_vec(rng, 3);
        double lam = L(rng);
        Vec lx = x, sx = x;
        for (auto& v : lx) v *= lam;
        for (auto& v : sx) v *= S(rng);
        double base = cl_norm(c, f, x, quick(t)).upper;
        CHECK(cl_norm(c, f, lx, quick(t)).upper == doctest::Approx(lam * base).epsilon(1e-6));
        CHECK(cl_norm(c, f, sx, quick(t)).upper <= base * (1.0 + 1e-6));
    }
}

TEST_CASE("cl norm is reproducible across thread counts") {
    auto c = parse_couple("lp:0.5:4|lp:1:4");
    auto f = InterpolationFunction::affine_power(0.0, 1.0, 0.5);
    Vec x = {1.0, -0.5, 2.0, 0.25};
    SearchOptions a = quick(42), b = quick(42);
    b.threads = 4;
    auto ea = cl_norm(c, f, x, a), eb = cl_norm(c, f, x, b);
    CHECK(ea.upper == eb.upper);
    CHECK(ea.lower == eb.lower);
    CHECK(ea.w0 == eb.w0);
    CHECK(ea.evaluations == eb.evaluations);
}

TEST_CASE("max space norm") {
    auto c = parse_couple("lp:1:3|linf:3");
    Vec x = {1, 2, 3};
    CHECK(max_space_norm(c, 1.0, 0.0, x) == 6.0);
    CHECK(max_space_norm(c, 0.0, 1.0, x) == 3.0);
    // max over split of (||x_J||_1, ||x_J^c||_inf): J = {0,1} gives max(3, 3) = 3.
    CHECK(max_space_norm(c, 1.0, 1.0, x) == 3.0);
    CHECK(max_space_norm(c, 1.0, 1.0, {0, 0, 0}) == 0.0);
    // Agrees with the cl norm of max(a s, b t).
    auto e = cl_norm(c, InterpolationFunction::max(1.0, 2.0), x, quick());
    CHECK(e.upper == doctest::Approx(max_space_norm(c, 1.0, 2.0, x)).epsilon(1e-6));
}

TEST_CASE("phi-space equivalence") {
    auto c = parse_couple("lp:1:2|linf:2");
    std::mt19937_64 rng(11);
    std::vector<Vec> samples;
    for (int t = 0; t < 6; ++t) samples.push_back(random_vec(rng, 2));
    samples.push_back({0, 0});
    auto power = phi_space_equivalence(c, InterpolationFunction::power(0.5), samples, quick());
    CHECK(power.pass);
    CHECK(power.min_ratio == 1.0);
    CHECK(power.max_ratio == 1.0);
    auto shifted = phi_space_equivalence(c, InterpolationFunction::affine_power(1.0, 1.0, 0.5), samples, quick());
    CHECK(shifted.pass);
    CHECK(shifted.min_ratio >= 0.5 * (1.0 - 1e-3));
    CHECK(shifted.max_ratio <= 2.0 * (1.0 + 1e-3));
    CHECK(shifted.samples.back().ratio == 1.0);
    CHECK(shifted.samples.back().phi_norm == 0.0);
}

TEST_CASE("a_m decreases to zero") {
    const double q = 1.0 + std::sqrt(2.0);
    for (const auto& f : {InterpolationFunction::power(0.5), InterpolationFunction::affine_power(0.0, 1.0, 0.5)}) {
        auto d = bk_decompose(f, q, 12);
        double prev = INFINITY;
        for (int m = 0; m <= 12; ++m) {
            double a = approximation_a_m(d, m);
            CHECK(a < prev);
            prev = a;
        }
        CHECK(prev < 1e-3);
    }
    auto d = bk_decompose(InterpolationFunction::power(0.5), 2.0, 4);
    CHECK_THROWS_AS(approximation_a_m(d, 5), DomainError);
}

TEST_CASE("approximation trace on random instances") {
    const double q = 1.0 + std::sqrt(2.0);
    auto f = InterpolationFunction::power(0.5);
    auto d = bk_decompose(f, q, 12);
    auto c = parse_couple("lp:1:4|linf:4");
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::lognormal_distribution<double> LN(0.0, 3.0);
    for (int t = 0; t < 60; ++t) {
        Vec u0(4), u1(4);
        for (std::size_t j = 0; j < 4; ++j) {
            u0[j] = (t % 5 == 0 && j == 3) ? 0.0 : LN(rng);
            u1[j] = LN(rng);
        }
        double n0 = norm(c.X0, u0), n1 = norm(c.X1, u1);
        for (auto& v : u0) v /= n0 * (1.0 + 1e-12);
        for (auto& v : u1) v /= n1 * (1.0 + 1e-12);
        std::vector<Vec> xs(3, Vec(4));
        for (std::size_t j = 0; j < 4; ++j) {
            double bound = eval_phi(f, u0[j], u1[j]);
            double w[3] = {U(rng), U(rng), U(rng)};
            double tot = w[0] + w[1] + w[2];
            for (int i = 0; i < 3; ++i) xs[i][j] = bound * (w[i] / tot) * 0.999 * (i == 1 ? -1.0 : 1.0);
        }
        int m = t % 13;
        auto tr = approximation_sequence(c, f, xs, u0, u1, d, m);
        CHECK(tr.partition_ok);
        CHECK(tr.property_i);
        CHECK(tr.property_ii);
        CHECK(tr.audit_F);
        CHECK(tr.audit_chain);
        CHECK(tr.G0_norm <= q * (1.0 + 1e-12));
        CHECK(tr.G1_norm <= q * (1.0 + 1e-12));
        for (std::size_t i = 0; i < 3; ++i) {
            Vec sum(4, 0.0);
            for (const auto& y : tr.y[i])
                for (std::size_t j = 0; j < 4; ++j) sum[j] += y[j];
            CHECK(sum == tr.x_m[i]);
        }
    }
}

TEST_CASE("approximation trace special cases") {
    const double q = 1.0 + std::sqrt(2.0);
    auto f = InterpolationFunction::power(0.5);
    auto d = bk_decompose(f, q, 6);
    auto c = parse_couple("linf:3|linf:3");
    Vec u0 = {1, 1, 1}, u1 = {1, 0.5, 0.25};
    std::vector<Vec> xs = {krivine_apply(f, u0, u1)};
    auto tr = approximation_sequence(c, f, xs, u0, u1, d, 3);
    CHECK(tr.V.empty());
    CHECK(tr.x_m[0] == xs[0]);
    CHECK(tr.worst_ii == 0.0);
    CHECK(tr.property_ii);
    for (int k : tr.psi) CHECK(k != ApproximationTrace::kXi);

    // Extreme ratios are truncated to V_m at small m.
    Vec w0 = {1, 1e-12, 1}, w1 = {1e-12, 1, 1};
    std::vector<Vec> ys = {krivine_apply(f, w0, w1)};
    auto tr2 = approximation_sequence(c, f, ys, w0, w1, d, 1);
    CHECK(tr2.V.size() == 2);
    CHECK(tr2.property_ii);
    CHECK(tr2.partition_ok);
    CHECK(tr2.x_m[0][0] == 0.0);
    CHECK(tr2.x_m[0][2] == ys[0][2]);
    CHECK(tr2.theta[0] == 1);
    CHECK(tr2.theta[1] == 2);

    std::vector<Vec> bad = {{1, 1, 1}};
    try {
        approximation_sequence(c, f, bad, u0, u1, d, 2);
        CHECK(false);
    } catch (const InfeasibleError& e) {
        CHECK(e.coordinate() == 1);
    }
    CHECK_THROWS_AS(approximation_sequence(c, InterpolationFunction::sum(), xs, u0, u1, d, 2), PreconditionError);
    CHECK_THROWS_AS(approximation_sequence(c, f, xs, {2, 1, 1}, u1, d, 2), PreconditionError);
    CHECK_THROWS_AS(approximation_sequence(c, f, xs, u0, u1, d, 7), DomainError);
}

TEST_CASE("factorization examples") {
    auto f = InterpolationFunction::power(0.5);
    auto inf = parse_couple("linf:3|linf:3");
    Vec x = {0.99, 0.99, 0.99};
    auto r = factorize(inf, f, x, quick());
    CHECK(r.branch == 'a');
    CHECK_FALSE(r.swapped);
    CHECK(r.identity_residual <= 1e-12);
    CHECK(r.bounds_ok);
    CHECK(r.y_dominates);

    auto c = parse_couple("lp:1:2|linf:2");
    auto r2 = factorize(c, f, {0.3, 0.3}, quick());
    CHECK(r2.identity_residual <= 1e-12);
    CHECK(r2.bounds_ok);
    CHECK(std::isfinite(r2.norm_f));
    CHECK(std::isfinite(r2.norm_g));

    auto r3 = factorize(c, f, {0.3, 0.0}, quick());
    CHECK(r3.f_vec[1] == 0.0);
    CHECK(r3.g_vec[1] == 0.0);
    CHECK(r3.identity_residual <= 1e-12);

    // phi(s,t) = t has phi_0 bounded: the roles of X0 and X1 swap and branch (b) applies.
    auto t_only = InterpolationFunction::affine_power(0.0, 1.0, 1.0);
    auto r4 = factorize(c, t_only, {0.3, 0.2}, quick());
    CHECK(r4.swapped);
    CHECK(r4.branch == 'b');
    CHECK(r4.identity_residual <= 1e-12);
    CHECK(r4.bounds_ok);

    CHECK_THROWS_AS(factorize(c, InterpolationFunction::min(), {0.1, 0.1}, quick()), UnsupportedError);
    CHECK_THROWS_AS(factorize(c, InterpolationFunction::harmonic(), {0.1, 0.1}, quick()), UnsupportedError);
    CHECK_THROWS_AS(factorize(c, f, {1.0, 1.0}, quick()), PreconditionError);
    CHECK_THROWS_AS(factorize(c, InterpolationFunction::sum(), {0.1, 0.1}, quick()), PreconditionError);
    CHECK_THROWS_AS(factorize(c, f, {-0.1, 0.1}, quick()), DomainError);
}

TEST_CASE("factorization round trip on random instances") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> U(0.05, 1.0), Th(0.2, 0.8);
    const char* couples[] = {"lp:1:3|linf:3", "lp:2:3|lp:1:3", "lp:0.5:3|lp:2:3", "linf:3|lp:1:3"};
    for (int t = 0; t < 40; ++t) {
        auto c = parse_couple(couples[t % 4]);
        auto f = InterpolationFunction::power(Th(rng));
        Vec x(3);
        for (auto& v : x) v = U(rng);
        if (t % 7 == 0) x[1] = 0.0;
        double scale = cl_norm(c, f, x, quick(t)).upper;
        for (auto& v : x) v *= U(rng) * 0.9 / scale;
        auto r = factorize(c, f, x, quick(t));
        CHECK(r.identity_residual <= 1e-12);
        CHECK(r.bounds_ok);
        CHECK(std::isfinite(r.bound_f));
        CHECK(std::isfinite(r.bound_g));
        for (std::size_t j = 0; j < 3; ++j)
            if (x[j] == 0.0) CHECK((r.f_vec[j] == 0.0 && r.g_vec[j] == 0.0));
    }
}
