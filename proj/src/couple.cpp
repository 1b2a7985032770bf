#include "cllab/couple.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "cllab/errors.hpp"
#include "cllab/search.hpp"
#include "cllab/util.hpp"

namespace cllab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_dim(const Vec& x, std::size_t n, const char* what) {
    if (x.size() != n)
        throw DimensionError(std::string(what) + ": vector has dimension " + std::to_string(x.size()) +
                             ", expected " + std::to_string(n));
}

void check_finite(const Vec& x, const char* what) {
    for (std::size_t j = 0; j < x.size(); ++j)
        if (!std::isfinite(x[j]))
            throw DomainError(std::string(what) + ": non-finite entry at coordinate " + std::to_string(j));
}

std::vector<std::size_t> support_of(const Vec& x) {
    std::vector<std::size_t> s;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (x[j] != 0.0) s.push_back(j);
    return s;
}

Vec scatter(const Vec& vals, const std::vector<std::size_t>& S, std::size_t n) {
    Vec out(n, 0.0);
    for (std::size_t i = 0; i < S.size(); ++i) out[S[i]] = vals[i];
    return out;
}

bool is_power_interior(const InterpolationFunction& f) {
    return f.family() == Family::power && f.theta() > 0.0 && f.theta() < 1.0;
}

bool plain_lp_or_linf(const LatticeSpec& X) {
    return X.family == LatticeFamily::lp || X.family == LatticeFamily::linf;
}

// A subgradient of X's norm at v >= 0, valid on the positive orthant.
Vec orthant_subgradient(const LatticeSpec& X, const Vec& v) {
    Vec s(v.size(), 0.0);
    double nv = norm(X, v);
    auto weight = [&](std::size_t j) { return X.family == LatticeFamily::weighted_lp ? X.weights[j] : 1.0; };
    if (std::isinf(X.p)) {
        if (nv == 0.0) return s;
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t j = 0; j < v.size(); ++j)
            if (weight(j) * v[j] > best) {
                best = weight(j) * v[j];
                arg = j;
            }
        s[arg] = weight(arg);
        return s;
    }
    if (X.p == 1.0) {
        for (std::size_t j = 0; j < v.size(); ++j) s[j] = weight(j);
        return s;
    }
    if (nv == 0.0) return s;
    for (std::size_t j = 0; j < v.size(); ++j) s[j] = weight(j) * std::pow(v[j] / nv, X.p - 1.0);
    return s;
}

double golden_min(const std::function<double(double)>& F, double lo, double hi, double tol) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = F(c), fd = F(d);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = F(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = F(d);
        }
    }
    double best = 0.5 * (a + b);
    double fb = F(best), flo = F(lo), fhi = F(hi);
    if (flo <= fb && flo <= fhi) return lo;
    if (fhi <= fb) return hi;
    return best;
}

}  // namespace

Couple::Couple(LatticeSpec x0, LatticeSpec x1) : X0(std::move(x0)), X1(std::move(x1)) {
    if (X0.dim != X1.dim)
        throw DimensionError("couple: X0 has dimension " + std::to_string(X0.dim) + " but X1 has dimension " +
                             std::to_string(X1.dim));
}

std::string Couple::describe() const { return X0.describe() + "|" + X1.describe(); }

Couple parse_couple(const std::string& descriptor) {
    auto bar = descriptor.find('|');
    if (bar == std::string::npos) throw ParseError("expected <lattice>|<lattice>", 0);
    if (descriptor.find('|', bar + 1) != std::string::npos)
        throw ParseError("more than one '|' in couple descriptor", descriptor.find('|', bar + 1));
    return Couple(parse_lattice(descriptor.substr(0, bar), 0), parse_lattice(descriptor.substr(bar + 1), bar + 1));
}

double NormEstimate::relative_gap() const {
    if (upper == lower) return 0.0;
    if (!(lower > 0.0)) return kInf;
    return (upper - lower) / lower;
}

double intersection_norm(const Couple& c, const Vec& x) {
    check_dim(x, c.dim(), "intersection_norm");
    return std::max(norm(c.X0, x), norm(c.X1, x));
}

// ---------------------------------------------------------------------------------------------
// Sum norm.

NormEstimate sum_norm(const Couple& c, const Vec& x, const SearchOptions& opts) {
    check_dim(x, c.dim(), "sum_norm");
    check_finite(x, "sum_norm");
    const std::size_t n = c.dim();
    const Vec A = lattice_abs(x);
    const auto S = support_of(A);
    NormEstimate est;
    est.w0.assign(n, 0.0);
    est.w1.assign(n, 0.0);
    if (S.empty()) {
        est.lower = est.upper = est.search_upper = 0.0;
        est.method = est.lower_method = "zero";
        est.certified = true;
        return est;
    }
    const std::size_t k = S.size();
    Vec AS(k);
    for (std::size_t i = 0; i < k; ++i) AS[i] = A[S[i]];
    auto split_value = [&](const Vec& x0s) {
        Vec x0 = scatter(x0s, S, n), x1(n, 0.0);
        for (std::size_t i = 0; i < k; ++i) x1[S[i]] = std::max(0.0, AS[i] - x0s[i]);
        return norm(c.X0, x0) + norm(c.X1, x1);
    };
    auto theta_value = [&](const Vec& th) {
        Vec x0s(k);
        for (std::size_t i = 0; i < k; ++i) x0s[i] = th[i] * AS[i];
        return split_value(x0s);
    };
    auto clamp01 = [](Vec& th) {
        for (auto& t : th) t = std::clamp(t, 0.0, 1.0);
    };
    auto init = [&](std::size_t s, Rng& rng) {
        Vec th(k);
        for (auto& t : th) t = s == 0 ? 1.0 : s == 1 ? 0.0 : s == 2 ? 0.5 : rng.uniform();
        return th;
    };
    PatternOptions po;
    po.iters = opts.iters;
    po.step = 0.25;
    auto best = multistart_minimize(static_cast<std::size_t>(std::max(1, opts.starts)), opts.seed, opts.threads,
                                    init, theta_value, po, clamp01);
    est.evaluations = best.evals;
    est.search_upper = best.value;
    Vec th = best.z;
    double value = best.value;
    est.method = "multistart";

    const bool convex = c.X0.convex() && c.X1.convex() && c.X0.family != LatticeFamily::submeasure &&
                        c.X1.family != LatticeFamily::submeasure;
    if (convex) {
        // Projected coordinate descent, each coordinate by golden section.
        for (int sweep = 0; sweep < 200; ++sweep) {
            double before = value;
            for (std::size_t i = 0; i < k; ++i) {
                auto F = [&](double t) {
                    Vec trial = th;
                    trial[i] = t;
                    ++est.evaluations;
                    return theta_value(trial);
                };
                double t = golden_min(F, 0.0, 1.0, 1e-12);
                Vec trial = th;
                trial[i] = t;
                double v = theta_value(trial);
                if (v < value) {
                    value = v;
                    th = trial;
                }
            }
            if (before - value <= 1e-9 * std::max(value, 1e-300)) break;
        }
        if (value < est.search_upper) est.method = "coordinate descent";
    }
    est.upper = value;
    for (std::size_t i = 0; i < k; ++i) {
        est.w0[S[i]] = th[i] * AS[i];
        est.w1[S[i]] = std::max(0.0, AS[i] - est.w0[S[i]]);
    }

    double lower = 0.0;
    if (convex) {
        // Convexity: G(y) >= G(x0*) + <s0 - s1, y - x0*> on the box [0, |x|].
        Vec s0 = orthant_subgradient(c.X0, est.w0), s1 = orthant_subgradient(c.X1, est.w1);
        double lb = value;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = S[i];
            double g = s0[j] - s1[j];
            lb += std::min(g * (0.0 - est.w0[j]), g * (AS[i] - est.w0[j]));
        }
        if (lb > lower) {
            lower = lb;
            est.lower_method = "subgradient";
        }
    }
    if (lower < est.upper / (1.0 + opts.gap)) {
        // Box branch-and-bound on x0 in [0, |x|]: a cell [a,b] costs at least ||a|| + || |x| - b ||.
        struct Cell {
            Vec a, b;
            double lb;
        };
        auto cell_lb = [&](const Vec& a, const Vec& b) {
            Vec x0 = scatter(a, S, n), x1(n, 0.0);
            for (std::size_t i = 0; i < k; ++i) x1[S[i]] = std::max(0.0, AS[i] - b[i]);
            return norm(c.X0, x0) + norm(c.X1, x1);
        };
        auto cmp = [](const Cell& l, const Cell& r) { return l.lb > r.lb; };
        std::priority_queue<Cell, std::vector<Cell>, decltype(cmp)> heap(cmp);
        Vec zero(k, 0.0);
        heap.push({zero, AS, cell_lb(zero, AS)});
        double ub = est.upper;
        std::size_t processed = 0;
        while (!heap.empty() && processed < opts.max_cells) {
            if (heap.top().lb >= ub / (1.0 + opts.gap)) break;
            Cell cell = heap.top();
            heap.pop();
            ++processed;
            Vec mid(k);
            for (std::size_t i = 0; i < k; ++i) mid[i] = 0.5 * (cell.a[i] + cell.b[i]);
            double v = split_value(mid);
            if (v < ub) {
                ub = v;
                for (std::size_t i = 0; i < k; ++i) {
                    est.w0[S[i]] = mid[i];
                    est.w1[S[i]] = std::max(0.0, AS[i] - mid[i]);
                }
                est.method = "branch-and-bound";
            }
            std::size_t split = 0;
            double widest = -1.0;
            for (std::size_t i = 0; i < k; ++i) {
                double w = (cell.b[i] - cell.a[i]) / AS[i];
                if (w > widest) {
                    widest = w;
                    split = i;
                }
            }
            Cell left = cell, right = cell;
            left.b[split] = mid[split];
            right.a[split] = mid[split];
            left.lb = std::max(cell.lb, cell_lb(left.a, left.b));
            right.lb = std::max(cell.lb, cell_lb(right.a, right.b));
            heap.push(std::move(left));
            heap.push(std::move(right));
        }
        est.cells = processed;
        est.upper = ub;
        double bb = heap.empty() ? ub : std::min(ub, heap.top().lb);
        if (bb > lower) {
            lower = bb;
            est.lower_method = "branch-and-bound";
        }
    }
    est.lower = std::min(lower, est.upper);
    est.certified = est.lower > 0.0 && est.upper <= (1.0 + opts.gap) * est.lower;
    est.heuristic = !est.certified;
    if (est.lower_method.empty()) est.lower_method = "none";
    return est;
}

// ---------------------------------------------------------------------------------------------
// Calderon-Lozanovskii norm.

LambdaBracket cl_lambda(const Couple& c, const InterpolationFunction& f, const Vec& x, const Vec& x0) {
    const std::size_t n = c.dim();
    check_dim(x, n, "cl_lambda");
    check_dim(x0, n, "cl_lambda");
    LambdaBracket br;
    br.x1.assign(n, 0.0);
    const auto S = support_of(x);
    if (S.empty()) {
        br.lo = br.hi = 0.0;
        return br;
    }
    for (std::size_t j : S)
        if (x0[j] == 0.0 && f.slope_at_infinity() == 0.0) {
            br.lo = br.hi = kInf;
            return br;
        }
    if (is_power_interior(f)) {
        const double th = f.theta();
        Vec w(n, 0.0);
        for (std::size_t j : S) {
            if (x0[j] == 0.0) {
                br.lo = br.hi = kInf;
                return br;
            }
            w[j] = std::exp((1.0 - 1.0 / th) * std::log(x0[j]) + std::log(std::fabs(x[j])) / th);
        }
        double nw = norm(c.X1, w);
        if (!(nw > 0.0) || !std::isfinite(nw)) {
            br.lo = br.hi = kInf;
            return br;
        }
        double lam = std::pow(nw, th);
        for (std::size_t j : S) br.x1[j] = w[j] / nw;
        br.lo = lam * (1.0 - 1e-13);
        br.hi = lam * (1.0 + 1e-13);
        return br;
    }
    Vec x1(n, 0.0);
    auto g = [&](double lam) {
        for (std::size_t j : S) {
            double t = min_second_argument(f, x0[j], std::fabs(x[j]) / lam);
            if (!std::isfinite(t)) return kInf;
            x1[j] = t;
        }
        return norm(c.X1, x1);
    };
    double lam0 = 0.0;
    for (std::size_t j : S) lam0 = std::max(lam0, std::fabs(x[j]));
    double lo, hi;
    if (g(lam0) <= 1.0) {
        hi = lam0;
        lo = lam0 * 0.5;
        while (g(lo) <= 1.0) {
            hi = lo;
            lo *= 0.5;
            if (lo < 1e-300) {
                lo = 0.0;
                break;
            }
        }
    } else {
        lo = lam0;
        hi = lam0 * 2.0;
        while (g(hi) > 1.0) {
            lo = hi;
            hi *= 2.0;
            if (hi > 1e300) {
                br.lo = br.hi = kInf;
                return br;
            }
        }
    }
    for (int it = 0; it < 200 && hi > lo * (1.0 + 1e-13); ++it) {
        double mid = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * hi;
        if (mid <= lo || mid >= hi) break;
        if (g(mid) <= 1.0) hi = mid; else lo = mid;
    }
    g(hi);
    br.lo = lo;
    br.hi = hi;
    br.x1 = x1;
    return br;
}

namespace {

// Lower bound valid for every phi: phi(s,t) <= s sup phi_1 and <= t sup phi_0.
double envelope_lower(const Couple& c, const InterpolationFunction& f, const Vec& A) {
    double lb = 0.0;
    double s1 = f.sup_phi1(), s0 = f.sup_phi0();
    if (std::isfinite(s1) && s1 > 0.0) lb = std::max(lb, norm(c.X0, A) / s1);
    if (std::isfinite(s0) && s0 > 0.0) lb = std::max(lb, norm(c.X1, A) / s0);
    return lb;
}

// Certified lower bound for phi = s^{1-theta} t^theta on couples of l_p / l_inf spaces.
// For fixed lambda the witness problem separates over coordinates; with h_j = x0_j^{p0} the
// X1 budget is the convex function sum_j C_j h_j^{-beta}, so Lagrangian duality bounds it below.
double power_lower(const Couple& c, double theta, const Vec& AS) {
    const double p0 = c.X0.p, p1 = c.X1.p;
    const std::size_t k = AS.size();
    if (std::isinf(p0)) {
        // x0 = 1 on the support is the largest admissible choice.
        Vec w(k);
        for (std::size_t i = 0; i < k; ++i) w[i] = std::pow(AS[i], 1.0 / theta);
        LatticeSpec X1k = std::isinf(p1) ? LatticeSpec::linf(k) : LatticeSpec::lp(p1, k);
        return std::pow(norm(X1k, w), theta);
    }
    if (std::isinf(p1)) {
        // x1 = 1 on the support; x0_j >= (A_j / lambda)^{1/(1-theta)}.
        Vec w(k);
        for (std::size_t i = 0; i < k; ++i) w[i] = std::pow(AS[i], 1.0 / (1.0 - theta));
        return std::pow(norm(LatticeSpec::lp(p0, k), w), 1.0 - theta);
    }
    const double beta = p1 * (1.0 - theta) / (theta * p0);
    // Work with logs: log C_j = (p1/theta) log A_j.
    double maxlog = -kInf;
    Vec logC(k);
    for (std::size_t i = 0; i < k; ++i) {
        logC[i] = (p1 / theta) * std::log(AS[i]);
        maxlog = std::max(maxlog, logC[i]);
    }
    // D(mu) = sum_j inf_h [C_j h^-beta + mu h] - mu, maximized at mu* = (sum_j (beta C_j)^{1/(beta+1)})^{beta+1}.
    // Scale C by exp(-maxlog) and restore: the optimum scales linearly in C.
    double S = 0.0;
    for (std::size_t i = 0; i < k; ++i) S += std::pow(beta * std::exp(logC[i] - maxlog), 1.0 / (beta + 1.0));
    double mu = std::pow(S, beta + 1.0);
    double D = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double Ci = std::exp(logC[i] - maxlog);
        double h = std::pow(beta * Ci / mu, 1.0 / (beta + 1.0));
        D += Ci * std::pow(h, -beta) + mu * h;
    }
    D -= mu;
    if (!(D > 0.0)) return 0.0;
    // lambda^{p1/theta} >= D * exp(maxlog)
    return std::exp((theta / p1) * (std::log(D) + maxlog));
}

}  // namespace

NormEstimate cl_norm(const Couple& c, const InterpolationFunction& f, const Vec& x, const SearchOptions& opts) {
    const std::size_t n = c.dim();
    check_dim(x, n, "cl_norm");
    check_finite(x, "cl_norm");
    const Vec A = lattice_abs(x);
    const auto S = support_of(A);
    NormEstimate est;
    est.w0.assign(n, 0.0);
    est.w1.assign(n, 0.0);
    if (S.empty()) {
        est.lower = est.upper = est.search_upper = 0.0;
        est.method = est.lower_method = "zero";
        est.certified = true;
        return est;
    }
    const std::size_t k = S.size();
    Vec AS(k), logA(k);
    for (std::size_t i = 0; i < k; ++i) {
        AS[i] = A[S[i]];
        logA[i] = std::log(AS[i]);
    }
    auto to_x0 = [&](const Vec& z) {
        double zmax = *std::max_element(z.begin(), z.end());
        Vec x0(n, 0.0);
        for (std::size_t i = 0; i < k; ++i) x0[S[i]] = std::exp(z[i] - zmax);
        double nx = norm(c.X0, x0);
        for (auto& v : x0) v /= nx;
        return x0;
    };
    auto objective = [&](const Vec& z) { return cl_lambda(c, f, A, to_x0(z)).hi; };
    auto init = [&](std::size_t s, Rng& rng) {
        Vec z(k);
        static const double alphas[] = {1.0, 0.0, 0.5, 2.0};
        if (s < 4) {
            for (std::size_t i = 0; i < k; ++i) z[i] = alphas[s] * logA[i];
        } else {
            double alpha = rng.uniform(0.0, 2.0);
            for (std::size_t i = 0; i < k; ++i) z[i] = alpha * logA[i] + rng.normal();
        }
        return z;
    };
    PatternOptions po;
    po.iters = opts.iters;
    po.step = 0.5;
    auto best = multistart_minimize(static_cast<std::size_t>(std::max(1, opts.starts)), opts.seed, opts.threads,
                                    init, objective, po);
    est.evaluations = best.evals;
    {
        Vec x0 = to_x0(best.z);
        auto br = cl_lambda(c, f, A, x0);
        est.search_upper = est.upper = br.hi;
        est.w0 = x0;
        est.w1 = br.x1;
    }
    est.method = "multistart";
    if (!std::isfinite(est.upper)) {
        est.note = "no admissible witness: some support coordinate cannot be reached by phi";
        est.lower = est.upper;
        est.lower_method = "infeasible";
        est.certified = false;
        est.heuristic = true;
        return est;
    }

    double lower = envelope_lower(c, f, A);
    est.lower_method = "envelope";
    if (is_power_interior(f) && plain_lp_or_linf(c.X0) && plain_lp_or_linf(c.X1)) {
        double lb = power_lower(c, f.theta(), AS) * (1.0 - 1e-12);
        if (lb > lower) {
            lower = lb;
            est.lower_method = "separable dual";
        }
    }
    if (lower < est.upper / (1.0 + opts.gap)) {
        // Box branch-and-bound over x0 in prod [0, 1/||e_j||_{X0}]. lambda(x0) is non-increasing,
        // so lambda at the top corner bounds a cell below.
        Vec R(k);
        for (std::size_t i = 0; i < k; ++i) {
            Vec e(n, 0.0);
            e[S[i]] = 1.0;
            R[i] = 1.0 / norm(c.X0, e);
        }
        struct Cell {
            Vec a, b;
            double lb;
        };
        auto lo_at = [&](const Vec& b) { return cl_lambda(c, f, A, scatter(b, S, n)).lo; };
        auto cmp = [](const Cell& l, const Cell& r) { return l.lb > r.lb; };
        std::priority_queue<Cell, std::vector<Cell>, decltype(cmp)> heap(cmp);
        heap.push({Vec(k, 0.0), R, lo_at(R)});
        double ub = est.upper, solved_lo = kInf;
        std::size_t processed = 0;
        auto consider = [&](const Vec& pt) {
            Vec x0 = scatter(pt, S, n);
            auto br = cl_lambda(c, f, A, x0);
            if (br.hi < ub) {
                ub = br.hi;
                est.w0 = x0;
                est.w1 = br.x1;
                est.method = "branch-and-bound";
            }
            return br;
        };
        while (!heap.empty() && processed < opts.max_cells) {
            if (std::min(heap.top().lb, solved_lo) >= ub / (1.0 + opts.gap)) break;
            Cell cell = heap.top();
            heap.pop();
            ++processed;
            double na = norm(c.X0, scatter(cell.a, S, n));
            if (na > 1.0) continue;
            double nb = norm(c.X0, scatter(cell.b, S, n));
            if (nb <= 1.0) {
                solved_lo = std::min(solved_lo, consider(cell.b).lo);
                continue;
            }
            // Probe the unit sphere on the segment from a to b.
            double tl = 0.0, tr = 1.0;
            Vec pt(k);
            for (int it = 0; it < 60; ++it) {
                double tm = 0.5 * (tl + tr);
                for (std::size_t i = 0; i < k; ++i) pt[i] = cell.a[i] + tm * (cell.b[i] - cell.a[i]);
                if (norm(c.X0, scatter(pt, S, n)) <= 1.0) tl = tm; else tr = tm;
            }
            for (std::size_t i = 0; i < k; ++i) pt[i] = cell.a[i] + tl * (cell.b[i] - cell.a[i]);
            consider(pt);
            std::size_t split = 0;
            double widest = -1.0;
            for (std::size_t i = 0; i < k; ++i) {
                double w = (cell.b[i] - cell.a[i]) / R[i];
                if (w > widest) {
                    widest = w;
                    split = i;
                }
            }
            double mid = 0.5 * (cell.a[split] + cell.b[split]);
            Cell left = cell, right = cell;
            left.b[split] = mid;
            right.a[split] = mid;
            left.lb = std::max(cell.lb, lo_at(left.b));
            heap.push(std::move(left));
            heap.push(std::move(right));
        }
        est.cells = processed;
        est.upper = ub;
        double bb = std::min(heap.empty() ? ub : heap.top().lb, solved_lo);
        if (bb > lower) {
            lower = bb;
            est.lower_method = "branch-and-bound";
        }
    }
    est.lower = std::min(lower, est.upper);
    est.certified = est.lower > 0.0 && est.upper <= (1.0 + opts.gap) * est.lower;
    est.heuristic = !est.certified;
    return est;
}

// ---------------------------------------------------------------------------------------------
// phi = pl + eta splitting.

double max_space_norm(const Couple& c, double a, double b, const Vec& x) {
    check_dim(x, c.dim(), "max_space_norm");
    if (!(a >= 0.0) || !(b >= 0.0)) throw DomainError("max_space_norm: a and b must be nonnegative");
    const auto S = support_of(x);
    if (S.empty()) return 0.0;
    if (S.size() > 20) throw UnsupportedError("max_space_norm: support larger than 20 coordinates");
    const std::size_t n = c.dim();
    double best = kInf;
    for (std::uint32_t mask = 0; mask < (1u << S.size()); ++mask) {
        Vec y0(n, 0.0), y1(n, 0.0);
        bool any0 = false, any1 = false;
        for (std::size_t i = 0; i < S.size(); ++i) {
            if (mask & (1u << i)) {
                y0[S[i]] = x[S[i]];
                any0 = true;
            } else {
                y1[S[i]] = x[S[i]];
                any1 = true;
            }
        }
        if ((any0 && a == 0.0) || (any1 && b == 0.0)) continue;
        double v0 = any0 ? norm(c.X0, y0) / a : 0.0;
        double v1 = any1 ? norm(c.X1, y1) / b : 0.0;
        best = std::min(best, std::max(v0, v1));
    }
    return best;
}

EquivalenceReport phi_space_equivalence(const Couple& c, const InterpolationFunction& f,
                                        const std::vector<Vec>& samples, const SearchOptions& opts) {
    EquivalenceReport rep;
    rep.upper_bound = 2.0 * std::max(c.X0.modulus_constant, c.X1.modulus_constant);
    const SplitPair parts = split_convex_part(f);
    const double pa = parts.pl_part.a(), pb = parts.pl_part.b();
    const bool pl_zero = pa == 0.0 && pb == 0.0;
    const InterpolationFunction& eta = parts.eta_part;
    const bool eta_zero = eta.phi1(1.0) == 0.0;
    const std::size_t n = c.dim();
    bool first = true;
    for (const auto& x : samples) {
        check_dim(x, n, "phi_space_equivalence");
        EquivalenceSample s;
        s.x = x;
        const Vec A = lattice_abs(x);
        const auto S = support_of(A);
        auto phi_est = cl_norm(c, f, x, opts);
        s.phi_norm = phi_est.upper;
        if (S.empty()) {
            s.sum_norm = 0.0;
        } else if (eta_zero) {
            s.sum_norm = max_space_norm(c, pa, pb, A);
        } else if (pl_zero) {
            s.sum_norm = cl_norm(c, eta, x, opts).upper;
        } else {
            const std::size_t k = S.size();
            Vec AS(k);
            for (std::size_t i = 0; i < k; ++i) AS[i] = A[S[i]];
            // Parameters: split fractions th (k) followed by log-witness z (k) for the eta part.
            auto value = [&](const Vec& p) {
                Vec y(n, 0.0), z(n, 0.0), x0(n, 0.0);
                double zmax = *std::max_element(p.begin() + static_cast<long>(k), p.end());
                for (std::size_t i = 0; i < k; ++i) {
                    y[S[i]] = p[i] * AS[i];
                    z[S[i]] = AS[i] - y[S[i]];
                    x0[S[i]] = std::exp(p[k + i] - zmax);
                }
                double nx = norm(c.X0, x0);
                for (auto& v : x0) v /= nx;
                double pl = max_space_norm(c, pa, pb, y);
                if (!std::isfinite(pl)) return kInf;
                return pl + cl_lambda(c, eta, z, x0).hi;
            };
            auto project = [&](Vec& p) {
                for (std::size_t i = 0; i < k; ++i) p[i] = std::clamp(p[i], 0.0, 1.0);
            };
            auto init = [&](std::size_t st, Rng& rng) {
                Vec p(2 * k);
                for (std::size_t i = 0; i < k; ++i) {
                    p[k + i] = std::log(AS[i]);
                    if (st == 0) {
                        p[i] = 1.0;
                    } else if (st == 1) {
                        p[i] = 0.0;
                    } else if (st == 2) {
                        // Natural split along the phi witness.
                        double w0 = phi_est.w0[S[i]], w1 = phi_est.w1[S[i]];
                        double tot = eval_phi(f, w0, w1);
                        p[i] = tot > 0.0 ? eval_phi(parts.pl_part, w0, w1) / tot : 0.5;
                        p[k + i] = w0 > 0.0 ? std::log(w0) : p[k + i];
                    } else {
                        p[i] = rng.uniform();
                        p[k + i] += rng.normal();
                    }
                }
                return p;
            };
            PatternOptions po;
            po.iters = opts.iters;
            po.step = 0.25;
            auto best = multistart_minimize(static_cast<std::size_t>(std::max(1, opts.starts)), opts.seed,
                                            opts.threads, init, value, po, project);
            s.sum_norm = best.value;
        }
        s.ratio = (s.phi_norm == 0.0 && s.sum_norm == 0.0) ? 1.0 : s.phi_norm / s.sum_norm;
        if (first) {
            rep.min_ratio = rep.max_ratio = s.ratio;
            first = false;
        } else {
            rep.min_ratio = std::min(rep.min_ratio, s.ratio);
            rep.max_ratio = std::max(rep.max_ratio, s.ratio);
        }
        rep.samples.push_back(std::move(s));
    }
    rep.pass = rep.min_ratio >= rep.lower_bound * (1.0 - rep.tol) && rep.max_ratio <= rep.upper_bound * (1.0 + rep.tol);
    return rep;
}

// ---------------------------------------------------------------------------------------------
// Approximation sequences.

double approximation_a_m(const BKDecomposition& d, int m) {
    if (m < 0) throw DomainError("approximation: m must be nonnegative");
    const InterpolationFunction& phi = *d.basis;
    double L = d.node(-2 * m), R = d.node(2 * m + 2);
    double eL = d.slack(-m), eR = d.slack(m);
    return phi.phi1(L + 0.5 * eL) + phi.slope(R - 0.5 * eR);
}

ApproximationTrace approximation_sequence(const Couple& c, const InterpolationFunction& f, const std::vector<Vec>& xs,
                                          const Vec& u0, const Vec& u1, const BKDecomposition& d, int m,
                                          const Matrix* T, const Couple* target) {
    const std::size_t n = c.dim();
    check_dim(u0, n, "approximation_sequence");
    check_dim(u1, n, "approximation_sequence");
    for (const auto& x : xs) {
        check_dim(x, n, "approximation_sequence");
        check_finite(x, "approximation_sequence");
    }
    if (m < 0) throw DomainError("approximation_sequence: m must be nonnegative");
    if (f.phi1_at_zero() != 0.0 || f.slope_at_infinity() != 0.0)
        throw PreconditionError("approximation_sequence: phi_1(0+) and lim phi_1(t)/t must both vanish");
    for (std::size_t j = 0; j < n; ++j)
        if (!(u0[j] >= 0.0) || !(u1[j] >= 0.0) || !std::isfinite(u0[j]) || !std::isfinite(u1[j]))
            throw DomainError("approximation_sequence: u0, u1 must be finite and nonnegative (coordinate " +
                              std::to_string(j) + ")");
    if (norm(c.X0, u0) > 1.0) throw PreconditionError("approximation_sequence: ||u0||_{X0} > 1");
    if (norm(c.X1, u1) > 1.0) throw PreconditionError("approximation_sequence: ||u1||_{X1} > 1");
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (const auto& x : xs) s += std::fabs(x[j]);
        double bound = eval_phi(f, u0[j], u1[j]);
        if (s > bound * (1.0 + 1e-12))
            throw InfeasibleError("approximation_sequence: sum |x_i| = " + format_double(s) + " exceeds phi(u0,u1) = " +
                                      format_double(bound) + " at coordinate " + std::to_string(j),
                                  j);
    }
    const InterpolationFunction& phi = *d.basis;
    const int klo = std::max(d.k_lo, -m), khi = std::min(d.k_hi, m);

    ApproximationTrace tr;
    tr.m = m;
    tr.q = d.q;
    tr.a_m = approximation_a_m(d, m);
    const double tL = d.node(-2 * m), tR = d.node(2 * m + 2);
    const double eL = d.slack(-m), eR = d.slack(m);
    tr.lower_node = tL;
    tr.upper_node = tR;
    tr.h0.assign(n, 0.0);
    tr.h1.assign(n, 0.0);
    tr.psi.assign(n, ApproximationTrace::kOutside);
    tr.theta.assign(n, 0);
    for (int k = -m; k <= m; ++k) tr.U.push_back({k, {}});
    tr.partition_ok = true;

    for (std::size_t j = 0; j < n; ++j) {
        double w = std::max(u0[j], u1[j]);
        if (w == 0.0) continue;
        double h0 = u0[j] / w, h1 = u1[j] / w;
        tr.h0[j] = h0;
        tr.h1[j] = h1;
        // (lo) h0 < h1 < (hi) h0, with the terminal ends 0 and inf closed.
        auto inside = [&](double lo, double hi, bool strict) {
            bool lower_ok = lo == 0.0 || (strict ? lo * h0 < h1 : lo * h0 <= h1);
            bool upper_ok = std::isinf(hi) || (strict ? h1 < hi * h0 : h1 <= hi * h0);
            return lower_ok && upper_ok;
        };
        int first = ApproximationTrace::kXi;
        for (int k = klo; k <= khi; ++k) {
            double L = d.node(2 * k), R = d.node(2 * k + 2), e = d.slack(k);
            if (inside(L - e, R + e, true)) {
                tr.U[static_cast<std::size_t>(k + m)].second.push_back(j);
                if (first == ApproximationTrace::kXi) first = k;
            }
        }
        bool inV = !inside(tL, tR, false);
        if (inV) tr.V.push_back(j);
        bool w1 = h1 < (tL + 0.5 * eL) * h0;
        bool w2 = !std::isinf(tR) && (tR - 0.5 * eR) * h0 < h1;
        bool w3 = tL * h0 < h1 && (std::isinf(tR) ? h0 > 0.0 : h1 < tR * h0);
        if (w1) tr.W1.push_back(j);
        if (w2) tr.W2.push_back(j);
        if (w3) tr.W3.push_back(j);
        if (first == ApproximationTrace::kXi) {
            tr.theta[j] = w1 ? 1 : w2 ? 2 : w3 ? 3 : 0;
            if (!inV || !(w1 || w2)) tr.partition_ok = false;
        }
        tr.psi[j] = first;
    }

    const std::size_t nvec = xs.size();
    tr.x_m.assign(nvec, Vec(n, 0.0));
    tr.y.assign(nvec, std::vector<Vec>(static_cast<std::size_t>(2 * m + 1), Vec(n, 0.0)));
    for (std::size_t i = 0; i < nvec; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            int k = tr.psi[j];
            if (k == ApproximationTrace::kOutside || k == ApproximationTrace::kXi) continue;
            tr.x_m[i][j] = xs[i][j];
            tr.y[i][static_cast<std::size_t>(k + m)][j] = xs[i][j];
        }

    tr.property_i = true;
    tr.property_ii = true;
    for (std::size_t j = 0; j < n; ++j) {
        double lhs = 0.0;
        for (std::size_t i = 0; i < nvec; ++i) {
            if (std::fabs(tr.x_m[i][j]) > std::fabs(xs[i][j])) tr.property_i = false;
            lhs = std::max(lhs, std::fabs(xs[i][j] - tr.x_m[i][j]));
        }
        double rhs = std::max(u0[j], u1[j]) * tr.a_m;
        if (!(lhs <= rhs)) tr.property_ii = false;
        if (lhs > 0.0) tr.worst_ii = std::max(tr.worst_ii, rhs > 0.0 ? lhs / rhs : kInf);
    }

    tr.F0.assign(n, 0.0);
    tr.F1.assign(n, 0.0);
    const std::size_t rows = T ? T->size() : n;
    tr.G0.assign(rows, 0.0);
    tr.G1.assign(rows, 0.0);
    tr.max_Tx.assign(rows, 0.0);
    for (int k = klo; k <= khi; ++k) {
        double o = d.odd(k), po = phi.phi1(o);
        double c0 = 1.0 / po, c1 = o / po;
        for (std::size_t i = 0; i < nvec; ++i) {
            const Vec& y = tr.y[i][static_cast<std::size_t>(k + m)];
            for (std::size_t j = 0; j < n; ++j) {
                if (y[j] == 0.0) continue;
                tr.F0[j] += c0 * std::fabs(y[j]);
                tr.F1[j] += c1 * std::fabs(y[j]);
            }
            Vec Ty = T ? mat_apply(*T, y) : y;
            for (std::size_t r = 0; r < rows; ++r) {
                if (Ty[r] == 0.0) continue;
                tr.G0[r] = std::max(tr.G0[r], c0 * std::fabs(Ty[r]));
                tr.G1[r] = std::max(tr.G1[r], c1 * std::fabs(Ty[r]));
            }
        }
    }
    tr.audit_F = true;
    for (std::size_t j = 0; j < n; ++j)
        if (tr.F0[j] > tr.q * u0[j] * (1.0 + 1e-12) || tr.F1[j] > tr.q * u1[j] * (1.0 + 1e-12)) tr.audit_F = false;
    for (std::size_t i = 0; i < nvec; ++i) {
        Vec Tx = T ? mat_apply(*T, tr.x_m[i]) : tr.x_m[i];
        for (std::size_t r = 0; r < rows; ++r) tr.max_Tx[r] = std::max(tr.max_Tx[r], std::fabs(Tx[r]));
    }
    tr.audit_chain = true;
    const double chain_const = (d.q + 1.0) / (d.q - 1.0);
    for (std::size_t r = 0; r < rows; ++r) {
        if (tr.max_Tx[r] == 0.0) continue;
        double rhs = chain_const * eval_phi(phi, tr.G0[r], tr.G1[r]);
        if (tr.max_Tx[r] > rhs * (1.0 + 1e-12)) tr.audit_chain = false;
        tr.worst_chain = std::max(tr.worst_chain, rhs > 0.0 ? tr.max_Tx[r] / rhs : kInf);
    }
    const Couple* tc = target ? target : (rows == n ? &c : nullptr);
    if (tc) {
        if (tc->dim() != rows) throw DimensionError("approximation_sequence: target couple does not match T");
        tr.G0_norm = norm(tc->X0, tr.G0);
        tr.G1_norm = norm(tc->X1, tr.G1);
    }
    return tr;
}

// ---------------------------------------------------------------------------------------------
// Factorization x = phi(f, g).

namespace {

double pow2(int e) { return std::ldexp(1.0, e); }

// Smallest power of two 2^e with pred(2^e); pred must be monotone in e.
int smallest_power(const std::function<bool(double)>& pred, const char* what) {
    int lo = -1074, hi = 1023;
    if (!pred(pow2(hi))) throw SolverError(std::string("factorize: no power of 2 satisfies ") + what);
    if (pred(pow2(lo))) return lo;
    while (hi - lo > 1) {
        int mid = lo + (hi - lo) / 2;
        if (pred(pow2(mid))) hi = mid; else lo = mid;
    }
    return hi;
}

}  // namespace

FactorizationResult factorize_with_witness(const Couple& c, const InterpolationFunction& f, const Vec& x,
                                           const Vec& u, const Vec& v) {
    const std::size_t n = c.dim();
    check_dim(x, n, "factorize");
    check_dim(u, n, "factorize");
    check_dim(v, n, "factorize");
    for (std::size_t j = 0; j < n; ++j)
        if (!(x[j] >= 0.0) || !(u[j] >= 0.0) || !(v[j] >= 0.0) || !std::isfinite(x[j]) || !std::isfinite(u[j]) ||
            !std::isfinite(v[j]))
            throw DomainError("factorize: x, u, v must be finite and nonnegative (coordinate " + std::to_string(j) +
                              ")");
    if (is_doubly_bounded(f).doubly_bounded)
        throw UnsupportedError("factorize: phi is doubly bounded, hence equivalent to min");
    if (f.phi1_at_zero() != 0.0) throw PreconditionError("factorize: phi_1(0+) must vanish");
    if (!(norm(c.X0, u) < 1.0)) throw PreconditionError("factorize: witness needs ||u||_{X0} < 1");
    if (!(norm(c.X1, v) < 1.0)) throw PreconditionError("factorize: witness needs ||v||_{X1} < 1");
    for (std::size_t j = 0; j < n; ++j)
        if (x[j] > eval_phi(f, u[j], v[j]) * (1.0 + 1e-12))
            throw InfeasibleError("factorize: x exceeds phi(u,v) at coordinate " + std::to_string(j), j);

    FactorizationResult res;
    res.swapped = std::isfinite(f.sup_phi0());
    const bool sw = res.swapped;
    // In the rotated frame phi_0 is unbounded; A plays X0 and B plays X1.
    auto Phi = [&](double s, double t) { return sw ? eval_phi(f, t, s) : eval_phi(f, s, t); };
    const LatticeSpec& XA = sw ? c.X1 : c.X0;
    const LatticeSpec& XB = sw ? c.X0 : c.X1;
    const Vec& U = sw ? v : u;
    const Vec& V = sw ? u : v;
    const double supA1 = sw ? f.sup_phi0() : f.sup_phi1();
    const double CA = XA.modulus_constant, CB = XB.modulus_constant;

    auto join_scaled = [&](const Vec& a, double s) {
        Vec out(n);
        for (std::size_t j = 0; j < n; ++j) out[j] = std::max(a[j], s * x[j]);
        return out;
    };
    auto meet_scaled = [&](const Vec& a, double s) {
        Vec out(n);
        for (std::size_t j = 0; j < n; ++j) out[j] = std::min(a[j], s * x[j]);
        return out;
    };

    int jd = 0;
    while (!(norm(XB, join_scaled(V, pow2(-jd))) < CB)) {
        if (++jd > 1074) throw SolverError("factorize: no admissible delta");
    }
    res.delta = pow2(-jd);
    const int eN = smallest_power([&](double N) { return Phi(N, res.delta) >= 1.0; }, "phi(N, delta) >= 1");
    res.N = pow2(eN);
    Vec u1 = meet_scaled(U, res.N);
    Vec v1 = join_scaled(V, res.delta);
    Vec u2, v2;
    double boundA, boundB;
    if (std::isinf(supA1)) {
        res.branch = 'a';
        int e = std::min(0, eN - 1);
        while (!(norm(XA, join_scaled(u1, pow2(e))) < 1.0)) {
            if (--e < -1074) throw SolverError("factorize: no admissible epsilon");
        }
        res.eps = pow2(e);
        const int eM = smallest_power([&](double M) { return Phi(res.eps, M) >= 1.0; }, "phi(eps, M) >= 1");
        res.M = pow2(eM);
        u2 = join_scaled(u1, res.eps);
        v2 = meet_scaled(v1, res.M);
        boundA = CA;
        boundB = CB;
    } else {
        res.branch = 'b';
        res.C_phi = std::max(supA1, 1.0);
        u2 = u1;
        for (auto& t : u2) t *= res.C_phi;
        v2 = meet_scaled(v1, 1.0);
        boundA = res.C_phi;
        boundB = CB;
    }
    Vec F(n, 0.0), G(n, 0.0);
    res.y_dominates = true;
    for (std::size_t j = 0; j < n; ++j) {
        if (x[j] == 0.0) continue;
        double y = Phi(u2[j], v2[j]);
        if (!(y > 0.0)) throw SolverError("factorize: phi(u'', v'') vanishes at coordinate " + std::to_string(j));
        if (y < x[j] * (1.0 - 1e-12)) res.y_dominates = false;
        F[j] = u2[j] * (x[j] / y);
        G[j] = v2[j] * (x[j] / y);
    }
    res.f_vec = sw ? G : F;
    res.g_vec = sw ? F : G;
    res.bound_f = sw ? boundB : boundA;
    res.bound_g = sw ? boundA : boundB;
    res.norm_f = norm(c.X0, res.f_vec);
    res.norm_g = norm(c.X1, res.g_vec);
    for (std::size_t j = 0; j < n; ++j)
        res.identity_residual =
            std::max(res.identity_residual, std::fabs(eval_phi(f, res.f_vec[j], res.g_vec[j]) - x[j]));
    res.bounds_ok = res.norm_f <= res.bound_f * (1.0 + 1e-12) && res.norm_g <= res.bound_g * (1.0 + 1e-12);
    return res;
}

FactorizationResult factorize(const Couple& c, const InterpolationFunction& f, const Vec& x,
                              const SearchOptions& opts) {
    check_dim(x, c.dim(), "factorize");
    for (std::size_t j = 0; j < x.size(); ++j)
        if (!(x[j] >= 0.0) || !std::isfinite(x[j]))
            throw DomainError("factorize: x must be finite and nonnegative (coordinate " + std::to_string(j) + ")");
    if (is_doubly_bounded(f).doubly_bounded)
        throw UnsupportedError("factorize: phi is doubly bounded, hence equivalent to min");
    if (f.phi1_at_zero() != 0.0) throw PreconditionError("factorize: phi_1(0+) must vanish");
    auto est = cl_norm(c, f, x, opts);
    if (!(est.upper < 1.0))
        throw PreconditionError("factorize: cl_norm upper bound " + format_double(est.upper) + " is not below 1");
    Vec u = est.w0, v = est.w1;
    for (auto& t : u) t *= est.upper;
    for (auto& t : v) t *= est.upper;
    auto res = factorize_with_witness(c, f, x, u, v);
    res.lambda = est.upper;
    return res;
}

}  // namespace cllab
