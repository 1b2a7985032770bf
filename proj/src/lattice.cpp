#include "cllab/lattice.hpp"

#include <algorithm>
#include <cmath>

#include "cllab/errors.hpp"
#include "cllab/pathology.hpp"
#include "cllab/util.hpp"

namespace cllab {

namespace {

double lp_modulus(double p) { return p >= 1.0 ? 1.0 : std::pow(2.0, 1.0 / p - 1.0); }

void check_p(double p) {
    if (!(p > 0.0)) throw DomainError("lattice: p must be positive, got " + format_double(p));
}

void check_dim(const Vec& x, std::size_t n, const char* what) {
    if (x.size() != n)
        throw DimensionError(std::string(what) + ": vector has dimension " + std::to_string(x.size()) +
                             ", expected " + std::to_string(n));
}

// (sum w_i |x_i|^p)^(1/p), scaled by the largest entry to avoid overflow.
double weighted_power_sum(const Vec& x, const Vec* w, double p) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::fabs(x[i]));
    if (m == 0.0) return 0.0;
    if (std::isinf(m)) return m;
    double s = 0.0;
    if (p == 1.0) {
        for (std::size_t i = 0; i < x.size(); ++i) s += (w ? (*w)[i] : 1.0) * std::fabs(x[i]);
        return s;
    }
    for (std::size_t i = 0; i < x.size(); ++i) s += (w ? (*w)[i] : 1.0) * std::pow(std::fabs(x[i]) / m, p);
    return m * std::pow(s, 1.0 / p);
}

}  // namespace

LatticeSpec LatticeSpec::lp(double p, std::size_t n) {
    check_p(p);
    if (n == 0) throw DomainError("lattice: dimension must be positive");
    if (std::isinf(p)) return linf(n);
    LatticeSpec s;
    s.family = LatticeFamily::lp;
    s.dim = n;
    s.p = p;
    s.modulus_constant = lp_modulus(p);
    return s;
}

LatticeSpec LatticeSpec::weighted_lp(double p, Vec weights) {
    check_p(p);
    if (weights.empty()) throw DomainError("lattice: dimension must be positive");
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
            throw DomainError("lattice: weight " + std::to_string(i) + " must be positive and finite");
    LatticeSpec s;
    s.family = LatticeFamily::weighted_lp;
    s.dim = weights.size();
    s.p = p;
    s.weights = std::move(weights);
    s.modulus_constant = std::isinf(p) ? 1.0 : lp_modulus(p);
    return s;
}

LatticeSpec LatticeSpec::linf(std::size_t n) {
    if (n == 0) throw DomainError("lattice: dimension must be positive");
    LatticeSpec s;
    s.family = LatticeFamily::linf;
    s.dim = n;
    s.p = INFINITY;
    s.modulus_constant = 1.0;
    return s;
}

LatticeSpec LatticeSpec::submeasure(double p, std::size_t n) {
    PathologySpace sp(n, p);
    LatticeSpec s;
    s.family = LatticeFamily::submeasure;
    s.dim = sp.n;
    s.p = sp.p;
    s.modulus_constant = lp_modulus(p);
    return s;
}

std::string LatticeSpec::describe() const {
    switch (family) {
        case LatticeFamily::lp: return "lp:" + format_double(p) + ":" + std::to_string(dim);
        case LatticeFamily::linf: return "linf:" + std::to_string(dim);
        case LatticeFamily::submeasure: return "sub:" + format_double(p) + ":" + std::to_string(dim);
        case LatticeFamily::weighted_lp: {
            std::string out = "wlp:" + format_double(p) + ":" + std::to_string(dim) + ":<";
            for (std::size_t i = 0; i < weights.size(); ++i) {
                if (i) out += ",";
                out += format_double(weights[i]);
            }
            return out + ">";
        }
    }
    return "?";
}

LatticeSpec parse_lattice(const std::string& descriptor, std::size_t offset) {
    auto parts = split_tokens(descriptor, ':', offset);
    const auto& head = parts[0];
    auto want = [&](std::size_t count) {
        if (parts.size() != count)
            throw ParseError("lattice '" + std::string(head.text) + "' expects " + std::to_string(count - 1) +
                                 " fields, got " + std::to_string(parts.size() - 1),
                             head.offset);
    };
    auto dim_of = [](const Token& tok) {
        long long n = parse_integer(tok.text, tok.offset);
        if (n <= 0) throw ParseError("dimension must be positive", tok.offset);
        return static_cast<std::size_t>(n);
    };
    auto p_of = [](const Token& tok) {
        double p = parse_double(tok.text, tok.offset);
        if (!(p > 0.0)) throw ParseError("p must be positive", tok.offset);
        return p;
    };
    if (head.text == "lp") {
        want(3);
        return LatticeSpec::lp(p_of(parts[1]), dim_of(parts[2]));
    }
    if (head.text == "linf") {
        want(2);
        return LatticeSpec::linf(dim_of(parts[1]));
    }
    if (head.text == "sub") {
        want(3);
        double p = p_of(parts[1]);
        if (p >= 1.0) throw ParseError("submeasure lattice needs p in (0,1)", parts[1].offset);
        return LatticeSpec::submeasure(p, dim_of(parts[2]));
    }
    if (head.text == "wlp") {
        want(4);
        double p = p_of(parts[1]);
        std::size_t n = dim_of(parts[2]);
        std::string_view wtext = parts[3].text;
        std::size_t woff = parts[3].offset;
        if (!wtext.empty() && wtext.front() == '<') {
            if (wtext.back() != '>') throw ParseError("unterminated weight list", woff);
            wtext = wtext.substr(1, wtext.size() - 2);
            ++woff;
        }
        Vec w = parse_double_list(wtext, woff);
        if (w.size() != n)
            throw ParseError("expected " + std::to_string(n) + " weights, got " + std::to_string(w.size()),
                             parts[3].offset);
        for (std::size_t i = 0; i < w.size(); ++i)
            if (!(w[i] > 0.0) || !std::isfinite(w[i])) throw ParseError("weights must be positive", woff);
        return LatticeSpec::weighted_lp(p, std::move(w));
    }
    throw ParseError("unknown lattice family '" + std::string(head.text) + "'", head.offset);
}

double norm(const LatticeSpec& X, const Vec& x) {
    check_dim(x, X.dim, "norm");
    switch (X.family) {
        case LatticeFamily::lp: return weighted_power_sum(x, nullptr, X.p);
        case LatticeFamily::linf: {
            double m = 0.0;
            for (double xi : x) m = std::max(m, std::fabs(xi));
            return m;
        }
        case LatticeFamily::weighted_lp: {
            if (std::isinf(X.p)) {
                double m = 0.0;
                for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, X.weights[i] * std::fabs(x[i]));
                return m;
            }
            return weighted_power_sum(x, &X.weights, X.p);
        }
        case LatticeFamily::submeasure:
            return coordinate_combination_norm(PathologySpace(X.dim, X.p), x);
    }
    return 0.0;
}

Vec lattice_abs(const Vec& x) {
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::fabs(x[i]);
    return out;
}

Vec lattice_join(const Vec& x, const Vec& y) {
    check_dim(y, x.size(), "lattice_join");
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max(x[i], y[i]);
    return out;
}

Vec lattice_meet(const Vec& x, const Vec& y) {
    check_dim(y, x.size(), "lattice_meet");
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::min(x[i], y[i]);
    return out;
}

LatticeOpsResult lattice_ops(const Vec& x, const Vec& y) {
    return {lattice_abs(x), lattice_join(x, y), lattice_meet(x, y)};
}

Vec mat_apply(const Matrix& A, const Vec& x) {
    Vec out(A.size(), 0.0);
    for (std::size_t i = 0; i < A.size(); ++i) {
        check_dim(A[i], x.size(), "mat_apply");
        double s = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) s += A[i][j] * x[j];
        out[i] = s;
    }
    return out;
}

Vec krivine_apply(const InterpolationFunction& f, const Vec& x0, const Vec& x1) {
    check_dim(x1, x0.size(), "krivine_apply");
    Vec out(x0.size());
    for (std::size_t j = 0; j < x0.size(); ++j) {
        if (!(x0[j] >= 0.0) || !(x1[j] >= 0.0))
            throw DomainError("krivine_apply: negative input at coordinate " + std::to_string(j));
        out[j] = eval_phi(f, x0[j], x1[j]);
    }
    return out;
}

namespace {

// Unit in the last place of |z| (z != 0), so multiples of it below |z| are representable.
int ulp_exponent(double z) {
    int e = 0;
    std::frexp(std::fabs(z), &e);
    return std::max(e - 53, -1074);
}

Rational exact(double x) { return Rational(x); }

double double_below(const Rational& r) {
    double d = r.convert_to<double>();
    while (exact(d) > r) d = std::nextafter(d, -INFINITY);
    while (exact(std::nextafter(d, INFINITY)) <= r) d = std::nextafter(d, INFINITY);
    return d;
}

double double_above(const Rational& r) {
    double d = r.convert_to<double>();
    while (exact(d) < r) d = std::nextafter(d, INFINITY);
    while (exact(std::nextafter(d, -INFINITY)) >= r) d = std::nextafter(d, -INFINITY);
    return d;
}

}  // namespace

std::vector<RieszPart> riesz_decompose(const std::vector<Vec>& z, const Vec& u, const Vec& v) {
    const std::size_t dim = u.size();
    check_dim(v, dim, "riesz_decompose");
    for (std::size_t i = 0; i < z.size(); ++i) check_dim(z[i], dim, "riesz_decompose");
    for (std::size_t j = 0; j < dim; ++j) {
        if (!(u[j] >= 0.0) || !(v[j] >= 0.0) || !std::isfinite(u[j]) || !std::isfinite(v[j]))
            throw DomainError("riesz_decompose: u and v must be finite and nonnegative (coordinate " +
                              std::to_string(j) + ")");
        Rational lhs = 0;
        for (const auto& zi : z) {
            if (!std::isfinite(zi[j]))
                throw DomainError("riesz_decompose: non-finite entry at coordinate " + std::to_string(j));
            lhs += exact(std::fabs(zi[j]));
        }
        if (lhs > exact(u[j]) + exact(v[j]))
            throw InfeasibleError("riesz_decompose: sum |z_i| exceeds u + v at coordinate " + std::to_string(j), j);
    }

    std::vector<RieszPart> out(z.size(), RieszPart{Vec(dim, 0.0), Vec(dim, 0.0)});
    for (std::size_t j = 0; j < dim; ++j) {
        if (u[j] == 0.0) {
            for (std::size_t i = 0; i < z.size(); ++i) out[i].v[j] = z[i][j];
            continue;
        }
        if (v[j] == 0.0) {
            for (std::size_t i = 0; i < z.size(); ++i) out[i].u[j] = z[i][j];
            continue;
        }
        const Rational U = exact(u[j]), V = exact(v[j]);
        const Rational ratio = U / (U + V);
        // a_i = |u_ij|, rounded down onto the ulp grid of z_ij so that z_ij - u_ij is exact.
        std::vector<double> a(z.size(), 0.0);
        Rational su = 0, sv = 0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            double zi = z[i][j];
            if (zi == 0.0) continue;
            int e = ulp_exponent(zi);
            Rational target = exact(std::fabs(zi)) * ratio;
            Rational steps = target / exact(std::ldexp(1.0, e));
            boost::multiprecision::cpp_int k = boost::multiprecision::numerator(steps) /
                                               boost::multiprecision::denominator(steps);
            a[i] = std::ldexp(k.convert_to<double>(), e);
            su += exact(a[i]);
            sv += exact(std::fabs(zi)) - exact(a[i]);
        }
        // Rounding down can leave the v side over its bound; move single ulps back to u while u has room.
        for (bool moved = true; sv > V && moved;) {
            moved = false;
            for (std::size_t i = 0; i < z.size() && sv > V; ++i) {
                double zi = std::fabs(z[i][j]);
                if (zi == 0.0 || a[i] >= zi) continue;
                double step = std::ldexp(1.0, ulp_exponent(zi));
                Rational rs = exact(step);
                if (su + rs > U) continue;
                a[i] += step;
                su += rs;
                sv -= rs;
                moved = true;
            }
        }
        // Remaining gap below one ulp: retarget a single entry off the grid, keeping z_ij - u_ij exact.
        for (std::size_t i = 0; i < z.size() && sv > V; ++i) {
            const double zi = std::fabs(z[i][j]);
            if (zi == 0.0) continue;
            const Rational need = sv - V, room = U - su, Z = exact(zi), A = exact(a[i]);
            auto try_set = [&](double cand) {
                if (!(cand >= 0.0) || cand > zi) return false;
                Rational C = exact(cand);
                if (C < A + need || C > A + room || exact(zi - cand) != Z - C) return false;
                su += C - A;
                sv -= C - A;
                a[i] = cand;
                return true;
            };
            if (try_set(double_above(A + need))) continue;
            try_set(zi - double_below(Z - A - need));
        }
        for (std::size_t i = 0; i < z.size(); ++i) {
            double zi = z[i][j];
            double ui = std::signbit(zi) ? -a[i] : a[i];
            out[i].u[j] = ui;
            out[i].v[j] = zi - ui;
        }
    }
    return out;
}

bool dominated_exactly(const std::vector<Vec>& parts, const Vec& bound, double factor) {
    const Rational f = exact(factor);
    for (std::size_t j = 0; j < bound.size(); ++j) {
        Rational s = 0;
        for (const auto& p : parts) {
            check_dim(p, bound.size(), "dominated_exactly");
            s += exact(std::fabs(p[j]));
        }
        if (s > f * exact(bound[j])) return false;
    }
    return true;
}

}  // namespace cllab
