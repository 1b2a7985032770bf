#include "cllab/pathology.hpp"

#include <cmath>
#include <utility>

#include "cllab/errors.hpp"
#include "cllab/util.hpp"

namespace cllab {

std::string to_fraction_string(const Rational& r) {
    auto num = boost::multiprecision::numerator(r);
    auto den = boost::multiprecision::denominator(r);
    if (den == 1) return num.str();
    return num.str() + "/" + den.str();
}

std::size_t rational_rank(std::vector<RationalVec> rows) {
    if (rows.empty()) return 0;
    const std::size_t cols = rows.front().size();
    std::size_t rank = 0;
    for (std::size_t c = 0; c < cols && rank < rows.size(); ++c) {
        std::size_t pivot = rank;
        while (pivot < rows.size() && rows[pivot][c] == 0) ++pivot;
        if (pivot == rows.size()) continue;
        std::swap(rows[rank], rows[pivot]);
        for (std::size_t r = rank + 1; r < rows.size(); ++r) {
            if (rows[r][c] == 0) continue;
            Rational factor = rows[r][c] / rows[rank][c];
            for (std::size_t k = c; k < cols; ++k) rows[r][k] -= factor * rows[rank][k];
        }
        ++rank;
    }
    return rank;
}

SphereSetExpr SphereSetExpr::full(std::size_t n) {
    if (n == 0) throw DomainError("sphere set: dimension must be positive");
    SphereSetExpr e;
    e.kind = Kind::full;
    e.n = n;
    return e;
}

SphereSetExpr SphereSetExpr::b_union(std::size_t n, std::vector<RationalVec> vectors) {
    if (n == 0) throw DomainError("sphere set: dimension must be positive");
    for (std::size_t j = 0; j < vectors.size(); ++j) {
        if (vectors[j].size() != n)
            throw DimensionError("sphere set: vector " + std::to_string(j) + " has dimension " +
                                 std::to_string(vectors[j].size()) + ", expected " + std::to_string(n));
        bool nonzero = false;
        for (const auto& x : vectors[j]) nonzero = nonzero || x != 0;
        if (!nonzero) throw PreconditionError("sphere set: vector " + std::to_string(j) + " is zero");
    }
    SphereSetExpr e;
    e.kind = Kind::b_union;
    e.n = n;
    e.vectors = std::move(vectors);
    return e;
}

SphereSetExpr SphereSetExpr::b(std::size_t n, RationalVec u) {
    return b_union(n, {std::move(u)});
}

std::size_t SphereSetExpr::span_rank() const {
    return kind == Kind::full ? n : rational_rank(vectors);
}

std::string SphereSetExpr::describe() const {
    if (kind == Kind::full) return "full:" + std::to_string(n);
    std::string out = "bu:" + std::to_string(n) + ":";
    for (std::size_t j = 0; j < vectors.size(); ++j) {
        if (j) out += ";";
        out += "[";
        for (std::size_t i = 0; i < vectors[j].size(); ++i) {
            if (i) out += ",";
            out += to_fraction_string(vectors[j][i]);
        }
        out += "]";
    }
    return out;
}

namespace {

Rational parse_rational(std::string_view tok, std::size_t offset) {
    auto digits_only = [](std::string_view s) {
        if (s.empty()) return false;
        for (char ch : s)
            if (ch < '0' || ch > '9') return false;
        return true;
    };
    auto fail = [&]() -> Rational {
        throw ParseError("expected a rational number, got '" + std::string(tok) + "'", offset);
    };
    std::string_view body = tok;
    bool negative = false;
    if (!body.empty() && (body.front() == '-' || body.front() == '+')) {
        negative = body.front() == '-';
        body.remove_prefix(1);
    }
    Rational value;
    if (auto slash = body.find('/'); slash != std::string_view::npos) {
        auto num = body.substr(0, slash), den = body.substr(slash + 1);
        if (!digits_only(num) || !digits_only(den)) return fail();
        boost::multiprecision::cpp_int d{std::string(den)};
        if (d == 0) throw ParseError("zero denominator in '" + std::string(tok) + "'", offset);
        value = Rational(boost::multiprecision::cpp_int(std::string(num)), d);
    } else if (auto dot = body.find('.'); dot != std::string_view::npos) {
        auto whole = body.substr(0, dot), frac = body.substr(dot + 1);
        if ((!whole.empty() && !digits_only(whole)) || (!frac.empty() && !digits_only(frac)) ||
            (whole.empty() && frac.empty()))
            return fail();
        boost::multiprecision::cpp_int scale = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
        boost::multiprecision::cpp_int num(std::string(whole.empty() ? "0" : whole) + std::string(frac));
        value = Rational(num, scale);
    } else {
        if (!digits_only(body)) return fail();
        value = Rational(boost::multiprecision::cpp_int(std::string(body)));
    }
    return negative ? Rational(-value) : value;
}

}  // namespace

SphereSetExpr parse_sphere_set(const std::string& text) {
    auto parts = split_tokens(text, ':');
    const auto& head = parts[0];
    auto dim_of = [](const Token& tok) {
        long long n = parse_integer(tok.text, tok.offset);
        if (n <= 0) throw ParseError("dimension must be positive", tok.offset);
        return static_cast<std::size_t>(n);
    };
    if (head.text == "full") {
        if (parts.size() != 2) throw ParseError("expected full:<n>", head.offset);
        return SphereSetExpr::full(dim_of(parts[1]));
    }
    if (head.text != "bu") throw ParseError("unknown set expression '" + std::string(head.text) + "'", head.offset);
    if (parts.size() < 2 || parts.size() > 3) throw ParseError("expected bu:<n>:[u];[v];...", head.offset);
    const std::size_t n = dim_of(parts[1]);
    std::vector<RationalVec> vecs;
    if (parts.size() == 3 && !parts[2].text.empty()) {
        for (const auto& item : split_tokens(parts[2].text, ';', parts[2].offset)) {
            auto body = item.text;
            if (body.size() < 2 || body.front() != '[' || body.back() != ']')
                throw ParseError("expected [u1,...,un], got '" + std::string(body) + "'", item.offset);
            RationalVec u;
            for (const auto& tok : split_tokens(body.substr(1, body.size() - 2), ',', item.offset + 1))
                u.push_back(parse_rational(tok.text, tok.offset));
            if (u.size() != n)
                throw ParseError("vector has " + std::to_string(u.size()) + " entries, expected " +
                                     std::to_string(n),
                                 item.offset);
            bool nonzero = false;
            for (const auto& x : u) nonzero = nonzero || x != 0;
            if (!nonzero) throw ParseError("zero vector in set expression", item.offset);
            vecs.push_back(std::move(u));
        }
    }
    return SphereSetExpr::b_union(n, std::move(vecs));
}

Rational submeasure(std::size_t n, const SphereSetExpr& A) {
    if (A.n != n) throw DimensionError("submeasure: set lives in dimension " + std::to_string(A.n));
    return Rational(static_cast<long long>(A.span_rank()), static_cast<long long>(n));
}

bool sphere_subset(const SphereSetExpr& A, const SphereSetExpr& B) {
    if (A.n != B.n) throw DimensionError("sphere_subset: dimension mismatch");
    if (B.kind == SphereSetExpr::Kind::full) return true;
    if (A.kind == SphereSetExpr::Kind::full) return B.span_rank() == B.n;
    std::vector<RationalVec> joined = B.vectors;
    joined.insert(joined.end(), A.vectors.begin(), A.vectors.end());
    return rational_rank(joined) == B.span_rank();
}

SphereSetExpr sphere_union(const SphereSetExpr& A, const SphereSetExpr& B) {
    if (A.n != B.n) throw DimensionError("sphere_union: dimension mismatch");
    if (A.kind == SphereSetExpr::Kind::full || B.kind == SphereSetExpr::Kind::full)
        return SphereSetExpr::full(A.n);
    std::vector<RationalVec> joined = A.vectors;
    joined.insert(joined.end(), B.vectors.begin(), B.vectors.end());
    return SphereSetExpr::b_union(A.n, std::move(joined));
}

PathologySpace::PathologySpace(std::size_t n_, double p_) : n(n_), p(p_) {
    if (n == 0) throw DomainError("pathology space: n must be positive");
    if (!(p > 0.0 && p < 1.0)) throw DomainError("pathology space: p must lie in (0,1), got " + format_double(p));
}

double lp_norm_simple(const PathologySpace& sp, const std::vector<SimpleLayer>& layers) {
    double total = 0.0;
    for (std::size_t j = 0; j < layers.size(); ++j) {
        const auto& L = layers[j];
        if (L.set.n != sp.n)
            throw DimensionError("lp_norm_simple: layer " + std::to_string(j) + " has dimension " +
                                 std::to_string(L.set.n));
        if (!(L.c >= 0.0) || !std::isfinite(L.c))
            throw UnsupportedError("lp_norm_simple: layer " + std::to_string(j) +
                                   " needs a finite nonnegative height");
        if (j > 0 && !sphere_subset(L.set, layers[j - 1].set))
            throw UnsupportedError("lp_norm_simple: layer " + std::to_string(j) + " is not nested in layer " +
                                   std::to_string(j - 1));
        total += L.c;
    }
    if (total == 0.0) return 0.0;
    // {|f| >= s} = A_m for C_{m-1} < s <= C_m, with C_m the partial sums of heights.
    double integral = 0.0, prev = 0.0, cum = 0.0;
    for (const auto& L : layers) {
        cum += L.c;
        double level = std::pow(cum / total, sp.p);
        double phi = static_cast<double>(L.set.span_rank()) / static_cast<double>(sp.n);
        integral += (level - prev) * phi;
        prev = level;
    }
    return total * std::pow(integral, 1.0 / sp.p);
}

double coordinate_combination_norm(const PathologySpace& sp, const std::vector<double>& x) {
    if (x.size() != sp.n)
        throw DimensionError("coordinate_combination_norm: vector has dimension " + std::to_string(x.size()) +
                             ", expected " + std::to_string(sp.n));
    double l1 = 0.0;
    RationalVec u;
    bool nonzero = false;
    for (double xi : x) {
        if (!std::isfinite(xi)) throw DomainError("coordinate_combination_norm: non-finite entry");
        l1 += std::fabs(xi);
        nonzero = nonzero || xi != 0.0;
        u.emplace_back(xi);
    }
    if (!nonzero) return 0.0;
    return lp_norm_simple(sp, {{l1, SphereSetExpr::b(sp.n, std::move(u))}});
}

KInfty1Certificate kinfty1_certificate(std::size_t n, double p) {
    if (n < 2) throw PreconditionError("kinfty1_certificate: n must be at least 2");
    if (!(p > 0.0 && p < 1.0))
        throw DomainError("kinfty1_certificate: p must lie in (0,1), got " + format_double(p));
    PathologySpace sp(n, p);
    KInfty1Certificate c;
    c.n = n;
    c.p = p;
    for (std::size_t i = 0; i < n; ++i) {
        RationalVec e(n, Rational(0));
        e[i] = 1;
        c.witness.push_back(std::move(e));
    }
    auto full = SphereSetExpr::full(n);
    auto single = SphereSetExpr::b(n, RationalVec(n, Rational(1)));
    c.phi_full = submeasure(n, full);
    c.phi_single = submeasure(n, single);
    // max_i |f_i| = 1 on Omega_n, and |sum a_i f_i| <= n chi_{B_a} for |a_i| <= 1.
    c.sup_norm = lp_norm_simple(sp, {{1.0, full}});
    c.domination_bound = lp_norm_simple(sp, {{static_cast<double>(n), single}});
    c.constant_lower_bound = c.sup_norm / c.domination_bound;
    return c;
}

}  // namespace cllab
