#include "cllab/operators.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <boost/math/tools/minima.hpp>

#include "cllab/errors.hpp"
#include "cllab/pathology.hpp"
#include "cllab/search.hpp"
#include "cllab/util.hpp"

namespace cllab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Exponent r with ||x + y||^r <= ||x||^r + ||y||^r style behaviour of the norm as a function of
// coefficients: the submeasure norm is a multiple of the l_1 norm.
double effective_p(const LatticeSpec& X) {
    if (X.family == LatticeFamily::linf) return kInf;
    if (X.family == LatticeFamily::submeasure) return 1.0;
    return X.p;
}

bool convex_norm(const LatticeSpec& X) { return effective_p(X) >= 1.0; }

double unit_norm(const LatticeSpec& X, std::size_t j) {
    Vec e(X.dim, 0.0);
    e[j] = 1.0;
    return norm(X, e);
}

// sup { <r, x> : ||x||_X <= 1 } for convex X.
double dual_norm(const LatticeSpec& X, const Vec& r) {
    const std::size_t n = r.size();
    if (X.family == LatticeFamily::linf) {
        double s = 0.0;
        for (double v : r) s += std::fabs(v);
        return s;
    }
    if (X.family == LatticeFamily::submeasure) {
        double c = unit_norm(X, 0), m = 0.0;
        for (double v : r) m = std::max(m, std::fabs(v));
        return m / c;
    }
    const double p = X.p;
    auto w = [&](std::size_t j) { return X.family == LatticeFamily::weighted_lp ? X.weights[j] : 1.0; };
    if (std::isinf(p)) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::fabs(r[j]) / w(j);
        return s;
    }
    if (p == 1.0) {
        double m = 0.0;
        for (std::size_t j = 0; j < n; ++j) m = std::max(m, std::fabs(r[j]) / w(j));
        return m;
    }
    const double pp = p / (p - 1.0);
    double scale = 0.0;
    Vec y(n);
    for (std::size_t j = 0; j < n; ++j) {
        y[j] = std::fabs(r[j]) * std::pow(w(j), -1.0 / p);
        scale = std::max(scale, y[j]);
    }
    if (scale == 0.0) return 0.0;
    double s = 0.0;
    for (double v : y) s += std::pow(v / scale, pp);
    return scale * std::pow(s, 1.0 / pp);
}

void check_shapes(const Matrix& A, const LatticeSpec& X, const LatticeSpec& Y, const char* what) {
    std::size_t cols = A.empty() ? 0 : A.front().size();
    if (A.size() != Y.dim || cols != X.dim)
        throw DimensionError(std::string(what) + ": matrix is " + std::to_string(A.size()) + "x" +
                             std::to_string(cols) + " but the spaces need " + std::to_string(Y.dim) + "x" +
                             std::to_string(X.dim));
}

Vec column(const Matrix& A, std::size_t j) {
    Vec c(A.size());
    for (std::size_t i = 0; i < A.size(); ++i) c[i] = A[i][j];
    return c;
}

// Coordinatewise (sum_i |v_i|^e)^{1/e}, or max_i |v_i| for e = inf.
Vec aggregate(const std::vector<Vec>& vs, double e, std::size_t n) {
    Vec out(n, 0.0);
    if (std::isinf(e)) {
        for (const auto& v : vs)
            for (std::size_t j = 0; j < n; ++j) out[j] = std::max(out[j], std::fabs(v[j]));
        return out;
    }
    for (std::size_t j = 0; j < n; ++j) {
        double m = 0.0;
        for (const auto& v : vs) m = std::max(m, std::fabs(v[j]));
        if (m == 0.0) continue;
        double s = 0.0;
        for (const auto& v : vs) s += std::pow(std::fabs(v[j]) / m, e);
        out[j] = m * std::pow(s, 1.0 / e);
    }
    return out;
}

std::vector<Vec> unpack(const Vec& z, std::size_t n) {
    std::vector<Vec> xs(z.size() / n, Vec(n));
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) xs[i][j] = z[i * n + j];
    return xs;
}

std::string key_of(const std::string& kind, const LatticeSpec& X, const LatticeSpec& Y, const SearchOptions& o,
                   const std::string& extra = "") {
    return kind + "|" + X.describe() + "|" + Y.describe() + "|" + extra + "|" + std::to_string(o.seed) + ":" +
           std::to_string(o.starts) + ":" + std::to_string(o.iters) + ":" + format_double(o.gap);
}

void finish(NormEstimate& est, double gap) {
    est.lower = std::min(est.lower, est.upper);
    est.certified = std::isfinite(est.upper) && est.lower > 0.0 && est.upper <= (1.0 + gap) * est.lower;
    if (est.upper == 0.0) est.certified = true;
    est.heuristic = !est.certified;
}

}  // namespace

std::size_t space_dim(const Space& s) {
    return std::visit([](const auto& v) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Couple>) return v.dim();
        else return v.dim;
    }, s);
}

std::string describe_space(const Space& s) {
    return std::visit([](const auto& v) { return v.describe(); }, s);
}

OperatorSpec::OperatorSpec(Matrix m, Space dom, Space cod)
    : matrix(std::move(m)), domain(std::move(dom)), codomain(std::move(cod)) {
    if (matrix.empty()) throw DimensionError("operator: empty matrix");
    for (const auto& row : matrix) {
        if (row.size() != matrix.front().size() || row.empty())
            throw DimensionError("operator: ragged or empty matrix rows");
        for (double v : row)
            if (!std::isfinite(v)) throw DomainError("operator: non-finite matrix entry");
    }
    if (cols() != space_dim(domain) || rows() != space_dim(codomain))
        throw DimensionError("operator: matrix is " + std::to_string(rows()) + "x" + std::to_string(cols()) +
                             " but " + describe_space(domain) + " -> " + describe_space(codomain) + " needs " +
                             std::to_string(space_dim(codomain)) + "x" + std::to_string(space_dim(domain)));
}

bool OperatorSpec::positive() const {
    for (const auto& row : matrix)
        for (double v : row)
            if (v < 0.0) return false;
    return true;
}

bool OperatorSpec::diagonal() const {
    for (std::size_t i = 0; i < rows(); ++i)
        for (std::size_t j = 0; j < cols(); ++j)
            if (i != j && matrix[i][j] != 0.0) return false;
    return true;
}

Matrix parse_matrix(const std::string& text) {
    Matrix A;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find_first_of(";\n", pos);
        if (end == std::string::npos) end = text.size();
        std::string_view line(text.data() + pos, end - pos);
        std::size_t hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        std::size_t first = line.find_first_not_of(" \t\r");
        if (first != std::string_view::npos) {
            std::size_t last = line.find_last_not_of(" \t\r");
            Vec row;
            for (const auto& tok : split_tokens(line.substr(first, last - first + 1), ',', pos + first)) {
                std::size_t a = tok.text.find_first_not_of(" \t");
                std::size_t b = tok.text.find_last_not_of(" \t");
                if (a == std::string_view::npos) throw ParseError("empty matrix entry", tok.offset);
                row.push_back(parse_double(tok.text.substr(a, b - a + 1), tok.offset + a));
            }
            A.push_back(std::move(row));
            if (A.back().size() != A.front().size())
                throw ParseError("matrix rows have different lengths", pos + first);
        }
        pos = end + 1;
    }
    if (A.empty()) throw ParseError("empty matrix", 0);
    return A;
}

Matrix read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open matrix file '" + path + "'", 0);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_matrix(ss.str());
}

Matrix abs_matrix(const Matrix& A) {
    Matrix B = A;
    for (auto& row : B)
        for (auto& v : row) v = std::fabs(v);
    return B;
}

NormEstimate op_norm(const OperatorSpec& T, const LatticeSpec& X, const LatticeSpec& Y, const SearchOptions& opts) {
    check_shapes(T.matrix, X, Y, "op_norm");
    const std::string key = key_of("op", X, Y, opts);
    if (auto it = T.cache.find(key); it != T.cache.end()) return it->second;

    const std::size_t n = X.dim;
    NormEstimate est;
    // Every coordinate vertex e_j / ||e_j|| is attained.
    double vertex = 0.0;
    for (std::size_t j = 0; j < n; ++j) vertex = std::max(vertex, norm(Y, column(T.matrix, j)) / unit_norm(X, j));
    est.lower = vertex;
    est.lower_method = "coordinate vertices";

    // ||Tx||^r <= sum_j |x_j|^r ||T e_j||^r and sum_j (|x_j| ||e_j||)^r <= n^{max(0, 1 - r/p)} on the unit ball.
    const double r = std::min(1.0, effective_p(Y));
    const double px = effective_p(X);
    const double expo = std::max(0.0, 1.0 / r - (std::isinf(px) ? 0.0 : 1.0 / px));
    est.upper = vertex * std::pow(static_cast<double>(n), expo);
    est.method = expo == 0.0 ? "coordinate vertices (exact)" : "coordinate sum bound";

    if (Y.family == LatticeFamily::linf && convex_norm(X)) {
        double m = 0.0;
        for (const auto& row : T.matrix) m = std::max(m, dual_norm(X, row));
        est.upper = std::min(est.upper, m);
        est.lower = std::max(est.lower, std::min(m, est.upper));
        est.method = "dual row norms (exact)";
        est.lower_method = "dual row norms";
    }

    if (T.rows() == T.cols() && T.diagonal() && X.describe() == Y.describe()) {
        // |Dx| <= max|d_j| |x| coordinatewise and the norm is monotone.
        double d = 0.0;
        for (std::size_t j = 0; j < n; ++j) d = std::max(d, std::fabs(T.matrix[j][j]));
        est.upper = std::min(est.upper, d);
        est.method = "diagonal (exact)";
    }

    if (est.upper > est.lower * (1.0 + opts.gap)) {
        auto F = [&](const Vec& x) {
            double nx = norm(X, x);
            return nx > 0.0 ? -norm(Y, mat_apply(T.matrix, x)) / nx : 0.0;
        };
        auto init = [&](std::size_t s, Rng& rng) {
            Vec x(n, 0.0);
            if (s < n) {
                x[s] = 1.0;
            } else {
                for (auto& v : x) v = rng.normal();
            }
            return x;
        };
        PatternOptions po;
        po.iters = opts.iters;
        po.step = 0.25;
        auto best = multistart_minimize(static_cast<std::size_t>(std::max(1, opts.starts)), opts.seed,
                                        opts.threads, init, F, po);
        est.evaluations = best.evals;
        est.search_upper = -best.value;
        if (-best.value > est.lower) {
            est.lower = -best.value;
            est.lower_method = "multistart";
            est.w0 = best.z;
        }
    }
    finish(est, opts.gap);
    T.cache.emplace(key, est);
    return est;
}

NormEstimate rho_pq(const OperatorSpec& T, const LatticeSpec& X, const LatticeSpec& Y, double p, double q,
                    const SearchOptions& opts, int max_tuple) {
    if (!(p >= 1.0) || !(q >= 1.0))
        throw UnsupportedError("rho_pq: (p,q) must lie in [1,inf]^2, got (" + format_double(p) + "," +
                               format_double(q) + ")");
    if (X.family == LatticeFamily::submeasure || Y.family == LatticeFamily::submeasure)
        throw UnsupportedError("rho_pq: the submeasure lattice has no coordinatewise tuple operations");
    if (max_tuple < 1) throw DomainError("rho_pq: tuple budget must be positive");
    check_shapes(T.matrix, X, Y, "rho_pq");
    const std::string key = key_of("rho", X, Y, opts, format_double(p) + ":" + format_double(q) + ":" +
                                                         std::to_string(max_tuple));
    if (auto it = T.cache.find(key); it != T.cache.end()) return it->second;

    const std::size_t n = X.dim, m = Y.dim;
    NormEstimate est;
    auto ratio = [&](const Vec& z) {
        auto xs = unpack(z, n);
        double den = norm(X, aggregate(xs, q, n));
        if (!(den > 0.0)) return 0.0;
        std::vector<Vec> ys;
        ys.reserve(xs.size());
        for (const auto& x : xs) ys.push_back(mat_apply(T.matrix, x));
        return norm(Y, aggregate(ys, p, m)) / den;
    };
    auto init = [&](std::size_t s, Rng& rng) {
        std::size_t k = 1 + s % static_cast<std::size_t>(max_tuple);
        Vec z(k * n);
        for (auto& v : z) v = rng.normal();
        return z;
    };
    PatternOptions po;
    po.iters = opts.iters;
    po.step = 0.25;
    auto best = multistart_minimize(static_cast<std::size_t>(std::max(1, opts.starts)), opts.seed, opts.threads,
                                    init, [&](const Vec& z) { return -ratio(z); }, po);
    est.evaluations = best.evals;
    est.search_upper = -best.value;
    est.lower = -best.value;
    est.lower_method = "tuple search";
    est.w0 = best.z;

    SearchOptions inner = opts;
    auto tn = op_norm(T, X, Y, inner);
    if (tn.lower > est.lower) {
        est.lower = tn.lower;
        est.lower_method = "operator norm";
    }
    if (p >= q) {
        OperatorSpec absT(abs_matrix(T.matrix), X, Y);
        auto an = op_norm(absT, X, Y, inner);
        est.upper = an.upper;
        est.method = "modulus operator norm";
        est.note = "rho_{p,q}(T) <= || |T| || for p >= q";
    } else {
        est.upper = kInf;
        est.method = "tuple search";
        est.note = "no certified upper bound for p < q";
    }
    finish(est, opts.gap);
    T.cache.emplace(key, est);
    return est;
}

namespace {

// max over sign vertices a in {-1,1}^k (a_0 = 1 by symmetry) of ||sum a_i x_i||; exhaustive for k <= 12.
double vertex_max(const std::vector<Vec>& xs, const std::function<double(const Vec&)>& nrm, Rng& rng, bool& exact) {
    const std::size_t k = xs.size(), n = xs.front().size();
    double best = 0.0;
    Vec s(n);
    auto eval = [&](std::uint64_t mask) {
        std::fill(s.begin(), s.end(), 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            double a = (i == 0 || !((mask >> (i - 1)) & 1)) ? 1.0 : -1.0;
            for (std::size_t j = 0; j < n; ++j) s[j] += a * xs[i][j];
        }
        best = std::max(best, nrm(s));
    };
    if (k <= 12) {
        for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << (k - 1)); ++mask) eval(mask);
    } else {
        exact = false;
        for (int t = 0; t < 4096; ++t) eval(rng.bits());
    }
    return best;
}

// Lower bound of ||max_i |<x_i, .>| ||_p in L_p(phi_n): the function equals at least m0 on the whole
// sphere (submeasure 1) and reaches M = max ||x_i||_1 on a nonempty set (submeasure >= 1/n).
double submeasure_sup_lower(const std::vector<Vec>& xs, std::size_t n, double p) {
    const std::size_t k = xs.size();
    double M = 0.0;
    for (const auto& x : xs) {
        double s = 0.0;
        for (double v : x) s += std::fabs(v);
        M = std::max(M, s);
    }
    double m0 = 0.0;
    if (k >= n) {
        // m0 >= (1 - ||LX - I||) / ||L|| for the least-squares left inverse L of X (rows x_i).
        std::vector<Vec> G(n, Vec(2 * n, 0.0));
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t i = 0; i < k; ++i) G[a][b] += xs[i][a] * xs[i][b];
            G[a][n + a] = 1.0;
        }
        double scale = 0.0;
        for (std::size_t a = 0; a < n; ++a) scale = std::max(scale, std::fabs(G[a][a]));
        bool ok = scale > 0.0;
        for (std::size_t c = 0; c < n && ok; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < n; ++r)
                if (std::fabs(G[r][c]) > std::fabs(G[piv][c])) piv = r;
            if (std::fabs(G[piv][c]) <= 1e-12 * scale) {
                ok = false;
                break;
            }
            std::swap(G[c], G[piv]);
            double d = G[c][c];
            for (auto& v : G[c]) v /= d;
            for (std::size_t r = 0; r < n; ++r) {
                if (r == c || G[r][c] == 0.0) continue;
                double f = G[r][c];
                for (std::size_t t = 0; t < 2 * n; ++t) G[r][t] -= f * G[c][t];
            }
        }
        if (ok) {
            std::vector<Vec> L(n, Vec(k, 0.0));
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t i = 0; i < k; ++i)
                    for (std::size_t b = 0; b < n; ++b) L[a][i] += G[a][n + b] * xs[i][b];
            double lnorm = 0.0, enorm = 0.0;
            for (std::size_t a = 0; a < n; ++a) {
                double ls = 0.0, es = 0.0;
                for (std::size_t i = 0; i < k; ++i) ls += std::fabs(L[a][i]);
                for (std::size_t b = 0; b < n; ++b) {
                    double v = (a == b) ? -1.0 : 0.0;
                    for (std::size_t i = 0; i < k; ++i) v += L[a][i] * xs[i][b];
                    es += std::fabs(v);
                }
                lnorm = std::max(lnorm, ls);
                enorm = std::max(enorm, es);
            }
            if (lnorm > 0.0 && enorm < 1.0) m0 = (1.0 - enorm) / lnorm * (1.0 - 1e-12);
        }
    }
    m0 = std::min(m0, M);
    double mp = std::pow(m0, p), Mp = std::pow(M, p);
    return std::pow(mp + (Mp - mp) / static_cast<double>(n), 1.0 / p);
}

}  // namespace

KConstantEstimate k_constant(const LatticeSpec& X, const SearchOptions& opts, int max_tuple) {
    if (max_tuple < 1) throw DomainError("k_constant: tuple budget must be positive");
    const std::size_t n = X.dim;
    const bool sub = X.family == LatticeFamily::submeasure;
    const bool convex = convex_norm(X);
    KConstantEstimate out;
    std::size_t kmax = static_cast<std::size_t>(max_tuple);
    if (sub) kmax = std::max(kmax, n);

    struct Eval {
        double num = 0.0, den = 0.0, ratio = 0.0;
        bool exact = true;
    };
    auto evaluate = [&](const Vec& z, std::uint64_t seed) {
        Eval e;
        auto xs = unpack(z, n);
        Rng rng(seed);
        if (sub) {
            e.num = submeasure_sup_lower(xs, n, X.p);
            e.den = vertex_max(xs, [&](const Vec& s) { return norm(X, s); }, rng, e.exact);
        } else {
            e.num = norm(X, aggregate(xs, kInf, n));
            e.den = vertex_max(xs, [&](const Vec& s) { return norm(X, s); }, rng, e.exact);
            if (!convex) {
                // The box maximum can sit inside the box for p < 1: sample it.
                e.exact = false;
                Vec s(n);
                for (int t = 0; t < 64; ++t) {
                    std::fill(s.begin(), s.end(), 0.0);
                    for (const auto& x : xs) {
                        double a = rng.uniform(-1.0, 1.0);
                        for (std::size_t j = 0; j < n; ++j) s[j] += a * x[j];
                    }
                    e.den = std::max(e.den, norm(X, s));
                }
            }
        }
        e.ratio = e.den > 0.0 ? e.num / e.den : 0.0;
        return e;
    };
    auto init = [&](std::size_t s, Rng& rng) {
        std::size_t k = s == 0 ? 1 : s == 1 ? std::min(kmax, n) : 1 + (s - 2) % kmax;
        if (sub && s == 1) k = n;
        Vec z(k * n, 0.0);
        if (s <= 1) {
            for (std::size_t i = 0; i < k; ++i) z[i * n + i] = 1.0;
        } else {
            for (auto& v : z) v = rng.normal();
        }
        return z;
    };
    PatternOptions po;
    po.iters = opts.iters;
    po.step = 0.25;
    const std::uint64_t inner_seed = derive_seed(opts.seed, 0x6b63);
    auto best = multistart_minimize(static_cast<std::size_t>(std::max(2, opts.starts)), opts.seed, opts.threads,
                                    init, [&](const Vec& z) { return -evaluate(z, inner_seed).ratio; }, po);
    Eval e = evaluate(best.z, inner_seed);
    out.witness = unpack(best.z, n);
    out.numerator = e.num;
    out.denominator = e.den;
    out.inner_exact = e.exact;
    NormEstimate& est = out.bracket;
    est.evaluations = best.evals;
    est.lower = est.search_upper = e.ratio;
    est.method = "tuple search";
    est.lower_method = sub ? "level-set bound" : e.exact ? "sign vertices" : "sampled box";
    if (sub) {
        est.upper = kInf;
        est.note = "numerator is a lower bound of the L_p(phi_n) supremum; denominator exact at sign vertices";
    } else {
        double p = effective_p(X);
        est.upper = p >= 2.0 ? 1.0 : p >= 1.0 ? std::sqrt(2.0) : std::pow(2.0, 1.0 / p - 0.5);
        est.method = "Khintchine bound";
        if (!e.exact) est.note = "inner maximum is a sampled lower bound, so the ratio may overestimate";
    }
    finish(est, opts.gap);
    if (!e.exact && !sub) {
        est.certified = false;
        est.heuristic = true;
    }
    return out;
}

namespace {

using Wide = __int128;

Wide det_bareiss(std::vector<std::vector<Wide>> M) {
    const std::size_t d = M.size();
    if (d == 0) return 1;
    Wide sign = 1, prev = 1;
    for (std::size_t c = 0; c < d; ++c) {
        if (M[c][c] == 0) {
            std::size_t r = c + 1;
            while (r < d && M[r][c] == 0) ++r;
            if (r == d) return 0;
            std::swap(M[c], M[r]);
            sign = -sign;
        }
        for (std::size_t r = c + 1; r < d; ++r)
            for (std::size_t t = c + 1; t < d; ++t) M[r][t] = (M[r][t] * M[c][c] - M[r][c] * M[c][t]) / prev;
        prev = M[c][c];
    }
    return sign * M[d - 1][d - 1];
}

// Normal of the hyperplane spanned by n-1 integer vectors (zero when they are dependent).
std::vector<Wide> integer_normal(const std::vector<std::vector<long long>>& rows, std::size_t n) {
    std::vector<Wide> nv(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<std::vector<Wide>> M(n - 1, std::vector<Wide>(n - 1));
        for (std::size_t r = 0; r + 1 < n; ++r) {
            std::size_t c2 = 0;
            for (std::size_t c = 0; c < n; ++c)
                if (c != j) M[r][c2++] = rows[r][c];
        }
        Wide d = det_bareiss(std::move(M));
        nv[j] = (j % 2 == 0) ? d : -d;
    }
    return nv;
}

double binomial(std::size_t N, std::size_t r) {
    double b = 1.0;
    for (std::size_t i = 0; i < r; ++i) b = b * static_cast<double>(N - i) / static_cast<double>(i + 1);
    return b;
}

// Largest number of the vectors lying in one hyperplane (N when they do not span).
std::size_t max_hyperplane_count(const std::vector<std::vector<long long>>& a, std::size_t n) {
    const std::size_t N = a.size();
    std::vector<RationalVec> rows;
    for (const auto& v : a) rows.emplace_back(v.begin(), v.end());
    if (rational_rank(rows) < n) return N;
    if (n == 1) return 0;
    std::size_t best = 0;
    std::vector<std::size_t> idx(n - 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<std::vector<long long>> sel(n - 1);
    while (true) {
        for (std::size_t r = 0; r + 1 < n; ++r) sel[r] = a[idx[r]];
        auto nv = integer_normal(sel, n);
        if (std::any_of(nv.begin(), nv.end(), [](Wide v) { return v != 0; })) {
            std::size_t cnt = 0;
            for (const auto& v : a) {
                Wide d = 0;
                for (std::size_t j = 0; j < n; ++j) d += v[j] * nv[j];
                if (d == 0) ++cnt;
            }
            best = std::max(best, cnt);
        }
        std::size_t r = n - 1;
        while (r > 0 && idx[r - 1] == N - (n - 1) + (r - 1)) --r;
        if (r == 0) break;
        ++idx[r - 1];
        for (std::size_t t = r; t + 1 < n; ++t) idx[t] = idx[t - 1] + 1;
    }
    return best;
}

}  // namespace

LConvexityReport l_convexity_probe(const LatticeSpec& X, double eps, int trials, const SearchOptions& opts) {
    if (!(eps > 0.0 && eps < 1.0)) throw DomainError("l_convexity_probe: eps must lie in (0,1)");
    if (trials < 1) throw DomainError("l_convexity_probe: trials must be positive");
    const std::size_t n = X.dim;
    const bool sub = X.family == LatticeFamily::submeasure;
    if (sub && (n < 2 || n > 8)) throw UnsupportedError("l_convexity_probe: submeasure lattice needs 2 <= n <= 8");

    struct Trial {
        bool feasible = false;
        double max_norm = kInf;
        std::vector<Vec> xs;
        Vec u;
    };
    // Integer entries in [-range, range], small enough that Bareiss minors stay far inside __int128.
    long long range = 1000;
    if (sub) {
        double fact = 1.0;
        for (std::size_t i = 2; i < n; ++i) fact *= static_cast<double>(i);
        range = std::min<long long>(1000, static_cast<long long>(std::pow(1e17 / fact, 1.0 / static_cast<double>(n - 1))));
    }
    std::vector<Trial> results(static_cast<std::size_t>(trials));
    parallel_for(results.size(), opts.threads, [&](std::size_t t) {
        Rng rng(derive_seed(opts.seed, t));
        Trial& tr = results[t];
        if (sub) {
            // x_i = chi_{B_{a_i}} below u = chi_Omega; the mean is >= (1 - eps) u iff at most eps N of the
            // a_i share a hyperplane.
            std::size_t N = static_cast<std::size_t>(std::ceil((n - 1) / eps)) + rng.index(n + 1);
            if (binomial(N, n - 1) > 5e6)
                throw UnsupportedError("l_convexity_probe: eps too small for exact hyperplane counting");
            std::vector<std::vector<long long>> a(N, std::vector<long long>(n));
            for (auto& v : a) {
                do {
                    for (auto& c : v) c = static_cast<long long>(rng.index(2 * range + 1)) - range;
                } while (std::all_of(v.begin(), v.end(), [](long long c) { return c == 0; }));
            }
            std::size_t h = max_hyperplane_count(a, n);
            tr.feasible = static_cast<double>(N - h) >= (1.0 - eps) * static_cast<double>(N);
            PathologySpace sp(n, X.p);
            double mx = 0.0;
            for (const auto& v : a) {
                RationalVec rv(v.begin(), v.end());
                mx = std::max(mx, lp_norm_simple(sp, {SimpleLayer{1.0, SphereSetExpr::b(n, rv)}}));
                tr.xs.emplace_back(v.begin(), v.end());
            }
            tr.max_norm = mx;
            tr.u.assign(n, 1.0);
        } else {
            // x_i = u on a random (1 - eps) fraction of the indices i, independently per coordinate.
            std::size_t N = 2 + rng.index(11);
            std::size_t keep = static_cast<std::size_t>(std::ceil((1.0 - eps) * static_cast<double>(N)));
            Vec u(n);
            for (auto& v : u) v = std::exp(rng.normal());
            double nu = norm(X, u);
            for (auto& v : u) v /= nu;
            tr.xs.assign(N, Vec(n, 0.0));
            std::vector<std::size_t> perm(N);
            Vec mean(n, 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                std::iota(perm.begin(), perm.end(), 0);
                for (std::size_t i = N; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
                for (std::size_t i = 0; i < keep; ++i) tr.xs[perm[i]][j] = u[j];
                mean[j] = static_cast<double>(keep) / static_cast<double>(N) * u[j];
            }
            tr.feasible = true;
            for (std::size_t j = 0; j < n; ++j)
                if (mean[j] < (1.0 - eps) * u[j]) tr.feasible = false;
            double mx = 0.0;
            for (const auto& x : tr.xs) mx = std::max(mx, norm(X, x));
            tr.max_norm = mx;
            tr.u = u;
        }
    });
    LConvexityReport rep;
    rep.eps = eps;
    rep.trials = trials;
    rep.construction = sub ? "indicators of B_a sets under the constant function 1"
                           : "coordinate blocks of u covering a (1 - eps) fraction of the tuple";
    int best = -1;
    for (std::size_t t = 0; t < results.size(); ++t) {
        const Trial& tr = results[t];
        if (!tr.feasible) continue;
        ++rep.feasible;
        if (tr.max_norm < eps) ++rep.violations;
        if (best < 0 || tr.max_norm < rep.best_max_norm) {
            rep.best_max_norm = tr.max_norm;
            best = static_cast<int>(t);
        }
    }
    if (best >= 0) {
        rep.witness = results[static_cast<std::size_t>(best)].xs;
        rep.witness_u = results[static_cast<std::size_t>(best)].u;
    }
    return rep;
}

namespace {

struct Legs {
    double R0 = 0.0, R1 = 0.0;
    bool certified = false;
};

Legs leg_estimates(const OperatorSpec& T, const Couple& dom, const Couple& cod, const SearchOptions& opts,
                   int max_tuple) {
    Legs L;
    auto r0 = rho_pq(T, dom.X0, cod.X0, kInf, 1.0, opts, max_tuple);
    auto r1 = rho_pq(T, dom.X1, cod.X1, kInf, 1.0, opts, max_tuple);
    L.R0 = std::isfinite(r0.upper) ? r0.upper : r0.lower;
    L.R1 = std::isfinite(r1.upper) ? r1.upper : r1.lower;
    L.certified = std::isfinite(r0.upper) && std::isfinite(r1.upper);
    return L;
}

std::vector<Vec> sample_tuple(Rng& rng, std::size_t n, int max_tuple) {
    std::size_t k = 1 + rng.index(static_cast<std::size_t>(max_tuple));
    std::vector<Vec> xs(k, Vec(n, 0.0));
    for (auto& x : xs)
        for (auto& v : x) {
            if (rng.uniform() < 0.25) continue;
            v = std::exp(1.5 * rng.normal());
            if (rng.uniform() < 0.5) v = -v;
        }
    bool any = false;
    for (const auto& x : xs)
        for (double v : x) any = any || v != 0.0;
    if (!any) xs[0][rng.index(n)] = 1.0;
    return xs;
}

Vec sum_abs(const std::vector<Vec>& xs, std::size_t n) {
    Vec s(n, 0.0);
    for (const auto& x : xs)
        for (std::size_t j = 0; j < n; ++j) s[j] += std::fabs(x[j]);
    return s;
}

struct SampleResult {
    bool skipped = false;
    bool certified = true;
    double ratio = 0.0;
    std::vector<Vec> tuple;
};

VerificationReport aggregate_samples(VerificationReport rep, const std::vector<SampleResult>& rs) {
    rep.samples = static_cast<int>(rs.size());
    for (std::size_t s = 0; s < rs.size(); ++s) {
        const auto& r = rs[s];
        if (r.skipped) {
            ++rep.skipped;
            continue;
        }
        ++rep.evaluated;
        if (!r.certified) ++rep.uncertified;
        if (r.ratio > rep.bound * (1.0 + rep.tol)) ++rep.violations;
        if (rep.worst_sample < 0 || r.ratio > rep.worst_ratio) {
            rep.worst_ratio = r.ratio;
            rep.worst_sample = static_cast<int>(s);
            rep.worst_tuple = r.tuple;
        }
    }
    rep.worst_margin = rep.bound > 0.0 ? (rep.bound - rep.worst_ratio) / rep.bound : 0.0;
    rep.pass = rep.violations == 0 && rep.evaluated > 0;
    return rep;
}

void check_operator_couples(const OperatorSpec& T, const Couple& dom, const Couple& cod, const char* what) {
    if (T.cols() != dom.dim() || T.rows() != cod.dim())
        throw DimensionError(std::string(what) + ": matrix shape does not match the couples");
    for (const auto* X : {&dom.X0, &dom.X1, &cod.X0, &cod.X1})
        if (X->family == LatticeFamily::submeasure)
            throw UnsupportedError(std::string(what) + ": submeasure lattices are not supported");
}

}  // namespace

VerificationReport verify_sum_regular(const OperatorSpec& T, const Couple& dom, const Couple& cod, int samples,
                                      const SearchOptions& opts, int max_tuple, double tol) {
    check_operator_couples(T, dom, cod, "verify_sum_regular");
    if (samples < 1 || max_tuple < 1) throw DomainError("verify_sum_regular: budgets must be positive");
    SearchOptions legs_opts = opts;
    Legs L = leg_estimates(T, dom, cod, legs_opts, max_tuple);
    VerificationReport rep;
    rep.name = "sum-space regularity";
    rep.R0 = L.R0;
    rep.R1 = L.R1;
    rep.legs_certified = L.certified;
    rep.bound = 2.0 * std::max(L.R0, L.R1);
    rep.tol = tol;
    rep.note = "sampled falsifier, not a proof; ratio = numerator upper / denominator lower";

    const std::size_t n = dom.dim(), m = cod.dim();
    std::vector<SampleResult> rs(static_cast<std::size_t>(samples));
    parallel_for(rs.size(), opts.threads, [&](std::size_t s) {
        Rng rng(derive_seed(opts.seed, s));
        SearchOptions so = opts;
        so.threads = 1;
        so.seed = derive_seed(opts.seed ^ 0x5355u, s);
        auto xs = sample_tuple(rng, n, max_tuple);
        SampleResult& r = rs[s];
        r.tuple = xs;
        auto D = sum_norm(dom, sum_abs(xs, n), so);
        if (!(D.upper > 0.0)) {
            r.skipped = true;
            return;
        }
        Vec tmax(m, 0.0);
        std::vector<Vec> txs;
        for (const auto& x : xs) {
            txs.push_back(mat_apply(T.matrix, x));
            for (std::size_t i = 0; i < m; ++i) tmax[i] = std::max(tmax[i], std::fabs(txs.back()[i]));
        }
        auto N = sum_norm(cod, tmax, so);
        double num = N.upper;
        try {
            auto parts = riesz_decompose(xs, D.w0, D.w1);
            std::vector<Vec> us, vs;
            for (const auto& pr : parts) {
                us.push_back(mat_apply(T.matrix, pr.u));
                vs.push_back(mat_apply(T.matrix, pr.v));
            }
            num = std::min(num, norm(cod.X0, aggregate(us, kInf, m)) + norm(cod.X1, aggregate(vs, kInf, m)));
        } catch (const InfeasibleError&) {
        }
        r.certified = D.certified;
        double den = D.lower > 0.0 ? D.lower : D.upper;
        r.ratio = num / den;
    });
    return aggregate_samples(std::move(rep), rs);
}

VerificationReport verify_interpolation(const OperatorSpec& T, const Couple& dom, const Couple& cod,
                                        const InterpolationFunction& f, int samples, const SearchOptions& opts,
                                        int max_tuple, double tol) {
    check_operator_couples(T, dom, cod, "verify_interpolation");
    if (samples < 1 || max_tuple < 1) throw DomainError("verify_interpolation: budgets must be positive");
    Legs L = leg_estimates(T, dom, cod, opts, max_tuple);
    VerificationReport rep;
    rep.name = "interpolation of (inf,1)-regular operators";
    rep.R0 = L.R0;
    rep.R1 = L.R1;
    rep.legs_certified = L.certified;
    rep.bound = 2.0 * (2.0 + gamma_constant()) * std::max(L.R0, L.R1);
    rep.tol = tol;
    rep.note = "sampled falsifier, not a proof; tuples normalized to domain norm 1; ratio = numerator upper / "
               "denominator lower; the closure variant coincides in finite dimension";

    const std::size_t n = dom.dim(), m = cod.dim();
    std::vector<SampleResult> rs(static_cast<std::size_t>(samples));
    parallel_for(rs.size(), opts.threads, [&](std::size_t s) {
        Rng rng(derive_seed(opts.seed, s));
        SearchOptions so = opts;
        so.threads = 1;
        so.seed = derive_seed(opts.seed ^ 0x494eu, s);
        auto xs = sample_tuple(rng, n, max_tuple);
        SampleResult& r = rs[s];
        auto D = cl_norm(dom, f, sum_abs(xs, n), so);
        if (!(D.upper > 0.0) || !std::isfinite(D.upper)) {
            r.skipped = true;
            r.tuple = xs;
            return;
        }
        for (auto& x : xs)
            for (auto& v : x) v /= D.upper;
        r.tuple = xs;
        Vec tmax(m, 0.0);
        for (const auto& x : xs) {
            Vec tx = mat_apply(T.matrix, x);
            for (std::size_t i = 0; i < m; ++i) tmax[i] = std::max(tmax[i], std::fabs(tx[i]));
        }
        auto N = cl_norm(cod, f, tmax, so);
        if (!std::isfinite(N.upper)) {
            r.skipped = true;
            return;
        }
        r.certified = D.certified && N.certified;
        double den = D.lower > 0.0 ? D.lower / D.upper : 1.0;
        r.ratio = N.upper / den;
    });
    return aggregate_samples(std::move(rep), rs);
}

GammaResult minimize_gamma() {
    GammaResult g;
    auto F = [&](double q) {
        ++g.evaluations;
        return q * (q + 1.0) / (q - 1.0);
    };
    auto br = boost::math::tools::brent_find_minima(F, 1.0 + 1e-9, 64.0, std::numeric_limits<double>::digits);
    // Polish the minimizer on the sign of the derivative (q^2 - 2q - 1) / (q - 1)^2.
    double lo = br.first * (1.0 - 1e-6), hi = br.first * (1.0 + 1e-6);
    auto dF = [&](double q) {
        ++g.evaluations;
        return (q * q - 2.0 * q - 1.0) / ((q - 1.0) * (q - 1.0));
    };
    if (dF(lo) < 0.0 && dF(hi) > 0.0) {
        while (true) {
            double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            if (dF(mid) < 0.0) lo = mid; else hi = mid;
        }
        g.q = std::fabs(dF(lo)) <= std::fabs(dF(hi)) ? lo : hi;
    } else {
        g.q = br.first;
    }
    g.value = F(g.q);
    return g;
}

}  // namespace cllab
