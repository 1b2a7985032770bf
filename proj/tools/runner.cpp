#include "runner.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <cmath>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cllab/couple.hpp"
#include "cllab/errors.hpp"
#include "cllab/lattice.hpp"
#include "cllab/operators.hpp"
#include "cllab/pathology.hpp"
#include "cllab/quasiconcave.hpp"
#include "cllab/search.hpp"
#include "cllab/util.hpp"

namespace cllab::cli {

namespace {

using json = nlohmann::ordered_json;
constexpr double kInf = std::numeric_limits<double>::infinity();

json num(double x) {
    if (std::isfinite(x)) return x;
    return format_double(x);
}

json vec(const Vec& v) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

json tuple_json(const std::vector<Vec>& xs) {
    json a = json::array();
    for (const auto& x : xs) a.push_back(vec(x));
    return a;
}

json estimate_json(const NormEstimate& e) {
    json j;
    j["lower"] = num(e.lower);
    j["upper"] = num(e.upper);
    j["search_upper"] = num(e.search_upper);
    j["method"] = e.method;
    j["lower_method"] = e.lower_method;
    j["certified"] = e.certified;
    j["evaluations"] = e.evaluations;
    j["cells"] = e.cells;
    if (!e.note.empty()) j["note"] = e.note;
    return j;
}

struct Check {
    Check(std::string n, std::string a) : name(std::move(n)), anchor(std::move(a)) {}
    std::string name;
    std::string anchor;
    json values = json::object();
    std::optional<double> bound;
    std::optional<double> margin;
    bool pass = true;
    json witness = json::object();
};

struct Common {
    std::uint64_t seed = 0;
    int starts = 32;
    int iters = 200;
    int samples = 100;
    int depth = 8;
    std::optional<double> tol;
    unsigned threads = 0;
    std::string out;
    std::string csv;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "Master seed");
    app->add_option("--starts", c.starts, "Multistart count")->check(CLI::PositiveNumber);
    app->add_option("--iters", c.iters, "Pattern-search iterations per start")->check(CLI::PositiveNumber);
    app->add_option("--samples", c.samples, "Sampled instances or tuples")->check(CLI::PositiveNumber);
    app->add_option("--depth", c.depth, "Decomposition depth")->check(CLI::PositiveNumber);
    app->add_option("--tol", c.tol, "Relative tolerance");
    app->add_option("--threads", c.threads, "Worker threads (0 = hardware concurrency)");
    app->add_option("--out", c.out, "Write the JSON report to this path");
    app->add_option("--csv", c.csv, "Write plot data to this path (decompose)");
}

SearchOptions search_options(const Common& c) {
    SearchOptions o;
    o.seed = c.seed;
    o.starts = c.starts;
    o.iters = c.iters;
    o.threads = c.threads;
    return o;
}

json common_json(const Common& c) {
    json j;
    j["seed"] = c.seed;
    j["starts"] = c.starts;
    j["iters"] = c.iters;
    j["samples"] = c.samples;
    j["depth"] = c.depth;
    j["tol"] = c.tol ? num(*c.tol) : json(nullptr);
    j["threads"] = c.threads;
    return j;
}

Vec random_vector(Rng& rng, std::size_t n, bool nonnegative) {
    Vec x(n, 0.0);
    bool any = false;
    for (auto& v : x) {
        if (rng.uniform() < 0.2) continue;
        v = std::exp(rng.normal());
        if (!nonnegative && rng.uniform() < 0.5) v = -v;
        any = true;
    }
    if (!any) x[rng.index(n)] = 1.0;
    return x;
}

Matrix matrix_arg(const std::string& s) {
    if (!s.empty() && s.front() == '@') return read_matrix_csv(s.substr(1));
    return parse_matrix(s);
}

std::vector<double> log_grid(int lo, int hi, int per_octave) {
    std::vector<double> g;
    for (int k = lo * per_octave; k <= hi * per_octave; ++k)
        g.push_back(std::exp2(static_cast<double>(k) / per_octave));
    return g;
}

double parse_extended(const std::string& s) {
    if (s == "inf" || s == "infinity") return kInf;
    return parse_double(s, 0);
}

// Everything a subcommand produces.
struct Outcome {
    json config = json::object();
    std::vector<Check> checks;
    std::string csv;
};

Outcome cmd_decompose(const Common& c, const std::string& phi, double q, double qprime, int glo, int ghi, int per) {
    Outcome o;
    auto f = parse_function(phi);
    o.config["phi"] = f.describe();
    o.config["q"] = num(q);
    o.config["q_prime"] = num(qprime);
    o.config["grid"] = {{"lo", glo}, {"hi", ghi}, {"per_octave", per}};
    const double tol = c.tol.value_or(1e-9);
    BKOptions bo;
    bo.q_prime = qprime;
    auto d = bk_decompose(f, q, c.depth, bo);
    auto grid = log_grid(glo, ghi, per);
    auto rep = verify_bk(d, f, grid, tol);

    Check nodes{"bk nodes", "node recurrence"};
    json nj = json::array();
    for (int i = d.idx_lo; i <= d.idx_hi(); ++i) nj.push_back({{"index", i}, {"t", num(d.node(i))}});
    nodes.values["q_prime"] = num(d.q_prime);
    nodes.values["on_majorant"] = d.on_majorant;
    nodes.values["nodes"] = nj;
    json sj = json::array();
    for (int k = d.k_lo; k <= d.k_hi; ++k) sj.push_back({{"k", k}, {"eps", num(d.slack(k))}});
    nodes.values["slacks"] = sj;
    nodes.values["relation_residual"] = num(d.relation_residual);
    nodes.bound = 1e-9;
    nodes.margin = 1e-9 - d.relation_residual;
    nodes.pass = d.relation_residual <= 1e-9;
    o.checks.push_back(nodes);

    Check p2{"node sum bound", "sum of min terms bounded by (q+1)/(q-1) phi"};
    p2.values["max_ratio"] = num(rep.max_ratio2);
    p2.values["max_ratio_raw"] = num(rep.max_ratio2_raw);
    p2.values["worst_t"] = num(rep.worst_t2);
    p2.values["grid_points"] = rep.grid_points;
    p2.values["uncovered_points"] = rep.uncovered_points;
    p2.bound = rep.bound2;
    p2.margin = (rep.bound2 - rep.max_ratio2) / rep.bound2;
    p2.pass = rep.pass2;
    p2.witness["t"] = num(rep.worst_t2);
    o.checks.push_back(p2);

    Check p3{"endpoint domination", "interval endpoint domination"};
    p3.values["max_ratio"] = num(rep.max_ratio3);
    p3.values["worst_k"] = rep.worst_k3;
    p3.values["intervals"] = rep.intervals_checked;
    p3.bound = 1.0;
    p3.margin = 1.0 - rep.max_ratio3;
    p3.pass = rep.pass3;
    p3.witness["k"] = rep.worst_k3;
    o.checks.push_back(p3);

    // Plot data: grid points plus finite positive nodes.
    std::vector<std::pair<double, int>> pts;
    for (double t : grid) pts.push_back({t, std::numeric_limits<int>::min()});
    for (int i = d.idx_lo; i <= d.idx_hi(); ++i) {
        double t = d.node(i);
        if (t > 0.0 && std::isfinite(t)) pts.push_back({t, i});
    }
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a.first < b.first || (a.first == b.first && a.second > b.second);
    });
    pts.erase(std::unique(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first == b.first; }),
              pts.end());
    std::vector<double> ts;
    for (const auto& p : pts) ts.push_back(p.first);
    auto env = concave_majorant(*d.basis, ts);
    std::ostringstream csv;
    csv << "t,phi1,envelope,node\n";
    for (const auto& [t, idx] : pts) {
        csv << format_double(t) << "," << format_double(f.phi1(t)) << "," << format_double(env(t)) << ",";
        if (idx != std::numeric_limits<int>::min()) csv << idx;
        csv << "\n";
    }
    o.csv = csv.str();
    return o;
}

Outcome cmd_norm(const Common& c, const std::string& kind, const std::string& lattice, const std::string& couple,
                 const std::string& phi, const std::string& xs) {
    Outcome o;
    o.config["kind"] = kind;
    auto so = search_options(c);
    if (c.tol) so.gap = *c.tol;
    Check ch{"norm", kind + " norm bracket"};
    NormEstimate est;
    Vec x;
    if (kind == "lattice") {
        if (lattice.empty()) throw ParseError("norm lattice needs --lattice", 0);
        auto X = parse_lattice(lattice);
        o.config["lattice"] = X.describe();
        x = parse_double_list(xs, 0);
        est.lower = est.upper = est.search_upper = norm(X, x);
        est.method = est.lower_method = "closed form";
        est.certified = true;
    } else {
        if (couple.empty()) throw ParseError("norm " + kind + " needs --couple", 0);
        auto C = parse_couple(couple);
        o.config["couple"] = C.describe();
        x = parse_double_list(xs, 0);
        if (kind == "intersection") {
            est.lower = est.upper = est.search_upper = intersection_norm(C, x);
            est.method = est.lower_method = "closed form";
            est.certified = true;
        } else if (kind == "sum") {
            est = sum_norm(C, x, so);
        } else {
            if (phi.empty()) throw ParseError("norm cl needs --phi", 0);
            auto f = parse_function(phi);
            o.config["phi"] = f.describe();
            est = cl_norm(C, f, x, so);
            ch.witness["x1"] = vec(est.w1);
        }
        ch.witness["x0"] = vec(est.w0);
        if (kind == "sum") ch.witness["x1"] = vec(est.w1);
    }
    o.config["x"] = vec(x);
    ch.values = estimate_json(est);
    ch.pass = est.lower <= est.upper && std::isfinite(est.upper);
    o.checks.push_back(ch);
    return o;
}

std::vector<Vec> vectors_arg(const std::vector<std::string>& given, std::size_t n, int samples, std::uint64_t seed,
                             bool nonnegative) {
    std::vector<Vec> out;
    for (const auto& s : given) {
        out.push_back(parse_double_list(s, 0));
        if (out.back().size() != n) throw DimensionError("vector '" + s + "' has the wrong length");
    }
    if (out.empty()) {
        for (int i = 0; i < samples; ++i) {
            Rng rng(derive_seed(seed, 0x7000u + static_cast<std::uint64_t>(i)));
            out.push_back(random_vector(rng, n, nonnegative));
        }
    }
    return out;
}

Outcome cmd_split(const Common& c, const std::string& phi, const std::string& couple,
                  const std::vector<std::string>& xs) {
    Outcome o;
    auto f = parse_function(phi);
    o.config["phi"] = f.describe();
    auto sp = split_convex_part(f);
    auto db = is_doubly_bounded(f);
    Check s{"convex split", "phi_1 = convex part + eta"};
    s.values["pl_part"] = sp.pl_part.describe();
    s.values["eta_part"] = sp.eta_part.describe();
    s.values["eta_at_zero"] = num(sp.eta_part.phi1_at_zero());
    s.values["eta_slope_at_infinity"] = num(sp.eta_part.slope_at_infinity());
    s.values["doubly_bounded"] = db.doubly_bounded;
    s.values["sup_phi0"] = num(db.sup_phi0);
    s.values["sup_phi1"] = num(db.sup_phi1);
    double worst = 0.0;
    for (double t : log_grid(-20, 20, 2)) {
        double lhs = f.phi1(t), rhs = sp.pl_part.phi1(t) + sp.eta_part.phi1(t);
        worst = std::max(worst, std::fabs(lhs - rhs) / std::max(lhs, 1e-300));
    }
    s.values["identity_residual"] = num(worst);
    s.bound = 1e-12;
    s.margin = 1e-12 - worst;
    s.pass = worst <= 1e-12 && sp.eta_part.phi1_at_zero() == 0.0 && sp.eta_part.slope_at_infinity() == 0.0;
    o.checks.push_back(s);
    if (!couple.empty()) {
        auto C = parse_couple(couple);
        o.config["couple"] = C.describe();
        auto samples = vectors_arg(xs, C.dim(), c.samples, c.seed, false);
        auto so = search_options(c);
        auto rep = phi_space_equivalence(C, f, samples, so);
        Check e{"phi-space equivalence", "phi space equals pl space plus eta space"};
        e.values["min_ratio"] = num(rep.min_ratio);
        e.values["max_ratio"] = num(rep.max_ratio);
        e.values["lower_bound"] = num(rep.lower_bound);
        e.values["samples"] = rep.samples.size();
        e.bound = rep.upper_bound;
        e.margin = (rep.upper_bound - rep.max_ratio) / rep.upper_bound;
        e.pass = rep.pass;
        std::size_t worst_i = 0;
        for (std::size_t i = 0; i < rep.samples.size(); ++i)
            if (rep.samples[i].ratio > rep.samples[worst_i].ratio) worst_i = i;
        if (!rep.samples.empty()) e.witness["x"] = vec(rep.samples[worst_i].x);
        o.checks.push_back(e);
    }
    return o;
}

Outcome cmd_rho(const Common& c, const std::string& matrix, const std::string& dom, const std::string& cod,
                const std::string& ps, const std::string& qs, int tuples) {
    Outcome o;
    auto A = matrix_arg(matrix);
    auto X = parse_lattice(dom), Y = parse_lattice(cod);
    double p = parse_extended(ps), q = parse_extended(qs);
    o.config["matrix"] = tuple_json(A);
    o.config["domain"] = X.describe();
    o.config["codomain"] = Y.describe();
    o.config["p"] = num(p);
    o.config["q"] = num(q);
    o.config["tuples"] = tuples;
    OperatorSpec T(A, X, Y);
    auto so = search_options(c);
    if (c.tol) so.gap = *c.tol;
    auto on = op_norm(T, X, Y, so);
    auto r = rho_pq(T, X, Y, p, q, so, tuples);
    Check ch{"rho bracket", "||T|| <= rho_{p,q}(T)"};
    ch.values["operator_norm"] = estimate_json(on);
    ch.values["rho"] = estimate_json(r);
    ch.values["positive"] = T.positive();
    ch.values["diagonal"] = T.diagonal();
    ch.bound = std::isfinite(r.upper) ? std::optional<double>(r.upper) : std::nullopt;
    ch.pass = r.lower <= r.upper && on.lower <= r.upper * (1.0 + 1e-12);
    if (!r.w0.empty()) ch.witness["tuple"] = tuple_json([&] {
        std::vector<Vec> xs(r.w0.size() / X.dim, Vec(X.dim));
        for (std::size_t i = 0; i < r.w0.size(); ++i) xs[i / X.dim][i % X.dim] = r.w0[i];
        return xs;
    }());
    o.checks.push_back(ch);
    return o;
}

Outcome cmd_kconst(const Common& c, const std::string& lattice, int tuples) {
    Outcome o;
    auto X = parse_lattice(lattice);
    o.config["lattice"] = X.describe();
    o.config["tuples"] = tuples;
    auto so = search_options(c);
    if (c.tol) so.gap = *c.tol;
    auto k = k_constant(X, so, tuples);
    Check ch{"K constant bracket", "||max |x_i| || <= C max ||sum a_i x_i||"};
    ch.values = estimate_json(k.bracket);
    ch.values["inner_exact"] = k.inner_exact;
    ch.values["numerator"] = num(k.numerator);
    ch.values["denominator"] = num(k.denominator);
    if (X.family == LatticeFamily::submeasure) {
        auto cert = kinfty1_certificate(X.dim, X.p);
        ch.values["certificate_bound"] = num(cert.constant_lower_bound);
    }
    ch.bound = std::isfinite(k.bracket.upper) ? std::optional<double>(k.bracket.upper) : std::nullopt;
    ch.pass = k.bracket.lower <= k.bracket.upper;
    ch.witness["tuple"] = tuple_json(k.witness);
    o.checks.push_back(ch);
    return o;
}

Outcome cmd_lconvex(const Common& c, const std::string& lattice, double eps, int trials) {
    Outcome o;
    auto X = parse_lattice(lattice);
    o.config["lattice"] = X.describe();
    o.config["eps"] = num(eps);
    o.config["trials"] = trials;
    auto so = search_options(c);
    auto r = l_convexity_probe(X, eps, trials, so);
    Check ch{"L-convexity probe", "order intervals uniformly locally convex"};
    ch.values["trials"] = r.trials;
    ch.values["feasible"] = r.feasible;
    ch.values["violations"] = r.violations;
    ch.values["best_max_norm"] = num(r.best_max_norm);
    ch.values["construction"] = r.construction;
    ch.values["evidence"] = r.violations > 0 ? "violations found" : "none found";
    ch.values["note"] = "evidence only; pass records that the probe ran";
    ch.pass = true;
    ch.witness["x"] = tuple_json(r.witness);
    ch.witness["u"] = vec(r.witness_u);
    o.checks.push_back(ch);
    return o;
}

Check verification_check(const VerificationReport& r, const std::string& anchor) {
    Check ch{r.name, anchor};
    ch.values["R0"] = num(r.R0);
    ch.values["R1"] = num(r.R1);
    ch.values["legs_certified"] = r.legs_certified;
    ch.values["samples"] = r.samples;
    ch.values["evaluated"] = r.evaluated;
    ch.values["skipped"] = r.skipped;
    ch.values["uncertified"] = r.uncertified;
    ch.values["violations"] = r.violations;
    ch.values["worst_ratio"] = num(r.worst_ratio);
    ch.values["tol"] = num(r.tol);
    ch.values["note"] = r.note;
    ch.bound = r.bound;
    ch.margin = r.worst_margin;
    ch.pass = r.pass;
    ch.witness["sample"] = r.worst_sample;
    ch.witness["tuple"] = tuple_json(r.worst_tuple);
    return ch;
}

Outcome cmd_verify(const Common& c, const std::string& what, const std::string& matrix, const std::string& dom,
                   const std::string& cod, const std::string& couple, const std::string& phi,
                   const std::vector<std::string>& xs, int tuples, double q, int m) {
    Outcome o;
    o.config["check"] = what;
    auto so = search_options(c);
    if (what == "sum-regular" || what == "interpolation") {
        auto A = matrix_arg(matrix);
        auto D = parse_couple(dom), Cd = parse_couple(cod);
        o.config["matrix"] = tuple_json(A);
        o.config["domain"] = D.describe();
        o.config["codomain"] = Cd.describe();
        o.config["tuples"] = tuples;
        OperatorSpec T(A, D, Cd);
        double tol = c.tol.value_or(1e-6);
        if (what == "sum-regular") {
            auto r = verify_sum_regular(T, D, Cd, c.samples, so, tuples, tol);
            o.checks.push_back(verification_check(r, "2 max of leg constants"));
        } else {
            auto f = parse_function(phi.empty() ? "power:0.5" : phi);
            o.config["phi"] = f.describe();
            auto r = verify_interpolation(T, D, Cd, f, c.samples, so, tuples, tol);
            Check ch = verification_check(r, "2 (2 + gamma) R with gamma = 3 + 2 sqrt 2");
            ch.values["gamma"] = num(gamma_constant());
            o.checks.push_back(ch);
        }
        return o;
    }
    auto C = parse_couple(couple);
    auto f = parse_function(phi.empty() ? "power:0.5" : phi);
    o.config["couple"] = C.describe();
    o.config["phi"] = f.describe();
    if (what == "factorize") {
        Check ch{"factorization round trip", "x = phi(f, g)"};
        if (is_doubly_bounded(f).doubly_bounded) {
            ch.name = "doubly bounded rejection";
            ch.anchor = "doubly bounded phi is equivalent to min";
            bool rejected = false;
            try {
                factorize(C, f, Vec(C.dim(), 0.5), so);
            } catch (const UnsupportedError&) {
                rejected = true;
            }
            ch.values["rejected"] = rejected;
            ch.pass = rejected;
            o.checks.push_back(ch);
            return o;
        }
        auto vs = vectors_arg(xs, C.dim(), c.samples, c.seed, true);
        double tol = c.tol.value_or(1e-12);
        double worst = 0.0;
        int failures = 0, worst_i = -1;
        json branches = {{"a", 0}, {"b", 0}};
        for (std::size_t i = 0; i < vs.size(); ++i) {
            auto so_i = so;
            so_i.seed = derive_seed(c.seed, i);
            // Scale into the open unit ball of the phi space first.
            auto est = cl_norm(C, f, vs[i], so_i);
            Vec x = vs[i];
            for (auto& v : x) v /= 2.0 * est.upper;
            auto r = factorize(C, f, x, so_i);
            double res = r.identity_residual;
            branches[std::string(1, r.branch)] = branches[std::string(1, r.branch)].get<int>() + 1;
            bool ok = res <= tol && r.bounds_ok && std::isfinite(r.bound_f) && std::isfinite(r.bound_g);
            if (!ok) ++failures;
            if (worst_i < 0 || res > worst) {
                worst = res;
                worst_i = static_cast<int>(i);
            }
        }
        ch.values["instances"] = vs.size();
        ch.values["failures"] = failures;
        ch.values["worst_residual"] = num(worst);
        ch.values["branches"] = branches;
        ch.bound = tol;
        ch.margin = tol - worst;
        ch.pass = failures == 0;
        if (worst_i >= 0) ch.witness["x"] = vec(vs[static_cast<std::size_t>(worst_i)]);
        o.checks.push_back(ch);
        return o;
    }
    if (what == "approximation") {
        auto eta = split_convex_part(f).eta_part;
        o.config["eta"] = eta.describe();
        o.config["q"] = num(q);
        o.config["m"] = m;
        auto d = bk_decompose(eta, q, c.depth);
        json am = json::array();
        bool mono = true;
        double prev = kInf;
        for (int k = 0; k <= std::min(m, c.depth); ++k) {
            double a = approximation_a_m(d, k);
            am.push_back(num(a));
            if (a > prev) mono = false;
            prev = a;
        }
        Check seq{"a_m sequence", "a_m decreases to 0"};
        seq.values["a_m"] = am;
        seq.values["monotone"] = mono;
        seq.pass = mono;
        o.checks.push_back(seq);

        int bad = 0, worst_i = -1;
        double worst_ii = 0.0;
        std::size_t n = C.dim();
        for (int s = 0; s < c.samples; ++s) {
            Rng rng(derive_seed(c.seed, static_cast<std::uint64_t>(s)));
            Vec u0 = random_vector(rng, n, true), u1 = random_vector(rng, n, true);
            double n0 = norm(C.X0, u0) * (1.0 + 1e-12), n1 = norm(C.X1, u1) * (1.0 + 1e-12);
            for (auto& v : u0) v /= n0;
            for (auto& v : u1) v /= n1;
            Vec bound(n);
            for (std::size_t j = 0; j < n; ++j) bound[j] = eval_phi(eta, u0[j], u1[j]);
            std::size_t k = 1 + rng.index(3);
            std::vector<Vec> tup(k, Vec(n, 0.0));
            for (std::size_t j = 0; j < n; ++j) {
                double left = bound[j];
                for (std::size_t i = 0; i < k; ++i) {
                    double share = (i + 1 == k) ? left : left * rng.uniform();
                    tup[i][j] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * share * (1.0 - 1e-9);
                    left -= share;
                }
            }
            auto tr = approximation_sequence(C, eta, tup, u0, u1, d, std::min(m, c.depth));
            bool ok = tr.partition_ok && tr.property_i && tr.property_ii && tr.audit_F && tr.audit_chain;
            if (!ok) ++bad;
            if (worst_i < 0 || tr.worst_ii > worst_ii) {
                worst_ii = tr.worst_ii;
                worst_i = s;
            }
        }
        Check tr{"approximation trace", "|x_i^m| <= |x_i| and |x_i - x_i^m| <= (u0 v u1) a_m"};
        tr.values["instances"] = c.samples;
        tr.values["failures"] = bad;
        tr.values["worst_ii_ratio"] = num(worst_ii);
        tr.bound = 1.0;
        tr.margin = 1.0 - worst_ii;
        tr.pass = bad == 0;
        tr.witness["sample"] = worst_i;
        o.checks.push_back(tr);
        return o;
    }
    throw ParseError("unknown verify check '" + what + "'", 0);
}

Outcome cmd_pathology(const Common& c, const std::string& what, const std::string& set, std::size_t n, double p,
                      const std::vector<std::string>& layers) {
    (void)c;
    Outcome o;
    o.config["what"] = what;
    if (what == "submeasure") {
        auto A = parse_sphere_set(set);
        auto v = submeasure(A.n, A);
        o.config["set"] = A.describe();
        Check ch{"submeasure", "phi_n(A) = rank / n"};
        ch.values["value"] = to_fraction_string(v);
        ch.values["span_rank"] = A.span_rank();
        ch.values["n"] = A.n;
        o.checks.push_back(ch);
        return o;
    }
    if (what == "norm") {
        PathologySpace sp(n, p);
        o.config["n"] = n;
        o.config["p"] = num(p);
        std::vector<SimpleLayer> ls;
        json lj = json::array();
        for (const auto& s : layers) {
            auto eq = s.find('=');
            if (eq == std::string::npos) throw ParseError("layer must look like c=<set>", 0);
            SimpleLayer L{parse_double(std::string_view(s).substr(0, eq), 0), parse_sphere_set(s.substr(eq + 1))};
            lj.push_back({{"c", num(L.c)}, {"set", L.set.describe()}});
            ls.push_back(std::move(L));
        }
        o.config["layers"] = lj;
        Check ch{"simple function quasi-norm", "layer-cake integral"};
        ch.values["value"] = num(lp_norm_simple(sp, ls));
        o.checks.push_back(ch);
        return o;
    }
    if (what == "certificate") {
        auto cert = kinfty1_certificate(n, p);
        o.config["n"] = n;
        o.config["p"] = num(p);
        Check ch{"K_{inf,1} failure certificate", "||max |f_i| || = 1 and ||sum a_i f_i|| <= n^{1-1/p}"};
        ch.values["phi_full"] = to_fraction_string(cert.phi_full);
        ch.values["phi_single"] = to_fraction_string(cert.phi_single);
        ch.values["sup_norm"] = num(cert.sup_norm);
        ch.values["domination_bound"] = num(cert.domination_bound);
        ch.values["constant_lower_bound"] = num(cert.constant_lower_bound);
        double expect = std::pow(static_cast<double>(n), 1.0 / p - 1.0);
        ch.bound = expect;
        ch.margin = (cert.constant_lower_bound - expect) / expect;
        ch.pass = cert.sup_norm == 1.0 && std::fabs(cert.constant_lower_bound - expect) <= 1e-12 * expect;
        json w = json::array();
        for (const auto& f : cert.witness) {
            json row = json::array();
            for (const auto& r : f) row.push_back(to_fraction_string(r));
            w.push_back(row);
        }
        ch.witness["f"] = w;
        o.checks.push_back(ch);
        return o;
    }
    throw ParseError("unknown pathology query '" + what + "'", 0);
}

std::string render(const std::string& command, const json& common, Outcome& o, double seconds) {
    json rep;
    rep["command"] = command;
    json cfg = common;
    for (auto& [k, v] : o.config.items()) cfg[k] = v;
    rep["config"] = cfg;
    json checks = json::array();
    int passed = 0;
    for (const auto& ch : o.checks) {
        json j;
        j["name"] = ch.name;
        j["anchor"] = ch.anchor;
        j["values"] = ch.values;
        j["bound"] = ch.bound ? num(*ch.bound) : json(nullptr);
        j["margin"] = ch.margin ? num(*ch.margin) : json(nullptr);
        j["pass"] = ch.pass;
        j["witness"] = ch.witness;
        checks.push_back(j);
        if (ch.pass) ++passed;
    }
    rep["checks"] = checks;
    rep["totals"] = {{"checks", o.checks.size()},
                     {"passed", passed},
                     {"failed", static_cast<int>(o.checks.size()) - passed}};
    rep["wall_clock_seconds"] = seconds;
    return rep.dump(2) + "\n";
}

}  // namespace

RunResult run(const std::vector<std::string>& argv) {
    RunResult result;
    CLI::App app{"Calderon-Lozanovskii construction toolkit", "cllab"};
    app.require_subcommand(1);
    Common common;

    std::string phi, lattice, couple, x, matrix, dom, cod, set, what, kind;
    std::string ps = "inf", qs = "1";
    std::vector<std::string> xs, layers;
    double q = 4.0, qprime = 0.0, eps = 0.25, p = 0.5, qa = 1.0 + std::sqrt(2.0);
    int glo = -16, ghi = 16, per = 2, tuples = 4, trials = 1000, m = 12;
    std::size_t n = 2;

    auto* dec = app.add_subcommand("decompose", "Decomposition nodes of phi_1 with the sum and endpoint checks");
    dec->add_option("phi", phi, "Interpolation function descriptor")->required();
    dec->add_option("--q", q, "Ratio q > 1");
    dec->add_option("--qprime", qprime, "Inner ratio q' (default (q+1)/2)");
    dec->add_option("--grid-lo", glo, "Grid starts at 2^lo");
    dec->add_option("--grid-hi", ghi, "Grid ends at 2^hi");
    dec->add_option("--per-octave", per, "Grid points per octave")->check(CLI::PositiveNumber);
    add_common(dec, common);

    auto* nrm = app.add_subcommand("norm", "Lattice, sum, intersection and phi-space norms");
    nrm->add_option("kind", kind, "lattice | sum | intersection | cl")
        ->required()
        ->check(CLI::IsMember({"lattice", "sum", "intersection", "cl"}));
    nrm->add_option("--lattice", lattice, "Lattice descriptor");
    nrm->add_option("--couple", couple, "Couple descriptor X0|X1");
    nrm->add_option("--phi", phi, "Interpolation function descriptor");
    nrm->add_option("--x", x, "Comma separated vector")->required();
    add_common(nrm, common);

    auto* spl = app.add_subcommand("split", "Convex part and eta part of phi, with the space equivalence");
    spl->add_option("phi", phi, "Interpolation function descriptor")->required();
    spl->add_option("--couple", couple, "Couple descriptor for the equivalence check");
    spl->add_option("--x", xs, "Sample vector (repeatable; default random)");
    add_common(spl, common);

    auto* rho = app.add_subcommand("rho", "(p,q)-regularity constant of a matrix");
    rho->add_option("--matrix", matrix, "Rows separated by ';' or @file.csv")->required();
    rho->add_option("--dom", dom, "Domain lattice")->required();
    rho->add_option("--cod", cod, "Codomain lattice")->required();
    rho->add_option("--p", ps, "Exponent p in [1,inf]");
    rho->add_option("--q", qs, "Exponent q in [1,inf]");
    rho->add_option("--tuples", tuples, "Largest tuple size")->check(CLI::PositiveNumber);
    add_common(rho, common);

    auto* kc = app.add_subcommand("kconst", "K_{inf,1} constant of a lattice");
    kc->add_option("--lattice", lattice, "Lattice descriptor")->required();
    kc->add_option("--tuples", tuples, "Largest tuple size")->check(CLI::PositiveNumber);
    add_common(kc, common);

    auto* lc = app.add_subcommand("lconvex", "Randomized L-convexity probe");
    lc->add_option("--lattice", lattice, "Lattice descriptor")->required();
    lc->add_option("--eps", eps, "epsilon in (0,1)");
    lc->add_option("--trials", trials, "Random configurations")->check(CLI::PositiveNumber);
    add_common(lc, common);

    auto* ver = app.add_subcommand("verify", "Sampled verification suites");
    ver->add_option("check", what, "sum-regular | interpolation | factorize | approximation")
        ->required()
        ->check(CLI::IsMember({"sum-regular", "interpolation", "factorize", "approximation"}));
    ver->add_option("--matrix", matrix, "Rows separated by ';' or @file.csv");
    ver->add_option("--dom", dom, "Domain couple");
    ver->add_option("--cod", cod, "Codomain couple");
    ver->add_option("--couple", couple, "Couple (factorize, approximation)");
    ver->add_option("--phi", phi, "Interpolation function (default power:0.5)");
    ver->add_option("--x", xs, "Vector for factorize (repeatable; default random)");
    ver->add_option("--tuples", tuples, "Largest tuple size")->check(CLI::PositiveNumber);
    ver->add_option("--q", qa, "Ratio q for the approximation trace (default 1+sqrt 2)");
    ver->add_option("--m", m, "Index m of the approximation trace");
    add_common(ver, common);

    auto* pat = app.add_subcommand("pathology", "Submeasure space queries");
    pat->add_option("query", what, "submeasure | norm | certificate")
        ->required()
        ->check(CLI::IsMember({"submeasure", "norm", "certificate"}));
    pat->add_option("--set", set, "Set expression, e.g. full:4 or bu:4:[1,0,0,0]");
    pat->add_option("--n", n, "Dimension");
    pat->add_option("--p", p, "Exponent in (0,1)");
    pat->add_option("--layer", layers, "Layer c=<set> (repeatable, nested sets)");
    add_common(pat, common);

    std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        result.message = app.help();
        return result;
    } catch (const CLI::CallForAllHelp&) {
        result.message = app.help("", CLI::AppFormatMode::All);
        return result;
    } catch (const CLI::ParseError& e) {
        result.exit_code = 1;
        result.message = std::string(e.get_name()) + ": " + e.what() + "\n" + app.help();
        return result;
    }

    std::string command;
    for (const auto& a : argv.empty() ? argv : std::vector<std::string>(argv.begin() + 1, argv.end()))
        command += (command.empty() ? "" : " ") + a;

    auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
        if (!common.csv.empty() && !dec->parsed()) throw ParseError("--csv is only produced by decompose", 0);
        if (dec->parsed()) {
            out = cmd_decompose(common, phi, q, qprime, glo, ghi, per);
        } else if (nrm->parsed()) {
            out = cmd_norm(common, kind, lattice, couple, phi, x);
        } else if (spl->parsed()) {
            out = cmd_split(common, phi, couple, xs);
        } else if (rho->parsed()) {
            out = cmd_rho(common, matrix, dom, cod, ps, qs, tuples);
        } else if (kc->parsed()) {
            out = cmd_kconst(common, lattice, tuples);
        } else if (lc->parsed()) {
            out = cmd_lconvex(common, lattice, eps, trials);
        } else if (ver->parsed()) {
            if ((what == "sum-regular" || what == "interpolation") && (matrix.empty() || dom.empty() || cod.empty()))
                throw ParseError("verify " + what + " needs --matrix, --dom and --cod", 0);
            if ((what == "factorize" || what == "approximation") && couple.empty())
                throw ParseError("verify " + what + " needs --couple", 0);
            out = cmd_verify(common, what, matrix, dom, cod, couple, phi, xs, tuples, qa, m);
        } else if (pat->parsed()) {
            if (what == "submeasure" && set.empty()) throw ParseError("pathology submeasure needs --set", 0);
            out = cmd_pathology(common, what, set, n, p, layers);
        }
    } catch (const std::exception& e) {
        result.exit_code = 1;
        result.message = std::string("error: ") + e.what();
        return result;
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.report = render(command, common_json(common), out, seconds);
    result.csv = out.csv;
    bool all = std::all_of(out.checks.begin(), out.checks.end(), [](const Check& c) { return c.pass; });
    result.exit_code = all ? 0 : 2;
    return result;
}

std::string strip_timing(const std::string& report) {
    auto j = json::parse(report);
    j.erase("wall_clock_seconds");
    return j.dump(2);
}

}  // namespace cllab::cli
