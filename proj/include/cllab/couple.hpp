#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cllab/lattice.hpp"
#include "cllab/quasiconcave.hpp"

namespace cllab {

// Two lattices on the same R^n.
struct Couple {
    LatticeSpec X0;
    LatticeSpec X1;

    Couple(LatticeSpec x0, LatticeSpec x1);
    std::size_t dim() const { return X0.dim; }
    std::string describe() const;  // "X0|X1"
};

// "lp:1:2|linf:2"
Couple parse_couple(const std::string& descriptor);

struct SearchOptions {
    std::uint64_t seed = 0;
    int starts = 32;
    int iters = 200;
    unsigned threads = 0;              // 0 = hardware concurrency
    double gap = 1e-4;                 // relative bracket width at which certification stops
    std::size_t max_cells = 2000;      // branch-and-bound budget
};

struct NormEstimate {
    double lower = 0.0;
    double upper = std::numeric_limits<double>::infinity();
    double search_upper = std::numeric_limits<double>::infinity();  // best value of the local search alone
    // sum_norm: |x| = w0 + w1. cl_norm: unit-ball pair with |x| <= upper * phi(w0, w1).
    Vec w0;
    Vec w1;
    std::string method;                // how `upper` was found
    std::string lower_method;          // how `lower` was certified
    long evaluations = 0;
    std::size_t cells = 0;
    bool certified = false;            // upper <= (1 + gap) * lower with a proven lower bound
    bool heuristic = false;            // lower is 0 or loose
    std::string note;

    double relative_gap() const;
};

double intersection_norm(const Couple& c, const Vec& x);

NormEstimate sum_norm(const Couple& c, const Vec& x, const SearchOptions& opts = {});

// Smallest lambda with a unit-ball x1 making |x| <= lambda * phi(x0, x1), for fixed x0 >= 0.
struct LambdaBracket {
    double lo = 0.0;                   // infeasible (or 0)
    double hi = std::numeric_limits<double>::infinity();  // feasible
    Vec x1;                            // minimal admissible x1 at hi
};

LambdaBracket cl_lambda(const Couple& c, const InterpolationFunction& f, const Vec& x, const Vec& x0);

NormEstimate cl_norm(const Couple& c, const InterpolationFunction& f, const Vec& x, const SearchOptions& opts = {});

// Exact quasi-norm of x in the space built from phi(s,t) = max(a s, b t):
// the minimum over coordinate partitions J of max(||x_J||_{X0}/a, ||x_{J^c}||_{X1}/b).
double max_space_norm(const Couple& c, double a, double b, const Vec& x);

struct EquivalenceSample {
    Vec x;
    double phi_norm = 0.0;             // cl_norm upper under f
    double sum_norm = 0.0;             // best split into the pl-space plus the eta-space
    double ratio = 0.0;                // phi_norm / sum_norm (1 when both vanish)
};

struct EquivalenceReport {
    std::vector<EquivalenceSample> samples;
    double min_ratio = 1.0;
    double max_ratio = 1.0;
    double lower_bound = 0.5;          // ratios must lie in [lower_bound, upper_bound]
    double upper_bound = 2.0;          // 2 * max modulus constant
    double tol = 1e-3;
    bool pass = true;
};

EquivalenceReport phi_space_equivalence(const Couple& c, const InterpolationFunction& f,
                                        const std::vector<Vec>& samples, const SearchOptions& opts = {});

// Discrete realization of the approximation construction on Omega = support(u0 v u1).
struct ApproximationTrace {
    static constexpr int kOutside = std::numeric_limits<int>::min();   // coordinate not in Omega
    static constexpr int kXi = std::numeric_limits<int>::max();        // assigned to xi_m (the set V_m)

    int m = 0;
    double q = 0.0;
    double a_m = 0.0;
    double lower_node = 0.0;           // t_{-2m}
    double upper_node = 0.0;           // t_{2m+2}
    Vec h0, h1;                        // u_j / (u0 v u1) on Omega, 0 elsewhere
    std::vector<int> psi;              // per coordinate: k of the indicator psi_k, kXi, or kOutside
    std::vector<std::pair<int, std::vector<std::size_t>>> U;  // U_k as coordinate sets, k = -m..m
    std::vector<std::size_t> V;
    std::vector<std::size_t> W1, W2, W3;
    std::vector<int> theta;            // per coordinate: for xi-assigned ones the first l with it in W_l, else 0
    std::vector<Vec> x_m;              // modified vectors
    std::vector<std::vector<Vec>> y;   // y[i][k + m]
    Vec F0, F1;                        // sum_k sum_i |y_i^k| / phi_1(t_{2k+1}) and the t_{2k+1} analogue
    Vec G0, G1;                        // max_{k,i} |T y_i^k| / phi_1(t_{2k+1}) and the t_{2k+1} analogue
    Vec max_Tx;                        // max_i |T x_i^m|
    double G0_norm = 0.0, G1_norm = 0.0;

    bool partition_ok = false;         // every Omega coordinate carries exactly one indicator, V inside W1 u W2
    bool property_i = false;           // |x_i^m| <= |x_i|
    bool property_ii = false;          // max_i |x_i - x_i^m| <= (u0 v u1) a_m
    double worst_ii = 0.0;             // max over coordinates of |x_i - x_i^m| / ((u0 v u1) a_m)
    bool audit_F = false;              // F_j <= q u_j, relative 1e-12
    bool audit_chain = false;          // max_i |T x_i^m| <= (q+1)/(q-1) phi(G0, G1), relative 1e-12
    double worst_chain = 0.0;
};

// a_m for the decomposition d (uses the slacks of the boundary intervals k = -m and k = m).
double approximation_a_m(const BKDecomposition& d, int m);

// T defaults to the identity; G norms are taken in `target` (default: c) and need T's row count to match.
ApproximationTrace approximation_sequence(const Couple& c, const InterpolationFunction& f, const std::vector<Vec>& xs,
                                          const Vec& u0, const Vec& u1, const BKDecomposition& d, int m,
                                          const Matrix* T = nullptr, const Couple* target = nullptr);

struct FactorizationResult {
    Vec f_vec;
    Vec g_vec;
    char branch = 'a';                 // 'a': both phi_0, phi_1 unbounded; 'b': one of them bounded
    bool swapped = false;              // roles of X0 and X1 exchanged (phi_0 bounded)
    double lambda = 0.0;               // cl_norm upper used for the witness
    double delta = 0.0, N = 0.0, eps = 0.0, M = 0.0, C_phi = 0.0;
    double norm_f = 0.0;               // ||f_vec||_{X0}
    double norm_g = 0.0;               // ||g_vec||_{X1}
    double bound_f = 0.0;              // bound from the branch taken
    double bound_g = 0.0;
    double identity_residual = 0.0;    // max_j |phi(f_j, g_j) - x_j|
    bool y_dominates = false;          // phi(u'', v'') >= x on the support
    bool bounds_ok = false;
};

FactorizationResult factorize(const Couple& c, const InterpolationFunction& f, const Vec& x,
                              const SearchOptions& opts = {});

// Same construction from a given witness: x <= phi(u, v), ||u||_{X0} < 1, ||v||_{X1} < 1.
FactorizationResult factorize_with_witness(const Couple& c, const InterpolationFunction& f, const Vec& x,
                                           const Vec& u, const Vec& v);

}  // namespace cllab
