#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "cllab/couple.hpp"
#include "cllab/lattice.hpp"
#include "cllab/quasiconcave.hpp"

namespace cllab {

using Space = std::variant<LatticeSpec, Couple>;

std::size_t space_dim(const Space& s);
std::string describe_space(const Space& s);

// An m x n matrix acting from an n-dimensional domain into an m-dimensional codomain.
// The estimate cache is not synchronized: do not share one OperatorSpec between threads.
struct OperatorSpec {
    Matrix matrix;
    Space domain;
    Space codomain;
    mutable std::map<std::string, NormEstimate> cache;  // keyed by norm kind, exponents, spaces and budget

    OperatorSpec(Matrix m, Space dom, Space cod);

    std::size_t rows() const { return matrix.size(); }
    std::size_t cols() const { return matrix.empty() ? 0 : matrix.front().size(); }
    bool positive() const;
    bool diagonal() const;
};

// Rows separated by ';' or newlines, entries by ',' (CSV). Blank lines and '#' comments are skipped.
Matrix parse_matrix(const std::string& text);
Matrix read_matrix_csv(const std::string& path);
Matrix abs_matrix(const Matrix& A);

// ||T : X -> Y||. Exact when the domain ball is spanned by its coordinate vertices (p <= 1 domains into
// convex codomains) or the codomain is l_inf over a convex domain; otherwise a search lower bound and a
// coordinate-sum upper bound.
NormEstimate op_norm(const OperatorSpec& T, const LatticeSpec& X, const LatticeSpec& Y, const SearchOptions& opts = {});

// rho_{p,q}(T : X -> Y) for p, q in [1, inf]. Lower bound by tuple search with up to `max_tuple` vectors;
// for p >= q the upper bound ||T|| <= rho_{p,q}(T) <= || |T| || is certified.
NormEstimate rho_pq(const OperatorSpec& T, const LatticeSpec& X, const LatticeSpec& Y, double p, double q,
                    const SearchOptions& opts = {}, int max_tuple = 4);

// Best constant C in ||max_i |x_i| || <= C max_{|a_i| <= 1} ||sum a_i x_i||, bracketed by tuple search
// (lower) and Khintchine-type bounds (upper; +inf on the submeasure lattice).
struct KConstantEstimate {
    NormEstimate bracket;
    bool inner_exact = true;           // inner box maximum evaluated exactly at sign vertices
    std::vector<Vec> witness;          // best tuple
    double numerator = 0.0;
    double denominator = 0.0;
};

KConstantEstimate k_constant(const LatticeSpec& X, const SearchOptions& opts = {}, int max_tuple = 4);

struct LConvexityReport {
    double eps = 0.0;
    int trials = 0;
    int feasible = 0;                  // configurations meeting 0 <= x_i <= u, ||u|| = 1, mean >= (1 - eps) u
    int violations = 0;                // feasible ones with max_i ||x_i|| < eps
    double best_max_norm = std::numeric_limits<double>::infinity();  // smallest max_i ||x_i|| over feasible ones
    std::vector<Vec> witness;          // coordinate lattices: the x_i; submeasure lattice: the vectors a_i of B_{a_i}
    Vec witness_u;
    std::string construction;
};

LConvexityReport l_convexity_probe(const LatticeSpec& X, double eps, int trials, const SearchOptions& opts = {});

struct VerificationReport {
    std::string name;
    double R0 = 0.0, R1 = 0.0;         // leg estimates used in the bound
    bool legs_certified = false;       // both legs are certified upper bounds
    double bound = 0.0;
    double tol = 1e-6;
    int samples = 0;
    int evaluated = 0;
    int skipped = 0;
    int violations = 0;
    int uncertified = 0;               // samples whose norm brackets were not closed to the requested gap
    double worst_ratio = 0.0;          // upper bound of the ratio: numerator upper / denominator lower
    double worst_margin = 0.0;         // (bound - worst_ratio) / bound
    int worst_sample = -1;
    std::vector<Vec> worst_tuple;
    bool pass = false;
    std::string note;
};

// Tuples in X0 + X1 against 2 max(rho_{inf,1}(T|X0), rho_{inf,1}(T|X1)) under sum norms.
VerificationReport verify_sum_regular(const OperatorSpec& T, const Couple& dom, const Couple& cod, int samples,
                                      const SearchOptions& opts = {}, int max_tuple = 4, double tol = 1e-6);

// Tuples normalized to ||sum |x_i| ||_phi = 1 in the domain against 2 (2 + gamma) R, gamma = 3 + 2 sqrt 2.
VerificationReport verify_interpolation(const OperatorSpec& T, const Couple& dom, const Couple& cod,
                                        const InterpolationFunction& f, int samples, const SearchOptions& opts = {},
                                        int max_tuple = 4, double tol = 1e-6);

// Minimizes q(q+1)/(q-1) over q > 1.
struct GammaResult {
    double q = 0.0;
    double value = 0.0;
    int evaluations = 0;
};

GammaResult minimize_gamma();

inline double gamma_constant() { return 3.0 + 2.0 * 1.4142135623730951; }

}  // namespace cllab
