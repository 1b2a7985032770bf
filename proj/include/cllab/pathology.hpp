#pragma once

#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace cllab {

using Rational = boost::multiprecision::cpp_rational;
using RationalVec = std::vector<Rational>;

std::string to_fraction_string(const Rational& r);

// Rank over Q by fraction-exact Gaussian elimination.
std::size_t rational_rank(std::vector<RationalVec> rows);

// Omega_n (FULL) or a finite union of B_u = {v in Omega_n : <u,v> != 0}.
// A B-union over u^1..u^k equals Omega_n minus span(u)^perp, so the set is determined by span(u).
struct SphereSetExpr {
    enum class Kind { full, b_union };
    Kind kind = Kind::full;
    std::size_t n = 0;
    std::vector<RationalVec> vectors;

    static SphereSetExpr full(std::size_t n);
    static SphereSetExpr b_union(std::size_t n, std::vector<RationalVec> vectors);
    static SphereSetExpr b(std::size_t n, RationalVec u);

    // Dimension of the span that determines the set; n for FULL.
    std::size_t span_rank() const;
    std::string describe() const;
};

// Parses "full:4" or "bu:4:[1,0,0,0];[0,1/2,0,0]" (entries integer, decimal or p/q; "bu:4:" is empty).
SphereSetExpr parse_sphere_set(const std::string& text);

Rational submeasure(std::size_t n, const SphereSetExpr& A);

bool sphere_subset(const SphereSetExpr& A, const SphereSetExpr& B);
SphereSetExpr sphere_union(const SphereSetExpr& A, const SphereSetExpr& B);

struct PathologySpace {
    std::size_t n = 0;
    double p = 0.5;

    PathologySpace(std::size_t n, double p);
};

struct SimpleLayer {
    double c = 0.0;
    SphereSetExpr set;
};

// Layer-cake quasi-norm of sum_j c_j chi_{A_j} with A_1 >= A_2 >= ... and c_j >= 0.
double lp_norm_simple(const PathologySpace& sp, const std::vector<SimpleLayer>& layers);

// ||sum_i x_i f_i||_p for the coordinate functions f_i(v) = v_i. Every nonempty level set of
// |<x,.>| is a nonempty subset of B_x, so the function is equimeasurable with ||x||_1 chi_{B_x}.
double coordinate_combination_norm(const PathologySpace& sp, const std::vector<double>& x);

struct KInfty1Certificate {
    std::size_t n = 0;
    double p = 0.0;
    std::vector<RationalVec> witness;        // f_1..f_n as coefficient vectors e_i
    Rational phi_full;                       // phi_n(Omega_n)
    Rational phi_single;                     // phi_n(B_a), any a != 0
    double sup_norm = 0.0;                   // ||max_i |f_i|||_p = ||chi_Omega||_p
    double domination_bound = 0.0;           // ||n chi_{B_a}||_p = n^{1-1/p}
    double constant_lower_bound = 0.0;       // sup_norm / domination_bound = n^{1/p-1}
};

KInfty1Certificate kinfty1_certificate(std::size_t n, double p);

}  // namespace cllab
