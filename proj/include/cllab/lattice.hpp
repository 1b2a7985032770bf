#pragma once

#include <string>
#include <vector>

#include "cllab/quasiconcave.hpp"

namespace cllab {

using Vec = std::vector<double>;
using Matrix = std::vector<Vec>;  // row-major, rows[i][j]

enum class LatticeFamily { lp, weighted_lp, linf, submeasure };

// A quasi-Banach lattice on R^n with coordinatewise order.
// The submeasure family holds coefficient vectors x of sum_i x_i f_i in L_p(phi_n), where f_i are
// the coordinate functions on the unit sphere of l_inf^n.
struct LatticeSpec {
    LatticeFamily family = LatticeFamily::lp;
    std::size_t dim = 0;
    double p = 1.0;                // +inf for linf
    Vec weights;                   // weighted_lp only
    double modulus_constant = 1.0; // C in ||x+y|| <= C(||x||+||y||)

    static LatticeSpec lp(double p, std::size_t n);
    static LatticeSpec weighted_lp(double p, Vec weights);
    static LatticeSpec linf(std::size_t n);
    static LatticeSpec submeasure(double p, std::size_t n);

    bool convex() const { return p >= 1.0; }
    std::string describe() const;
};

// "lp:0.5:4", "wlp:1:4:<w1,w2,w3,w4>" (angle brackets optional), "linf:4", "sub:0.5:3".
LatticeSpec parse_lattice(const std::string& descriptor, std::size_t offset = 0);

double norm(const LatticeSpec& X, const Vec& x);

Vec lattice_abs(const Vec& x);
Vec lattice_join(const Vec& x, const Vec& y);
Vec lattice_meet(const Vec& x, const Vec& y);

struct LatticeOpsResult {
    Vec abs_x;
    Vec join;
    Vec meet;
};

LatticeOpsResult lattice_ops(const Vec& x, const Vec& y);

// A x; DimensionError when the row lengths differ from x.size().
Vec mat_apply(const Matrix& A, const Vec& x);

// Coordinatewise phi(x0_j, x1_j).
Vec krivine_apply(const InterpolationFunction& f, const Vec& x0, const Vec& x1);

struct RieszPart {
    Vec u;
    Vec v;
};

// Splits z_i = u_i + v_i with sum|u_i| <= u and sum|v_i| <= v, given sum|z_i| <= u + v.
// Every split is exact in binary floating point (z_i = u_i + v_i with no rounding), and both
// bounds are met exactly whenever they are representable.
std::vector<RieszPart> riesz_decompose(const std::vector<Vec>& z, const Vec& u, const Vec& v);

// Exact rational check that sum_i |parts_i| <= factor * bound coordinatewise.
bool dominated_exactly(const std::vector<Vec>& parts, const Vec& bound, double factor);

}  // namespace cllab
