#pragma once

#include <memory>
#include <string>
#include <vector>

namespace cllab {

enum class Family { power, min, max, sum, harmonic, affine_power, tabulated };

std::string to_string(Family f);

// Sampled phi_1 after monotone repair, with extrapolated boundary limits.
struct TableData {
    std::vector<double> t;
    std::vector<double> v;
    double at_zero = 0.0;       // estimate of phi_1(0+)
    double tail_slope = 0.0;    // estimate of lim phi_1(t)/t
    double est_sup_phi1 = 0.0;  // extrapolated lim phi_1(t), +inf when unbounded
    double est_sup_phi0 = 0.0;  // extrapolated lim_{t->0} phi_1(t)/t, +inf when unbounded
    double repair = 0.0;        // max |repaired - input| over samples
    bool tail_inconclusive = false;
};

// A member of the class of interpolation functions, stored through phi_1(t) = phi(1,t).
// phi(s,t) = s*phi_1(t/s); phi_0(t) = phi(t,1) = t*phi_1(1/t).
class InterpolationFunction {
public:
    static InterpolationFunction power(double theta);
    // phi_1(t) = min(a, b*t)
    static InterpolationFunction min(double a = 1.0, double b = 1.0);
    // phi_1(t) = max(a, b*t)
    static InterpolationFunction max(double a = 1.0, double b = 1.0);
    // phi_1(t) = 1 + t
    static InterpolationFunction sum();
    // phi_1(t) = t / (1 + t)
    static InterpolationFunction harmonic();
    // phi_1(t) = a + b*t^theta
    static InterpolationFunction affine_power(double a, double b, double theta);
    // Piecewise-linear phi_1 through (t_i, v_i); limits are extrapolated from the end samples.
    static InterpolationFunction tabulated(std::vector<double> t, std::vector<double> v);
    // Same, with caller-supplied limits (no extrapolation).
    static InterpolationFunction tabulated(std::vector<double> t, std::vector<double> v,
                                          double at_zero, double tail_slope);

    Family family() const { return family_; }

    // phi_1 on [0, inf]; phi_1(0) is the limit at 0+, phi_1(inf) the supremum.
    double phi1(double t) const;
    // phi_1(t)/t on [0, inf]; slope(0) is the supremum, slope(inf) the limit at infinity.
    double slope(double t) const;
    double phi0(double t) const { return slope(1.0 / t); }
    // Smallest t in [0, inf) with phi_1(t) >= y; +inf when no such t exists.
    double phi1_inverse(double y) const;

    double phi1_at_zero() const;
    double slope_at_infinity() const;
    double sup_phi1() const;
    double sup_phi0() const;  // equals sup of phi_1(t)/t
    double normalization() const { return phi1(1.0); }

    bool certified_concave() const;
    bool limits_estimated() const { return family_ == Family::tabulated; }
    const TableData* table() const { return table_.get(); }

    double theta() const { return theta_; }
    double a() const { return a_; }
    double b() const { return b_; }

    std::string describe() const;

private:
    InterpolationFunction(Family f, double theta, double a, double b)
        : family_(f), theta_(theta), a_(a), b_(b) {}

    Family family_;
    double theta_ = 0.0;
    double a_ = 0.0;
    double b_ = 0.0;
    std::shared_ptr<const TableData> table_;
};

// Parses "power:0.5", "min", "max", "max:a,b", "sum", "harmonic", "affinepower:a,b,theta",
// "table:<path>" (two-column CSV t,phi_1 with strictly increasing t).
InterpolationFunction parse_function(const std::string& descriptor);

// phi(s,t) with the continuous boundary extension.
double eval_phi(const InterpolationFunction& f, double s, double t);

// Smallest t >= 0 with phi(s,t) >= y (s, y >= 0); +inf when unreachable.
double min_second_argument(const InterpolationFunction& f, double s, double y);

// Least concave majorant of sampled phi_1 on the grid's hull, piecewise linear between vertices.
class Envelope {
public:
    Envelope(std::vector<double> xs, std::vector<double> ys);
    double operator()(double t) const;
    const std::vector<double>& vertices_t() const { return xs_; }
    const std::vector<double>& vertices_v() const { return ys_; }

private:
    std::vector<double> xs_;
    std::vector<double> ys_;
};

Envelope concave_majorant(const InterpolationFunction& f, const std::vector<double>& grid);

// Least concave majorant of phi_1 on [0, inf); returns f itself when f is certified concave.
InterpolationFunction concave_majorant_function(const InterpolationFunction& f);

struct BKDecomposition {
    double q = 0.0;
    double q_prime = 0.0;
    int depth = 0;
    int idx_lo = 0;                // nodes[i] holds t_{idx_lo + i}
    std::vector<double> nodes;
    int k_lo = 0, k_hi = 0;        // odd nodes t_{2k+1}, k in [k_lo, k_hi], enter the sums
    std::vector<double> slacks;    // slacks[k - k_lo] = eps_k
    bool lower_finite = false;     // t_{-2M} = 0 reached (M finite)
    bool upper_finite = false;     // t_{2N} = inf reached (N finite)
    int M = 0, N = 0;              // meaningful only when the matching flag is set
    double relation_residual = 0.0;
    // Function the nodes were built from: f, or its concave majorant when f is not concave.
    std::shared_ptr<const InterpolationFunction> basis;
    bool on_majorant = false;

    int idx_hi() const { return idx_lo + static_cast<int>(nodes.size()) - 1; }
    bool has_node(int i) const { return i >= idx_lo && i <= idx_hi(); }
    // Nodes past a terminal end read as the endpoint marker; past a truncated end they throw.
    double node(int i) const;
    double odd(int k) const { return node(2 * k + 1); }
    double slack(int k) const;
    double lower_end() const { return node(2 * k_lo); }
    double upper_end() const { return node(2 * k_hi + 2); }
};

struct BKOptions {
    double q_prime = 0.0;          // 0 selects (q+1)/2
    double eps_tol = 1e-12;
};

BKDecomposition bk_decompose(const InterpolationFunction& f, double q, int depth,
                             const BKOptions& opts = {});

struct BKReport {
    double bound2 = 0.0;           // (q+1)/(q-1)
    double max_ratio2 = 0.0;       // against the basis function of the decomposition
    double max_ratio2_raw = 0.0;   // against f itself; differs only when f is not concave
    double worst_t2 = 0.0;
    bool pass2 = false;
    double max_ratio3 = 0.0;       // max over intervals of lhs/rhs at the endpoints
    int worst_k3 = 0;
    bool pass3 = false;
    int intervals_checked = 0;
    int grid_points = 0;
    int uncovered_points = 0;      // grid points outside [lower_end, upper_end]
    bool partial_coverage = false;
    bool pass() const { return pass2 && pass3; }
};

BKReport verify_bk(const BKDecomposition& d, const InterpolationFunction& f,
                   const std::vector<double>& t_grid, double tol = 1e-9);

// Node sum of the decomposition at (s,t), using phi_1 of the decomposition's basis.
double bk_sum(const BKDecomposition& d, double s, double t);

struct DoublyBoundedResult {
    bool doubly_bounded = false;
    bool indeterminate = false;
    double sup_phi0 = 0.0;
    double sup_phi1 = 0.0;
    double C = 0.0;                // upper constant, max(sup phi_0, sup phi_1)
    double lower = 0.0;            // phi(1,1)
};

DoublyBoundedResult is_doubly_bounded(const InterpolationFunction& f);

struct SplitPair {
    InterpolationFunction pl_part;
    InterpolationFunction eta_part;
};

SplitPair split_convex_part(const InterpolationFunction& f);

}  // namespace cllab
