#include "cllab/quasiconcave.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "cllab/errors.hpp"
#include "cllab/util.hpp"

namespace cllab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSearchMax = 1e300;
constexpr double kSearchMin = 1e-300;

void require(bool ok, const std::string& msg) {
    if (!ok) throw InvalidFunctionError(msg);
}

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

// Fits y ~ L + c*x^alpha (alpha of either sign) through three samples with 0 < x0 < x1 < x2.
struct PowerFit {
    double L = 0.0;
    double alpha = 0.0;
    bool flat = false;       // y0 == y1: the samples are constant toward x -> 0
    bool fitted = false;
};

PowerFit fit_power_law(double x0, double x1, double x2, double y0, double y1, double y2) {
    PowerFit fit;
    double d1 = y1 - y0;
    double d2 = y2 - y1;
    if (d1 == 0.0) {
        fit.flat = true;
        fit.fitted = true;
        fit.L = y0;
        fit.alpha = INFINITY;
        return fit;
    }
    if (d1 * d2 <= 0.0) return fit;
    double ratio = d2 / d1;
    auto shape = [&](double alpha) {
        if (alpha == 0.0) return std::log(x2 / x1) / std::log(x1 / x0);
        return (std::pow(x2, alpha) - std::pow(x1, alpha)) / (std::pow(x1, alpha) - std::pow(x0, alpha));
    };
    double lo = -20.0, hi = 20.0;
    if (!(ratio >= shape(lo) && ratio <= shape(hi))) return fit;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (shape(mid) < ratio) lo = mid; else hi = mid;
    }
    fit.alpha = 0.5 * (lo + hi);
    fit.fitted = true;
    if (fit.alpha > 0.0) {
        double c = d1 / (std::pow(x1, fit.alpha) - std::pow(x0, fit.alpha));
        fit.L = y0 - c * std::pow(x0, fit.alpha);
    } else {
        fit.L = d1 > 0.0 ? -INFINITY : INFINITY;
    }
    return fit;
}

// Snap an extrapolated limit in [0, scale]: clearly zero, clearly positive, or inconclusive.
double snap_limit(double L, double scale, bool& inconclusive) {
    L = std::clamp(L, 0.0, scale);
    if (L <= 1e-6 * scale) return 0.0;
    if (L < 1e-2 * scale) inconclusive = true;
    return L;
}

// Nondecreasing g on (0,inf): returns t with g(t) ~ c. side_hi selects the bracket end with g >= c.
// Returns 0 or inf when c is not reached inside [kSearchMin, kSearchMax].
double solve_nondecreasing(const std::function<double(double)>& g, double c, double ref, bool side_hi) {
    double lo, hi;
    if (g(ref) < c) {
        lo = ref;
        hi = ref;
        while (true) {
            hi = std::min(hi * 16.0, kInf);
            if (hi > kSearchMax) return kInf;
            if (g(hi) >= c) break;
            lo = hi;
        }
    } else {
        lo = ref;
        hi = ref;
        while (true) {
            lo = lo / 16.0;
            if (lo < kSearchMin) return 0.0;
            if (g(lo) < c) break;
            hi = lo;
        }
    }
    for (int it = 0; it < 400 && hi > lo * (1.0 + 4e-16); ++it) {
        double mid = std::sqrt(lo) * std::sqrt(hi);
        if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi)) break;
        if (g(mid) >= c) hi = mid; else lo = mid;
    }
    return side_hi ? hi : lo;
}

}  // namespace

std::string to_string(Family f) {
    switch (f) {
        case Family::power: return "power";
        case Family::min: return "min";
        case Family::max: return "max";
        case Family::sum: return "sum";
        case Family::harmonic: return "harmonic";
        case Family::affine_power: return "affinepower";
        case Family::tabulated: return "table";
    }
    return "unknown";
}

InterpolationFunction InterpolationFunction::power(double theta) {
    require(std::isfinite(theta) && theta >= 0.0 && theta <= 1.0, "power exponent must lie in [0,1]");
    return InterpolationFunction(Family::power, theta, 0.0, 0.0);
}

InterpolationFunction InterpolationFunction::min(double a, double b) {
    require(finite_nonneg(a) && finite_nonneg(b), "min parameters must be finite and nonnegative");
    return InterpolationFunction(Family::min, 0.0, a, b);
}

InterpolationFunction InterpolationFunction::max(double a, double b) {
    require(finite_nonneg(a) && finite_nonneg(b), "max parameters must be finite and nonnegative");
    return InterpolationFunction(Family::max, 0.0, a, b);
}

InterpolationFunction InterpolationFunction::sum() { return InterpolationFunction(Family::sum, 0.0, 1.0, 1.0); }

InterpolationFunction InterpolationFunction::harmonic() {
    return InterpolationFunction(Family::harmonic, 0.0, 0.0, 0.0);
}

InterpolationFunction InterpolationFunction::affine_power(double a, double b, double theta) {
    require(finite_nonneg(a) && finite_nonneg(b), "affinepower coefficients must be finite and nonnegative");
    require(std::isfinite(theta) && theta >= 0.0 && theta <= 1.0, "affinepower exponent must lie in [0,1]");
    return InterpolationFunction(Family::affine_power, theta, a, b);
}

namespace {

std::shared_ptr<TableData> build_table(std::vector<double> t, std::vector<double> v) {
    require(t.size() == v.size(), "table columns differ in length");
    require(!t.empty(), "table is empty");
    for (std::size_t i = 0; i < t.size(); ++i) {
        require(std::isfinite(t[i]) && t[i] > 0.0, "table abscissae must be finite and positive");
        require(finite_nonneg(v[i]), "table values must be finite and nonnegative");
        if (i > 0) require(t[i] > t[i - 1], "table abscissae must be strictly increasing");
    }
    auto data = std::make_shared<TableData>();
    std::vector<double> fixed = v;
    for (std::size_t i = 1; i < fixed.size(); ++i) fixed[i] = std::max(fixed[i], fixed[i - 1]);
    for (std::size_t i = 1; i < fixed.size(); ++i) {
        double cap = t[i] * (fixed[i - 1] / t[i - 1]);
        fixed[i] = std::min(fixed[i], cap);
    }
    for (std::size_t i = 0; i < fixed.size(); ++i) data->repair = std::max(data->repair, std::fabs(fixed[i] - v[i]));
    data->t = std::move(t);
    data->v = std::move(fixed);
    return data;
}

}  // namespace

InterpolationFunction InterpolationFunction::tabulated(std::vector<double> t, std::vector<double> v) {
    require(t.size() >= 3, "table needs at least three rows to extrapolate its limits");
    auto data = build_table(std::move(t), std::move(v));
    const auto& T = data->t;
    const auto& V = data->v;
    std::size_t n = T.size();
    bool inconclusive = false;

    // phi_1(0+) from the three smallest abscissae.
    auto head = fit_power_law(T[0], T[1], T[2], V[0], V[1], V[2]);
    if (!head.fitted || (!head.flat && head.alpha <= 0.0)) inconclusive = true;
    data->at_zero = snap_limit(head.fitted && head.alpha > 0.0 ? head.L : 0.0, V[0], inconclusive);

    // Tail quantities in the variable u = 1/t, closest-to-zero first.
    double u0 = 1.0 / T[n - 1], u1 = 1.0 / T[n - 2], u2 = 1.0 / T[n - 3];
    double g0 = V[n - 1] / T[n - 1], g1 = V[n - 2] / T[n - 2], g2 = V[n - 3] / T[n - 3];
    auto tail = fit_power_law(u0, u1, u2, g0, g1, g2);
    if (!tail.fitted || (!tail.flat && tail.alpha <= 0.0)) inconclusive = true;
    data->tail_slope = snap_limit(tail.fitted && tail.alpha > 0.0 ? tail.L : 0.0, g0, inconclusive);

    // Boundedness of phi_1: -phi_1 increases as u grows.
    if (data->tail_slope > 0.0) {
        data->est_sup_phi1 = INFINITY;
    } else {
        auto top = fit_power_law(u0, u1, u2, -V[n - 1], -V[n - 2], -V[n - 3]);
        if (!top.fitted) inconclusive = true;
        data->est_sup_phi1 = (top.fitted && top.alpha > 0.0) ? std::max(V[n - 1], -top.L) : INFINITY;
    }
    // Boundedness of phi_1(t)/t as t -> 0: -slope increases with t.
    if (data->at_zero > 0.0) {
        data->est_sup_phi0 = INFINITY;
    } else {
        double s0 = V[0] / T[0], s1 = V[1] / T[1], s2 = V[2] / T[2];
        auto low = fit_power_law(T[0], T[1], T[2], -s0, -s1, -s2);
        if (!low.fitted) inconclusive = true;
        data->est_sup_phi0 = (low.fitted && low.alpha > 0.0) ? std::max(s0, -low.L) : INFINITY;
    }
    data->tail_inconclusive = inconclusive;

    InterpolationFunction f(Family::tabulated, 0.0, data->at_zero, data->tail_slope);
    f.table_ = std::move(data);
    return f;
}

InterpolationFunction InterpolationFunction::tabulated(std::vector<double> t, std::vector<double> v,
                                                       double at_zero, double tail_slope) {
    auto data = build_table(std::move(t), std::move(v));
    require(finite_nonneg(at_zero) && finite_nonneg(tail_slope), "table limits must be finite and nonnegative");
    data->at_zero = std::min(at_zero, data->v.front());
    data->tail_slope = std::min(tail_slope, data->v.back() / data->t.back());
    data->est_sup_phi1 = data->tail_slope > 0.0 ? INFINITY : data->v.back();
    data->est_sup_phi0 = data->at_zero > 0.0 ? INFINITY : data->v.front() / data->t.front();
    InterpolationFunction f(Family::tabulated, 0.0, data->at_zero, data->tail_slope);
    f.table_ = std::move(data);
    return f;
}

double InterpolationFunction::phi1(double t) const {
    if (std::isnan(t) || t < 0.0) throw DomainError("phi_1 evaluated at a negative or NaN argument");
    if (t == 0.0) return phi1_at_zero();
    if (std::isinf(t)) return sup_phi1();
    switch (family_) {
        case Family::power: return std::pow(t, theta_);
        case Family::min: return std::min(a_, b_ * t);
        case Family::max: return std::max(a_, b_ * t);
        case Family::sum: return 1.0 + t;
        case Family::harmonic: return t / (1.0 + t);
        case Family::affine_power: return a_ + b_ * std::pow(t, theta_);
        case Family::tabulated: {
            const auto& T = table_->t;
            const auto& V = table_->v;
            if (t <= T.front()) return table_->at_zero + (V.front() - table_->at_zero) * (t / T.front());
            if (t >= T.back()) return V.back() + table_->tail_slope * (t - T.back());
            auto it = std::upper_bound(T.begin(), T.end(), t);
            std::size_t j = static_cast<std::size_t>(it - T.begin());
            double w = (t - T[j - 1]) / (T[j] - T[j - 1]);
            return V[j - 1] + w * (V[j] - V[j - 1]);
        }
    }
    return 0.0;
}

double InterpolationFunction::slope(double t) const {
    if (std::isnan(t) || t < 0.0) throw DomainError("slope evaluated at a negative or NaN argument");
    if (t == 0.0) return sup_phi0();
    if (std::isinf(t)) return slope_at_infinity();
    if (family_ == Family::power) return std::pow(t, theta_ - 1.0);
    return phi1(t) / t;
}

double InterpolationFunction::phi1_inverse(double y) const {
    if (std::isnan(y)) throw DomainError("phi1_inverse of NaN");
    if (y <= phi1_at_zero()) return 0.0;
    const double sup = sup_phi1();
    if (y > sup) return kInf;
    double t = kInf;
    switch (family_) {
        case Family::power: t = theta_ > 0.0 ? std::pow(y, 1.0 / theta_) : kInf; break;
        case Family::min: t = y / b_; break;
        case Family::max: t = b_ > 0.0 ? y / b_ : kInf; break;
        case Family::sum: t = y - 1.0; break;
        case Family::harmonic: t = y < 1.0 ? y / (1.0 - y) : kInf; break;
        case Family::affine_power:
            t = (b_ > 0.0 && theta_ > 0.0) ? std::pow((y - a_) / b_, 1.0 / theta_) : kInf;
            break;
        case Family::tabulated: {
            const auto& T = table_->t;
            const auto& V = table_->v;
            if (y <= V.front()) {
                t = T.front() * (y - table_->at_zero) / (V.front() - table_->at_zero);
            } else if (y > V.back()) {
                t = table_->tail_slope > 0.0 ? T.back() + (y - V.back()) / table_->tail_slope : kInf;
            } else {
                auto it = std::lower_bound(V.begin(), V.end(), y);
                std::size_t j = static_cast<std::size_t>(it - V.begin());
                t = T[j - 1] + (T[j] - T[j - 1]) * (y - V[j - 1]) / (V[j] - V[j - 1]);
            }
            break;
        }
    }
    if (std::isinf(t)) return t;
    // Closed forms round; step up until the value is actually reached.
    for (int i = 0; i < 64 && phi1(t) < y; ++i) t = std::nextafter(t, kInf);
    while (phi1(t) < y && t < 1e300) t = t * (1.0 + 1e-12) + 1e-300;
    return t;
}

double InterpolationFunction::phi1_at_zero() const {
    switch (family_) {
        case Family::power: return theta_ == 0.0 ? 1.0 : 0.0;
        case Family::min: return 0.0;
        case Family::max: return a_;
        case Family::sum: return 1.0;
        case Family::harmonic: return 0.0;
        case Family::affine_power: return theta_ == 0.0 ? a_ + b_ : a_;
        case Family::tabulated: return table_->at_zero;
    }
    return 0.0;
}

double InterpolationFunction::slope_at_infinity() const {
    switch (family_) {
        case Family::power: return theta_ == 1.0 ? 1.0 : 0.0;
        case Family::min: return 0.0;
        case Family::max: return b_;
        case Family::sum: return 1.0;
        case Family::harmonic: return 0.0;
        case Family::affine_power: return theta_ == 1.0 ? b_ : 0.0;
        case Family::tabulated: return table_->tail_slope;
    }
    return 0.0;
}

double InterpolationFunction::sup_phi1() const {
    switch (family_) {
        case Family::power: return theta_ > 0.0 ? kInf : 1.0;
        case Family::min: return b_ > 0.0 ? a_ : 0.0;
        case Family::max: return b_ > 0.0 ? kInf : a_;
        case Family::sum: return kInf;
        case Family::harmonic: return 1.0;
        case Family::affine_power: return (b_ > 0.0 && theta_ > 0.0) ? kInf : a_ + b_;
        case Family::tabulated: return table_->tail_slope > 0.0 ? kInf : table_->v.back();
    }
    return kInf;
}

double InterpolationFunction::sup_phi0() const {
    switch (family_) {
        case Family::power: return theta_ < 1.0 ? kInf : 1.0;
        case Family::min: return a_ > 0.0 ? b_ : 0.0;
        case Family::max: return a_ > 0.0 ? kInf : b_;
        case Family::sum: return kInf;
        case Family::harmonic: return 1.0;
        case Family::affine_power:
            if (a_ > 0.0) return kInf;
            if (b_ == 0.0) return 0.0;
            return theta_ < 1.0 ? kInf : b_;
        case Family::tabulated: return table_->at_zero > 0.0 ? kInf : table_->v.front() / table_->t.front();
    }
    return kInf;
}

bool InterpolationFunction::certified_concave() const {
    switch (family_) {
        case Family::max: return a_ == 0.0 || b_ == 0.0;
        case Family::tabulated: {
            const auto& T = table_->t;
            const auto& V = table_->v;
            double prev = (V.front() - table_->at_zero) / T.front();
            for (std::size_t i = 1; i < T.size(); ++i) {
                double s = (V[i] - V[i - 1]) / (T[i] - T[i - 1]);
                if (s > prev) return false;
                prev = s;
            }
            return table_->tail_slope <= prev;
        }
        default: return true;
    }
}

std::string InterpolationFunction::describe() const {
    switch (family_) {
        case Family::power: return "power:" + format_double(theta_);
        case Family::min:
            return (a_ == 1.0 && b_ == 1.0) ? "min" : "min:" + format_double(a_) + "," + format_double(b_);
        case Family::max:
            return (a_ == 1.0 && b_ == 1.0) ? "max" : "max:" + format_double(a_) + "," + format_double(b_);
        case Family::sum: return "sum";
        case Family::harmonic: return "harmonic";
        case Family::affine_power:
            return "affinepower:" + format_double(a_) + "," + format_double(b_) + "," + format_double(theta_);
        case Family::tabulated: return "table:" + std::to_string(table_->t.size()) + "rows";
    }
    return "unknown";
}

namespace {

InterpolationFunction read_table(const std::string& path, std::size_t offset) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open table file '" + path + "'", offset);
    std::vector<double> t, v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto cols = split_tokens(line, ',');
        if (cols.size() != 2) throw ParseError("table line " + std::to_string(lineno) + " needs two columns", offset);
        auto trim = [](std::string_view s) {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
            return s;
        };
        auto c0 = trim(cols[0].text);
        auto c1 = trim(cols[1].text);
        if (t.empty() && lineno == 1 && !c0.empty() && std::isalpha(static_cast<unsigned char>(c0.front()))) continue;
        try {
            t.push_back(parse_double(c0, 0));
            v.push_back(parse_double(c1, 0));
        } catch (const ParseError&) {
            throw ParseError("table line " + std::to_string(lineno) + " is not numeric", offset);
        }
    }
    return InterpolationFunction::tabulated(std::move(t), std::move(v));
}

}  // namespace

InterpolationFunction parse_function(const std::string& descriptor) {
    std::string_view d(descriptor);
    std::size_t colon = d.find(':');
    std::string_view name = d.substr(0, colon);
    std::string_view args = colon == std::string_view::npos ? std::string_view() : d.substr(colon + 1);
    std::size_t argpos = colon == std::string_view::npos ? d.size() : colon + 1;
    bool has_args = colon != std::string_view::npos;
    auto nums = [&](std::size_t count) {
        if (!has_args) throw ParseError("'" + std::string(name) + "' needs parameters", d.size());
        auto v = parse_double_list(args, argpos);
        if (v.size() != count)
            throw ParseError("'" + std::string(name) + "' takes " + std::to_string(count) + " parameters", argpos);
        return v;
    };
    auto no_args = [&]() {
        if (has_args) throw ParseError("'" + std::string(name) + "' takes no parameters", argpos);
    };
    try {
        if (name == "power") return InterpolationFunction::power(nums(1)[0]);
        if (name == "min") {
            if (!has_args) return InterpolationFunction::min();
            auto v = nums(2);
            return InterpolationFunction::min(v[0], v[1]);
        }
        if (name == "max") {
            if (!has_args) return InterpolationFunction::max();
            auto v = nums(2);
            return InterpolationFunction::max(v[0], v[1]);
        }
        if (name == "sum") { no_args(); return InterpolationFunction::sum(); }
        if (name == "harmonic") { no_args(); return InterpolationFunction::harmonic(); }
        if (name == "affinepower") {
            auto v = nums(3);
            return InterpolationFunction::affine_power(v[0], v[1], v[2]);
        }
        if (name == "table") {
            if (!has_args || args.empty()) throw ParseError("'table' needs a file path", argpos);
            return read_table(std::string(args), argpos);
        }
    } catch (const InvalidFunctionError& e) {
        throw ParseError(e.what(), argpos);
    }
    throw ParseError("unknown function family '" + std::string(name) + "'", 0);
}

double eval_phi(const InterpolationFunction& f, double s, double t) {
    if (!std::isfinite(s) || !std::isfinite(t)) throw DomainError("eval_phi needs finite arguments");
    if (s < 0.0 || t < 0.0) throw DomainError("eval_phi needs nonnegative arguments");
    if (s == 0.0 && t == 0.0) return 0.0;
    if (t == 0.0) return s * f.phi1_at_zero();
    if (s == 0.0) return t * f.slope_at_infinity();
    const double r = t / s;
    if (std::isinf(r) || r < std::numeric_limits<double>::min()) {
        // The ratio left the normal range; use the two-variable form where one exists.
        auto mixed = [&](double th) { return std::exp((1.0 - th) * std::log(s) + th * std::log(t)); };
        switch (f.family()) {
            case Family::power: return mixed(f.theta());
            case Family::affine_power: return f.a() * s + f.b() * mixed(f.theta());
            case Family::min: return std::min(f.a() * s, f.b() * t);
            case Family::max: return std::max(f.a() * s, f.b() * t);
            case Family::sum: return s + t;
            case Family::harmonic: return s * t / (s + t);
            case Family::tabulated: break;
        }
    }
    if (t <= s) return s * f.phi1(r);
    return t * f.slope(r);
}

double min_second_argument(const InterpolationFunction& f, double s, double y) {
    if (!(s >= 0.0) || !(y >= 0.0)) throw DomainError("min_second_argument: negative argument");
    if (y == 0.0) return 0.0;
    if (s == 0.0) {
        double b = f.slope_at_infinity();
        if (b <= 0.0) return kInf;
        double t = y / b;
        if (!std::isfinite(t)) return kInf;
        for (int i = 0; i < 64 && eval_phi(f, 0.0, t) < y; ++i) t = std::nextafter(t, kInf);
        return t;
    }
    if (std::isinf(s)) return 0.0;
    double r = f.phi1_inverse(y / s);
    if (std::isinf(r)) return kInf;
    double t = s * r;
    if (!std::isfinite(t)) return kInf;
    for (int i = 0; i < 64 && eval_phi(f, s, t) < y; ++i) t = std::nextafter(t, kInf);
    return t;
}

Envelope::Envelope(std::vector<double> xs, std::vector<double> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {
    if (xs_.size() != ys_.size() || xs_.empty()) throw DomainError("envelope needs matching nonempty vertex lists");
}

double Envelope::operator()(double t) const {
    if (!(t >= xs_.front() && t <= xs_.back())) throw DomainError("envelope evaluated outside its grid hull");
    if (t == xs_.back()) return ys_.back();
    auto it = std::upper_bound(xs_.begin(), xs_.end(), t);
    std::size_t j = static_cast<std::size_t>(it - xs_.begin());
    if (xs_[j - 1] == t) return ys_[j - 1];
    double w = (t - xs_[j - 1]) / (xs_[j] - xs_[j - 1]);
    return ys_[j - 1] + w * (ys_[j] - ys_[j - 1]);
}

Envelope concave_majorant(const InterpolationFunction& f, const std::vector<double>& grid) {
    if (grid.size() < 2) throw DomainError("concave_majorant needs at least two grid points");
    std::vector<double> hx, hy;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double x = grid[i];
        if (!std::isfinite(x) || x <= 0.0) throw DomainError("grid points must be finite and positive");
        if (i > 0 && x <= grid[i - 1]) throw DomainError("grid must be strictly increasing");
        double y = f.phi1(x);
        if (!std::isfinite(y)) throw DomainError("phi_1 is not finite on the grid");
        // Drop the last vertex while it lies strictly below the chord to the new point.
        while (hx.size() >= 2) {
            std::size_t k = hx.size();
            double cross = (hx[k - 1] - hx[k - 2]) * (y - hy[k - 2]) - (hy[k - 1] - hy[k - 2]) * (x - hx[k - 2]);
            if (cross > 0.0) {
                hx.pop_back();
                hy.pop_back();
            } else {
                break;
            }
        }
        hx.push_back(x);
        hy.push_back(y);
    }
    return Envelope(std::move(hx), std::move(hy));
}

InterpolationFunction concave_majorant_function(const InterpolationFunction& f) {
    if (f.certified_concave()) return f;
    if (f.family() == Family::max) return InterpolationFunction::affine_power(f.a(), f.b(), 1.0);
    if (f.family() != Family::tabulated) return f;
    const TableData& tab = *f.table();
    std::vector<double> hx{0.0}, hy{tab.at_zero};
    for (std::size_t i = 0; i < tab.t.size(); ++i) {
        double x = tab.t[i], y = tab.v[i];
        while (hx.size() >= 2) {
            std::size_t k = hx.size();
            double cross = (hx[k - 1] - hx[k - 2]) * (y - hy[k - 2]) - (hy[k - 1] - hy[k - 2]) * (x - hx[k - 2]);
            if (cross >= 0.0) {
                hx.pop_back();
                hy.pop_back();
            } else {
                break;
            }
        }
        hx.push_back(x);
        hy.push_back(y);
    }
    // The tail ray has slope tail_slope; drop vertices whose incoming chord is flatter than the ray.
    while (hx.size() >= 2) {
        std::size_t k = hx.size();
        double chord = (hy[k - 1] - hy[k - 2]) / (hx[k - 1] - hx[k - 2]);
        if (chord < tab.tail_slope) {
            hx.pop_back();
            hy.pop_back();
        } else {
            break;
        }
    }
    if (hx.size() == 1) return InterpolationFunction::affine_power(tab.at_zero, tab.tail_slope, 1.0);
    std::vector<double> xs(hx.begin() + 1, hx.end()), ys(hy.begin() + 1, hy.end());
    return InterpolationFunction::tabulated(std::move(xs), std::move(ys), tab.at_zero, tab.tail_slope);
}

double BKDecomposition::node(int i) const {
    if (has_node(i)) return nodes[static_cast<std::size_t>(i - idx_lo)];
    if (i < idx_lo && lower_finite) return 0.0;
    if (i > idx_hi() && upper_finite) return kInf;
    throw DomainError("node t_" + std::to_string(i) + " lies beyond the truncation depth");
}

double BKDecomposition::slack(int k) const {
    if (k >= k_lo && k <= k_hi) return slacks[static_cast<std::size_t>(k - k_lo)];
    if ((k < k_lo && lower_finite) || (k > k_hi && upper_finite)) return 0.0;
    throw DomainError("slack eps_" + std::to_string(k) + " lies beyond the truncation depth");
}

BKDecomposition bk_decompose(const InterpolationFunction& input, double q, int depth, const BKOptions& opts) {
    if (!std::isfinite(q) || q <= 1.0) throw DomainError("bk_decompose needs q > 1");
    auto basis = std::make_shared<const InterpolationFunction>(concave_majorant_function(input));
    const InterpolationFunction& f = *basis;
    if (depth < 0) throw DomainError("bk_decompose needs a nonnegative depth");
    double qp = opts.q_prime > 0.0 ? opts.q_prime : 0.5 * (q + 1.0);
    if (!(qp > 1.0 && qp < q)) throw DomainError("q' must lie strictly between 1 and q");
    if (!(f.phi1(1.0) > 0.0)) throw InvalidFunctionError("phi_1 vanishes identically");

    const double a = f.phi1_at_zero();
    const double b = f.slope_at_infinity();
    auto value = [&](double t) { return f.phi1(t); };
    auto neg_slope = [&](double t) { return -f.slope(t); };
    auto ref_of = [](double t) { return (t > 0.0 && std::isfinite(t)) ? t : 1.0; };

    BKDecomposition d;
    d.q = q;
    d.q_prime = qp;
    d.depth = depth;
    d.basis = basis;
    d.on_majorant = !input.certified_concave();
    std::map<int, double> t;

    auto march_up = [&](int i) {
        for (int step = 1; step <= depth + 1; ++step) {
            double o = t.at(i);
            double c = qp * f.phi1(o);
            double e = c > f.sup_phi1() ? kInf : solve_nondecreasing(value, c, ref_of(o), true);
            t[i + 1] = e;
            if (std::isinf(e)) {
                d.upper_finite = true;
                d.N = (i + 1) / 2;
                return;
            }
            double cs = f.slope(e) / qp;
            double o2 = cs < b ? kInf : solve_nondecreasing(neg_slope, -cs, e, true);
            t[i + 2] = o2;
            if (std::isinf(o2)) {
                t[i + 3] = kInf;
                d.upper_finite = true;
                d.N = (i + 3) / 2;
                return;
            }
            i += 2;
        }
    };
    auto march_down = [&](int i) {
        for (int step = 1; step <= depth + 1; ++step) {
            double o = t.at(i);
            double cs = qp * f.slope(o);
            double e = cs > f.sup_phi0() ? 0.0 : solve_nondecreasing(neg_slope, -cs, ref_of(o), false);
            t[i - 1] = e;
            if (e == 0.0) {
                d.lower_finite = true;
                d.M = -(i - 1) / 2;
                return;
            }
            double c = f.phi1(e) / qp;
            double o2 = c < a ? 0.0 : solve_nondecreasing(value, c, e, false);
            t[i - 2] = o2;
            if (o2 == 0.0) {
                t[i - 3] = 0.0;
                d.lower_finite = true;
                d.M = -(i - 3) / 2;
                return;
            }
            i -= 2;
        }
    };

    if (a > 0.0) {
        t[0] = 0.0;
        t[1] = 0.0;
        d.lower_finite = true;
        d.M = 0;
        march_up(1);
    } else if (b > 0.0) {
        t[1] = kInf;
        t[2] = kInf;
        d.upper_finite = true;
        d.N = 1;
        march_down(1);
    } else {
        t[1] = 1.0;
        march_up(1);
        march_down(1);
    }

    d.idx_lo = t.begin()->first;
    for (const auto& [i, v] : t) {
        if (i != d.idx_lo + static_cast<int>(d.nodes.size()))
            throw SolverError("node indices are not contiguous near t_" + std::to_string(i));
        d.nodes.push_back(v);
    }
    d.k_lo = d.lower_finite ? -d.M : -depth;
    d.k_hi = d.upper_finite ? d.N - 1 : depth;

    for (std::size_t i = 1; i < d.nodes.size(); ++i) {
        if (d.nodes[i] < d.nodes[i - 1] || f.phi1(d.nodes[i]) < f.phi1(d.nodes[i - 1]))
            throw InvalidFunctionError("phi_1 is not monotone along the node sequence");
    }

    // Relation residuals at finite positive nodes.
    for (int k = d.k_lo; k <= d.k_hi; ++k) {
        double o = d.odd(k);
        if (!(o > 0.0 && std::isfinite(o))) continue;
        double lo = d.node(2 * k), hi = d.node(2 * k + 2);
        if (lo > 0.0) {
            double target = qp * f.slope(o);
            d.relation_residual = std::max(d.relation_residual, std::fabs(f.slope(lo) - target) / target);
        }
        if (std::isfinite(hi)) {
            double target = qp * f.phi1(o);
            d.relation_residual = std::max(d.relation_residual, std::fabs(f.phi1(hi) - target) / target);
        }
    }

    for (int k = d.k_lo; k <= d.k_hi; ++k) {
        double L = d.node(2 * k), R = d.node(2 * k + 2), o = d.odd(k);
        if (L == 0.0 || std::isinf(R)) {
            d.slacks.push_back(0.0);
            continue;
        }
        double cap = std::min(1.0, std::ldexp(1.0, -std::abs(k)));
        if (d.has_node(2 * k - 1)) {
            double gap = L - d.node(2 * k - 1);
            if (std::isfinite(gap)) cap = std::min(cap, 0.5 * gap);
        }
        if (d.has_node(2 * k + 3)) {
            double gap = d.node(2 * k + 3) - R;
            if (std::isfinite(gap)) cap = std::min(cap, 0.5 * gap);
        }
        const double slope_bound = q * f.slope(o);
        const double value_bound = q * f.phi1(o);
        auto ok = [&](double eps) {
            return f.slope(L - eps) <= slope_bound && f.phi1(R + eps) <= value_bound;
        };
        if (!ok(0.0))
            throw SolverError("slack bisection for eps_" + std::to_string(k) + " has no feasible start, bracket [0, " +
                              format_double(cap) + "]");
        double eps = 0.0;
        if (ok(cap)) {
            eps = cap;
        } else {
            double lo = 0.0, hi = cap;
            for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
                double mid = 0.5 * (lo + hi);
                if (mid <= lo || mid >= hi) break;
                if (ok(mid)) lo = mid; else hi = mid;
                if (hi - lo <= std::min(opts.eps_tol, 1e-9 * cap)) break;
            }
            eps = lo;
        }
        if (!(eps > 0.0))
            throw SolverError("slack bisection for eps_" + std::to_string(k) + " collapsed to 0, bracket [0, " +
                              format_double(cap) + "]");
        d.slacks.push_back(eps);
    }
    return d;
}

double bk_sum(const BKDecomposition& d, double s, double t) {
    const InterpolationFunction& f = *d.basis;
    double total = 0.0;
    for (int k = d.k_lo; k <= d.k_hi; ++k) {
        double o = d.odd(k);
        if (o == 0.0) total += f.phi1_at_zero() * s;
        else if (std::isinf(o)) total += f.slope_at_infinity() * t;
        else total += f.phi1(o) * std::min(s, t / o);
    }
    return total;
}

BKReport verify_bk(const BKDecomposition& d, const InterpolationFunction& input, const std::vector<double>& t_grid,
                   double tol) {
    const InterpolationFunction& f = *d.basis;
    BKReport r;
    r.bound2 = (d.q + 1.0) / (d.q - 1.0);
    double lo_end = d.lower_end(), hi_end = d.upper_end();
    for (double t : t_grid) {
        if (!std::isfinite(t) || t <= 0.0) throw DomainError("verification grid must be finite and positive");
        ++r.grid_points;
        if (t < lo_end || t > hi_end) ++r.uncovered_points;
        double phi = f.phi1(t);
        if (phi <= 0.0) continue;
        double total = bk_sum(d, 1.0, t);
        double raw = input.phi1(t);
        if (raw > 0.0) r.max_ratio2_raw = std::max(r.max_ratio2_raw, total / raw);
        double ratio = total / phi;
        if (ratio > r.max_ratio2) {
            r.max_ratio2 = ratio;
            r.worst_t2 = t;
        }
    }
    r.partial_coverage = r.uncovered_points > 0;
    r.pass2 = r.max_ratio2 <= r.bound2 * (1.0 + tol);

    for (int k = d.k_lo; k <= d.k_hi; ++k) {
        double eps = d.slack(k);
        double L = std::max(0.0, d.node(2 * k) - eps);
        double R = d.node(2 * k + 2) + eps;
        double o = d.odd(k);
        double worst = 0.0;
        if (o > 0.0) {
            double lhs = f.slope(L), rhs = d.q * f.slope(o);
            worst = std::max(worst, lhs <= rhs ? (rhs > 0.0 ? lhs / rhs : 0.0) : (rhs > 0.0 ? lhs / rhs : kInf));
        }
        if (std::isfinite(o)) {
            double lhs = f.phi1(R), rhs = d.q * f.phi1(o);
            worst = std::max(worst, lhs <= rhs ? (rhs > 0.0 ? lhs / rhs : 0.0) : (rhs > 0.0 ? lhs / rhs : kInf));
        }
        ++r.intervals_checked;
        if (worst > r.max_ratio3) {
            r.max_ratio3 = worst;
            r.worst_k3 = k;
        }
    }
    r.pass3 = r.max_ratio3 <= 1.0;
    return r;
}

DoublyBoundedResult is_doubly_bounded(const InterpolationFunction& f) {
    DoublyBoundedResult r;
    r.sup_phi0 = f.sup_phi0();
    r.sup_phi1 = f.sup_phi1();
    r.lower = f.normalization();
    if (const TableData* tab = f.table()) {
        // The piecewise-linear model is always bounded between samples; judge the extrapolated tails.
        r.sup_phi0 = tab->est_sup_phi0;
        r.sup_phi1 = tab->est_sup_phi1;
        r.indeterminate = tab->tail_inconclusive;
    }
    r.doubly_bounded = std::isfinite(r.sup_phi0) && std::isfinite(r.sup_phi1);
    r.C = std::max(r.sup_phi0, r.sup_phi1);
    return r;
}

SplitPair split_convex_part(const InterpolationFunction& f) {
    const double a = f.phi1_at_zero();
    const double b = f.slope_at_infinity();
    if (!std::isfinite(a) || !std::isfinite(b)) throw DomainError("split undefined: a boundary limit is infinite");
    InterpolationFunction pl = InterpolationFunction::max(a, b);
    InterpolationFunction zero = InterpolationFunction::affine_power(0.0, 0.0, 1.0);
    switch (f.family()) {
        case Family::power:
            return {pl, (f.theta() == 0.0 || f.theta() == 1.0) ? zero : f};
        case Family::min:
        case Family::harmonic:
            return {pl, f};
        case Family::max:
            return {pl, zero};
        case Family::sum:
            return {pl, InterpolationFunction::min(1.0, 1.0)};
        case Family::affine_power: {
            if (f.theta() == 0.0 || (f.a() == 0.0 && f.theta() == 1.0) || f.b() == 0.0) return {pl, zero};
            if (f.theta() == 1.0) return {pl, InterpolationFunction::min(f.a(), f.b())};
            return {pl, InterpolationFunction::affine_power(0.0, f.b(), f.theta())};
        }
        case Family::tabulated: {
            std::vector<double> ts = f.table()->t;
            if (a > 0.0 && b > 0.0) {
                double kink = a / b;
                auto it = std::lower_bound(ts.begin(), ts.end(), kink);
                if (it == ts.end() || *it != kink) ts.insert(it, kink);
            }
            std::vector<double> vs;
            vs.reserve(ts.size());
            for (double x : ts) vs.push_back(std::max(0.0, f.phi1(x) - pl.phi1(x)));
            return {pl, InterpolationFunction::tabulated(std::move(ts), std::move(vs), 0.0, 0.0)};
        }
    }
    return {pl, f};
}

}  // namespace cllab
