#pragma once

// Sparse trivariate polynomial algebra over the state variables
// (delta, omega, omega_g). This is the substrate for the Taylor expansion of
// the vector field and for the degree-by-degree energy-function recursion;
// everything is plain double arithmetic with a small prune threshold to keep
// denormal noise out of the recursion.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gflc/errors.hpp"

namespace gflc {

enum class Axis : int { delta = 0, omega = 1, omega_g = 2 };

// Monomial exponents (delta^d * omega^w * omega_g^g).
struct Exponent3 {
    std::uint8_t d = 0;
    std::uint8_t w = 0;
    std::uint8_t g = 0;

    int total_degree() const { return int(d) + int(w) + int(g); }
    int operator[](int axis) const { return axis == 0 ? d : (axis == 1 ? w : g); }

    friend auto operator<=>(const Exponent3&, const Exponent3&) = default;
};

namespace detail {
inline Exponent3 bump(Exponent3 e, int axis, int by) {
    int v[3] = {e.d, e.w, e.g};
    v[axis] += by;
    return Exponent3{std::uint8_t(v[0]), std::uint8_t(v[1]), std::uint8_t(v[2])};
}
}  // namespace detail

// Sparse polynomial: exponent triple -> coefficient. Coefficients below the
// prune threshold are never stored, and map ordering makes every iteration
// (evaluation, dumping, assembly) deterministic.
class Poly3 {
public:
    static constexpr double kDefaultPrune = 1e-15;

    Poly3() = default;
    explicit Poly3(double prune) : prune_(prune) {}

    static Poly3 zero() { return Poly3{}; }
    static Poly3 constant(double c) {
        Poly3 p;
        p.set(Exponent3{}, c);
        return p;
    }
    static Poly3 variable(Axis ax, double coeff = 1.0) {
        Poly3 p;
        p.set(detail::bump(Exponent3{}, int(ax), 1), coeff);
        return p;
    }
    static Poly3 monomial(Exponent3 e, double coeff) {
        Poly3 p;
        p.set(e, coeff);
        return p;
    }

    const std::map<Exponent3, double>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }
    std::size_t size() const { return terms_.size(); }
    double prune_threshold() const { return prune_; }

    double coeff(Exponent3 e) const {
        auto it = terms_.find(e);
        return it == terms_.end() ? 0.0 : it->second;
    }

    int degree() const {
        int deg = 0;
        for (const auto& [e, c] : terms_) deg = std::max(deg, e.total_degree());
        return deg;
    }

    void set(Exponent3 e, double c) {
        if (std::abs(c) < prune_)
            terms_.erase(e);
        else
            terms_[e] = c;
    }

    void accumulate(Exponent3 e, double c) {
        auto [it, inserted] = terms_.try_emplace(e, c);
        if (!inserted) it->second += c;
        if (std::abs(it->second) < prune_) terms_.erase(it);
    }

    Poly3& operator*=(double s) {
        if (s == 0.0) {
            terms_.clear();
            return *this;
        }
        for (auto it = terms_.begin(); it != terms_.end();) {
            it->second *= s;
            if (std::abs(it->second) < prune_)
                it = terms_.erase(it);
            else
                ++it;
        }
        return *this;
    }

    friend Poly3 operator*(Poly3 p, double s) { return p *= s; }
    friend Poly3 operator*(double s, Poly3 p) { return p *= s; }

private:
    std::map<Exponent3, double> terms_;
    double prune_ = kDefaultPrune;
};

// Coefficient-wise sum, pruned.
inline Poly3 add(const Poly3& a, const Poly3& b) {
    Poly3 r = a;
    for (const auto& [e, c] : b.terms()) r.accumulate(e, c);
    return r;
}

inline Poly3 sub(const Poly3& a, const Poly3& b) {
    Poly3 r = a;
    for (const auto& [e, c] : b.terms()) r.accumulate(e, -c);
    return r;
}

// Product with every term of total degree > degree_cap discarded.
inline Poly3 mul(const Poly3& a, const Poly3& b, int degree_cap) {
    Poly3 r;
    for (const auto& [ea, ca] : a.terms()) {
        const int da = ea.total_degree();
        for (const auto& [eb, cb] : b.terms()) {
            if (da + eb.total_degree() > degree_cap) continue;
            r.accumulate(Exponent3{std::uint8_t(ea.d + eb.d), std::uint8_t(ea.w + eb.w),
                                   std::uint8_t(ea.g + eb.g)},
                         ca * cb);
        }
    }
    return r;
}

// Formal partial derivative along one state axis.
inline Poly3 partial(const Poly3& p, Axis axis) {
    const int ax = int(axis);
    Poly3 r;
    for (const auto& [e, c] : p.terms()) {
        const int k = e[ax];
        if (k == 0) continue;
        r.accumulate(detail::bump(e, ax, -1), c * double(k));
    }
    return r;
}

// Point evaluation. Powers are built once per call so repeated exponents do
// not re-multiply; map iteration order makes the summation deterministic.
inline double eval(const Poly3& p, double delta, double omega, double omega_g) {
    int maxe[3] = {0, 0, 0};
    for (const auto& [e, c] : p.terms()) {
        maxe[0] = std::max(maxe[0], int(e.d));
        maxe[1] = std::max(maxe[1], int(e.w));
        maxe[2] = std::max(maxe[2], int(e.g));
    }
    std::array<std::vector<double>, 3> pw;
    const double x[3] = {delta, omega, omega_g};
    for (int ax = 0; ax < 3; ++ax) {
        pw[ax].resize(std::size_t(maxe[ax]) + 1);
        pw[ax][0] = 1.0;
        for (int k = 1; k <= maxe[ax]; ++k) pw[ax][std::size_t(k)] = pw[ax][std::size_t(k - 1)] * x[ax];
    }
    double acc = 0.0;
    for (const auto& [e, c] : p.terms()) acc += c * pw[0][e.d] * pw[1][e.w] * pw[2][e.g];
    return acc;
}

inline double eval(const Poly3& p, const std::array<double, 3>& x) {
    return eval(p, x[0], x[1], x[2]);
}

// The total-degree-m homogeneous part of p.
inline Poly3 degree_slice(const Poly3& p, int m) {
    Poly3 r;
    for (const auto& [e, c] : p.terms())
        if (e.total_degree() == m) r.accumulate(e, c);
    return r;
}

enum class TrigKind { sin, cos };

// Taylor polynomial of sin(delta + phase_offset) or cos(delta + phase_offset)
// about delta = 0, truncated at the given total degree. The k-th coefficient
// is the k-th derivative cycle value over k!.
inline Poly3 trig_series(TrigKind kind, double phase_offset, int truncation) {
    if (truncation < 1) throw ConfigError("trig_series: truncation must be >= 1");
    Poly3 r;
    double inv_fact = 1.0;
    for (int k = 0; k <= truncation; ++k) {
        if (k > 0) inv_fact /= double(k);
        const double half_turns = k * 1.5707963267948966;  // k*pi/2
        const double c = (kind == TrigKind::sin) ? std::sin(phase_offset + half_turns)
                                                 : std::cos(phase_offset + half_turns);
        r.accumulate(Exponent3{std::uint8_t(k), 0, 0}, c * inv_fact);
    }
    return r;
}

// Debug dump: one "coeff * d^a w^b g^c" line per term, sorted by
// (total degree, lexicographic exponent). Stable across runs, so it can back
// golden-file tests and the energy-function export.
inline std::string dump(const Poly3& p) {
    std::vector<std::pair<Exponent3, double>> sorted(p.terms().begin(), p.terms().end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        const int da = a.first.total_degree(), db = b.first.total_degree();
        if (da != db) return da < db;
        return a.first < b.first;
    });
    std::ostringstream os;
    os.precision(17);
    for (const auto& [e, c] : sorted)
        os << c << " * d^" << int(e.d) << " w^" << int(e.w) << " g^" << int(e.g) << "\n";
    return os.str();
}

// Parse the dump format back into a polynomial.
inline Poly3 parse_poly(const std::string& text) {
    Poly3 r;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        double c = 0.0;
        std::string star, dtok, wtok, gtok;
        if (!(ls >> c >> star >> dtok >> wtok >> gtok) || star != "*")
            throw ConfigError("parse_poly: bad term line: " + line);
        auto expo = [&](const std::string& tok, char name) {
            if (tok.size() < 3 || tok[0] != name || tok[1] != '^')
                throw ConfigError("parse_poly: bad exponent token: " + tok);
            return std::uint8_t(std::stoi(tok.substr(2)));
        };
        r.accumulate(Exponent3{expo(dtok, 'd'), expo(wtok, 'w'), expo(gtok, 'g')}, c);
    }
    return r;
}

// All degree-m monomial exponents in a fixed (map-compatible) order.
inline std::vector<Exponent3> monomial_basis(int m) {
    std::vector<Exponent3> basis;
    basis.reserve(std::size_t((m + 1) * (m + 2) / 2));
    for (int a = 0; a <= m; ++a)
        for (int b = 0; b <= m - a; ++b)
            basis.push_back(Exponent3{std::uint8_t(a), std::uint8_t(b), std::uint8_t(m - a - b)});
    return basis;
}

// Flattened coefficient/exponent arrays for hot evaluation loops (domain
// search, on-fault scans). Built once from a Poly3; evaluation reuses shared
// per-point power tables.
class CompiledPoly {
public:
    CompiledPoly() = default;
    explicit CompiledPoly(const Poly3& p) {
        exps_.reserve(p.size());
        coeffs_.reserve(p.size());
        for (const auto& [e, c] : p.terms()) {
            exps_.push_back(e);
            coeffs_.push_back(c);
            max_deg_[0] = std::max(max_deg_[0], int(e.d));
            max_deg_[1] = std::max(max_deg_[1], int(e.w));
            max_deg_[2] = std::max(max_deg_[2], int(e.g));
        }
    }

    int max_degree(int axis) const { return max_deg_[axis]; }
    bool empty() const { return coeffs_.empty(); }

    // pw[ax] must hold powers 0..max_degree(ax) of the point coordinates.
    double eval_with(const std::array<std::vector<double>, 3>& pw) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < coeffs_.size(); ++i) {
            const Exponent3 e = exps_[i];
            acc += coeffs_[i] * pw[0][e.d] * pw[1][e.w] * pw[2][e.g];
        }
        return acc;
    }

private:
    std::vector<Exponent3> exps_;
    std::vector<double> coeffs_;
    int max_deg_[3] = {0, 0, 0};
};

// Shared power table for evaluating several CompiledPoly at one point.
class PowerTable {
public:
    PowerTable(int max_d, int max_w, int max_g) {
        pw_[0].resize(std::size_t(max_d) + 1);
        pw_[1].resize(std::size_t(max_w) + 1);
        pw_[2].resize(std::size_t(max_g) + 1);
    }

    void set_point(double delta, double omega, double omega_g) {
        const double x[3] = {delta, omega, omega_g};
        for (int ax = 0; ax < 3; ++ax) {
            pw_[ax][0] = 1.0;
            for (std::size_t k = 1; k < pw_[ax].size(); ++k) pw_[ax][k] = pw_[ax][k - 1] * x[ax];
        }
    }

    const std::array<std::vector<double>, 3>& powers() const { return pw_; }

private:
    std::array<std::vector<double>, 3> pw_;
};

}  // namespace gflc
