#pragma once

// Taylor expansion of the post-fault vector field and degree-by-degree
// construction of the truncated series energy function V = V2 + ... + VM
// solving grad(V) . F' = -phi*(1 - V).

#include <array>
#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "gflc/errors.hpp"
#include "gflc/model.hpp"
#include "gflc/poly.hpp"

namespace gflc {

// The vector field as a truncated polynomial: exact linear part plus
// homogeneous slices of degrees 2..truncation per equation. Equation order
// follows the state order (delta, omega, omega_g).
struct TaylorField {
    Eigen::Matrix3d linear = Eigen::Matrix3d::Zero();
    std::array<std::vector<Poly3>, 3> slices;  // slices[n][m-2] is degree m
    int truncation = 30;

    const Poly3* slice(int n, int m) const {
        const auto& v = slices[std::size_t(n)];
        const int i = m - 2;
        if (i < 0 || i >= int(v.size())) return nullptr;
        return &v[std::size_t(i)];
    }

    // Full polynomial for one equation (linear + all slices).
    Poly3 equation(int n) const {
        Poly3 f;
        for (int k = 0; k < 3; ++k)
            if (linear(n, k) != 0.0)
                f.accumulate(detail::bump(Exponent3{}, k, 1), linear(n, k));
        for (const Poly3& s : slices[std::size_t(n)])
            for (const auto& [e, c] : s.terms()) f.accumulate(e, c);
        return f;
    }

    State eval(const State& x) const {
        const std::array<double, 3> v = x.as_array();
        double out[3];
        for (int n = 0; n < 3; ++n) {
            out[n] = linear(n, 0) * v[0] + linear(n, 1) * v[1] + linear(n, 2) * v[2];
            for (const Poly3& s : slices[std::size_t(n)]) out[n] += gflc::eval(s, v);
        }
        return {out[0], out[1], out[2]};
    }
};

// Expand the shifted ODE about the origin. The delta equation is exactly
// linear; the two trig equations expand through trig_series with phase
// offsets absorbing the equilibrium shift. The shift leaves O(solver
// tolerance) constants, which are checked and dropped.
inline TaylorField taylor_expand(const OdeParams& p, int truncation = 30) {
    if (!p.shifted())
        throw RecursionError("taylor_expand: ode params have no equilibrium shift");
    if (truncation < 2) throw RecursionError("taylor_expand: truncation must be >= 2");

    std::array<Poly3, 3> f;
    f[0] = Poly3::variable(Axis::omega);

    f[1] = Poly3::constant(p.p_ma_c + p.d_g * p.omega_g_sep);
    f[1] = add(f[1], Poly3::variable(Axis::omega_g, p.d_g));
    f[1] = add(f[1], trig_series(TrigKind::sin, p.delta_sep + p.phi - p.theta2, truncation) *
                         (-p.p_el_c));
    f[1] = add(f[1], mul(Poly3::variable(Axis::omega, -p.d_c),
                         trig_series(TrigKind::cos, p.delta_sep - p.theta2, truncation - 1),
                         truncation));

    f[2] = Poly3::constant(p.p_ma_g - p.d_g * p.omega_g_sep);
    f[2] = add(f[2], Poly3::variable(Axis::omega_g, -p.d_g));
    f[2] = add(f[2], trig_series(TrigKind::cos, p.theta2 + p.delta_sep + p.phi1, truncation) *
                         p.p_el_g);

    TaylorField tf;
    tf.truncation = truncation;
    for (int n = 0; n < 3; ++n) {
        const double residue = f[n].coeff(Exponent3{});
        if (std::abs(residue) > 1e-9)
            throw RecursionError("taylor_expand: equation " + std::to_string(n) +
                                 " has constant term " + std::to_string(residue) +
                                 " after the equilibrium shift");
        tf.slices[std::size_t(n)].assign(std::size_t(truncation - 1), Poly3{});
        for (const auto& [e, c] : f[n].terms()) {
            const int m = e.total_degree();
            if (m == 0) continue;  // shift residue, below tolerance
            if (m == 1) {
                for (int k = 0; k < 3; ++k)
                    if (e[k] == 1) tf.linear(n, k) = c;
            } else {
                tf.slices[std::size_t(n)][std::size_t(m - 2)].accumulate(e, c);
            }
        }
    }
    return tf;
}

// Quadratic weight of the Zubov equation. The standard choices are diagonal
// 0.03*(d^2+w^2+g^2), 0.01*(d+w+g)^2 and 0.03*d^2 + 0.01*(w+g)^2; the latter
// two are only positive semidefinite, which is accepted but flagged.
struct PhiFunction {
    Poly3 quad;
    int id = 0;  // 1..3 standard, 0 custom

    static PhiFunction standard(int id) {
        PhiFunction phi;
        phi.id = id;
        switch (id) {
            case 1:
                phi.quad.set(Exponent3{2, 0, 0}, 0.03);
                phi.quad.set(Exponent3{0, 2, 0}, 0.03);
                phi.quad.set(Exponent3{0, 0, 2}, 0.03);
                break;
            case 2:
                phi.quad.set(Exponent3{2, 0, 0}, 0.01);
                phi.quad.set(Exponent3{0, 2, 0}, 0.01);
                phi.quad.set(Exponent3{0, 0, 2}, 0.01);
                phi.quad.set(Exponent3{1, 1, 0}, 0.02);
                phi.quad.set(Exponent3{1, 0, 1}, 0.02);
                phi.quad.set(Exponent3{0, 1, 1}, 0.02);
                break;
            case 3:
                phi.quad.set(Exponent3{2, 0, 0}, 0.03);
                phi.quad.set(Exponent3{0, 2, 0}, 0.01);
                phi.quad.set(Exponent3{0, 0, 2}, 0.01);
                phi.quad.set(Exponent3{0, 1, 1}, 0.02);
                break;
            default:
                throw ConfigError("PhiFunction::standard: id must be 1, 2 or 3");
        }
        return phi;
    }

    static PhiFunction custom(const std::array<double, 6>& c) {
        // order: d^2, w^2, g^2, d*w, d*g, w*g
        PhiFunction phi;
        phi.id = 0;
        phi.quad.set(Exponent3{2, 0, 0}, c[0]);
        phi.quad.set(Exponent3{0, 2, 0}, c[1]);
        phi.quad.set(Exponent3{0, 0, 2}, c[2]);
        phi.quad.set(Exponent3{1, 1, 0}, c[3]);
        phi.quad.set(Exponent3{1, 0, 1}, c[4]);
        phi.quad.set(Exponent3{0, 1, 1}, c[5]);
        return phi;
    }

    Eigen::Matrix3d form_matrix() const {
        Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
        for (const auto& [e, c] : quad.terms()) {
            if (e.total_degree() != 2)
                throw ConfigError("PhiFunction: non-quadratic term in phi");
            int idx[3] = {e.d, e.w, e.g};
            int i = -1, j = -1;
            for (int ax = 0; ax < 3; ++ax) {
                if (idx[ax] == 2) i = j = ax;
                if (idx[ax] == 1) (i < 0 ? i : j) = ax;
            }
            if (i == j)
                m(i, i) = c;
            else {
                m(i, j) = c / 2.0;
                m(j, i) = c / 2.0;
            }
        }
        return m;
    }

    bool positive_definite(double tol = 1e-12) const {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(form_matrix());
        return es.eigenvalues().minCoeff() > tol;
    }
    bool positive_semidefinite(double tol = 1e-12) const {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(form_matrix());
        return es.eigenvalues().minCoeff() > -tol;
    }
};

namespace detail {

// Matrix of the linear operator W -> sum_n dW/dx_n * (B row_n . x) on the
// degree-m homogeneous space, in monomial_basis(m) order.
inline Eigen::MatrixXd degree_operator(const Eigen::Matrix3d& B, int m,
                                       const std::vector<Exponent3>& basis) {
    std::map<Exponent3, int> index;
    for (int i = 0; i < int(basis.size()); ++i) index[basis[std::size_t(i)]] = i;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(long(basis.size()), long(basis.size()));
    for (int col = 0; col < int(basis.size()); ++col) {
        const Exponent3 u = basis[std::size_t(col)];
        for (int n = 0; n < 3; ++n) {
            const int expn = u[n];
            if (expn == 0) continue;
            for (int k = 0; k < 3; ++k) {
                if (B(n, k) == 0.0) continue;
                const Exponent3 target = bump(bump(u, n, -1), k, 1);
                A(index.at(target), col) += double(expn) * B(n, k);
            }
        }
    }
    return A;
}

}  // namespace detail

struct DegreeSolveStats {
    int m = 0;
    double condition = 0.0;
};

// Solve the base quadratic equation sum_n dV2/dx_n (B row_n . x) = -phi.
inline Poly3 solve_v2(const TaylorField& field, const PhiFunction& phi) {
    if (!is_hurwitz(field.linear))
        throw RecursionError(
            "solve_v2: linearized field is not Hurwitz; no asymptotically stable "
            "equilibrium at the origin");
    const auto basis = monomial_basis(2);
    const Eigen::MatrixXd A = detail::degree_operator(field.linear, 2, basis);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(long(basis.size()));
    for (int i = 0; i < int(basis.size()); ++i) b[i] = -phi.quad.coeff(basis[std::size_t(i)]);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    if (lu.rcond() < 1e-14)
        throw RecursionError("solve_v2: singular quadratic system (resonance)");
    const Eigen::VectorXd sol = lu.solve(b);
    Poly3 v2;
    for (int i = 0; i < int(basis.size()); ++i) v2.accumulate(basis[std::size_t(i)], sol[i]);
    return v2;
}

// Degree-m step of the recursion, m >= 3. previous_slices holds V2..V_{m-1}
// (index k-2 is degree k). The right-hand side collects the degree-m part of
// phi*V_{m-2} minus the degree-m part of sum_n sum_{i>=2} dV_{m+1-i}/dx_n * F'_{n,i}.
inline Poly3 solve_vm(const TaylorField& field, const PhiFunction& phi,
                      const std::vector<Poly3>& previous_slices, int m,
                      DegreeSolveStats* stats = nullptr) {
    if (m < 3) throw RecursionError("solve_vm: m must be >= 3");
    if (int(previous_slices.size()) < m - 2)
        throw RecursionError("solve_vm: missing previous slices for m=" + std::to_string(m));

    Poly3 rhs_poly;
    if (m >= 4)
        rhs_poly = degree_slice(mul(phi.quad, previous_slices[std::size_t(m - 4)], m), m);
    for (int n = 0; n < 3; ++n) {
        for (int i = 2; i <= m - 1; ++i) {
            const Poly3* fni = field.slice(n, i);
            if (!fni || fni->empty()) continue;
            const int deg_v = m + 1 - i;
            if (deg_v < 2) continue;
            const Poly3 dv = partial(previous_slices[std::size_t(deg_v - 2)], Axis(n));
            const Poly3 prod = mul(dv, *fni, m);
            for (const auto& [e, c] : degree_slice(prod, m).terms()) rhs_poly.accumulate(e, -c);
        }
    }

    const auto basis = monomial_basis(m);
    const Eigen::MatrixXd A = detail::degree_operator(field.linear, m, basis);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(long(basis.size()));
    for (int i = 0; i < int(basis.size()); ++i) b[i] = rhs_poly.coeff(basis[std::size_t(i)]);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    const double rc = lu.rcond();
    if (rc < 1e-14)
        throw RecursionError("solve_vm: near-singular degree operator at m=" + std::to_string(m) +
                             " (eigenvalue-sum resonance)");
    if (stats) {
        stats->m = m;
        stats->condition = 1.0 / rc;
    }
    const Eigen::VectorXd sol = lu.solve(b);
    Poly3 vm;
    for (int i = 0; i < int(basis.size()); ++i) vm.accumulate(basis[std::size_t(i)], sol[i]);
    return vm;
}

// Assembled truncated energy function. vdot is the full product
// grad(V) . F' (degree M + truncation - 1, no truncation of the product);
// point evaluations of the derivative use the factored form, which is
// algebraically identical and much cheaper than the expanded polynomial.
class EnergyFunction {
public:
    EnergyFunction() = default;

    EnergyFunction(TaylorField field, PhiFunction phi, std::vector<Poly3> slices)
        : field_(std::move(field)), phi_(std::move(phi)), slices_(std::move(slices)) {
        for (const Poly3& s : slices_)
            for (const auto& [e, c] : s.terms()) v_.accumulate(e, c);
        const int cap = order() + field_.truncation - 1;
        for (int n = 0; n < 3; ++n) {
            grad_[std::size_t(n)] = partial(v_, Axis(n));
            vdot_ = add(vdot_, mul(grad_[std::size_t(n)], field_.equation(n), cap));
        }
        compile();
    }

    int order() const { return int(slices_.size()) + 1; }  // slices are degrees 2..M
    const std::vector<Poly3>& slices() const { return slices_; }
    const Poly3& v() const { return v_; }
    const Poly3& vdot() const { return vdot_; }
    const Poly3& grad(int axis) const { return grad_[std::size_t(axis)]; }
    const TaylorField& field() const { return field_; }
    const PhiFunction& phi() const { return phi_; }

    // V2 as a symmetric quadratic form.
    Eigen::Matrix3d v2_form() const {
        Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
        for (const auto& [e, c] : slices_.front().terms()) {
            int i = -1, j = -1;
            const int idx[3] = {e.d, e.w, e.g};
            for (int ax = 0; ax < 3; ++ax) {
                if (idx[ax] == 2) i = j = ax;
                if (idx[ax] == 1) (i < 0 ? i : j) = ax;
            }
            if (i == j)
                m(i, i) = c;
            else {
                m(i, j) = c / 2.0;
                m(j, i) = c / 2.0;
            }
        }
        return m;
    }

    double value(const State& x) const {
        PowerTable pw = make_power_table();
        pw.set_point(x.delta, x.omega, x.omega_g);
        return cv_.eval_with(pw.powers());
    }

    // d/dt of V along F', evaluated as grad(V) . F'.
    double vdot_value(const State& x) const {
        PowerTable pw = make_power_table();
        pw.set_point(x.delta, x.omega, x.omega_g);
        return vdot_with(pw);
    }

    // V restricted to slices 2..M-2; the gap to V flags where the series
    // stops converging and the truncated function loses meaning.
    double value_low(const State& x) const {
        PowerTable pw = make_power_table();
        pw.set_point(x.delta, x.omega, x.omega_g);
        return cv_low_.eval_with(pw.powers());
    }

    PowerTable make_power_table() const {
        return PowerTable(max_deg_[0], max_deg_[1], max_deg_[2]);
    }
    double value_with(const PowerTable& pw) const { return cv_.eval_with(pw.powers()); }
    double value_low_with(const PowerTable& pw) const { return cv_low_.eval_with(pw.powers()); }
    double vdot_with(const PowerTable& pw) const {
        double acc = 0.0;
        for (int n = 0; n < 3; ++n)
            acc += cgrad_[std::size_t(n)].eval_with(pw.powers()) *
                   cfield_[std::size_t(n)].eval_with(pw.powers());
        return acc;
    }

    std::array<double, 3> grad_value(const State& x) const {
        PowerTable pw = make_power_table();
        pw.set_point(x.delta, x.omega, x.omega_g);
        return {cgrad_[0].eval_with(pw.powers()), cgrad_[1].eval_with(pw.powers()),
                cgrad_[2].eval_with(pw.powers())};
    }

    // Gradient of vdot via the product rule: Hess(V) F' + (dF'/dx)^T grad(V).
    std::array<double, 3> vdot_grad_value(const State& x) const {
        PowerTable pw = make_power_table();
        pw.set_point(x.delta, x.omega, x.omega_g);
        double f[3], gv[3];
        for (int n = 0; n < 3; ++n) {
            f[n] = cfield_[std::size_t(n)].eval_with(pw.powers());
            gv[n] = cgrad_[std::size_t(n)].eval_with(pw.powers());
        }
        std::array<double, 3> out{0.0, 0.0, 0.0};
        for (int k = 0; k < 3; ++k) {
            double acc = 0.0;
            for (int n = 0; n < 3; ++n)
                acc += chess_[std::size_t(n)][std::size_t(k)].eval_with(pw.powers()) * f[n] +
                       cjac_[std::size_t(n)][std::size_t(k)].eval_with(pw.powers()) * gv[n];
            out[std::size_t(k)] = acc;
        }
        return out;
    }

private:
    void compile() {
        cv_ = CompiledPoly(v_);
        Poly3 vlow;
        for (std::size_t i = 0; i + 2 < slices_.size(); ++i)
            for (const auto& [e, c] : slices_[i].terms()) vlow.accumulate(e, c);
        cv_low_ = CompiledPoly(vlow);
        for (int n = 0; n < 3; ++n) {
            cgrad_[std::size_t(n)] = CompiledPoly(grad_[std::size_t(n)]);
            const Poly3 fe = field_.equation(n);
            cfield_[std::size_t(n)] = CompiledPoly(fe);
            for (int k = 0; k < 3; ++k) {
                chess_[std::size_t(n)][std::size_t(k)] =
                    CompiledPoly(partial(grad_[std::size_t(n)], Axis(k)));
                cjac_[std::size_t(n)][std::size_t(k)] = CompiledPoly(partial(fe, Axis(k)));
            }
        }
        max_deg_ = {0, 0, 0};
        auto grow = [&](const CompiledPoly& c) {
            for (int ax = 0; ax < 3; ++ax)
                max_deg_[std::size_t(ax)] = std::max(max_deg_[std::size_t(ax)], c.max_degree(ax));
        };
        grow(cv_);
        grow(cv_low_);
        for (int n = 0; n < 3; ++n) {
            grow(cgrad_[std::size_t(n)]);
            grow(cfield_[std::size_t(n)]);
            for (int k = 0; k < 3; ++k) {
                grow(chess_[std::size_t(n)][std::size_t(k)]);
                grow(cjac_[std::size_t(n)][std::size_t(k)]);
            }
        }
    }

    TaylorField field_;
    PhiFunction phi_;
    std::vector<Poly3> slices_;
    Poly3 v_;
    Poly3 vdot_;
    std::array<Poly3, 3> grad_;

    CompiledPoly cv_, cv_low_;
    std::array<CompiledPoly, 3> cgrad_, cfield_;
    std::array<std::array<CompiledPoly, 3>, 3> chess_, cjac_;
    std::array<int, 3> max_deg_{0, 0, 0};
};

struct BuildReport {
    std::vector<DegreeSolveStats> degrees;
    std::vector<double> residual_slice_max;  // max |coeff| of the Zubov residual, degrees 2..M
    double max_condition = 0.0;
};

// Run the recursion up to degree M and assemble V and its derivative.
// The Zubov residual r = vdot + phi*(1 - V) is recorded per degree; by
// construction its slices of degree <= M vanish.
inline EnergyFunction build_energy(const TaylorField& field, const PhiFunction& phi, int M,
                                   BuildReport* report = nullptr) {
    if (M < 2) throw RecursionError("build_energy: M must be >= 2");
    if (!phi.positive_definite()) {
        if (!phi.positive_semidefinite())
            throw RecursionError("build_energy: phi is not positive (semi)definite");
        std::cerr << "[gflc] warning: phi is only positive semidefinite; the energy "
                     "construction proceeds but positivity of V is not guaranteed\n";
    }
    std::vector<Poly3> slices;
    slices.push_back(solve_v2(field, phi));
    for (int m = 3; m <= M; ++m) {
        DegreeSolveStats stats;
        slices.push_back(solve_vm(field, phi, slices, m, &stats));
        if (report) {
            report->degrees.push_back(stats);
            report->max_condition = std::max(report->max_condition, stats.condition);
        }
    }
    EnergyFunction energy(field, phi, std::move(slices));
    if (report) {
        const Poly3 residual =
            add(energy.vdot(), sub(phi.quad, mul(phi.quad, energy.v(),
                                                 M + field.truncation + 2)));
        report->residual_slice_max.clear();
        for (int m = 2; m <= M; ++m) {
            double mx = 0.0;
            for (const auto& [e, c] : degree_slice(residual, m).terms())
                mx = std::max(mx, std::abs(c));
            report->residual_slice_max.push_back(mx);
        }
    }
    return energy;
}

// ---------------------------------------------------------------------------
// Energy-function export: a text document with M, the phi id, the equilibrium
// shift it was built at, and all slice coefficients in the poly dump format.
// Re-importable for domain queries without re-running the recursion.
// ---------------------------------------------------------------------------

inline std::string export_energy(const EnergyFunction& e, double delta_sep, double omega_g_sep) {
    std::ostringstream os;
    os.precision(17);
    os << "zubov-energy v1\n";
    os << "M " << e.order() << "\n";
    os << "phi " << e.phi().id << "\n";
    if (e.phi().id == 0) {
        os << "phi-poly\n" << dump(e.phi().quad) << "end\n";
    }
    os << "shift " << delta_sep << " " << omega_g_sep << "\n";
    for (int m = 2; m <= e.order(); ++m) {
        os << "slice " << m << "\n";
        os << dump(e.slices()[std::size_t(m - 2)]);
        os << "end\n";
    }
    return os.str();
}

struct ImportedEnergy {
    int M = 0;
    int phi_id = 0;
    std::optional<Poly3> phi_poly;
    double delta_sep = 0.0;
    double omega_g_sep = 0.0;
    std::vector<Poly3> slices;
};

inline ImportedEnergy import_energy(std::istream& in) {
    ImportedEnergy r;
    std::string line;
    if (!std::getline(in, line) || line != "zubov-energy v1")
        throw ConfigError("import_energy: not a zubov-energy v1 document");
    auto read_block = [&]() {
        std::string block;
        while (std::getline(in, line) && line != "end") block += line + "\n";
        return block;
    };
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "M")
            ls >> r.M;
        else if (key == "phi")
            ls >> r.phi_id;
        else if (key == "phi-poly")
            r.phi_poly = parse_poly(read_block());
        else if (key == "shift")
            ls >> r.delta_sep >> r.omega_g_sep;
        else if (key == "slice") {
            int m = 0;
            ls >> m;
            const Poly3 p = parse_poly(read_block());
            if (m != int(r.slices.size()) + 2)
                throw ConfigError("import_energy: slice degrees out of order");
            for (const auto& [e, c] : p.terms())
                if (e.total_degree() != m)
                    throw ConfigError("import_energy: slice " + std::to_string(m) +
                                      " is not homogeneous");
            r.slices.push_back(p);
        } else {
            throw ConfigError("import_energy: unknown directive '" + key + "'");
        }
    }
    if (r.M < 2 || int(r.slices.size()) != r.M - 1)
        throw ConfigError("import_energy: slice count does not match M");
    return r;
}

}  // namespace gflc
