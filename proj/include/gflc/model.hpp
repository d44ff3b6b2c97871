#pragma once

// Circuit reduction and the combined converter/low-inertia-grid ODE.
//
// The physical system is a PLL-synchronized current-source converter tied
// through connection impedances to a swing-equation grid with a constant-
// impedance load; a fault shunts the load with a resistance. Everything
// below reduces that circuit to three complex equivalents and a 3-state ODE
// in (delta, omega, omega_g) = (angle difference, PLL speed deviation from
// the grid, grid speed deviation), expressed relative to the post-fault
// stable equilibrium.

#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "gflc/errors.hpp"

namespace gflc {

// Test-system constants. Raw form carries SI units straight from a parameter
// file; to_per_unit() normalizes onto the system base (see below).
struct SystemParams {
    double base_power = 0.0;    // VA
    double base_voltage = 0.0;  // V
    double omega0 = 0.0;        // rad/s

    double rc = 0.0, lc = 0.0;  // converter-side R (ohm) / L (H); p.u. R / X when normalized
    double rg = 0.0, lg = 0.0;  // grid-side
    double rl = 0.0, ll = 0.0;  // load (R parallel L)
    double rf = 0.0;            // fault resistance

    double sg = 0.0, sc = 0.0;  // machine ratings (VA); scale jg/dg/ic onto the system base
    double p_ma_g = 0.0;        // SG mechanical power (W; p.u. when normalized)
    double ug = 0.0;            // SG terminal voltage, p.u.
    double jg = 0.0, dg = 0.0;  // SG inertia (s) and damping, machine base when raw
    double ki = 0.0, kp = 0.0;  // PLL gains
    double ic = 0.0;            // converter current magnitude, p.u. (machine base when raw)
    double phi1 = 0.0;          // current angle to the converter d axis, rad

    bool per_unit = false;
};

// Normalize onto (base_power, base_voltage): impedances over Zb = U^2/S with
// X = omega0*L, powers over base_power, and machine-referred quantities
// (jg, dg, ic) rescaled by the machine ratings. The machine-base handling is
// what reproduces the reference ODE-parameter values; it is isolated here so
// the convention can be adjusted without touching the ODE assembly.
inline SystemParams to_per_unit(const SystemParams& raw) {
    if (raw.per_unit) return raw;
    if (raw.base_power <= 0 || raw.base_voltage <= 0 || raw.omega0 <= 0)
        throw ConfigError("to_per_unit: base power/voltage/frequency must be positive");
    if (raw.jg <= 0) throw ConfigError("to_per_unit: jg must be positive");
    if (raw.ki <= 0 || raw.kp < 0) throw ConfigError("to_per_unit: need ki > 0 and kp >= 0");
    if (raw.ic < 0) throw ConfigError("to_per_unit: ic must be non-negative");

    const double zb = raw.base_voltage * raw.base_voltage / raw.base_power;
    const double sg = raw.sg > 0 ? raw.sg : raw.base_power;
    const double sc = raw.sc > 0 ? raw.sc : raw.base_power;

    SystemParams pu = raw;
    pu.rc = raw.rc / zb;
    pu.lc = raw.omega0 * raw.lc / zb;
    pu.rg = raw.rg / zb;
    pu.lg = raw.omega0 * raw.lg / zb;
    pu.rl = raw.rl / zb;
    pu.ll = raw.omega0 * raw.ll / zb;
    pu.rf = raw.rf / zb;
    pu.p_ma_g = raw.p_ma_g / raw.base_power;
    pu.jg = raw.jg * raw.base_power / sg;
    pu.dg = raw.dg * raw.base_power / sg;
    pu.ic = raw.ic * sc / raw.base_power;
    pu.per_unit = true;
    return pu;
}

inline std::complex<double> z_converter(const SystemParams& pu) { return {pu.rc, pu.lc}; }
inline std::complex<double> z_grid(const SystemParams& pu) { return {pu.rg, pu.lg}; }

// The load is a resistance in parallel with a reactance.
inline std::complex<double> z_load(const SystemParams& pu) {
    const std::complex<double> jx(0.0, pu.ll);
    return pu.rl * jx / (pu.rl + jx);
}

enum class NetworkMode { normal, faulted };

// One network configuration: the effective load impedance seen at the load
// bus, equal to the load itself in normal operation and to load // rf while
// the fault is on.
struct NetworkConfig {
    NetworkMode mode = NetworkMode::normal;
    std::complex<double> zl_eff;

    static NetworkConfig normal(const SystemParams& pu) {
        return {NetworkMode::normal, z_load(pu)};
    }
    static NetworkConfig faulted(const SystemParams& pu) {
        const std::complex<double> zl = z_load(pu);
        return {NetworkMode::faulted, zl * pu.rf / (zl + pu.rf)};
    }
    // Fault resistance given in ohms rather than the configured one.
    static NetworkConfig faulted_ohm(const SystemParams& pu, double rf_ohm) {
        SystemParams tweaked = pu;
        tweaked.rf = rf_ohm / (pu.base_voltage * pu.base_voltage / pu.base_power);
        return faulted(tweaked);
    }
};

// The three circuit equivalents, carried as magnitude + angle:
//   zeq1 = 1/(zg + zl'), zeq2 = zl'/(zg + zl'), zeq3 = zl'*zg/(zl'+zg) + zc.
struct Equivalents {
    double z1 = 0.0, t1 = 0.0;
    double z2 = 0.0, t2 = 0.0;
    double z3 = 0.0, t3 = 0.0;
};

inline Equivalents equivalents(const SystemParams& pu, const NetworkConfig& config) {
    const std::complex<double> zg = z_grid(pu);
    const std::complex<double> denom = zg + config.zl_eff;
    if (std::abs(denom) < 1e-12)
        throw ModelError("equivalents: degenerate network, zg + zl' is singular");
    const std::complex<double> zeq1 = 1.0 / denom;
    const std::complex<double> zeq2 = config.zl_eff / denom;
    const std::complex<double> zeq3 = config.zl_eff * zg / denom + z_converter(pu);
    return Equivalents{std::abs(zeq1), std::arg(zeq1), std::abs(zeq2),
                       std::arg(zeq2), std::abs(zeq3), std::arg(zeq3)};
}

// State in shifted coordinates: the post-fault stable equilibrium is the
// origin. delta is the converter-to-grid angle minus delta_sep, omega is the
// PLL speed minus the grid speed, omega_g the grid speed deviation minus
// omega_g_sep.
struct State {
    double delta = 0.0;
    double omega = 0.0;
    double omega_g = 0.0;

    std::array<double, 3> as_array() const { return {delta, omega, omega_g}; }

    friend State operator+(State a, const State& b) {
        return {a.delta + b.delta, a.omega + b.omega, a.omega_g + b.omega_g};
    }
    friend State operator*(double s, const State& a) {
        return {s * a.delta, s * a.omega, s * a.omega_g};
    }
    double norm() const { return std::sqrt(delta * delta + omega * omega + omega_g * omega_g); }
};

// Coefficients of the reduced 3-state ODE:
//   d(delta)/dt   = omega
//   d(omega)/dt   = p_ma_c - p_el_c*sin(delta + delta_sep + phi - theta2)
//                   - omega*d_c*cos(delta + delta_sep - theta2) + d_g*(omega_g + omega_g_sep)
//   d(omega_g)/dt = p_ma_g + p_el_g*cos(theta2 + delta + delta_sep + phi1)
//                   - d_g*(omega_g + omega_g_sep)
// assembled from the swing equation, the power flow and the PLL dynamics.
struct OdeParams {
    double p_ma_g = 0.0;
    double p_el_g = 0.0;
    double d_g = 0.0;
    double p_ma_c = 0.0;
    double p_el_c = 0.0;
    double d_c = 0.0;
    double phi = 0.0;
    double theta2 = 0.0;
    double phi1 = 0.0;

    // Equilibrium shift; NaN until find_equilibrium fills it (or the caller
    // copies the post-fault shift onto an on-fault parameter set).
    double delta_sep = std::numeric_limits<double>::quiet_NaN();
    double omega_g_sep = std::numeric_limits<double>::quiet_NaN();

    bool shifted() const { return std::isfinite(delta_sep) && std::isfinite(omega_g_sep); }

    OdeParams with_shift_from(const OdeParams& other) const {
        OdeParams r = *this;
        r.delta_sep = other.delta_sep;
        r.omega_g_sep = other.omega_g_sep;
        return r;
    }
};

inline OdeParams ode_params(const SystemParams& pu, const Equivalents& eq) {
    OdeParams p;
    const double j = pu.jg;
    p.theta2 = eq.t2;
    p.phi1 = pu.phi1;
    p.p_ma_g = (pu.p_ma_g - eq.z1 * pu.ug * pu.ug * std::cos(eq.t1)) / j;
    p.p_el_g = eq.z2 * pu.ug * pu.ic / j;
    p.d_g = pu.dg / j;
    // The PLL-equation constant also carries the grid-side balance, so the
    // equilibrium of the third equation coincides with U_cq = 0.
    p.p_ma_c = pu.ki * eq.z3 * pu.ic * std::sin(eq.t3 + pu.phi1) -
               (pu.p_ma_g - eq.z1 * pu.ug * pu.ug * std::cos(eq.t1)) / j;
    const double psi = 2.0 * eq.t2 + pu.phi1;
    p.p_el_c = (eq.z2 * pu.ug / j) *
               std::sqrt(pu.ki * j * pu.ki * j + pu.ic * pu.ic -
                         2.0 * pu.ki * j * pu.ic * std::sin(psi));
    p.phi = std::atan2(pu.ic * std::cos(psi), pu.ki * j - pu.ic * std::sin(psi));
    p.d_c = pu.kp * eq.z2 * pu.ug;
    return p;
}

// Right-hand side of the ODE in shifted coordinates. Pure function of state.
inline State rhs(const State& x, const OdeParams& p) {
    const double da = x.delta + p.delta_sep;
    const double og = x.omega_g + p.omega_g_sep;
    State d;
    d.delta = x.omega;
    d.omega = p.p_ma_c - p.p_el_c * std::sin(da + p.phi - p.theta2) -
              x.omega * p.d_c * std::cos(da - p.theta2) + p.d_g * og;
    d.omega_g = p.p_ma_g + p.p_el_g * std::cos(p.theta2 + da + p.phi1) - p.d_g * og;
    return d;
}

// Analytic Jacobian of rhs at a shifted state.
inline Eigen::Matrix3d rhs_jacobian(const State& x, const OdeParams& p) {
    const double da = x.delta + p.delta_sep;
    Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
    J(0, 1) = 1.0;
    J(1, 0) = -p.p_el_c * std::cos(da + p.phi - p.theta2) +
              x.omega * p.d_c * std::sin(da - p.theta2);
    J(1, 1) = -p.d_c * std::cos(da - p.theta2);
    J(1, 2) = p.d_g;
    J(2, 0) = -p.p_el_g * std::sin(p.theta2 + da + p.phi1);
    J(2, 2) = -p.d_g;
    return J;
}

inline bool is_hurwitz(const Eigen::Matrix3d& m, double margin = 0.0) {
    Eigen::EigenSolver<Eigen::Matrix3d> es(m, false);
    for (int i = 0; i < 3; ++i)
        if (es.eigenvalues()[i].real() >= -margin) return false;
    return true;
}

// Solve {d(omega)/dt = 0, d(omega_g)/dt = 0} with omega = 0 for
// (delta_sep, omega_g_sep) by Newton iteration from 16 seeds over (-pi, pi],
// keep the stable branch (Hurwitz Jacobian), tie-break by smallest
// |delta_sep|. The grid equilibrium speed is usually ~0 when the SG dispatch
// is power-flow consistent, but the solver does not rely on that.
inline OdeParams find_equilibrium(OdeParams p) {
    constexpr int kSeeds = 16;
    constexpr int kMaxIter = 100;
    constexpr double kTol = 1e-12;

    bool found = false;
    double best_dsep = 0.0, best_ogsep = 0.0;

    for (int s = 0; s < kSeeds; ++s) {
        double dl = -M_PI + (s + 0.5) * 2.0 * M_PI / kSeeds;
        double og = 0.0;
        bool converged = false;
        for (int it = 0; it < kMaxIter; ++it) {
            const double r1 = p.p_ma_c - p.p_el_c * std::sin(dl + p.phi - p.theta2) + p.d_g * og;
            const double r2 = p.p_ma_g + p.p_el_g * std::cos(p.theta2 + dl + p.phi1) - p.d_g * og;
            if (std::abs(r1) < kTol && std::abs(r2) < kTol) {
                converged = true;
                break;
            }
            const double a11 = -p.p_el_c * std::cos(dl + p.phi - p.theta2);
            const double a12 = p.d_g;
            const double a21 = -p.p_el_g * std::sin(p.theta2 + dl + p.phi1);
            const double a22 = -p.d_g;
            const double det = a11 * a22 - a12 * a21;
            if (std::abs(det) < 1e-14) break;
            dl -= (a22 * r1 - a12 * r2) / det;
            og -= (-a21 * r1 + a11 * r2) / det;
            if (!std::isfinite(dl) || !std::isfinite(og)) break;
        }
        if (!converged) continue;
        dl = std::remainder(dl, 2.0 * M_PI);

        OdeParams cand = p;
        cand.delta_sep = dl;
        cand.omega_g_sep = og;
        if (!is_hurwitz(rhs_jacobian(State{}, cand))) continue;
        if (!found || std::abs(dl) < std::abs(best_dsep)) {
            found = true;
            best_dsep = dl;
            best_ogsep = og;
        }
    }
    if (!found)
        throw ModelError(
            "find_equilibrium: no stable equilibrium from the seed grid "
            "(fault too severe for a post-fault SEP)");
    p.delta_sep = best_dsep;
    p.omega_g_sep = best_ogsep;
    return p;
}

// q-axis terminal voltage of the converter bus at an absolute converter-to-
// grid angle.
inline double u_cq_abs(double delta_abs, const Equivalents& eq, const SystemParams& pu) {
    return eq.z2 * pu.ug * std::sin(eq.t2 - delta_abs) + eq.z3 * pu.ic * std::sin(eq.t3 + pu.phi1);
}

// Shifted-state convenience overload; shift carries delta_sep.
inline double u_cq(const State& x, const Equivalents& eq, const SystemParams& pu, double delta_sep) {
    return u_cq_abs(x.delta + delta_sep, eq, pu);
}

// PLL output-frequency jump when the network switches between two
// configurations at fixed angle. The PLL speed is the PI output
// kp*U_cq + ki*Int(U_cq), so it steps with U_cq across the switching instant:
//   omega <- omega + kp*(U_cq_after - U_cq_before).
inline State pll_jump(const State& x, const Equivalents& before, const Equivalents& after,
                      const SystemParams& pu, double delta_sep) {
    State r = x;
    r.omega += pu.kp * (u_cq(x, after, pu, delta_sep) - u_cq(x, before, pu, delta_sep));
    return r;
}

// SG dispatch that balances the no-fault power flow at the PLL equilibrium
// (gives omega_g_sep = 0). Used when sweeping converter operating points,
// where the SG output must follow the converter dispatch.
inline double consistent_p_ma_g(const SystemParams& pu) {
    const Equivalents eq = equivalents(pu, NetworkConfig::normal(pu));
    const double s = -eq.z3 * pu.ic * std::sin(eq.t3 + pu.phi1) / (eq.z2 * pu.ug);
    if (std::abs(s) > 1.0)
        throw ModelError("consistent_p_ma_g: no PLL equilibrium for this operating point");
    const double dsep = std::remainder(eq.t2 - std::asin(s), 2.0 * M_PI);
    return eq.z1 * pu.ug * pu.ug * std::cos(eq.t1) -
           eq.z2 * pu.ug * pu.ic * std::cos(eq.t2 + dsep + pu.phi1);
}

// ---------------------------------------------------------------------------
// Parameter file: flat "key value" (or "key = value") lines, SI units,
// '#' comments. Unknown keys are rejected.
// ---------------------------------------------------------------------------

inline SystemParams load_params(std::istream& in, const std::string& origin = "<stream>") {
    std::map<std::string, double*> keys;
    SystemParams p;
    keys["sb"] = &p.base_power;
    keys["ub"] = &p.base_voltage;
    keys["omega0"] = &p.omega0;
    keys["rc"] = &p.rc;
    keys["lc"] = &p.lc;
    keys["rg"] = &p.rg;
    keys["lg"] = &p.lg;
    keys["rl"] = &p.rl;
    keys["ll"] = &p.ll;
    keys["rf"] = &p.rf;
    keys["sg"] = &p.sg;
    keys["sc"] = &p.sc;
    keys["pmag"] = &p.p_ma_g;
    keys["ug"] = &p.ug;
    keys["jg"] = &p.jg;
    keys["dg"] = &p.dg;
    keys["ki"] = &p.ki;
    keys["kp"] = &p.kp;
    keys["ic"] = &p.ic;
    keys["phi1"] = &p.phi1;

    std::map<std::string, bool> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        std::string rest;
        std::getline(ls, rest);
        // optional '=' between key and value
        const auto eq = rest.find('=');
        if (eq != std::string::npos) rest.erase(eq, 1);
        std::istringstream vs(rest);
        double value = 0.0;
        std::string trailing;
        if (!(vs >> value) || (vs >> trailing)) {
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected 'key value', got: " + line);
        }
        auto it = keys.find(key);
        if (it == keys.end())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (seen[key])
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        seen[key] = true;
        *it->second = value;
    }
    static const char* required[] = {"sb", "ub", "omega0", "rc", "lc", "rg", "lg",
                                     "rl", "ll", "rf", "pmag", "ug", "jg", "dg",
                                     "ki", "kp", "ic", "phi1"};
    for (const char* k : required)
        if (!seen[k]) throw ConfigError(origin + ": missing required key '" + k + "'");
    return p;
}

inline SystemParams load_params_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open parameter file: " + path);
    return load_params(in, path);
}

// Convenience bundle for one study case: both network configurations, their
// ODE parameter sets in the shared post-fault coordinate frame, and the
// equilibrium shift.
struct StudyCase {
    SystemParams pu;
    Equivalents eq_normal;
    Equivalents eq_fault;
    OdeParams ode_normal;  // post-fault (= pre-fault) system, shift solved
    OdeParams ode_fault;   // on-fault system, same coordinate shift
};

inline StudyCase make_study_case(const SystemParams& params) {
    StudyCase sc;
    sc.pu = to_per_unit(params);
    sc.eq_normal = equivalents(sc.pu, NetworkConfig::normal(sc.pu));
    sc.eq_fault = equivalents(sc.pu, NetworkConfig::faulted(sc.pu));
    sc.ode_normal = find_equilibrium(ode_params(sc.pu, sc.eq_normal));
    sc.ode_fault = ode_params(sc.pu, sc.eq_fault).with_shift_from(sc.ode_normal);
    return sc;
}

}  // namespace gflc
