#include "mfg/efficiency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mfg {

namespace {

constexpr double kTimeSlack = 1e-12;

bool in_window(double t, double a, double b, double span) {
    return t >= a - kTimeSlack * span && t <= b + kTimeSlack * span;
}

double sup_abs(const Field& f) {
    double s = 0.0;
    for (double v : f)
        s = std::max(s, std::abs(v));
    return s;
}

void check_epsilon(const Grid& g, double eps, const char* op) {
    if (!(eps > 0.0 && eps < 0.5 * (g.T - g.t0)))
        throw Error(std::string(op) + ": epsilon must lie in (0, (T - t0) / 2)");
}

void check_positive_after(const MFGSolution& sol, const Grid& g, double t_from, const char* op) {
    for (int k = 0; k <= g.nt; ++k) {
        if (!in_window(g.time(k), t_from, g.T, g.T - g.t0))
            continue;
        for (double v : sol.m.slice(k))
            if (!(v > 0.0))
                throw DensityError(std::string(op) + ": density vanishes at slice " + std::to_string(k), k);
    }
}

// Build mu from per-level residual fields, then beta, tau and diagnostics.
Perturbation finish_perturbation(const MFGSolution& sol, const Problem& problem, double eps,
                                 PerturbationVariant variant, const std::vector<double>& gamma,
                                 const std::vector<Field>& resid, std::span<const double> weight_level_T,
                                 double noise_floor) {
    const Grid& g = problem.grid;
    Perturbation p;
    p.variant = variant;
    p.epsilon = eps;
    p.gamma = gamma;
    p.mu = ScalarPath(g);

    double rmax = 0.0;
    for (const Field& r : resid)
        rmax = std::max(rmax, sup_abs(r));
    p.trivial = rmax <= noise_floor;

    if (!p.trivial) {
        for (int k = 0; k <= g.nt; ++k) {
            if (gamma[k] == 0.0)
                continue;
            const Field& r = resid[variant == PerturbationVariant::running ? k : 0];
            for (std::size_t i = 0; i < g.points(); ++i) {
                const double mk = variant == PerturbationVariant::running ? sol.m(k, i) : weight_level_T[i];
                p.mu(k, i) = -gamma[k] * mk * r[i];
            }
        }
    }
    p.beta = reconstruct_flux_1d(p.mu, g);
    p.continuity_residual = continuity_residual(p.mu, p.beta, g);

    p.tau = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= g.nt; ++k)
        for (std::size_t i = 0; i < g.points(); ++i)
            if (p.mu(k, i) < 0.0)
                p.tau = std::min(p.tau, sol.m(k, i) / (-2.0 * p.mu(k, i)));
    return p;
}

double coupling_scale(const MFGSolution& sol, const Problem& problem, bool terminal) {
    const Grid& g = problem.grid;
    double s = 0.0;
    if (terminal) {
        s = sup_abs(problem.terminal.field(g, sol.m.slice(g.nt)));
    } else {
        for (int k = 0; k <= g.nt; ++k)
            s = std::max(s, sup_abs(problem.coupling.field(g, sol.m.slice(k))));
    }
    return 1e-13 * (1.0 + s);
}

} // namespace

double default_epsilon(const Grid& g) { return std::max(4.0 * g.dt, (g.T - g.t0) / 16.0); }

double social_cost(const MFGSolution& sol, const Problem& problem) {
    return planner_cost(sol.m, sol.alpha_star, problem);
}

Field residual_F(const Coupling& C, const Grid& g, std::span<const double> m) { return C.residual(g, m); }

Field residual_G(const TerminalCost& G, const Grid& g, std::span<const double> m) { return G.residual(g, m); }

double residual_energy(const MFGSolution& sol, const Problem& problem, double t_from, double t_to) {
    const Grid& g = problem.grid;
    double acc = 0.0;
    for (int k = 1; k <= g.nt; ++k) {
        if (!in_window(g.time(k), t_from, t_to, g.T - g.t0))
            continue;
        Field r = residual_F(problem.coupling, g, sol.m.slice(k));
        double s = 0.0;
        for (double v : r)
            s += v * v;
        acc += s;
    }
    return acc * g.dt * g.cell_volume();
}

LowerBoundIntegrands lb_integrands(const MFGSolution& sol, const Problem& problem, double eps) {
    const Grid& g = problem.grid;
    check_epsilon(g, eps, "lb_integrands");
    LowerBoundIntegrands lb;
    lb.lb_F = residual_energy(sol, problem, g.t0 + eps, g.T - eps);
    Field r = residual_G(problem.terminal, g, sol.m.slice(g.nt));
    double s = 0.0;
    for (double v : r)
        s += v * v;
    lb.lb_G = s * g.cell_volume();
    return lb;
}

double ub_norm(const MFGSolution& sol, const Problem& problem) {
    const Grid& g = problem.grid;
    const double full = residual_energy(sol, problem, g.t0, g.T);
    Field r = residual_G(problem.terminal, g, sol.m.slice(g.nt));
    double s = 0.0;
    for (double v : r)
        s += v * v;
    return std::sqrt(full + s * g.cell_volume());
}

const char* to_string(PerturbationVariant v) {
    return v == PerturbationVariant::running ? "running" : "terminal";
}

double ramp_running(double t, double t0, double T, double eps) {
    const double s = t - t0;
    if (s <= 0.5 * eps)
        return 0.0;
    if (s <= eps)
        return 2.0 * (s - 0.5 * eps) / eps;
    if (t <= T - eps)
        return 1.0;
    return std::max(0.0, (T - t) / eps);
}

double ramp_terminal(double t, double T, double eps) {
    if (t < T - eps)
        return 0.0;
    if (t >= T)
        return 1.0;
    return std::min(1.0, (t - (T - eps)) / eps);
}

Perturbation build_perturbation_running(const MFGSolution& sol, const Problem& problem, double eps) {
    const Grid& g = problem.grid;
    require_1d(g, "build_perturbation_running");
    check_epsilon(g, eps, "build_perturbation_running");
    check_positive_after(sol, g, g.t0 + 0.5 * eps, "build_perturbation_running");
    std::vector<double> gamma(g.nt + 1);
    std::vector<Field> resid(g.nt + 1);
    for (int k = 0; k <= g.nt; ++k) {
        gamma[k] = ramp_running(g.time(k), g.t0, g.T, eps);
        resid[k] = residual_F(problem.coupling, g, sol.m.slice(k));
    }
    return finish_perturbation(sol, problem, eps, PerturbationVariant::running, gamma, resid, {},
                               coupling_scale(sol, problem, false));
}

Perturbation build_perturbation_terminal(const MFGSolution& sol, const Problem& problem, double eps) {
    const Grid& g = problem.grid;
    require_1d(g, "build_perturbation_terminal");
    check_epsilon(g, eps, "build_perturbation_terminal");
    check_positive_after(sol, g, g.T - eps, "build_perturbation_terminal");
    std::vector<double> gamma(g.nt + 1);
    for (int k = 0; k <= g.nt; ++k)
        gamma[k] = ramp_terminal(g.time(k), g.T, eps);
    std::vector<Field> resid{residual_G(problem.terminal, g, sol.m.slice(g.nt))};
    return finish_perturbation(sol, problem, eps, PerturbationVariant::terminal, gamma, resid,
                               sol.m.slice(g.nt), coupling_scale(sol, problem, true));
}

double phi_eval(const MFGSolution& sol, const Perturbation& pert, double h, const Problem& problem) {
    const Grid& g = problem.grid;
    if (!(h >= 0.0 && h <= pert.tau && std::isfinite(h)))
        throw Error("phi_eval: h outside [0, tau]");
    const std::size_t n = g.points();
    ScalarPath mh(g);
    VectorPath ah(g, Staggering::face);
    for (int k = 0; k <= g.nt; ++k) {
        for (std::size_t i = 0; i < n; ++i)
            mh(k, i) = sol.m(k, i) + h * pert.mu(k, i);
        if (k == 0)
            continue;
        auto m0 = sol.m.slice(k);
        auto mk = mh.slice(k);
        for (std::size_t i = 0; i < n; ++i) {
            const double a = sol.alpha_star(k, i);
            const double w = a * upwind(m0, i, n, a) + h * pert.beta(k, i);
            const double mu = upwind(mk, i, n, w);
            ah(k, i) = w == 0.0 ? 0.0 : w / mu;
        }
    }
    return planner_cost(DensityPath(std::move(mh), g), ah, problem);
}

CertificateResult certificate_details(const MFGSolution& sol, const Problem& problem, double eps,
                                      int h_samples) {
    require_1d(problem.grid, "certificate");
    if (h_samples < 2)
        throw Error("certificate: need at least 2 h samples");
    CertificateResult res;
    res.phi0 = social_cost(sol, problem);
    for (const Perturbation& p : {build_perturbation_running(sol, problem, eps),
                                  build_perturbation_terminal(sol, problem, eps)}) {
        CertificateSamples s;
        s.variant = p.variant;
        s.tau = p.tau;
        s.trivial = p.trivial || !std::isfinite(p.tau);
        if (!s.trivial) {
            const double lo = std::log(p.tau * 1e-4), hi = std::log(p.tau);
            for (int j = 0; j < h_samples; ++j) {
                const double h = j + 1 == h_samples ? p.tau : std::exp(lo + (hi - lo) * j / (h_samples - 1));
                const double phi = phi_eval(sol, p, h, problem);
                s.h.push_back(h);
                s.phi.push_back(phi);
                res.value = std::max(res.value, res.phi0 - phi);
            }
        }
        res.samples.push_back(std::move(s));
    }
    return res;
}

double certificate(const MFGSolution& sol, const Problem& problem, double eps, int h_samples) {
    return certificate_details(sol, problem, eps, h_samples).value;
}

DualityReport duality_check(const MFGSolution& mfg, const PlannerSolution& plan, const Problem& problem) {
    const Grid& g = problem.grid;
    require_1d(g, "duality_check");
    const std::size_t n = g.points();
    constexpr double C = 1.0;
    DualityReport r;
    double lhs = 0.0, rhs = 0.0;
    for (int k = 1; k <= g.nt; ++k) {
        auto m = mfg.m.slice(k);
        auto mh = plan.m_hat.slice(k);
        Field du = face_gradient(mfg.u.slice(k), g);
        Field duh = face_gradient(plan.u_hat.slice(k), g);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = (i + 1) % n;
            const double w = 0.5 * (m[i] + m[j]) + 0.5 * (mh[i] + mh[j]);
            const double d = du[i] - duh[i];
            lhs += w * d * d;
        }
        Field F = problem.coupling.field(g, m);
        Field Fh = problem.coupling.field(g, mh);
        Field Sh = problem.coupling.residual(g, mh);
        for (std::size_t i = 0; i < n; ++i)
            rhs -= (F[i] - Fh[i] - Sh[i]) * (m[i] - mh[i]);
    }
    lhs *= g.dt * g.dx / (2.0 * C);
    rhs *= g.dt * g.dx;
    auto mT = mfg.m.slice(g.nt);
    auto mhT = plan.m_hat.slice(g.nt);
    Field G = problem.terminal.field(g, mT);
    Field dG = delta_ghat(problem.terminal, g, mhT);
    double term = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        term += (G[i] - dG[i]) * (mT[i] - mhT[i]);
    rhs -= term * g.dx;
    r.lhs = lhs;
    r.rhs = rhs;
    r.slack = rhs - lhs;
    return r;
}

double holder_diagnostic(const MFGSolution& sol, const Problem& problem, double eps) {
    const Grid& g = problem.grid;
    if (!problem.coupling.x_free())
        throw Error("holder_diagnostic: coupling '" + problem.coupling.label() + "' depends on x");
    check_epsilon(g, eps, "holder_diagnostic");
    std::vector<double> t, f;
    const Point origin{0.0, 0.0};
    for (int k = 0; k <= g.nt; ++k) {
        if (!in_window(g.time(k), g.t0 + eps, g.T - eps, g.T - g.t0))
            continue;
        t.push_back(g.time(k));
        f.push_back(problem.coupling.eval(g, origin, sol.m.slice(k)));
    }
    double best = 0.0;
    for (std::size_t a = 0; a < t.size(); ++a)
        for (std::size_t b = a + 1; b < t.size(); ++b)
            best = std::max(best, std::abs(f[b] - f[a]) / std::sqrt(t[b] - t[a]));
    return best;
}

FullRun full_run(const Problem& problem, const SolverParams& params, double eps, int h_samples) {
    const Grid& g = problem.grid;
    FullRun run;
    run.mfg = solve_mfg(problem, params);
    run.system = solve_planner_system(problem, params);
    run.descent = solve_planner_descent(problem, params, run.mfg.alpha_star);
    run.certificate = certificate_details(run.mfg, problem, eps, h_samples);

    EfficiencyReport& r = run.report;
    r.epsilon = eps;
    r.cost_mfg = social_cost(run.mfg, problem);
    r.cost_planner = run.descent.cost;
    r.cost_planner_system = run.system.cost;
    r.gap = r.cost_mfg - r.cost_planner;
    const LowerBoundIntegrands lb = lb_integrands(run.mfg, problem, eps);
    r.lb_integrand_F = lb.lb_F;
    r.lb_integrand_G = lb.lb_G;
    r.ub_norm = ub_norm(run.mfg, problem);
    for (int k = 0; k <= g.nt; ++k)
        r.residual_F_sup = std::max(r.residual_F_sup, sup_abs(residual_F(problem.coupling, g, run.mfg.m.slice(k))));
    r.residual_G_sup = sup_abs(residual_G(problem.terminal, g, run.mfg.m.slice(g.nt)));
    r.certificate = run.certificate.value;
    r.tau_running = run.certificate.samples[0].tau;
    r.tau_terminal = run.certificate.samples[1].tau;
    r.holder = problem.coupling.x_free() ? holder_diagnostic(run.mfg, problem, eps)
                                         : std::numeric_limits<double>::quiet_NaN();
    r.duality = duality_check(run.mfg, run.system, problem);

    r.mfg_converged = run.mfg.converged;
    r.descent_converged = run.descent.converged;
    r.system_converged = run.system.converged;
    r.planner_disagreement =
        std::abs(run.system.cost - run.descent.cost) > 1e-3 * (1.0 + std::abs(run.descent.cost));
    r.mfg_iterations = run.mfg.iterations;
    r.descent_iterations = run.descent.iterations;
    r.system_iterations = run.system.iterations;
    r.fp_residual = run.mfg.fp_residual;
    r.hjb_residual = run.mfg.hjb_residual;
    r.fpk_residual = run.mfg.fpk_residual;
    r.terminal_residual = run.mfg.terminal_residual;
    r.descent_gradient = run.descent.residual;
    return run;
}

EfficiencyReport full_report(const Problem& problem, const SolverParams& params, double eps, int h_samples) {
    return full_run(problem, params, eps, h_samples).report;
}

} // namespace mfg
