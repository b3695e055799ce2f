#pragma once

#include <string>
#include <vector>

#include "mfg/mfg_solver.hpp"
#include "mfg/planner_solver.hpp"

namespace mfg {

// max(4 dt, (T - t0) / 16)
double default_epsilon(const Grid& g);

double social_cost(const MFGSolution& sol, const Problem& problem);

// y -> int delta_m(x, m, y) m(dx)
Field residual_F(const Coupling& C, const Grid& g, std::span<const double> m);
Field residual_G(const TerminalCost& G, const Grid& g, std::span<const double> m);

struct LowerBoundIntegrands {
    double lb_F = 0.0;
    double lb_G = 0.0;
};

// Time integrals use the levels k >= 1 whose time lies in the window, each
// weighted by dt (the same rule as planner_cost).
double residual_energy(const MFGSolution& sol, const Problem& problem, double t_from, double t_to);
LowerBoundIntegrands lb_integrands(const MFGSolution& sol, const Problem& problem, double eps);
double ub_norm(const MFGSolution& sol, const Problem& problem);

enum class PerturbationVariant { running, terminal };
const char* to_string(PerturbationVariant v);

// Piecewise-linear ramps: running is 0 on [t0, t0+eps/2], rises to 1 at
// t0+eps, stays 1 until T-eps and falls to 0 at T; terminal rises from 0 at
// T-eps to 1 at T.
double ramp_running(double t, double t0, double T, double eps);
double ramp_terminal(double t, double T, double eps);

struct Perturbation {
    ScalarPath mu;
    VectorPath beta;
    std::vector<double> gamma;
    // largest h with m + h mu >= m / 2; infinite when mu vanishes
    double tau = 0.0;
    PerturbationVariant variant = PerturbationVariant::running;
    double epsilon = 0.0;
    // residual field at round-off level, mu and beta set to zero
    bool trivial = false;
    double continuity_residual = 0.0;
};

Perturbation build_perturbation_running(const MFGSolution& sol, const Problem& problem, double eps);
Perturbation build_perturbation_terminal(const MFGSolution& sol, const Problem& problem, double eps);

// Cost of the feasible pair (m + h mu, W + h beta) with W the equilibrium
// face flux; the control is recovered face by face as W_h / m_h,upwind.
double phi_eval(const MFGSolution& sol, const Perturbation& pert, double h, const Problem& problem);

struct CertificateSamples {
    PerturbationVariant variant = PerturbationVariant::running;
    double tau = 0.0;
    bool trivial = false;
    std::vector<double> h;
    std::vector<double> phi;
};

struct CertificateResult {
    double value = 0.0;
    double phi0 = 0.0;
    std::vector<CertificateSamples> samples;
};

CertificateResult certificate_details(const MFGSolution& sol, const Problem& problem, double eps,
                                      int h_samples = 32);
double certificate(const MFGSolution& sol, const Problem& problem, double eps, int h_samples = 32);

struct DualityReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;
};

// lhs = (1/2C) sum_k dt dx sum_f (m + m_hat)_f |Du - Du_hat|_f^2 with face
// averages of the densities and C = 1 (quadratic h0).
// rhs = -int int (F(m) - F(m_hat) - S(m_hat))(m - m_hat)
//       - int (G(m(T)) - delta_ghat(G, m_hat(T)))(m(T) - m_hat(T))
DualityReport duality_check(const MFGSolution& mfg, const PlannerSolution& plan, const Problem& problem);

// sup over level pairs in [t0+eps, T-eps] of |F(m(t2)) - F(m(t1))| / |t2 - t1|^(1/2).
// Throws Error for couplings that depend on x.
double holder_diagnostic(const MFGSolution& sol, const Problem& problem, double eps);

struct EfficiencyReport {
    double cost_mfg = 0.0;
    double cost_planner = 0.0;
    double cost_planner_system = 0.0;
    double gap = 0.0;
    double lb_integrand_F = 0.0;
    double lb_integrand_G = 0.0;
    double ub_norm = 0.0;
    double residual_F_sup = 0.0;
    double residual_G_sup = 0.0;
    double certificate = 0.0;
    double epsilon = 0.0;
    double holder = 0.0; // NaN unless the coupling is x-free
    DualityReport duality;

    bool mfg_converged = false;
    bool descent_converged = false;
    bool system_converged = false;
    // |system - descent| > 1e-3 (1 + |descent|)
    bool planner_disagreement = false;
    int mfg_iterations = 0;
    int descent_iterations = 0;
    int system_iterations = 0;
    double fp_residual = 0.0;
    double hjb_residual = 0.0;
    double fpk_residual = 0.0;
    double terminal_residual = 0.0;
    double descent_gradient = 0.0;
    double tau_running = 0.0;
    double tau_terminal = 0.0;
};

struct FullRun {
    EfficiencyReport report;
    MFGSolution mfg;
    PlannerSolution system;
    PlannerSolution descent;
    CertificateResult certificate;
};

FullRun full_run(const Problem& problem, const SolverParams& params, double eps, int h_samples = 32);
EfficiencyReport full_report(const Problem& problem, const SolverParams& params, double eps,
                             int h_samples = 32);

} // namespace mfg
