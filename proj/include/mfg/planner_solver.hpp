#pragma once

#include <string>
#include <vector>

#include "mfg/mfg_solver.hpp"

namespace mfg {

enum class PlannerMethod { system, descent };

const char* to_string(PlannerMethod m);

struct ControlIterate {
    VectorPath alpha;
    double step = 0.0;
    double objective = 0.0;
};

struct PlannerSolution {
    ScalarPath u_hat;
    DensityPath m_hat;
    // face flux m_up * alpha_hat
    VectorPath w_hat;
    VectorPath alpha_hat;
    double cost = 0.0;
    PlannerMethod method = PlannerMethod::system;
    int iterations = 0;
    bool converged = false;
    // system: fixed-point distance; descent: final preconditioned gradient norm
    double residual = 0.0;
    double hjb_residual = 0.0;
    double fpk_residual = 0.0;
    double terminal_residual = 0.0;
    std::string status;
    // descent only: objective and step of every accepted iterate, starting
    // with the initial control (step 0)
    std::vector<double> objective_history;
    std::vector<double> step_history;
};

// Right-endpoint rule in time over levels 1..nt:
//   sum_k dt dx [sum_f l0(x_f, a_f) m_up(f) + sum_i F(x_i, m^k) m^k_i]
//   + dx sum_i G(x_i, m^nt) m^nt_i
double planner_cost(const DensityPath& m, const VectorPath& alpha, const Problem& problem);

// Same quadrature with every term replaced by its absolute value; sets the
// scale of round-off in planner_cost.
double planner_cost_magnitude(const DensityPath& m, const VectorPath& alpha, const Problem& problem);

VectorPath face_flux(const DensityPath& m, const VectorPath& alpha, const Grid& g);

struct CostGradient {
    double value = 0.0;
    VectorPath gradient;
    DensityPath m;
    // multipliers of the discrete FP constraint, level k for k = 1..nt
    ScalarPath adjoint;
};

// Exact gradient of alpha -> planner_cost(FP(alpha), alpha) by the discrete
// adjoint. Level 0 of the gradient is zero.
CostGradient planner_cost_gradient(const VectorPath& alpha, const Problem& problem,
                                   const SolverParams& params);

PlannerSolution solve_planner_system(const Problem& problem, const SolverParams& params);

// L-BFGS on the face controls of levels 1..nt with backtracking Armijo line
// search, preconditioned by 1 / (dt dx m_up). Starts from the MFG feedback.
// Stops when the preconditioned gradient norm drops below descent_tol or
// when half its square (the predicted remaining decrease) falls under
// 1e3 machine epsilons of planner_cost_magnitude.
PlannerSolution solve_planner_descent(const Problem& problem, const SolverParams& params);
PlannerSolution solve_planner_descent(const Problem& problem, const SolverParams& params,
                                      const VectorPath& alpha0);

} // namespace mfg
