#pragma once

#include <span>
#include <vector>

#include "mfg/cyclic.hpp"
#include "mfg/grid.hpp"
#include "mfg/model.hpp"

namespace mfg {

// fixed: delta_k = delta; fictitious_play: 2/(k+2); harmonic: 1/(k+1)
enum class Damping { fixed, fictitious_play, harmonic };

struct SolverParams {
    Damping damping = Damping::fixed;
    double delta = 1.0;
    int max_iters = 200;
    double tol_fixed_point = 1e-8;
    // Each periodic solve is checked: |A x - b|_inf <= linear_tol * |b|_inf.
    double linear_tol = 1e-10;

    // planner descent
    int descent_max_iters = 2000;
    double descent_tol = 1e-10;
    int lbfgs_memory = 20;
};

// Throws Error on out-of-range fields.
void validate(const SolverParams& p);
double damping_at(const SolverParams& p, int k);

// Solvers work on d = 1 grids. Controls are face-staggered: alpha(k, i) is
// the velocity across the face between cells i and i+1, applied during the
// step from level k-1 to level k (level 0 is unused).
struct MFGSolution {
    ScalarPath u;
    DensityPath m;
    VectorPath alpha_star;
    int iterations = 0;
    bool converged = false;
    // sup_t L1 distance between the last HJB input density and its best
    // response (the returned m)
    double fp_residual = 0.0;
    // discrete HJB residual of (u, m), sup norm over levels 0..nt-1
    double hjb_residual = 0.0;
    // discrete FP residual of (m, alpha_star), sup_t L1
    double fpk_residual = 0.0;
    // sup_x |u(T, x) - G(x, m(T))|
    double terminal_residual = 0.0;
    std::vector<double> history;
};

ScalarPath solve_hjb_backward(const DensityPath& m, const Problem& problem, const SolverParams& params);
DensityPath solve_fp_forward(const ScalarPath& u, const Problem& problem, const SolverParams& params);
MFGSolution solve_mfg(const Problem& problem, const SolverParams& params);
MFGSolution solve_mfg(const Problem& problem, const SolverParams& params, const DensityPath& initial);

// Building blocks shared with the planner and the efficiency module.

// Damped loop m <- (1 - delta_k) m + delta_k BR(m). With planner_system the
// HJB source gains the efficiency residual of F and the terminal datum is
// delta_ghat(G, m(T)). Stops once the best response moves m by less than
// tol_fixed_point (sup_t L1); otherwise returns the iterate with the
// smallest such distance, flagged non-converged.
MFGSolution forward_backward(const Problem& problem, const SolverParams& params,
                             const DensityPath& initial, bool planner_system);

// FP flow of m0 with zero control.
DensityPath heat_flow(const Problem& problem, const SolverParams& params);

// Level k holds F(., m^k), plus the efficiency residual of F when
// add_residual is set.
ScalarPath running_source(const Coupling& F, const DensityPath& m, const Grid& g, bool add_residual);

// Backward sweep (u^k - u^{k+1})/dt - lap(u^k) + Hn(u^{k+1}) = source^k,
// u^nt = terminal. Hn is the upwind (Godunov) sum of h0 over the faces
// whose upwind cell is i.
ScalarPath hjb_backward(const Grid& g, const Hamiltonian& H, const ScalarPath& source,
                        std::span<const double> terminal, const SolverParams& params);

Field godunov_hamiltonian(std::span<const double> u, const Hamiltonian& H, const Grid& g);

// alpha = -dp_h0(x_f, face gradient of u)
VectorPath feedback(const ScalarPath& u, const Hamiltonian& H, const Grid& g);

// Implicit Euler, upwind flux W_f = a_f^+ m_i + a_f^- m_{i+1}, implicit diffusion.
CyclicTridiagonal fp_matrix(std::span<const double> a, const Grid& g);
DensityPath fp_controlled(const VectorPath& alpha, std::span<const double> m0, const Grid& g,
                          const SolverParams& params);

// Upwind density of face i for velocity a.
inline double upwind(std::span<const double> m, std::size_t i, std::size_t n, double a) {
    return a >= 0.0 ? m[i] : m[(i + 1) % n];
}

double hjb_scheme_residual(const ScalarPath& u, const ScalarPath& source, const Hamiltonian& H,
                           const Grid& g);
double fp_scheme_residual(const ScalarPath& m, const VectorPath& alpha, const Grid& g);

// Direct solve followed by a residual check against params.linear_tol.
std::vector<double> checked_solve(const CyclicTridiagonal& A, std::span<const double> b,
                                  const SolverParams& params, const char* what);

void require_1d(const Grid& g, const char* op);

} // namespace mfg
