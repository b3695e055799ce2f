#include "mfg/planner_solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace mfg {

const char* to_string(PlannerMethod m) {
    return m == PlannerMethod::system ? "system" : "descent";
}

namespace {

void check_shapes(const DensityPath& m, const VectorPath& alpha, const Grid& g, const char* op) {
    require_1d(g, op);
    if (!m.values().matches(g) || !alpha.matches(g) || alpha.staggering() != Staggering::face)
        throw ShapeError(std::string(op) + ": shape mismatch");
}

// Face contributions of l0 gathered on their upwind cells.
Field upwind_kinetic(std::span<const double> a, const Hamiltonian& H, const Grid& g) {
    const std::size_t n = g.points();
    Field out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        out[a[i] >= 0.0 ? i : (i + 1) % n] += H.l0(g.face(i, 0), {a[i], 0.0});
    return out;
}

} // namespace

double planner_cost(const DensityPath& m, const VectorPath& alpha, const Problem& problem) {
    const Grid& g = problem.grid;
    check_shapes(m, alpha, g, "planner_cost");
    const std::size_t n = g.points();
    double running = 0.0;
    for (int k = 1; k <= g.nt; ++k) {
        auto mk = m.slice(k);
        auto ak = alpha.slice(k);
        Field F = problem.coupling.field(g, mk);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            s += problem.hamiltonian.l0(g.face(i, 0), {ak[i], 0.0}) * upwind(mk, i, n, ak[i]) + F[i] * mk[i];
        running += s;
    }
    auto mT = m.slice(g.nt);
    Field G = problem.terminal.field(g, mT);
    double terminal = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        terminal += G[i] * mT[i];
    return running * g.dt * g.dx + terminal * g.dx;
}

double planner_cost_magnitude(const DensityPath& m, const VectorPath& alpha, const Problem& problem) {
    const Grid& g = problem.grid;
    check_shapes(m, alpha, g, "planner_cost_magnitude");
    const std::size_t n = g.points();
    double running = 0.0;
    for (int k = 1; k <= g.nt; ++k) {
        auto mk = m.slice(k);
        auto ak = alpha.slice(k);
        Field F = problem.coupling.field(g, mk);
        for (std::size_t i = 0; i < n; ++i)
            running += std::abs(problem.hamiltonian.l0(g.face(i, 0), {ak[i], 0.0}) * upwind(mk, i, n, ak[i])) +
                       std::abs(F[i] * mk[i]);
    }
    auto mT = m.slice(g.nt);
    Field G = problem.terminal.field(g, mT);
    double terminal = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        terminal += std::abs(G[i] * mT[i]);
    return running * g.dt * g.dx + terminal * g.dx;
}

VectorPath face_flux(const DensityPath& m, const VectorPath& alpha, const Grid& g) {
    check_shapes(m, alpha, g, "face_flux");
    const std::size_t n = g.points();
    VectorPath w(g, Staggering::face);
    for (int k = 0; k <= g.nt; ++k) {
        auto mk = m.slice(k);
        for (std::size_t i = 0; i < n; ++i)
            w(k, i) = alpha(k, i) * upwind(mk, i, n, alpha(k, i));
    }
    return w;
}

CostGradient planner_cost_gradient(const VectorPath& alpha, const Problem& problem,
                                   const SolverParams& params) {
    const Grid& g = problem.grid;
    require_1d(g, "planner_cost_gradient");
    const std::size_t n = g.points();
    const Hamiltonian& H = problem.hamiltonian;

    CostGradient out;
    out.m = fp_controlled(alpha, problem.m0, g, params);
    out.value = planner_cost(out.m, alpha, problem);
    out.gradient = VectorPath(g, Staggering::face);
    out.adjoint = ScalarPath(g);

    const double w = g.dt * g.dx;
    Field p_next(n, 0.0), rhs(n);
    for (int k = g.nt; k >= 1; --k) {
        auto mk = out.m.slice(k);
        auto ak = alpha.slice(k);
        Field kin = upwind_kinetic(ak, H, g);
        Field F = problem.coupling.field(g, mk);
        Field S = problem.coupling.residual(g, mk);
        for (std::size_t i = 0; i < n; ++i)
            rhs[i] = w * (kin[i] + F[i] + S[i]) + p_next[i] / g.dt;
        if (k == g.nt) {
            Field dg = delta_ghat(problem.terminal, g, mk);
            for (std::size_t i = 0; i < n; ++i)
                rhs[i] += g.dx * dg[i];
        }
        Field p = checked_solve(fp_matrix(ak, g).transposed(), rhs, params, "adjoint");
        for (std::size_t i = 0; i < n; ++i) {
            const double dl = H.da_l0(g.face(i, 0), {ak[i], 0.0})[0];
            out.gradient(k, i) = upwind(mk, i, n, ak[i]) * (w * dl + (p[(i + 1) % n] - p[i]) / g.dx);
        }
        std::copy(p.begin(), p.end(), out.adjoint.slice(k).begin());
        p_next = std::move(p);
    }
    return out;
}

PlannerSolution solve_planner_system(const Problem& problem, const SolverParams& params) {
    const Grid& g = problem.grid;
    require_1d(g, "solve_planner_system");
    MFGSolution fb = forward_backward(problem, params, heat_flow(problem, params), true);
    PlannerSolution s;
    s.method = PlannerMethod::system;
    s.u_hat = std::move(fb.u);
    s.alpha_hat = std::move(fb.alpha_star);
    s.m_hat = std::move(fb.m);
    s.w_hat = face_flux(s.m_hat, s.alpha_hat, g);
    s.cost = planner_cost(s.m_hat, s.alpha_hat, problem);
    s.iterations = fb.iterations;
    s.converged = fb.converged;
    s.residual = fb.fp_residual;
    s.hjb_residual = fb.hjb_residual;
    s.fpk_residual = fb.fpk_residual;
    s.terminal_residual = fb.terminal_residual;
    s.status = fb.converged ? "converged" : "fixed point not converged";
    return s;
}

PlannerSolution solve_planner_descent(const Problem& problem, const SolverParams& params) {
    MFGSolution eq = solve_mfg(problem, params);
    return solve_planner_descent(problem, params, eq.alpha_star);
}

namespace {

constexpr double kResolution = 1e3 * std::numeric_limits<double>::epsilon();
constexpr int kMaxHalvings = 40;

struct Pair {
    std::vector<double> s, y;
    double rho;
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

// levels 1..nt flattened
std::vector<double> pack(const VectorPath& v) {
    const std::size_t stride = v.points();
    return std::vector<double>(v.data().begin() + stride, v.data().end());
}

void unpack(const std::vector<double>& x, VectorPath& v) {
    std::fill(v.data().begin(), v.data().begin() + v.points(), 0.0);
    std::copy(x.begin(), x.end(), v.data().begin() + v.points());
}

std::vector<double> preconditioner(const CostGradient& c, const VectorPath& alpha, const Grid& g) {
    const std::size_t n = g.points();
    std::vector<double> D;
    D.reserve(static_cast<std::size_t>(g.nt) * n);
    for (int k = 1; k <= g.nt; ++k) {
        auto mk = c.m.slice(k);
        for (std::size_t i = 0; i < n; ++i)
            D.push_back(1.0 / (g.dt * g.dx * std::max(upwind(mk, i, n, alpha(k, i)), 1e-8)));
    }
    return D;
}

} // namespace

PlannerSolution solve_planner_descent(const Problem& problem, const SolverParams& params,
                                      const VectorPath& alpha0) {
    validate(params);
    const Grid& g = problem.grid;
    require_1d(g, "solve_planner_descent");
    if (!alpha0.matches(g) || alpha0.staggering() != Staggering::face)
        throw ShapeError("solve_planner_descent: initial control does not match grid");

    VectorPath alpha = alpha0;
    std::vector<double> x = pack(alpha);
    unpack(x, alpha);
    CostGradient cur = planner_cost_gradient(alpha, problem, params);
    std::vector<double> grad = pack(cur.gradient);

    PlannerSolution sol;
    sol.method = PlannerMethod::descent;
    sol.objective_history.push_back(cur.value);
    sol.step_history.push_back(0.0);

    std::deque<Pair> memory;
    const std::size_t mem = static_cast<std::size_t>(params.lbfgs_memory);
    double gnorm = 0.0;
    int accepted = 0;
    sol.status = "max iterations";
    VectorPath trial_alpha = alpha;

    for (int it = 0;; ++it) {
        const std::vector<double> D = preconditioner(cur, alpha, g);
        gnorm = 0.0;
        for (std::size_t j = 0; j < grad.size(); ++j)
            gnorm += grad[j] * grad[j] * D[j];
        gnorm = std::sqrt(gnorm);
        if (gnorm < params.descent_tol) {
            sol.converged = true;
            sol.status = "converged";
            break;
        }
        // predicted decrease below what the objective can resolve
        const double floor = kResolution * planner_cost_magnitude(cur.m, alpha, problem);
        if (0.5 * gnorm * gnorm <= floor) {
            sol.converged = true;
            sol.status = "converged at objective resolution";
            break;
        }
        if (it >= params.descent_max_iters)
            break;

        bool accepted_step = false;
        for (int attempt = 0; attempt < 2 && !accepted_step; ++attempt) {
            // two-loop recursion with H0 = gamma D
            std::vector<double> q = grad;
            std::vector<double> coef(memory.size());
            for (std::size_t j = memory.size(); j-- > 0;) {
                coef[j] = memory[j].rho * dot(memory[j].s, q);
                for (std::size_t i = 0; i < q.size(); ++i)
                    q[i] -= coef[j] * memory[j].y[i];
            }
            double gamma = 1.0;
            if (!memory.empty()) {
                const Pair& last = memory.back();
                double yDy = 0.0;
                for (std::size_t i = 0; i < D.size(); ++i)
                    yDy += last.y[i] * last.y[i] * D[i];
                gamma = 1.0 / (last.rho * yDy);
            }
            for (std::size_t i = 0; i < q.size(); ++i)
                q[i] *= gamma * D[i];
            for (std::size_t j = 0; j < memory.size(); ++j) {
                const double b = memory[j].rho * dot(memory[j].y, q);
                for (std::size_t i = 0; i < q.size(); ++i)
                    q[i] += memory[j].s[i] * (coef[j] - b);
            }
            std::vector<double> d(q.size());
            for (std::size_t i = 0; i < q.size(); ++i)
                d[i] = -q[i];
            double gd = dot(grad, d);
            if (!(gd < 0.0)) {
                memory.clear();
                for (std::size_t i = 0; i < d.size(); ++i)
                    d[i] = -D[i] * grad[i];
                gd = dot(grad, d);
            }

            double t = 1.0;
            for (int ls = 0; ls < kMaxHalvings; ++ls, t *= 0.5) {
                std::vector<double> xt(x.size());
                for (std::size_t i = 0; i < x.size(); ++i)
                    xt[i] = x[i] + t * d[i];
                unpack(xt, trial_alpha);
                double value;
                try {
                    value = planner_cost(fp_controlled(trial_alpha, problem.m0, g, params), trial_alpha, problem);
                } catch (const SolverError&) {
                    continue;
                }
                if (!(value <= cur.value + 1e-4 * t * gd))
                    continue;
                CostGradient trial = planner_cost_gradient(trial_alpha, problem, params);
                std::vector<double> gnew = pack(trial.gradient);
                Pair p{std::vector<double>(x.size()), std::vector<double>(x.size()), 0.0};
                for (std::size_t i = 0; i < x.size(); ++i) {
                    p.s[i] = xt[i] - x[i];
                    p.y[i] = gnew[i] - grad[i];
                }
                const double sy = dot(p.s, p.y);
                if (sy > 0.0) {
                    p.rho = 1.0 / sy;
                    memory.push_back(std::move(p));
                    if (memory.size() > mem)
                        memory.pop_front();
                }
                x = std::move(xt);
                alpha = trial_alpha;
                grad = std::move(gnew);
                cur = std::move(trial);
                sol.objective_history.push_back(cur.value);
                sol.step_history.push_back(t);
                ++accepted;
                accepted_step = true;
                break;
            }
            if (!accepted_step) {
                if (memory.empty())
                    break;
                memory.clear();
            }
        }
        if (!accepted_step) {
            sol.status = "line search stagnated";
            break;
        }
    }

    const std::size_t n = g.points();
    sol.iterations = accepted;
    sol.residual = gnorm;
    sol.cost = cur.value;
    sol.m_hat = std::move(cur.m);
    sol.alpha_hat = alpha;
    sol.w_hat = face_flux(sol.m_hat, sol.alpha_hat, g);
    sol.u_hat = ScalarPath(g);
    const double w = 1.0 / (g.dt * g.dx);
    for (int k = 1; k <= g.nt; ++k)
        for (std::size_t i = 0; i < n; ++i)
            sol.u_hat(k, i) = cur.adjoint(k, i) * w;
    for (std::size_t i = 0; i < n; ++i)
        sol.u_hat(0, i) = sol.u_hat(1, i);
    sol.fpk_residual = fp_scheme_residual(sol.m_hat.values(), sol.alpha_hat, g);
    return sol;
}

} // namespace mfg
