#include "mfg/mfg_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mfg {

void validate(const SolverParams& p) {
    if (!(p.delta > 0.0 && p.delta <= 1.0))
        throw Error("solver params: damping delta must lie in (0, 1]");
    if (!(p.tol_fixed_point > 0.0))
        throw Error("solver params: tol_fixed_point must be positive");
    if (p.max_iters < 1)
        throw Error("solver params: max_iters must be >= 1");
    if (!(p.linear_tol > 0.0))
        throw Error("solver params: linear_tol must be positive");
    if (p.descent_max_iters < 0 || !(p.descent_tol > 0.0) || p.lbfgs_memory < 1)
        throw Error("solver params: bad descent settings");
}

double damping_at(const SolverParams& p, int k) {
    switch (p.damping) {
    case Damping::fixed:
        return p.delta;
    case Damping::fictitious_play:
        return 2.0 / (k + 2.0);
    case Damping::harmonic:
        return 1.0 / (k + 1.0);
    }
    return p.delta;
}

void require_1d(const Grid& g, const char* op) {
    if (g.d != 1)
        throw ShapeError(std::string(op) + ": solvers support d = 1 only");
}

std::vector<double> checked_solve(const CyclicTridiagonal& A, std::span<const double> b,
                                  const SolverParams& params, const char* what) {
    std::vector<double> x = A.solve(b);
    std::vector<double> r = A.apply(x);
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        err = std::max(err, std::abs(r[i] - b[i]));
        scale = std::max(scale, std::abs(b[i]));
    }
    if (err > params.linear_tol * std::max(scale, 1e-300))
        throw SolverError(std::string(what) + ": linear solve residual " + std::to_string(err));
    return x;
}

namespace {

CyclicTridiagonal heat_matrix(const Grid& g) {
    const std::size_t n = g.points();
    CyclicTridiagonal A(n);
    const double h = 1.0 / (g.dx * g.dx);
    for (std::size_t i = 0; i < n; ++i) {
        A.diag[i] = 1.0 / g.dt + 2.0 * h;
        A.lower[i] = -h;
        A.upper[i] = -h;
    }
    return A;
}

double sup_l1_distance(const ScalarPath& a, const ScalarPath& b, const Grid& g) {
    double worst = 0.0;
    for (int k = 0; k < a.levels(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.points(); ++i)
            s += std::abs(a(k, i) - b(k, i));
        worst = std::max(worst, s * g.cell_volume());
    }
    return worst;
}

double terminal_gap(const ScalarPath& u, std::span<const double> terminal) {
    double worst = 0.0;
    auto last = u.slice(u.levels() - 1);
    for (std::size_t i = 0; i < last.size(); ++i)
        worst = std::max(worst, std::abs(last[i] - terminal[i]));
    return worst;
}

} // namespace

ScalarPath running_source(const Coupling& F, const DensityPath& m, const Grid& g, bool add_residual) {
    ScalarPath s(g);
    for (int k = 0; k <= g.nt; ++k) {
        Field f = F.field(g, m.slice(k));
        if (add_residual) {
            Field r = F.residual(g, m.slice(k));
            for (std::size_t i = 0; i < f.size(); ++i)
                f[i] += r[i];
        }
        std::copy(f.begin(), f.end(), s.slice(k).begin());
    }
    return s;
}

Field godunov_hamiltonian(std::span<const double> u, const Hamiltonian& H, const Grid& g) {
    const std::size_t n = g.points();
    Field out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        const Point x = g.face(i, 0);
        const Point p{(u[j] - u[i]) / g.dx, 0.0};
        const double a = -H.dp_h0(x, p)[0];
        out[a >= 0.0 ? i : j] += H.h0(x, p);
    }
    return out;
}

ScalarPath hjb_backward(const Grid& g, const Hamiltonian& H, const ScalarPath& source,
                        std::span<const double> terminal, const SolverParams& params) {
    require_1d(g, "hjb");
    if (!source.matches(g) || terminal.size() != g.points())
        throw ShapeError("hjb: shape mismatch");
    const std::size_t n = g.points();
    const CyclicTridiagonal A = heat_matrix(g);
    ScalarPath u(g);
    std::copy(terminal.begin(), terminal.end(), u.slice(g.nt).begin());
    Field rhs(n);
    for (int k = g.nt - 1; k >= 0; --k) {
        auto next = u.slice(k + 1);
        Field hn = godunov_hamiltonian(next, H, g);
        for (std::size_t i = 0; i < n; ++i)
            rhs[i] = next[i] / g.dt - hn[i] + source(k, i);
        if (!std::all_of(rhs.begin(), rhs.end(), [](double v) { return std::isfinite(v); })) {
            double pmax = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                pmax = std::max(pmax, std::abs(next[(i + 1) % n] - next[i]) / g.dx);
            std::ostringstream os;
            os << "hjb: non-finite values at level " << k << "; explicit Hamiltonian needs dt <= "
               << (pmax > 0.0 ? g.dx / pmax : g.dt) << " (current dt " << g.dt << ")";
            throw SolverError(os.str());
        }
        Field x = checked_solve(A, rhs, params, "hjb");
        std::copy(x.begin(), x.end(), u.slice(k).begin());
    }
    return u;
}

VectorPath feedback(const ScalarPath& u, const Hamiltonian& H, const Grid& g) {
    require_1d(g, "feedback");
    const std::size_t n = g.points();
    VectorPath a(g, Staggering::face);
    for (int k = 0; k <= g.nt; ++k) {
        auto uk = u.slice(k);
        for (std::size_t i = 0; i < n; ++i) {
            const Point p{(uk[(i + 1) % n] - uk[i]) / g.dx, 0.0};
            a(k, i) = -H.dp_h0(g.face(i, 0), p)[0];
        }
    }
    return a;
}

CyclicTridiagonal fp_matrix(std::span<const double> a, const Grid& g) {
    const std::size_t n = g.points();
    CyclicTridiagonal A(n);
    const double h = 1.0 / (g.dx * g.dx);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t im = (i + n - 1) % n;
        const double ap = std::max(a[i], 0.0), am = std::min(a[i], 0.0);
        const double bp = std::max(a[im], 0.0), bm = std::min(a[im], 0.0);
        A.diag[i] = 1.0 / g.dt + 2.0 * h + ap / g.dx - bm / g.dx;
        A.upper[i] = -h + am / g.dx;
        A.lower[i] = -h - bp / g.dx;
    }
    return A;
}

DensityPath fp_controlled(const VectorPath& alpha, std::span<const double> m0, const Grid& g,
                          const SolverParams& params) {
    require_1d(g, "fp");
    if (!alpha.matches(g) || alpha.staggering() != Staggering::face || m0.size() != g.points())
        throw ShapeError("fp: shape mismatch");
    const std::size_t n = g.points();
    ScalarPath m(g);
    std::copy(m0.begin(), m0.end(), m.slice(0).begin());
    const double mass0 = integrate(m0, g);
    Field rhs(n);
    for (int k = 1; k <= g.nt; ++k) {
        auto prev = m.slice(k - 1);
        for (std::size_t i = 0; i < n; ++i)
            rhs[i] = prev[i] / g.dt;
        Field x = checked_solve(fp_matrix(alpha.slice(k), g), rhs, params, "fp");
        const double drift = std::abs(integrate(x, g) - mass0);
        if (drift > kMassTol)
            throw SolverError("fp: mass drift " + std::to_string(drift) + " at level " +
                              std::to_string(k));
        std::copy(x.begin(), x.end(), m.slice(k).begin());
    }
    return DensityPath(std::move(m), g);
}

ScalarPath solve_hjb_backward(const DensityPath& m, const Problem& problem, const SolverParams& params) {
    validate(params);
    const Grid& g = problem.grid;
    if (!m.values().matches(g))
        throw ShapeError("solve_hjb_backward: density does not match grid");
    ScalarPath src = running_source(problem.coupling, m, g, false);
    Field term = problem.terminal.field(g, m.slice(g.nt));
    return hjb_backward(g, problem.hamiltonian, src, term, params);
}

DensityPath solve_fp_forward(const ScalarPath& u, const Problem& problem, const SolverParams& params) {
    validate(params);
    const Grid& g = problem.grid;
    if (!u.matches(g) || !u.finite())
        throw ShapeError("solve_fp_forward: u must be a finite path on the grid");
    return fp_controlled(feedback(u, problem.hamiltonian, g), problem.m0, g, params);
}

double hjb_scheme_residual(const ScalarPath& u, const ScalarPath& source, const Hamiltonian& H,
                           const Grid& g) {
    double worst = 0.0;
    for (int k = 0; k < g.nt; ++k) {
        Field lap = laplacian(u.slice(k), g);
        Field hn = godunov_hamiltonian(u.slice(k + 1), H, g);
        for (std::size_t i = 0; i < g.points(); ++i) {
            const double r = (u(k, i) - u(k + 1, i)) / g.dt - lap[i] + hn[i] - source(k, i);
            worst = std::max(worst, std::abs(r));
        }
    }
    return worst;
}

double fp_scheme_residual(const ScalarPath& m, const VectorPath& alpha, const Grid& g) {
    double worst = 0.0;
    for (int k = 1; k <= g.nt; ++k) {
        Field am = fp_matrix(alpha.slice(k), g).apply(m.slice(k));
        double s = 0.0;
        for (std::size_t i = 0; i < g.points(); ++i)
            s += std::abs(am[i] - m(k - 1, i) / g.dt);
        worst = std::max(worst, s * g.dx);
    }
    return worst;
}

DensityPath heat_flow(const Problem& problem, const SolverParams& params) {
    VectorPath still(problem.grid, Staggering::face);
    return fp_controlled(still, problem.m0, problem.grid, params);
}

MFGSolution solve_mfg(const Problem& problem, const SolverParams& params) {
    require_1d(problem.grid, "solve_mfg");
    return forward_backward(problem, params, heat_flow(problem, params), false);
}

MFGSolution solve_mfg(const Problem& problem, const SolverParams& params, const DensityPath& initial) {
    return forward_backward(problem, params, initial, false);
}

MFGSolution forward_backward(const Problem& problem, const SolverParams& params,
                             const DensityPath& initial, bool planner_system) {
    validate(params);
    const Grid& g = problem.grid;
    require_1d(g, "forward_backward");
    if (!initial.values().matches(g))
        throw ShapeError("forward_backward: initial density does not match grid");
    auto terminal_of = [&](std::span<const double> mT) {
        return planner_system ? delta_ghat(problem.terminal, g, mT) : problem.terminal.field(g, mT);
    };

    ScalarPath m = initial.values();
    MFGSolution best;
    double best_r = INFINITY;
    std::vector<double> history;
    bool converged = false;

    for (int it = 0; it < params.max_iters; ++it) {
        DensityPath md(m, g);
        ScalarPath src = running_source(problem.coupling, md, g, planner_system);
        Field term = terminal_of(md.slice(g.nt));
        ScalarPath u = hjb_backward(g, problem.hamiltonian, src, term, params);
        VectorPath a = feedback(u, problem.hamiltonian, g);
        DensityPath br = fp_controlled(a, problem.m0, g, params);

        const double r = sup_l1_distance(br.values(), m, g);
        if (!std::isfinite(r))
            throw SolverError("forward_backward: non-finite residual at iteration " + std::to_string(it + 1));
        history.push_back(r);
        const bool done = r < params.tol_fixed_point;
        const double delta = damping_at(params, it);
        if (!done)
            for (std::size_t j = 0; j < m.data().size(); ++j)
                m.data()[j] = (1.0 - delta) * m.data()[j] + delta * br.values().data()[j];
        if (done || r < best_r) {
            best_r = r;
            best.u = std::move(u);
            best.m = std::move(br);
            best.alpha_star = std::move(a);
            best.iterations = it + 1;
            best.fp_residual = r;
        }
        if (done) {
            converged = true;
            break;
        }
    }

    best.converged = converged;
    best.history = std::move(history);
    if (!converged)
        best.iterations = static_cast<int>(best.history.size());
    ScalarPath src = running_source(problem.coupling, best.m, g, planner_system);
    best.hjb_residual = hjb_scheme_residual(best.u, src, problem.hamiltonian, g);
    best.fpk_residual = fp_scheme_residual(best.m.values(), best.alpha_star, g);
    best.terminal_residual = terminal_gap(best.u, terminal_of(best.m.slice(g.nt)));
    return best;
}

} // namespace mfg
