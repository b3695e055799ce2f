#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mfg/efficiency.hpp"

using namespace mfg;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kPotentialBaselineCost = 3.2471813916821692e-07;

Problem make(const Grid& g, Coupling F, Coupling G, Field m0) {
    return make_problem(quadratic_hamiltonian(), std::move(F), std::move(G), std::move(m0), g);
}

double sup_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

std::vector<Problem> suite(const Grid& g) {
    return {make(g, coupling_zero(), coupling_zero(), cosine_density(g, 0.5)),
            make(g, coupling_potential(cos_diff_kernel(), 0.5), coupling_zero(), cosine_density(g, 0.5)),
            make(g, coupling_convolution(cos_diff_kernel(), 1.0), coupling_zero(), cosine_density(g, 0.5)),
            make(g, coupling_efficient(cos_diff_kernel(), 1.0), coupling_zero(), cosine_density(g, 0.5)),
            make(g, coupling_xfree(square_profile(), cos_weight(), 1.0), coupling_fixed(cosine_profile(0.2)),
                 cosine_density(g, 0.4, 2.0)),
            make(g, coupling_fixed(cosine_profile(0.5)), coupling_potential(cos_diff_kernel(), 0.3),
                 uniform_density(g))};
}

} // namespace

TEST_CASE("solver parameters") {
    SolverParams p;
    CHECK_NOTHROW(validate(p));
    CHECK(damping_at(p, 5) == 1.0);
    p.damping = Damping::fictitious_play;
    CHECK(damping_at(p, 0) == 1.0);
    CHECK(damping_at(p, 2) == doctest::Approx(0.5));
    p.damping = Damping::harmonic;
    CHECK(damping_at(p, 3) == doctest::Approx(0.25));
    SolverParams bad;
    bad.delta = 0.0;
    CHECK_THROWS_AS(validate(bad), Error);
    bad = SolverParams{};
    bad.delta = 1.5;
    CHECK_THROWS_AS(validate(bad), Error);
    bad = SolverParams{};
    bad.tol_fixed_point = 0.0;
    CHECK_THROWS_AS(validate(bad), Error);
}

TEST_CASE("hjb: zero data gives zero value") {
    Grid g = Grid::make(1, 32, 0.0, 0.5, 32);
    Problem p = make(g, coupling_zero(), coupling_zero(), uniform_density(g));
    ScalarPath u = solve_hjb_backward(DensityPath(ScalarPath(g, 1.0), g), p, SolverParams{});
    for (double v : u.data())
        CHECK(v == 0.0);
}

TEST_CASE("hjb: small cosine terminal datum follows the heat equation") {
    // u ~ eps exp(-4 pi^2 (T - t)) cos(2 pi x) up to O(eps^2) and the
    // O(dx^2 + dt) truncation; refined with (n, nt) -> (2n, 4nt)
    const double eps = 1e-4, T = 0.05;
    std::vector<double> err;
    for (auto [n, nt] : {std::pair{32, 32}, {64, 128}, {128, 512}}) {
        Grid g = Grid::make(1, n, 0.0, T, nt);
        Problem p = make(g, coupling_zero(), coupling_fixed(cosine_profile(eps)), uniform_density(g));
        ScalarPath u = solve_hjb_backward(DensityPath(ScalarPath(g, 1.0), g), p, SolverParams{});
        double e = 0;
        for (int k = 0; k <= nt; ++k)
            for (std::size_t i = 0; i < g.points(); ++i) {
                const double ex = eps * std::exp(-4 * kPi * kPi * (T - g.time(k))) * std::cos(2 * kPi * g.point(i)[0]);
                e = std::max(e, std::abs(u(k, i) - ex));
            }
        err.push_back(e / eps);
    }
    CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.1));
    CHECK(err[1] / err[2] == doctest::Approx(4.0).epsilon(0.1));
    CHECK(err[2] <= 1e-3);
}

TEST_CASE("hjb: maximum principle bound") {
    Grid g = Grid::make(1, 64, 0.0, 0.5, 64);
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> amp(0.05, 0.5);
    for (int rep = 0; rep < 10; ++rep) {
        Problem p = make(g, coupling_convolution(cos_diff_kernel(1.0, amp(rng)), 2 * amp(rng)),
                         coupling_fixed(cosine_profile(amp(rng), 2.0)), cosine_density(g, amp(rng)));
        DensityPath m = heat_flow(p, SolverParams{});
        ScalarPath u = solve_hjb_backward(m, p, SolverParams{});
        double supF = 0, supG = 0, supu = 0;
        for (int k = 0; k <= g.nt; ++k)
            for (double v : p.coupling.field(g, m.slice(k)))
                supF = std::max(supF, std::abs(v));
        for (double v : p.terminal.field(g, m.slice(g.nt)))
            supG = std::max(supG, std::abs(v));
        for (double v : u.data())
            supu = std::max(supu, std::abs(v));
        CHECK(supu <= supG + (g.T - g.t0) * supF + 1e-8);
    }
}

TEST_CASE("hjb: unstable explicit step is reported with a suggested dt") {
    Grid g = Grid::make(1, 256, 0.0, 1.0, 8);
    Problem p = make(g, coupling_zero(), coupling_fixed(cosine_profile(200.0, 8.0)), uniform_density(g));
    try {
        solve_hjb_backward(DensityPath(ScalarPath(g, 1.0), g), p, SolverParams{});
        FAIL("expected SolverError");
    } catch (const SolverError& e) {
        CHECK(std::string(e.what()).find("dt") != std::string::npos);
    }
}

TEST_CASE("fp: zero drift") {
    Grid g = Grid::make(1, 32, 0.0, 0.5, 32);
    Problem flat = make(g, coupling_zero(), coupling_zero(), uniform_density(g));
    DensityPath m = solve_fp_forward(ScalarPath(g), flat, SolverParams{});
    for (double v : m.values().data())
        CHECK(v == doctest::Approx(1.0).epsilon(1e-14));

    std::vector<double> err;
    for (auto [n, nt] : {std::pair{32, 32}, {64, 128}, {128, 512}}) {
        Grid h = Grid::make(1, n, 0.0, 0.05, nt);
        Problem p = make(h, coupling_zero(), coupling_zero(), cosine_density(h, 0.3));
        DensityPath mm = solve_fp_forward(ScalarPath(h), p, SolverParams{});
        double e = 0;
        for (int k = 0; k <= nt; ++k)
            for (std::size_t i = 0; i < h.points(); ++i) {
                const double ex = 1 + 0.3 * std::exp(-4 * kPi * kPi * h.time(k)) * std::cos(2 * kPi * h.point(i)[0]);
                e = std::max(e, std::abs(mm(k, i) - ex));
            }
        err.push_back(e);
    }
    CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.1));
    CHECK(err[1] / err[2] == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("fp: constant drift against the Fourier solution") {
    // m = 1 + a exp(-4 pi^2 t) cos(2 pi (x - c t)); upwinding adds O(dx)
    // numerical diffusion, so refinement must at least halve the error
    const double c = 0.7;
    std::vector<double> err;
    for (auto [n, nt] : {std::pair{32, 32}, {64, 128}, {128, 512}}) {
        Grid g = Grid::make(1, n, 0.0, 0.05, nt);
        Problem p = make(g, coupling_zero(), coupling_zero(), cosine_density(g, 0.3));
        DensityPath m = fp_controlled(VectorPath(g, Staggering::face, c), p.m0, g, SolverParams{});
        double e = 0;
        for (int k = 0; k <= nt; ++k)
            for (std::size_t i = 0; i < g.points(); ++i) {
                const double ex =
                    1 + 0.3 * std::exp(-4 * kPi * kPi * g.time(k)) * std::cos(2 * kPi * (g.point(i)[0] - c * g.time(k)));
                e = std::max(e, std::abs(m(k, i) - ex));
            }
        err.push_back(e);
    }
    CHECK(err[0] / err[1] >= 2.0);
    CHECK(err[1] / err[2] >= 2.0);
    CHECK(err[2] <= 2e-4);
}

TEST_CASE("decoupled system converges in one iteration") {
    Grid g = Grid::make(1, 32, 0.0, 0.5, 32);
    Problem p = make(g, coupling_zero(), coupling_zero(), cosine_density(g, 0.5));
    MFGSolution s = solve_mfg(p, SolverParams{});
    CHECK(s.converged);
    CHECK(s.iterations == 1);
    for (double v : s.u.data())
        CHECK(v == 0.0);
    DensityPath heat = heat_flow(p, SolverParams{});
    CHECK(sup_abs_diff(s.m.values().data(), heat.values().data()) == 0.0);
}

TEST_CASE("conservation, positivity, terminal datum and scheme residuals") {
    Grid g = Grid::make(1, 64, 0.0, 0.5, 64);
    SolverParams params;
    for (const Problem& p : suite(g)) {
        CAPTURE(p.coupling.label());
        CAPTURE(p.terminal.label());
        MFGSolution s = solve_mfg(p, params);
        REQUIRE(s.converged);
        CHECK(s.fp_residual < params.tol_fixed_point);
        for (int k = 0; k <= g.nt; ++k) {
            double mass = 0, lo = 1e300;
            for (double v : s.m.slice(k)) {
                mass += v * g.dx;
                lo = std::min(lo, v);
            }
            CHECK(std::abs(mass - 1.0) <= 1e-12);
            CHECK(lo >= -1e-12);
        }
        // the returned u answers the last input density; m-independent
        // terminal data make the terminal condition exact
        if (!p.terminal.depends_on_m())
            CHECK(s.terminal_residual == 0.0);
        else
            CHECK(s.terminal_residual <= 10 * params.tol_fixed_point);
        CHECK(s.hjb_residual <= 10 * params.tol_fixed_point);
        CHECK(s.fpk_residual <= 10 * params.tol_fixed_point);
        VectorPath a = feedback(s.u, p.hamiltonian, g);
        CHECK(sup_abs_diff(a.data(), s.alpha_star.data()) == 0.0);
    }
}

TEST_CASE("warm start from a converged solution is idempotent") {
    Grid g = Grid::make(1, 64, 0.0, 0.5, 64);
    SolverParams params;
    for (const Problem& p : suite(g)) {
        MFGSolution s = solve_mfg(p, params);
        MFGSolution again = solve_mfg(p, params, s.m);
        CHECK(again.converged);
        CHECK(again.iterations == 1);
        double d = 0;
        for (int k = 0; k <= g.nt; ++k) {
            double l1 = 0;
            for (std::size_t i = 0; i < g.points(); ++i)
                l1 += std::abs(again.m(k, i) - s.m(k, i)) * g.dx;
            d = std::max(d, l1);
        }
        CHECK(d <= params.tol_fixed_point);
    }
}

TEST_CASE("damping schedules reach the same equilibrium") {
    Grid g = Grid::make(1, 32, 0.0, 0.5, 32);
    Problem p = make(g, coupling_potential(cos_diff_kernel(), 0.5), coupling_zero(), cosine_density(g, 0.5));
    MFGSolution ref = solve_mfg(p, SolverParams{});
    for (Damping d : {Damping::fictitious_play, Damping::harmonic}) {
        SolverParams sp;
        sp.damping = d;
        sp.max_iters = 400;
        MFGSolution s = solve_mfg(p, sp);
        CHECK(s.converged);
        CHECK(sup_abs_diff(s.m.values().data(), ref.m.values().data()) <= 1e-8);
    }
    SolverParams half;
    half.delta = 0.5;
    MFGSolution s = solve_mfg(p, half);
    CHECK(s.converged);
    CHECK(sup_abs_diff(s.m.values().data(), ref.m.values().data()) <= 1e-8);
}

TEST_CASE("non-convergence is a flag, not an exception") {
    Grid g = Grid::make(1, 32, 0.0, 0.5, 32);
    Problem p = make(g, coupling_convolution(cos_diff_kernel(), 1.0), coupling_zero(), cosine_density(g, 0.5));
    SolverParams sp;
    sp.max_iters = 1;
    MFGSolution s = solve_mfg(p, sp);
    CHECK_FALSE(s.converged);
    CHECK(s.iterations == 1);
    CHECK(s.fp_residual > sp.tol_fixed_point);
    CHECK(s.history.size() == 1);
}

TEST_CASE("potential benchmark, lambda = 0.5, n = 128, nt = 256") {
    Grid g = Grid::make(1, 128, 0.0, 0.5, 256);
    Problem p = make(g, coupling_potential(cos_diff_kernel(), 0.5), coupling_zero(), cosine_density(g, 0.5));
    MFGSolution s = solve_mfg(p, SolverParams{});
    CHECK(s.converged);
    CHECK(s.fp_residual < 1e-8);
    // regression baseline, recorded from this build
    CHECK(social_cost(s, p) == doctest::Approx(kPotentialBaselineCost).epsilon(1e-9));
}

TEST_CASE("grid refinement of the equilibrium cost") {
    // costs at (n, nt), (2n, 4nt), (4n, 16nt); the transport and Hamiltonian
    // fluxes are first order in dx and the time error is still pre-asymptotic
    // here, so successive differences shrink by about 2.8 rather than 4
    std::vector<double> cost;
    for (auto [n, nt] : {std::pair{32, 64}, {64, 256}, {128, 1024}}) {
        Grid g = Grid::make(1, n, 0.0, 0.5, nt);
        Problem p = make(g, coupling_potential(cos_diff_kernel(), 0.5), coupling_zero(), cosine_density(g, 0.5));
        cost.push_back(social_cost(solve_mfg(p, SolverParams{}), p));
    }
    CHECK(cost[0] > cost[1]);
    CHECK(cost[1] > cost[2]);
    const double ratio = (cost[0] - cost[1]) / (cost[1] - cost[2]);
    CHECK(ratio >= 2.0);
    CHECK(ratio <= 4.5);
}
