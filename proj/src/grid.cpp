#include "mfg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mfg {

Grid Grid::make(int d, int n, double t0, double T, int nt) {
    if (d != 1 && d != 2)
        throw ShapeError("grid: d must be 1 or 2, got " + std::to_string(d));
    if (n < 4)
        throw ShapeError("grid: n must be >= 4, got " + std::to_string(n));
    if (nt < 4)
        throw ShapeError("grid: nt must be >= 4, got " + std::to_string(nt));
    if (!(T > t0) || !std::isfinite(T) || !std::isfinite(t0))
        throw ShapeError("grid: need T > t0");
    Grid g;
    g.d = d;
    g.n = n;
    g.dx = 1.0 / n;
    g.t0 = t0;
    g.T = T;
    g.nt = nt;
    g.dt = (T - t0) / nt;
    return g;
}

std::size_t Grid::points() const {
    return d == 1 ? static_cast<std::size_t>(n) : static_cast<std::size_t>(n) * n;
}

double Grid::cell_volume() const { return d == 1 ? dx : dx * dx; }

Point Grid::point(std::size_t i) const {
    if (d == 1)
        return {static_cast<double>(i) * dx, 0.0};
    return {static_cast<double>(i % n) * dx, static_cast<double>(i / n) * dx};
}

Point Grid::face(std::size_t i, int axis) const {
    Point p = point(i);
    p[axis] += 0.5 * dx;
    return p;
}

std::size_t Grid::neighbour(std::size_t i, int axis, int shift) const {
    const std::size_t un = static_cast<std::size_t>(n);
    const std::size_t s = static_cast<std::size_t>((shift % n + n) % n);
    if (d == 1)
        return (i + s) % un;
    std::size_t ix = i % un, iy = i / un;
    if (axis == 0)
        ix = (ix + s) % un;
    else
        iy = (iy + s) % un;
    return ix + un * iy;
}

bool Grid::same_shape(const Grid& o) const {
    return d == o.d && n == o.n && nt == o.nt && t0 == o.t0 && T == o.T;
}

ScalarPath::ScalarPath(const Grid& g, double fill)
    : ScalarPath(g.nt + 1, g.points(), fill) {}

ScalarPath::ScalarPath(int levels, std::size_t points, double fill)
    : levels_(levels), points_(points), v_(static_cast<std::size_t>(levels) * points, fill) {}

bool ScalarPath::matches(const Grid& g) const {
    return levels_ == g.nt + 1 && points_ == g.points();
}

bool ScalarPath::finite() const {
    return std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
}

VectorPath::VectorPath(const Grid& g, Staggering s, double fill)
    : levels_(g.nt + 1), points_(g.points()), d_(g.d), stag_(s),
      v_(static_cast<std::size_t>(g.nt + 1) * g.points() * g.d, fill) {}

bool VectorPath::matches(const Grid& g) const {
    return levels_ == g.nt + 1 && points_ == g.points() && d_ == g.d;
}

bool VectorPath::finite() const {
    return std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
}

std::optional<DensityViolation> check_density_slice(std::span<const double> m, const Grid& g) {
    if (m.size() != g.points())
        return DensityViolation{0, "shape mismatch"};
    double mass = 0.0, lo = 0.0;
    for (double v : m) {
        if (!std::isfinite(v))
            return DensityViolation{0, "non-finite value"};
        mass += v;
        lo = std::min(lo, v);
    }
    mass *= g.cell_volume();
    if (lo < -kMassEps)
        return DensityViolation{0, "negative density " + std::to_string(lo)};
    if (std::abs(mass - 1.0) > kMassTol)
        return DensityViolation{0, "mass " + std::to_string(mass) + " differs from 1"};
    return std::nullopt;
}

std::optional<DensityViolation> check_density(const ScalarPath& m, const Grid& g) {
    if (!m.matches(g))
        return DensityViolation{0, "shape mismatch"};
    for (int k = 0; k < m.levels(); ++k) {
        if (auto v = check_density_slice(m.slice(k), g)) {
            v->slice = k;
            return v;
        }
    }
    return std::nullopt;
}

DensityPath::DensityPath(ScalarPath values, const Grid& g) : v_(std::move(values)) {
    if (auto bad = check_density(v_, g))
        throw DensityError("density path invalid at slice " + std::to_string(bad->slice) + ": " +
                               bad->reason,
                           bad->slice);
}

namespace {

void require(std::size_t got, std::size_t want, const char* op) {
    if (got != want)
        throw ShapeError(std::string(op) + ": expected " + std::to_string(want) + " entries, got " +
                         std::to_string(got));
}

} // namespace

Field gradient(std::span<const double> f, const Grid& g) {
    const std::size_t N = g.points();
    require(f.size(), N, "gradient");
    Field out(N * g.d);
    const double h = 0.5 / g.dx;
    for (std::size_t i = 0; i < N; ++i)
        for (int a = 0; a < g.d; ++a)
            out[i * g.d + a] = (f[g.neighbour(i, a, 1)] - f[g.neighbour(i, a, -1)]) * h;
    return out;
}

Field laplacian(std::span<const double> f, const Grid& g) {
    const std::size_t N = g.points();
    require(f.size(), N, "laplacian");
    Field out(N, 0.0);
    const double h = 1.0 / (g.dx * g.dx);
    for (std::size_t i = 0; i < N; ++i)
        for (int a = 0; a < g.d; ++a)
            out[i] += (f[g.neighbour(i, a, 1)] - 2.0 * f[i] + f[g.neighbour(i, a, -1)]) * h;
    return out;
}

Field divergence(std::span<const double> v, const Grid& g) {
    const std::size_t N = g.points();
    require(v.size(), N * g.d, "divergence");
    Field out(N, 0.0);
    const double h = 0.5 / g.dx;
    for (std::size_t i = 0; i < N; ++i)
        for (int a = 0; a < g.d; ++a)
            out[i] += (v[g.neighbour(i, a, 1) * g.d + a] - v[g.neighbour(i, a, -1) * g.d + a]) * h;
    return out;
}

double integrate(std::span<const double> f, const Grid& g) {
    require(f.size(), g.points(), "integrate");
    double s = 0.0;
    for (double v : f)
        s += v;
    return s * g.cell_volume();
}

Field face_gradient(std::span<const double> f, const Grid& g) {
    const std::size_t N = g.points();
    require(f.size(), N, "face_gradient");
    Field out(N * g.d);
    for (std::size_t i = 0; i < N; ++i)
        for (int a = 0; a < g.d; ++a)
            out[i * g.d + a] = (f[g.neighbour(i, a, 1)] - f[i]) / g.dx;
    return out;
}

Field face_divergence(std::span<const double> v, const Grid& g) {
    const std::size_t N = g.points();
    require(v.size(), N * g.d, "face_divergence");
    Field out(N, 0.0);
    for (std::size_t i = 0; i < N; ++i)
        for (int a = 0; a < g.d; ++a)
            out[i] += (v[i * g.d + a] - v[g.neighbour(i, a, -1) * g.d + a]) / g.dx;
    return out;
}

VectorPath reconstruct_flux_1d(const ScalarPath& mu, const Grid& g) {
    if (g.d != 1)
        throw ShapeError("reconstruct_flux_1d: d must be 1");
    if (!mu.matches(g))
        throw ShapeError("reconstruct_flux_1d: mu does not match grid");
    for (int k = 0; k <= g.nt; ++k)
        if (std::abs(integrate(mu.slice(k), g)) > 1e-9)
            throw Error("reconstruct_flux_1d: slice " + std::to_string(k) + " has nonzero mean");

    const std::size_t n = g.points();
    VectorPath beta(g, Staggering::face);
    Field r(n), b(n);
    for (int k = 1; k <= g.nt; ++k) {
        Field lap = laplacian(mu.slice(k), g);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            r[i] = (mu(k, i) - mu(k - 1, i)) / g.dt - lap[i];
            mean += r[i];
        }
        mean /= static_cast<double>(n);
        // beta_{i+1/2} - beta_{i-1/2} = -r_i dx closes once r has zero mean
        double acc = 0.0, bmean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc -= (r[i] - mean) * g.dx;
            b[i] = acc;
            bmean += acc;
        }
        bmean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            beta(k, i) = b[i] - bmean;
    }
    return beta;
}

double continuity_residual(const ScalarPath& mu, const VectorPath& beta, const Grid& g) {
    if (!mu.matches(g) || !beta.matches(g) || beta.staggering() != Staggering::face)
        throw ShapeError("continuity_residual: shape mismatch");
    double worst = 0.0;
    for (int k = 1; k <= g.nt; ++k) {
        Field lap = laplacian(mu.slice(k), g);
        Field div = face_divergence(beta.slice(k), g);
        for (std::size_t i = 0; i < g.points(); ++i)
            worst = std::max(worst, std::abs((mu(k, i) - mu(k - 1, i)) / g.dt - lap[i] + div[i]));
    }
    return worst;
}

double w1_distance_1d(std::span<const double> m1, std::span<const double> m2, const Grid& g) {
    if (g.d != 1)
        throw ShapeError("w1_distance_1d: d must be 1");
    require(m1.size(), g.points(), "w1_distance_1d");
    require(m2.size(), g.points(), "w1_distance_1d");
    if (std::abs(integrate(m1, g) - integrate(m2, g)) > 1e-8)
        throw Error("w1_distance_1d: mass mismatch");
    const std::size_t n = g.points();
    Field cdf(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += (m1[i] - m2[i]) * g.dx;
        cdf[i] = acc;
    }
    // On the circle the transport cost is min_c sum |D_i - c| dx; a median
    // of D attains the minimum.
    Field sorted(cdf);
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    const double c = sorted[n / 2];
    double w = 0.0;
    for (double v : cdf)
        w += std::abs(v - c);
    return w * g.dx;
}

} // namespace mfg
