#include "mfg/cyclic.hpp"

#include <cmath>

#include "mfg/grid.hpp"

namespace mfg {

namespace {

void thomas(const std::vector<double>& a, const std::vector<double>& b,
            const std::vector<double>& c, std::span<const double> r,
            std::vector<double>& x, std::vector<double>& scratch) {
    const std::size_t n = b.size();
    x.resize(n);
    scratch.resize(n);
    double piv = b[0];
    if (piv == 0.0)
        throw SolverError("cyclic tridiagonal solve: zero pivot");
    x[0] = r[0] / piv;
    for (std::size_t j = 1; j < n; ++j) {
        scratch[j] = c[j - 1] / piv;
        piv = b[j] - a[j] * scratch[j];
        if (piv == 0.0)
            throw SolverError("cyclic tridiagonal solve: zero pivot");
        x[j] = (r[j] - a[j] * x[j - 1]) / piv;
    }
    for (std::size_t j = n - 1; j-- > 0;)
        x[j] -= scratch[j + 1] * x[j + 1];
}

} // namespace

CyclicTridiagonal CyclicTridiagonal::transposed() const {
    const std::size_t n = size();
    CyclicTridiagonal t(n);
    for (std::size_t i = 0; i < n; ++i) {
        t.diag[i] = diag[i];
        t.lower[i] = upper[(i + n - 1) % n];
        t.upper[i] = lower[(i + 1) % n];
    }
    return t;
}

std::vector<double> CyclicTridiagonal::apply(std::span<const double> x) const {
    const std::size_t n = size();
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i)
        y[i] = lower[i] * x[(i + n - 1) % n] + diag[i] * x[i] + upper[i] * x[(i + 1) % n];
    return y;
}

std::vector<double> CyclicTridiagonal::solve(std::span<const double> rhs) const {
    const std::size_t n = size();
    if (n < 3 || rhs.size() != n)
        throw ShapeError("cyclic tridiagonal solve: bad size");
    const double alpha = upper[n - 1]; // bottom-left corner
    const double beta = lower[0];      // top-right corner
    const double gamma = -diag[0];

    std::vector<double> b(diag);
    b[0] = diag[0] - gamma;
    b[n - 1] = diag[n - 1] - alpha * beta / gamma;

    std::vector<double> x, z, scratch;
    thomas(lower, b, upper, rhs, x, scratch);
    std::vector<double> u(n, 0.0);
    u[0] = gamma;
    u[n - 1] = alpha;
    thomas(lower, b, upper, u, z, scratch);

    const double fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] -= fact * z[i];
        if (!std::isfinite(x[i]))
            throw SolverError("cyclic tridiagonal solve: non-finite result");
    }
    return x;
}

} // namespace mfg
