#include "mfg/model.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace mfg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1]; }

double mass_of(const Grid& g, std::span<const double> m) {
    double s = 0.0;
    for (double v : m)
        s += v;
    return s * g.cell_volume();
}

// Kernel values phi(x_i, x_j) on a grid, row-major, cached per grid shape.
class KernelMatrix {
  public:
    explicit KernelMatrix(Kernel k) : k_(std::move(k)) {}

    const Kernel& kernel() const { return k_; }

    std::shared_ptr<const Field> on(const Grid& g) const {
        const auto key = std::make_pair(g.d, g.n);
        std::lock_guard<std::mutex> lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end())
            return it->second;
        const std::size_t N = g.points();
        auto mat = std::make_shared<Field>(N * N);
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j)
                (*mat)[i * N + j] = k_.f(g.point(i), g.point(j));
        cache_.emplace(key, mat);
        return mat;
    }

    // A_i = sum_j phi(x_i, y_j) m_j vol, B_i = sum_j phi(y_j, x_i) m_j vol
    void moments(const Grid& g, std::span<const double> m, Field& A, Field& B, double& Q) const {
        auto mat = on(g);
        const Field& P = *mat;
        const std::size_t N = g.points();
        const double vol = g.cell_volume();
        A.assign(N, 0.0);
        B.assign(N, 0.0);
        for (std::size_t i = 0; i < N; ++i) {
            const double* row = P.data() + i * N;
            double a = 0.0;
            for (std::size_t j = 0; j < N; ++j)
                a += row[j] * m[j];
            A[i] = a * vol;
            const double mi = m[i] * vol;
            for (std::size_t j = 0; j < N; ++j)
                B[j] += row[j] * mi;
        }
        Q = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            Q += A[i] * m[i];
        Q *= vol;
    }

    double left(const Grid& g, const Point& x, std::span<const double> m) const {
        double a = 0.0;
        for (std::size_t j = 0; j < g.points(); ++j)
            a += k_.f(x, g.point(j)) * m[j];
        return a * g.cell_volume();
    }

    double right(const Grid& g, const Point& x, std::span<const double> m) const {
        double b = 0.0;
        for (std::size_t j = 0; j < g.points(); ++j)
            b += k_.f(g.point(j), x) * m[j];
        return b * g.cell_volume();
    }

    double total(const Grid& g, std::span<const double> m) const {
        Field A, B;
        double Q;
        moments(g, m, A, B, Q);
        return Q;
    }

  private:
    Kernel k_;
    mutable std::mutex mu_;
    mutable std::map<std::pair<int, int>, std::shared_ptr<const Field>> cache_;
};

class ZeroModel final : public CouplingModel {
  public:
    std::string label() const override { return "zero"; }
    bool depends_on_m() const override { return false; }
    bool x_free() const override { return true; }
    double eval(const Grid&, const Point&, std::span<const double>) const override { return 0.0; }
    double delta_m(const Grid&, const Point&, std::span<const double>, const Point&) const override {
        return 0.0;
    }
    Field field(const Grid& g, std::span<const double>) const override { return Field(g.points(), 0.0); }
    Field residual(const Grid& g, std::span<const double>) const override {
        return Field(g.points(), 0.0);
    }
};

class FixedModel final : public CouplingModel {
  public:
    explicit FixedModel(SpatialProfile f) : f_(std::move(f)) {}
    std::string label() const override { return "fixed"; }
    bool depends_on_m() const override { return false; }
    double eval(const Grid&, const Point& x, std::span<const double>) const override { return f_.f(x); }
    double delta_m(const Grid&, const Point&, std::span<const double>, const Point&) const override {
        return 0.0;
    }
    Field residual(const Grid& g, std::span<const double>) const override {
        return Field(g.points(), 0.0);
    }

  private:
    SpatialProfile f_;
};

// F = A(x)
class ConvolutionModel final : public CouplingModel {
  public:
    explicit ConvolutionModel(Kernel k) : km_(std::move(k)) {}
    std::string label() const override { return "convolution"; }
    double eval(const Grid& g, const Point& x, std::span<const double> m) const override {
        return km_.left(g, x, m);
    }
    double delta_m(const Grid& g, const Point& x, std::span<const double> m,
                   const Point& y) const override {
        return km_.kernel().f(x, y) - km_.left(g, x, m);
    }
    Field field(const Grid& g, std::span<const double> m) const override {
        Field A, B;
        double Q;
        km_.moments(g, m, A, B, Q);
        return A;
    }
    Field residual(const Grid& g, std::span<const double> m) const override {
        Field A, B;
        double Q;
        km_.moments(g, m, A, B, Q);
        for (double& b : B)
            b -= Q;
        return B;
    }

  private:
    KernelMatrix km_;
};

// F = A(x) + B(x) - Q, the flat derivative of Q(m) = int int phi m m
class EfficientModel final : public CouplingModel {
  public:
    explicit EfficientModel(Kernel k) : km_(std::move(k)) {}
    std::string label() const override { return "efficient"; }
    double eval(const Grid& g, const Point& x, std::span<const double> m) const override {
        return km_.left(g, x, m) + km_.right(g, x, m) - km_.total(g, m);
    }
    double delta_m(const Grid& g, const Point& x, std::span<const double> m,
                   const Point& y) const override {
        const auto& f = km_.kernel().f;
        const double Q = km_.total(g, m);
        return f(x, y) + f(y, x) - km_.left(g, x, m) - km_.right(g, x, m) - km_.left(g, y, m) -
               km_.right(g, y, m) + 2.0 * Q;
    }
    Field field(const Grid& g, std::span<const double> m) const override {
        Field A, B;
        double Q;
        km_.moments(g, m, A, B, Q);
        for (std::size_t i = 0; i < A.size(); ++i)
            A[i] += B[i] - Q;
        return A;
    }
    Field residual(const Grid& g, std::span<const double> m) const override {
        Field A, B;
        double Q;
        km_.moments(g, m, A, B, Q);
        const double M = mass_of(g, m);
        Field r(A.size());
        for (std::size_t j = 0; j < r.size(); ++j)
            r[j] = (1.0 - M) * (A[j] + B[j]) + 2.0 * Q * (M - 1.0);
        return r;
    }

  private:
    KernelMatrix km_;
};

// F = K(x) - Q, the flat derivative of (1/2) int int k m m
class PotentialModel final : public CouplingModel {
  public:
    explicit PotentialModel(Kernel k) : km_(std::move(k)) {}
    std::string label() const override { return "potential"; }
    double eval(const Grid& g, const Point& x, std::span<const double> m) const override {
        return km_.left(g, x, m) - km_.total(g, m);
    }
    double delta_m(const Grid& g, const Point& x, std::span<const double> m,
                   const Point& y) const override {
        const double Q = km_.total(g, m);
        return km_.kernel().f(x, y) - km_.left(g, x, m) - 2.0 * km_.left(g, y, m) + 2.0 * Q;
    }
    Field field(const Grid& g, std::span<const double> m) const override {
        Field A, B;
        double Q;
        km_.moments(g, m, A, B, Q);
        for (double& a : A)
            a -= Q;
        return A;
    }
    Field residual(const Grid& g, std::span<const double> m) const override {
        Field A, B;
        double Q;
        km_.moments(g, m, A, B, Q);
        const double M = mass_of(g, m);
        Field r(A.size());
        for (std::size_t j = 0; j < r.size(); ++j)
            r[j] = A[j] - Q - 2.0 * M * A[j] + 2.0 * M * Q;
        return r;
    }

  private:
    KernelMatrix km_;
};

// F = g(s), s = int c m
class XFreeModel final : public CouplingModel {
  public:
    XFreeModel(Profile p, MomentWeight c) : p_(std::move(p)), c_(std::move(c)) {}
    std::string label() const override { return "xfree"; }
    bool x_free() const override { return true; }
    double eval(const Grid& g, const Point&, std::span<const double> m) const override {
        return p_.g(moment(g, m));
    }
    double delta_m(const Grid& g, const Point&, std::span<const double> m,
                   const Point& y) const override {
        const double s = moment(g, m);
        return p_.dg(s) * (c_.c(y) - s);
    }
    Field field(const Grid& g, std::span<const double> m) const override {
        return Field(g.points(), p_.g(moment(g, m)));
    }
    Field residual(const Grid& g, std::span<const double> m) const override {
        const double s = moment(g, m);
        const double M = mass_of(g, m);
        Field r(g.points());
        for (std::size_t j = 0; j < r.size(); ++j)
            r[j] = M * p_.dg(s) * (c_.c(g.point(j)) - s);
        return r;
    }

  private:
    double moment(const Grid& g, std::span<const double> m) const {
        double s = 0.0;
        for (std::size_t j = 0; j < g.points(); ++j)
            s += c_.c(g.point(j)) * m[j];
        return s * g.cell_volume();
    }

    Profile p_;
    MomentWeight c_;
};

} // namespace

Hamiltonian quadratic_hamiltonian() {
    Hamiltonian H;
    H.label = "quadratic";
    H.h0 = [](const Point&, const Point& p) { return 0.5 * dot(p, p); };
    H.dp_h0 = [](const Point&, const Point& p) { return p; };
    H.l0 = [](const Point&, const Point& a) { return 0.5 * dot(a, a); };
    H.da_l0 = [](const Point&, const Point& a) { return a; };
    return H;
}

double legendre_defect(const Hamiltonian& H, const Point& x, const Point& p) {
    const Point q = H.dp_h0(x, p);
    return H.l0(x, {-q[0], -q[1]}) + H.h0(x, p) - dot(p, q);
}

Kernel cos_diff_kernel(double frequency, double phase) {
    Kernel k;
    k.label = "cos_diff";
    k.frequency = frequency;
    k.phase = phase;
    k.symmetric = (phase == 0.0);
    k.f = [frequency, phase](const Point& x, const Point& y) {
        return std::cos(kTwoPi * frequency * (x[0] - y[0]) - phase);
    };
    return k;
}

Kernel cos_product_kernel(double frequency) {
    Kernel k;
    k.label = "cos_product";
    k.frequency = frequency;
    k.f = [frequency](const Point& x, const Point& y) {
        return std::cos(kTwoPi * frequency * x[0]) * std::cos(kTwoPi * frequency * y[0]);
    };
    return k;
}

Kernel x_only_kernel(double frequency) {
    Kernel k;
    k.label = "x_only";
    k.frequency = frequency;
    k.symmetric = false;
    k.f = [frequency](const Point& x, const Point&) { return std::cos(kTwoPi * frequency * x[0]); };
    return k;
}

MomentWeight cos_weight(double frequency) {
    return {"cos", frequency, [frequency](const Point& z) { return std::cos(kTwoPi * frequency * z[0]); }};
}

MomentWeight constant_weight(double value) {
    return {"constant", value, [value](const Point&) { return value; }};
}

Profile square_profile() {
    return {"square", [](double s) { return 0.5 * s * s; }, [](double s) { return s; }};
}

Profile linear_profile() {
    return {"linear", [](double s) { return s; }, [](double) { return 1.0; }};
}

SpatialProfile cosine_profile(double amplitude, double frequency) {
    SpatialProfile p;
    p.label = "cosine";
    p.amplitude = amplitude;
    p.frequency = frequency;
    p.f = [amplitude, frequency](const Point& x) {
        return amplitude * std::cos(kTwoPi * frequency * x[0]);
    };
    return p;
}

Field CouplingModel::field(const Grid& g, std::span<const double> m) const {
    Field out(g.points());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = eval(g, g.point(i), m);
    return out;
}

Field CouplingModel::residual(const Grid& g, std::span<const double> m) const {
    const std::size_t N = g.points();
    Field out(N, 0.0);
    for (std::size_t j = 0; j < N; ++j) {
        const Point y = g.point(j);
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i)
            s += delta_m(g, g.point(i), m, y) * m[i];
        out[j] = s * g.cell_volume();
    }
    return out;
}

Coupling::Coupling() : model_(std::make_shared<ZeroModel>()), strength_(0.0) {}

Coupling::Coupling(std::shared_ptr<const CouplingModel> model, double strength)
    : model_(std::move(model)), strength_(strength) {
    if (!model_)
        throw Error("coupling: null model");
}

double Coupling::eval(const Grid& g, const Point& x, std::span<const double> m) const {
    return strength_ * model_->eval(g, x, m);
}

double Coupling::delta_m(const Grid& g, const Point& x, std::span<const double> m,
                         const Point& y) const {
    return strength_ * model_->delta_m(g, x, m, y);
}

Field Coupling::field(const Grid& g, std::span<const double> m) const {
    Field f = model_->field(g, m);
    for (double& v : f)
        v *= strength_;
    return f;
}

Field Coupling::residual(const Grid& g, std::span<const double> m) const {
    Field r = model_->residual(g, m);
    for (double& v : r)
        v *= strength_;
    return r;
}

Coupling coupling_zero() { return Coupling(std::make_shared<ZeroModel>(), 1.0); }

Coupling coupling_fixed(const SpatialProfile& f) {
    return Coupling(std::make_shared<FixedModel>(f), 1.0);
}

Coupling coupling_convolution(const Kernel& phi, double lambda) {
    return Coupling(std::make_shared<ConvolutionModel>(phi), lambda);
}

Coupling coupling_efficient(const Kernel& phi, double lambda) {
    return Coupling(std::make_shared<EfficientModel>(phi), lambda);
}

Coupling coupling_potential(const Kernel& k, double lambda) {
    if (!k.symmetric)
        throw Error("coupling_potential: kernel '" + k.label + "' is not symmetric");
    return Coupling(std::make_shared<PotentialModel>(k), lambda);
}

Coupling coupling_xfree(const Profile& g, const MomentWeight& c, double lambda) {
    return Coupling(std::make_shared<XFreeModel>(g, c), lambda);
}

double delta_m_fd_check(const Coupling& C, const Grid& g, std::span<const double> m,
                        const Point& x, std::size_t y_index, double s) {
    if (!(s > 0.0 && s <= 1e-3))
        throw Error("delta_m_fd_check: need 0 < s <= 1e-3");
    if (auto bad = check_density_slice(m, g))
        throw DensityError("delta_m_fd_check: " + bad->reason, 0);
    const std::size_t N = g.points();
    if (y_index >= N)
        throw ShapeError("delta_m_fd_check: y index out of range");
    for (double v : m)
        if (!(v > 0.0))
            throw DensityError("delta_m_fd_check: m must be strictly positive", 0);

    const double vol = g.cell_volume();
    Field an(N);
    double avg = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
        an[j] = C.delta_m(g, x, m, g.point(j));
        avg += an[j] * m[j];
    }
    avg *= vol;
    double scale = 0.0;
    for (double a : an)
        scale = std::max(scale, std::abs(a - avg));
    const double analytic = an[y_index] - avg;

    Field mp(N);
    for (std::size_t j = 0; j < N; ++j)
        mp[j] = (1.0 - s) * m[j];
    mp[y_index] += s / vol;
    const double fd = (C.eval(g, x, mp) - C.eval(g, x, m)) / s;

    const double err = std::abs(fd - analytic);
    const double denom = std::max(std::abs(analytic), scale);
    return denom > 0.0 ? err / denom : err;
}

Field delta_ghat(const TerminalCost& G, const Grid& g, std::span<const double> m) {
    Field r = G.residual(g, m);
    Field f = G.field(g, m);
    double ghat = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        ghat += f[i] * m[i];
    ghat *= g.cell_volume();
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] += f[i] - ghat;
    return r;
}

Problem make_problem(Hamiltonian H, Coupling F, TerminalCost G, Field m0, const Grid& g) {
    if (auto bad = check_density_slice(m0, g))
        throw DensityError("initial density: " + bad->reason, 0);
    for (std::size_t i = 0; i < g.points(); ++i)
        for (int a = 0; a < g.d; ++a)
            if (std::abs(H.l0(g.face(i, a), {0.0, 0.0})) > 1e-14)
                throw Error("hamiltonian '" + H.label + "': l0(x, 0) must vanish");
    return Problem{std::move(H), std::move(F), std::move(G), std::move(m0), g};
}

Field cosine_density(const Grid& g, double amplitude, double frequency) {
    if (std::abs(amplitude) >= 1.0)
        throw Error("cosine density: |amplitude| must be < 1");
    Field m(g.points());
    for (std::size_t i = 0; i < m.size(); ++i)
        m[i] = 1.0 + amplitude * std::cos(kTwoPi * frequency * g.point(i)[0]);
    return m;
}

Field uniform_density(const Grid& g) { return Field(g.points(), 1.0); }

} // namespace mfg
