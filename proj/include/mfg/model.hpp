#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>

#include "mfg/grid.hpp"

namespace mfg {

// H(x, p, m) = h0(x, p) - F(x, m); L0 is the Legendre dual of h0 in the
// sense l0(x, -dp_h0(x, p)) = p . dp_h0(x, p) - h0(x, p).
struct Hamiltonian {
    std::string label;
    std::function<double(const Point& x, const Point& p)> h0;
    std::function<Point(const Point& x, const Point& p)> dp_h0;
    std::function<double(const Point& x, const Point& a)> l0;
    std::function<Point(const Point& x, const Point& a)> da_l0;
};

Hamiltonian quadratic_hamiltonian();

// l0(x, -dp_h0(x,p)) + h0(x,p) - p . dp_h0(x,p); zero for a consistent pair.
double legendre_defect(const Hamiltonian& H, const Point& x, const Point& p);

struct Kernel {
    std::string label;
    double frequency = 1.0;
    double phase = 0.0;
    bool symmetric = true;
    std::function<double(const Point& x, const Point& y)> f;
};

// cos(2 pi k (x - y) - phase), along axis 0
Kernel cos_diff_kernel(double frequency = 1.0, double phase = 0.0);
// cos(2 pi k x) cos(2 pi k y)
Kernel cos_product_kernel(double frequency = 1.0);
// cos(2 pi k x), no dependence on y
Kernel x_only_kernel(double frequency = 1.0);

struct MomentWeight {
    std::string label;
    double frequency = 1.0;
    std::function<double(const Point& z)> c;
};

MomentWeight cos_weight(double frequency = 1.0);
MomentWeight constant_weight(double value = 1.0);

struct Profile {
    std::string label;
    std::function<double(double)> g;
    std::function<double(double)> dg;
};

Profile square_profile(); // s^2 / 2
Profile linear_profile(); // s

// Fixed spatial profile for m-independent couplings.
struct SpatialProfile {
    std::string label;
    double amplitude = 0.0;
    double frequency = 1.0;
    std::function<double(const Point& x)> f;
};

SpatialProfile cosine_profile(double amplitude, double frequency = 1.0);

// lambda-free part of a coupling. Derivatives use the canonical order
// delta_m(x_base, m, y_direction) and are normalized to integrate to zero
// against m in y.
class CouplingModel {
  public:
    virtual ~CouplingModel() = default;
    virtual std::string label() const = 0;
    virtual bool depends_on_m() const { return true; }
    virtual bool x_free() const { return false; }

    virtual double eval(const Grid& g, const Point& x, std::span<const double> m) const = 0;
    virtual double delta_m(const Grid& g, const Point& x, std::span<const double> m,
                           const Point& y) const = 0;

    // F(x_i, m) at every grid point.
    virtual Field field(const Grid& g, std::span<const double> m) const;
    // y_j -> sum_i delta_m(x_i, m, y_j) m_i dx^d
    virtual Field residual(const Grid& g, std::span<const double> m) const;
};

class Coupling {
  public:
    Coupling();
    Coupling(std::shared_ptr<const CouplingModel> model, double strength);

    const std::string label() const { return model_->label(); }
    double strength() const { return strength_; }
    bool depends_on_m() const { return strength_ != 0.0 && model_->depends_on_m(); }
    bool x_free() const { return model_->x_free(); }
    const CouplingModel& model() const { return *model_; }
    Coupling with_strength(double s) const { return Coupling(model_, s); }

    double eval(const Grid& g, const Point& x, std::span<const double> m) const;
    double delta_m(const Grid& g, const Point& x, std::span<const double> m, const Point& y) const;
    Field field(const Grid& g, std::span<const double> m) const;
    Field residual(const Grid& g, std::span<const double> m) const;

  private:
    std::shared_ptr<const CouplingModel> model_;
    double strength_ = 0.0;
};

using TerminalCost = Coupling;

Coupling coupling_zero();
Coupling coupling_fixed(const SpatialProfile& f);
Coupling coupling_convolution(const Kernel& phi, double lambda);
Coupling coupling_efficient(const Kernel& phi, double lambda);
// Throws Error if k is not symmetric.
Coupling coupling_potential(const Kernel& k, double lambda);
Coupling coupling_xfree(const Profile& g, const MomentWeight& c, double lambda);

// Relative mismatch between delta_m(x, m, y) - <delta_m(x, m, .), m> and the
// one-sided difference quotient of eval along the grid delta at y_index.
// Normalized by max(|analytic|, sup_y |analytic|); returns 0 when both vanish.
double delta_m_fd_check(const Coupling& C, const Grid& g, std::span<const double> m,
                        const Point& x, std::size_t y_index, double s);

// y -> int dG/dm(x, m, y) m(dx) + G(y, m) - int G(x, m) m(dx)
Field delta_ghat(const TerminalCost& G, const Grid& g, std::span<const double> m);

struct Problem {
    Hamiltonian hamiltonian;
    Coupling coupling;
    TerminalCost terminal;
    Field m0;
    Grid grid;
};

// Checks m0 and the Hamiltonian's l0(x, 0) = 0 requirement of the upwind
// discretization. Throws DensityError / Error.
Problem make_problem(Hamiltonian H, Coupling F, TerminalCost G, Field m0, const Grid& g);

Field cosine_density(const Grid& g, double amplitude, double frequency = 1.0);
Field uniform_density(const Grid& g);

} // namespace mfg
