#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfg {

// Points and momenta carry up to two components; unused axes are zero.
using Point = std::array<double, 2>;
using Field = std::vector<double>;

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
  public:
    using Error::Error;
};

class SolverError : public Error {
  public:
    using Error::Error;
};

class DensityError : public Error {
  public:
    DensityError(const std::string& what, int slice)
        : Error(what), slice_(slice) {}
    int slice() const { return slice_; }

  private:
    int slice_;
};

inline constexpr double kMassEps = 1e-12;
inline constexpr double kMassTol = 1e-10;

struct Grid {
    int d = 1;
    int n = 0;
    double dx = 0.0;
    double t0 = 0.0;
    double T = 1.0;
    int nt = 0;
    double dt = 0.0;

    // Throws ShapeError on n < 4, nt < 4, T <= t0 or d outside {1, 2}.
    static Grid make(int d, int n, double t0, double T, int nt);

    std::size_t points() const;
    double cell_volume() const;
    double time(int k) const { return t0 + k * dt; }
    Point point(std::size_t i) const;
    // Midpoint between cell i and its periodic neighbour along `axis`.
    Point face(std::size_t i, int axis) const;
    // Periodic neighbour index of i shifted by `shift` along `axis`.
    std::size_t neighbour(std::size_t i, int axis, int shift) const;
    bool same_shape(const Grid& o) const;
};

// Values indexed by (level 0..nt, point).
class ScalarPath {
  public:
    ScalarPath() = default;
    explicit ScalarPath(const Grid& g, double fill = 0.0);
    ScalarPath(int levels, std::size_t points, double fill = 0.0);

    int levels() const { return levels_; }
    std::size_t points() const { return points_; }
    bool matches(const Grid& g) const;
    bool finite() const;

    double& operator()(int k, std::size_t i) { return v_[k * points_ + i]; }
    double operator()(int k, std::size_t i) const { return v_[k * points_ + i]; }
    std::span<double> slice(int k) { return {v_.data() + k * points_, points_}; }
    std::span<const double> slice(int k) const { return {v_.data() + k * points_, points_}; }
    const std::vector<double>& data() const { return v_; }
    std::vector<double>& data() { return v_; }

  private:
    int levels_ = 0;
    std::size_t points_ = 0;
    std::vector<double> v_;
};

// Cell-centred vectors live at grid points; face-staggered vectors store
// component `a` of point i at the face between i and i + e_a.
enum class Staggering { cell, face };

class VectorPath {
  public:
    VectorPath() = default;
    VectorPath(const Grid& g, Staggering s, double fill = 0.0);

    int levels() const { return levels_; }
    std::size_t points() const { return points_; }
    int dim() const { return d_; }
    Staggering staggering() const { return stag_; }
    bool matches(const Grid& g) const;
    bool finite() const;

    double& operator()(int k, std::size_t i, int a = 0) { return v_[(k * points_ + i) * d_ + a]; }
    double operator()(int k, std::size_t i, int a = 0) const { return v_[(k * points_ + i) * d_ + a]; }
    std::span<double> slice(int k) { return {v_.data() + k * points_ * d_, points_ * d_}; }
    std::span<const double> slice(int k) const { return {v_.data() + k * points_ * d_, points_ * d_}; }
    const std::vector<double>& data() const { return v_; }
    std::vector<double>& data() { return v_; }

  private:
    int levels_ = 0;
    std::size_t points_ = 0;
    int d_ = 1;
    Staggering stag_ = Staggering::cell;
    std::vector<double> v_;
};

struct DensityViolation {
    int slice = 0;
    std::string reason;
};

std::optional<DensityViolation> check_density_slice(std::span<const double> m, const Grid& g);
std::optional<DensityViolation> check_density(const ScalarPath& m, const Grid& g);

// A ScalarPath whose slices are probability densities. Construction
// validates and throws DensityError; nothing is renormalized.
class DensityPath {
  public:
    DensityPath() = default;
    DensityPath(ScalarPath values, const Grid& g);

    const ScalarPath& values() const { return v_; }
    int levels() const { return v_.levels(); }
    std::size_t points() const { return v_.points(); }
    double operator()(int k, std::size_t i) const { return v_(k, i); }
    std::span<const double> slice(int k) const { return v_.slice(k); }

  private:
    ScalarPath v_;
};

// Vector fields returned by gradient() use layout [i * d + a].
Field gradient(std::span<const double> f, const Grid& g);
Field laplacian(std::span<const double> f, const Grid& g);
Field divergence(std::span<const double> v, const Grid& g);
double integrate(std::span<const double> f, const Grid& g);

// Staggered pair, adjoint to each other: sum f * face_divergence(v)
// = -sum face_gradient(f) . v.
Field face_gradient(std::span<const double> f, const Grid& g);
Field face_divergence(std::span<const double> v, const Grid& g);

// Face flux beta with (mu^k - mu^{k-1})/dt - lap(mu^k) + face_div(beta^k) = 0
// for k = 1..nt; beta^0 = 0 and every slice has zero mean.
VectorPath reconstruct_flux_1d(const ScalarPath& mu, const Grid& g);

// max over k >= 1 and i of the discrete continuity residual.
double continuity_residual(const ScalarPath& mu, const VectorPath& beta, const Grid& g);

double w1_distance_1d(std::span<const double> m1, std::span<const double> m2, const Grid& g);

} // namespace mfg
