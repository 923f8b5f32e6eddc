#pragma once

#include <complex>
#include <memory>

#include "palab/numerics.hpp"
#include "palab/slowdown.hpp"

namespace palab {

using Complex = std::complex<double>;

enum class Direction { Forward, Backward };

inline double direction_time(Direction d) { return d == Direction::Forward ? 1.0 : -1.0; }

struct SectorCoord {
  double rho = 0.0;
  double tau = 0.0;  // [0, 2 pi)
  int sector_j = 0;
};

namespace detail {

inline double wrap_pi(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? a + 2.0 * kPi : a;
}

}  // namespace detail

/// Sector of z: sector j is centred on the unstable prong at 2 j pi / p.
/// Angles within 1e-12 of a stable prong go to the lower index.
inline int sector_of(Complex z, int p) {
  double tau = std::arg(z);
  if (tau < 0.0) tau += 2.0 * kPi;
  const double x = tau * p / (2.0 * kPi) + 0.5;  // boundaries at integers
  const double fl = std::floor(x);
  const double frac = x - fl;
  const double tol = 1e-12 * p / (2.0 * kPi);
  auto mod = [p](long k) { return static_cast<int>(((k % p) + p) % p); };
  const long k = static_cast<long>(fl);
  if (frac < tol) return std::min(mod(k - 1), mod(k));
  if (frac > 1.0 - tol) return std::min(mod(k), mod(k + 1));
  return mod(k);
}

inline SectorCoord sector_coord(Complex z, int p) {
  double tau = std::arg(z);
  if (tau < 0.0) tau += 2.0 * kPi;
  if (tau >= 2.0 * kPi) tau = 0.0;
  return {std::abs(z), tau, sector_of(z, p)};
}

/// Phi_j(z) = (-1)^j (2/p) z^{p/2}, branch continuous on sector j; image in Re >= 0.
inline Complex sector_map(Complex z, int j, int p) {
  require_finite(z.real(), "sector_map");
  require_finite(z.imag(), "sector_map");
  if (z == Complex(0.0, 0.0)) return {0.0, 0.0};
  const double delta = detail::wrap_pi(std::arg(z) - 2.0 * kPi * j / p);
  if (std::abs(delta) > kPi / p + 1e-12) throw ParameterError("sector_map: point outside sector wedge");
  const double rho = std::abs(z);
  return std::polar((2.0 / p) * std::pow(rho, 0.5 * p), 0.5 * p * delta);
}

inline Complex sector_map_inv(Complex s, int j, int p) {
  require_finite(s.real(), "sector_map_inv");
  require_finite(s.imag(), "sector_map_inv");
  if (s == Complex(0.0, 0.0)) return {0.0, 0.0};
  if (s.real() < -1e-12 * std::abs(s)) throw ParameterError("sector_map_inv: point outside right half-plane");
  const double psi = std::clamp(std::arg(s), -0.5 * kPi, 0.5 * kPi);
  const double rho = std::pow(0.5 * p * std::abs(s), 2.0 / p);
  return std::polar(rho, 2.0 * kPi * j / p + 2.0 * psi / p);
}

/// Radial mass-push phi(z) = A J(|z|^2)^{p/4} z/|z| with J(U) = int_0^U du / Psi.
class MassPush {
 public:
  explicit MassPush(std::shared_ptr<const Slowdown> sd, std::size_t nodes = 4096) : sd_(std::move(sd)) {
    const auto& q = sd_->params();
    enabled_ = q.enabled;
    r0sq_ = q.r0 * q.r0;
    r1sq_ = q.r1 * q.r1;
    c_ = q.psi_coeff;
    alpha_ = q.alpha;
    p_ = q.p;
    A_ = q.A_coeff;
    if (!enabled_) return;
    J1_ = std::pow(r1sq_, 1.0 - alpha_) / (c_ * (1.0 - alpha_));
    auto inv_psi = [this](double u) { return 1.0 / sd_->psi(u); };
    blend_ = ChebyshevInterpolant(r1sq_, r0sq_, nodes, [&](const std::vector<double>& x) {
      std::vector<double> v(x.size(), 0.0);
      for (std::size_t k = 1; k < x.size(); ++k) v[k] = v[k - 1] + integrate(inv_psi, x[k - 1], x[k]);
      return v;
    });
    J0_ = J1_ + blend_.values().back();
  }

  const Slowdown& slowdown() const { return *sd_; }

  double J(double U) const {
    if (!(U >= 0.0)) throw ParameterError("mass push: negative radius");
    if (!enabled_) return U;
    if (U <= r1sq_) return std::pow(U, 1.0 - alpha_) / (c_ * (1.0 - alpha_));
    if (U >= r0sq_) return J0_ + (U - r0sq_);
    return J1_ + blend_(U);
  }

  double J_inv(double v) const {
    if (!(v >= 0.0)) throw ParameterError("mass push: inverse target outside image");
    if (!enabled_) return v;
    if (v <= J1_) return std::pow(v * c_ * (1.0 - alpha_), 1.0 / (1.0 - alpha_));
    if (v >= J0_) return r0sq_ + (v - J0_);
    double lo = r1sq_, hi = r0sq_;
    double U = r1sq_ + (v - J1_) / (J0_ - J1_) * (r0sq_ - r1sq_);
    for (int it = 0; it < 200; ++it) {
      const double f = J1_ + blend_(U) - v;
      if (f > 0.0) hi = U;
      else lo = U;
      const double step = f * sd_->psi(U);
      if (std::abs(step) <= 4e-16 * U) return U - step;
      double Un = U - step;
      if (!(Un > lo && Un < hi)) Un = 0.5 * (lo + hi);
      if (hi - lo <= 4e-16 * U) return Un;
      U = Un;
    }
    throw ToleranceError("mass push inverse: Newton did not converge");
  }

  /// R(r), the radial profile of phi.
  double radial(double r) const {
    require_finite(r, "mass push");
    if (r < 0.0) throw ParameterError("mass push: negative radius");
    if (enabled_ && r * r <= r1sq_) return std::pow(r, 0.5 * p_ * (1.0 - alpha_));
    return A_ * std::pow(J(r * r), 0.25 * p_);
  }

  double radial_inv(double q) const {
    require_finite(q, "mass push inverse");
    if (q < 0.0) throw ParameterError("mass push: inverse target outside image");
    if (q == 0.0) return 0.0;
    if (enabled_ && q <= std::pow(r1sq_, 0.25 * p_ * (1.0 - alpha_))) return std::pow(q, 2.0 / (p_ * (1.0 - alpha_)));
    return std::sqrt(J_inv(std::pow(q / A_, 4.0 / p_)));
  }

  double radial_derivative(double r) const {
    const double U = r * r;
    return A_ * 0.25 * p_ * std::pow(J(U), 0.25 * p_ - 1.0) * 2.0 * r / sd_->psi(U);
  }

  Complex apply(Complex z) const {
    const double r = std::abs(z);
    if (r == 0.0) return z;
    return z * (radial(r) / r);
  }

  Complex inverse(Complex w) const {
    const double q = std::abs(w);
    if (q == 0.0) return w;
    return w * (radial_inv(q) / q);
  }

 private:
  std::shared_ptr<const Slowdown> sd_;
  bool enabled_ = true;
  double r0sq_ = 0, r1sq_ = 0, c_ = 1, alpha_ = 0, A_ = 1, J0_ = 0, J1_ = 0;
  int p_ = 4;
  ChebyshevInterpolant blend_;
};

struct Density {
  double value = 0.0;
  bool limit = false;  // true at z = 0, where the constant limit is returned
};

/// Chart Xi = phi^{-1} o Phi_j and the slowed map written in it.
class LocalChart {
 public:
  explicit LocalChart(const SlowdownParams& params)
      : sd_(std::make_shared<const Slowdown>(params)), push_(sd_) {}

  const SlowdownParams& params() const { return sd_->params(); }
  const Slowdown& slowdown() const { return *sd_; }
  const MassPush& mass_push() const { return push_; }
  int p() const { return sd_->params().p; }

  /// Plane radius below which the slowed flow is used instead of F.
  double pipeline_radius() const { return params().lambda * params().r0; }

  Complex xi(Complex z, int j) const { return push_.inverse(sector_map(z, j, p())); }
  Complex xi_inv(Complex s, int j) const { return sector_map_inv(push_.apply(s), j, p()); }

  /// One step of G_p (inside the pipeline disk) or F (outside), t = +-1.
  PlanePoint plane_step(PlanePoint s, Direction d) const {
    const double t = direction_time(d);
    if (s.norm() < pipeline_radius()) return sd_->flow(s, t);
    return sd_->linear(s, t);
  }

  Complex local_g(Complex z, Direction d) const {
    require_finite(z.real(), "local_g");
    require_finite(z.imag(), "local_g");
    if (std::abs(z) > params().a_star * (1.0 + 1e-12)) throw ParameterError("local_g: point outside chart");
    if (z == Complex(0.0, 0.0)) return z;
    const int j = sector_of(z, p());
    const Complex s = xi(z, j);
    const PlanePoint out = plane_step({s.real(), s.imag()}, d);
    return xi_inv({out.s1, out.s2}, j);
  }

  /// Xi^{-1} F Xi with no slow-down.
  Complex linear_model(Complex z, Direction d) const {
    if (z == Complex(0.0, 0.0)) return z;
    const int j = sector_of(z, p());
    const Complex s = xi(z, j);
    const PlanePoint out = sd_->linear({s.real(), s.imag()}, direction_time(d));
    return xi_inv({out.s1, out.s2}, j);
  }

  /// Same map in the flat cone chart: Phi_j^{-1} o G_p o Phi_j (no mass push).
  Complex flat_step(Complex w, Direction d) const {
    if (w == Complex(0.0, 0.0)) return w;
    const int j = sector_of(w, p());
    const Complex s = sector_map(w, j, p());
    const PlanePoint out = plane_step({s.real(), s.imag()}, d);
    return sector_map_inv({out.s1, out.s2}, j, p());
  }

  /// Density of the pulled-back form ds/Psi relative to Lebesgue in the chart.
  Density omega_p_density(Complex z) const {
    const double rho = std::abs(z);
    if (rho == 0.0) return {omega_constant(), true};
    const int pp = p();
    const double q = (2.0 / pp) * std::pow(rho, 0.5 * pp);
    const double r = push_.radial_inv(q);
    const double dens = std::pow(rho, pp - 2.0) * (r / q) / (push_.radial_derivative(r) * sd_->psi(r * r));
    return {dens, false};
  }

  double omega_constant() const {
    const double a = params().alpha;
    const double half = 0.5 * p();
    return std::pow(half, 1.0 - 4.0 / p() - 2.0 * a) / (1.0 - a);
  }

  /// Chart radius inside which Xi is the pure power map.
  double pure_power_radius() const {
    const auto& q = params();
    return SlowdownParams::chart_radius(q.p, push_.radial(q.r1));
  }

 private:
  std::shared_ptr<const Slowdown> sd_;
  MassPush push_;
};

}  // namespace palab
