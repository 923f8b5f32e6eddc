#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "palab/numerics.hpp"

namespace palab {

struct PlanePoint {
  double s1 = 0.0;
  double s2 = 0.0;
  double norm() const { return std::hypot(s1, s2); }
  double norm2() const { return s1 * s1 + s2 * s2; }
};

/// User-facing knobs; everything else in SlowdownParams is derived from these.
struct SlowdownInputs {
  int p = 4;
  double alpha = 0.2;
  double lambda = 2.0 + std::sqrt(3.0);
  double rho0 = 0.05;
  double rho1 = 0.0;  // 0 selects the largest radius allowed by the containments
  double a_star = 0.15;
  double mu = 0.25;
  bool enabled = true;  // false makes Psi identically 1 (control runs)
};

struct SlowdownParams {
  int p = 4;
  double alpha = 0.2;
  double lambda = 2.0 + std::sqrt(3.0);
  double rho0 = 0.05, rho1 = 0.0, a_star = 0.15;
  double r0 = 0.0, r1 = 0.0, a_tilde = 0.0;
  double mu = 0.25;
  double A_coeff = 0.0;
  double eps_smooth = 0.0;
  double log_lambda = 0.0;
  double psi_coeff = 0.0;  // (p/2)^{2 alpha}
  bool enabled = true;

  static double plane_radius(int p, double rho) { return (2.0 / p) * std::pow(rho, 0.5 * p); }
  static double chart_radius(int p, double r) { return std::pow(0.5 * p * r, 2.0 / p); }

  static SlowdownParams create(const SlowdownInputs& in) {
    for (double v : {in.alpha, in.lambda, in.rho0, in.rho1, in.a_star, in.mu}) require_finite(v, "slowdown params");
    if (in.p < 1) throw ParameterError("p must be >= 1");
    if (!(in.alpha > 0.0 && in.alpha < 1.0)) throw ParameterError("alpha must lie in (0,1)");
    if (!(in.lambda > 1.0)) throw ParameterError("lambda must exceed 1");
    if (!(in.mu > 0.0 && in.mu < 0.5)) throw ParameterError("mu must lie in (0,1/2)");
    if (!(in.rho0 > 0.0 && in.rho0 < in.a_star)) throw ParameterError("need 0 < rho0 < a_star");
    SlowdownParams q;
    q.p = in.p;
    q.alpha = in.alpha;
    q.lambda = in.lambda;
    q.rho0 = in.rho0;
    q.a_star = in.a_star;
    q.mu = in.mu;
    q.enabled = in.enabled;
    q.log_lambda = std::log(in.lambda);
    q.r0 = plane_radius(in.p, in.rho0);
    q.a_tilde = plane_radius(in.p, in.a_star);
    if (in.rho1 > 0.0) {
      q.rho1 = in.rho1;
      q.r1 = plane_radius(in.p, in.rho1);
    } else {
      q.r1 = q.r0 / in.lambda;
      q.rho1 = chart_radius(in.p, q.r1);
    }
    if (!(q.rho1 > 0.0 && q.rho1 < q.rho0)) throw ParameterError("need 0 < rho1 < rho0");
    // D_{r1} in F(D_{r0}); F(D_{r1}) and F^{-1}(D_{r0}) inside D_{a~}
    const double tol = 1e-12;
    if (q.r1 > q.r0 / in.lambda * (1.0 + tol)) throw ParameterError("containment D_r1 in F(D_r0) fails");
    if (in.lambda * q.r0 > q.a_tilde * (1.0 + tol)) throw ParameterError("containment F^-1(D_r0) in D_a fails");
    if (in.lambda * q.r1 > q.a_tilde * (1.0 + tol)) throw ParameterError("containment F(D_r1) in D_a fails");
    q.psi_coeff = std::pow(0.5 * in.p, 2.0 * in.alpha);
    q.A_coeff = std::pow((1.0 - in.alpha) * q.psi_coeff, 0.25 * in.p);
    const double e = 2.0 / (1.0 - in.alpha);
    q.eps_smooth = e - std::floor(e);
    if (in.enabled && 0.5 * in.p * q.r0 >= 1.0) throw ParameterError("blend not monotone: need (p/2) r0 < 1");
    return q;
  }

  static SlowdownParams defaults() { return create(SlowdownInputs{}); }
};

struct GammaExponents {
  double gamma = 0.0, gamma_prime = 0.0;
  double beta1 = 0.0, beta2 = 0.0, beta = 0.0;
};

inline GammaExponents gamma_exponents(double alpha, double mu) {
  require_finite(alpha, "alpha");
  require_finite(mu, "mu");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0,1)");
  if (!(mu > 0.0 && mu < 1.0)) throw ParameterError("mu must lie in (0,1)");
  GammaExponents g;
  g.beta = (1.0 - mu) / std::pow(2.0, alpha + 2.0);
  g.beta1 = (1.0 + mu) * std::pow(2.0, alpha - 1.0) + (1.0 - mu) / 6.0;
  g.beta2 = g.beta1 + 2.0;
  g.gamma = 1.0 / (2.0 * alpha) + g.beta1;
  g.gamma_prime = 1.0 / (2.0 * alpha) + g.beta;
  return g;
}

/// C^inf step 0 -> 1 on [0,1], flat to all orders at both ends.
inline double smooth_step(double v) {
  if (v <= 0.0) return 0.0;
  if (v >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / v);
  const double b = std::exp(-1.0 / (1.0 - v));
  return a / (a + b);
}

/// Psi_p, the slowed vector field and its time-t maps.
class Slowdown {
 public:
  explicit Slowdown(const SlowdownParams& params) : p_(params) {
    r0sq_ = p_.r0 * p_.r0;
    r1sq_ = p_.r1 * p_.r1;
    if (p_.enabled) check_monotone();
  }

  const SlowdownParams& params() const { return p_; }

  double psi(double u) const {
    require_finite(u, "psi");
    if (u < 0.0) throw ParameterError("psi: negative argument");
    return psi_raw(u);
  }

  double hamiltonian(PlanePoint s) const {
    require_finite(s.s1, "hamiltonian");
    require_finite(s.s2, "hamiltonian");
    return s.s1 * s.s2 * p_.log_lambda;
  }

  PlanePoint linear(PlanePoint s, double t) const {
    const double e = std::exp(p_.log_lambda * t);
    return {s.s1 * e, s.s2 / e};
  }

  /// Time-t map of the slowed field.
  PlanePoint flow(PlanePoint s, double t) const {
    require_finite(s.s1, "flow");
    require_finite(s.s2, "flow");
    require_finite(t, "flow");
    if (t == 0.0 || (s.s1 == 0.0 && s.s2 == 0.0)) return s;
    if (!p_.enabled) return linear(s, t);
    try {
      if (s.s1 == 0.0) {
        const double sig = advance(std::log(std::abs(s.s2)), -t, 0.0);
        return {0.0, std::copysign(std::exp(sig), s.s2)};
      }
      const double h = s.s1 * s.s2;
      const double sig0 = std::log(std::abs(s.s1));
      const double sig = advance(sig0, t, h * h);
      PlanePoint out{std::copysign(std::exp(sig), s.s1), s.s2 * std::exp(sig0 - sig)};
      if (!std::isfinite(out.s1) || !std::isfinite(out.s2)) throw ToleranceError("flow: overflow");
      return out;
    } catch (const ToleranceError&) {
      PlanePoint out = flow_rk(s, t, 1e-13);
      const double h0 = s.s1 * s.s2, h1 = out.s1 * out.s2;
      if (!(std::abs(h1 - h0) <= 1e-10 * std::max(1.0, std::abs(h0))))
        throw ToleranceError("flow: root find and RK fallback both failed");
      return out;
    }
  }

  /// Adaptive Dormand-Prince integration of the field; reference path only.
  PlanePoint flow_rk(PlanePoint s, double t, double tol) const {
    using State = std::array<double, 2>;
    State x{s.s1, s.s2};
    const double L = p_.log_lambda;
    auto rhs = [&](const State& y, State& dy, double) {
      const double ps = psi_raw(y[0] * y[0] + y[1] * y[1]);
      dy[0] = L * y[0] * ps;
      dy[1] = -L * y[1] * ps;
    };
    namespace ode = boost::numeric::odeint;
    auto stepper = ode::make_controlled(tol * s.norm(), tol, ode::runge_kutta_dopri5<State>());
    ode::integrate_adaptive(stepper, rhs, x, 0.0, t, t / 64.0);
    return {x[0], x[1]};
  }

  /// Time along the orbit of s for |s1| to move from |s.s1| to s1_target (> 0). Needs s.s1 != 0.
  double transit_time(PlanePoint s, double s1_target) const {
    if (s.s1 == 0.0 || !(s1_target > 0.0)) throw ParameterError("transit_time: needs s1 != 0 and a positive target");
    const double h = s.s1 * s.s2;
    if (!p_.enabled) return (std::log(s1_target) - std::log(std::abs(s.s1))) / p_.log_lambda;
    return orbit_time(std::log(std::abs(s.s1)), std::log(s1_target), h * h);
  }

  /// Signed time spent moving sigma from a to b on the orbit u = e^{2 sigma} + h2 e^{-2 sigma}.
  double orbit_time(double a, double b, double h2) const {
    if (a == b) return 0.0;
    const double lo = std::min(a, b), hi = std::max(a, b);
    std::vector<double> cuts{lo};
    for (double c : breakpoints(h2))
      if (c > lo && c < hi) cuts.push_back(c);
    cuts.push_back(hi);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += piece_cost(cuts[i], cuts[i + 1], h2);
    return b > a ? total : -total;
  }

 private:
  enum class Region { Unit, Power, Blend };

  double psi_raw(double u) const {
    if (!p_.enabled) return 1.0;
    if (u >= r0sq_) return 1.0;
    const double pw = p_.psi_coeff * std::pow(u, p_.alpha);
    if (u <= r1sq_) return pw;
    const double chi = smooth_step((u - r1sq_) / (r0sq_ - r1sq_));
    return (1.0 - chi) * pw + chi;
  }

  void check_monotone() const {
    const int n = 10000;
    double prev = psi_raw(r1sq_);
    for (int i = 1; i <= n; ++i) {
      const double u = r1sq_ + (r0sq_ - r1sq_) * i / n;
      const double v = psi_raw(u);
      if (v < prev - 1e-12) throw ParameterError("Psi blend is not monotone for these parameters");
      prev = v;
    }
  }

  static double u_of(double sig, double h2) { return std::exp(2.0 * sig) + h2 * std::exp(-2.0 * sig); }

  double weight(double sig, double h2) const { return 1.0 / (p_.log_lambda * psi_raw(u_of(sig, h2))); }

  std::vector<double> breakpoints(double h2) const {
    std::vector<double> out;
    for (double U : {r1sq_, r0sq_}) {
      if (h2 == 0.0) {
        out.push_back(0.5 * std::log(U));
        continue;
      }
      const double disc = U * U - 4.0 * h2;
      if (disc <= 0.0) continue;
      const double yp = 0.5 * (U + std::sqrt(disc));
      const double ym = h2 / yp;
      out.push_back(0.5 * std::log(yp));
      out.push_back(0.5 * std::log(ym));
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  Region classify(double a, double b, double h2) const {
    double mid;
    if (std::isinf(a) && std::isinf(b)) mid = 0.0;
    else if (std::isinf(a)) mid = b - 1.0;
    else if (std::isinf(b)) mid = a + 1.0;
    else mid = 0.5 * (a + b);
    const double u = u_of(mid, h2);
    if (u >= r0sq_) return Region::Unit;
    if (u <= r1sq_) return Region::Power;
    return Region::Blend;
  }

  // time to traverse [a,b] (a < b, possibly infinite ends)
  double piece_cost(double a, double b, double h2) const {
    const Region r = classify(a, b, h2);
    const double L = p_.log_lambda;
    if (r == Region::Unit) return (b - a) / L;
    if (r == Region::Power && h2 == 0.0) {
      const double k = 2.0 * p_.alpha;
      const double ea = std::isinf(a) ? std::numeric_limits<double>::infinity() : std::exp(-k * a);
      const double eb = std::isinf(b) ? 0.0 : std::exp(-k * b);
      return (ea - eb) / (k * L * p_.psi_coeff);
    }
    if (std::isinf(a) || std::isinf(b)) throw ToleranceError("orbit_time: unbounded slowed piece");
    return integrate([&](double x) { return weight(x, h2); }, a, b);
  }

  // sigma reached after signed sigma-time tau, i.e. integral of weight from sig0 equals tau
  double advance(double sig0, double tau, double h2) const {
    if (tau == 0.0) return sig0;
    const int dir = tau > 0.0 ? 1 : -1;
    double rem = std::abs(tau);
    std::vector<double> bps = breakpoints(h2);
    std::vector<double> ahead;
    for (double b : bps)
      if (dir > 0 ? b > sig0 : b < sig0) ahead.push_back(b);
    if (dir < 0) std::reverse(ahead.begin(), ahead.end());
    ahead.push_back(dir > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity());
    double sig = sig0;
    for (double beta : ahead) {
      const double a = std::min(sig, beta), b = std::max(sig, beta);
      const Region r = classify(a, b, h2);
      const double L = p_.log_lambda;
      if (r == Region::Unit) {
        const double cost = (b - a) / L;
        if (rem <= cost) return sig + dir * L * rem;
        rem -= cost;
        sig = beta;
        continue;
      }
      if (r == Region::Power && h2 == 0.0) {
        const double cost = piece_cost(a, b, h2);
        if (rem <= cost) {
          const double k = 2.0 * p_.alpha;
          const double e = std::exp(-k * sig) - dir * k * L * p_.psi_coeff * rem;
          return -std::log(e) / k;
        }
        rem -= cost;
        sig = beta;
        continue;
      }
      const double len = b - a;
      const double probe = std::min(len, L * rem);
      const double reach = integrate([&](double x) { return weight(sig + dir * x, h2); }, 0.0, probe);
      if (reach >= rem) return newton_in_piece(sig, dir, probe, rem, reach, h2);
      if (probe < len) throw ToleranceError("advance: weight below 1/L");
      rem -= reach;
      sig = beta;
    }
    throw ToleranceError("advance: target beyond orbit");
  }

  double newton_in_piece(double sig, int dir, double hi, double target, double f_hi, double h2) const {
    auto w = [&](double x) { return weight(sig + dir * x, h2); };
    double lo = 0.0;
    double x = std::clamp(target / w(0.0), 0.0, hi);
    double xc = hi, fc = f_hi;  // anchor for incremental integration
    const double tol = 4e-16 * std::max(1.0, std::abs(sig) + hi);
    for (int it = 0; it < 200; ++it) {
      const double fx = fc + integrate(w, xc, x);
      xc = x;
      fc = fx;
      const double f = fx - target;
      if (f == 0.0) return sig + dir * x;
      if (f > 0.0) hi = x;
      else lo = x;
      const double step = f / w(x);
      if (std::abs(step) <= tol) return sig + dir * (x - step);
      double xn = x - step;
      if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
      if (hi - lo <= tol) return sig + dir * xn;
      x = xn;
    }
    throw ToleranceError("advance: Newton did not converge");
  }

  SlowdownParams p_;
  double r0sq_ = 0.0, r1sq_ = 0.0;
};

}  // namespace palab
