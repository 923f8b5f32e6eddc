#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace palab {

/// Raised when a construction parameter or an operation input is out of range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative numerical method misses its tolerance.
class ToleranceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw ParameterError(std::string(what) + ": non-finite value");
}

namespace detail {

template <class F>
double gk_panel(F& f, double a, double b, double& err) {
  // depth 0: one G7/K15 panel; boost reports the error on the reference interval
  const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 0, 0.0, &err);
  err *= 0.5 * std::abs(b - a);
  return v;
}

template <class F>
double gk_adapt(F& f, double a, double b, double est, double err, double abs_tol, int depth) {
  if (err <= abs_tol || depth == 0) return est;
  const double m = 0.5 * (a + b);
  double el = 0.0, er = 0.0;
  const double l = gk_panel(f, a, m, el);
  const double r = gk_panel(f, m, b, er);
  return gk_adapt(f, a, m, l, el, 0.5 * abs_tol, depth - 1) + gk_adapt(f, m, b, r, er, 0.5 * abs_tol, depth - 1);
}

}  // namespace detail

/// Adaptive Gauss-Kronrod on [a, b] (a > b gives the signed integral).
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-13, int max_depth = 30) {
  if (a == b) return 0.0;
  if (a > b) return -integrate(f, b, a, rel_tol, max_depth);
  double err = 0.0, err_abs = 0.0;
  const double est = detail::gk_panel(f, a, b, err);
  // scale from the integral of |f| so that integrals near zero still terminate
  auto g = [&f](double x) { return std::abs(f(x)); };
  const double mass = detail::gk_panel(g, a, b, err_abs);
  const double floor = 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(est), mass);
  return detail::gk_adapt(f, a, b, est, err, std::max(rel_tol * std::abs(est), floor), max_depth);
}

/// Barycentric interpolant on Chebyshev points of the second kind.
class ChebyshevInterpolant {
 public:
  ChebyshevInterpolant() = default;

  /// Nodes on [a, b]; values supplied in ascending-node order by `fill`.
  ChebyshevInterpolant(double a, double b, std::size_t n_nodes,
                       const std::function<std::vector<double>(const std::vector<double>&)>& fill)
      : a_(a), b_(b) {
    if (n_nodes < 2 || !(b > a)) throw ParameterError("chebyshev: bad grid");
    const std::size_t n = n_nodes - 1;
    nodes_.resize(n_nodes);
    weights_.resize(n_nodes);
    for (std::size_t k = 0; k <= n; ++k) {
      // ascending order: x = -cos(k pi / n)
      const double x = -std::cos(kPi * static_cast<double>(k) / static_cast<double>(n));
      nodes_[k] = 0.5 * (a + b) + 0.5 * (b - a) * x;
      double w = (k % 2 == 0) ? 1.0 : -1.0;
      if (k == 0 || k == n) w *= 0.5;
      weights_[k] = w;
    }
    nodes_.front() = a;
    nodes_.back() = b;
    values_ = fill(nodes_);
    if (values_.size() != nodes_.size()) throw ParameterError("chebyshev: value count mismatch");
  }

  double operator()(double x) const {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const double d = x - nodes_[k];
      if (d == 0.0) return values_[k];
      const double t = weights_[k] / d;
      num += t * values_[k];
      den += t;
    }
    return num / den;
  }

  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& values() const { return values_; }
  double lower() const { return a_; }
  double upper() const { return b_; }

 private:
  double a_ = 0.0, b_ = 1.0;
  std::vector<double> nodes_, weights_, values_;
};

/// Ordinary least squares y = c0 + c1 x (+ c2 x^2 when quadratic).
struct PolyFit {
  std::vector<double> coef;
  std::vector<double> stderr_;
  double rss = 0.0;
  std::size_t n = 0;
};

inline PolyFit polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree) {
  const std::size_t n = x.size();
  const int m = degree + 1;
  if (n != y.size() || n <= static_cast<std::size_t>(m)) throw ParameterError("polyfit: too few points");
  // center x for conditioning
  const double xm = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  std::vector<double> ata(m * m, 0.0), aty(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double pj = 1.0;
    std::vector<double> row(m);
    for (int j = 0; j < m; ++j) {
      row[j] = pj;
      pj *= (x[i] - xm);
    }
    for (int j = 0; j < m; ++j) {
      aty[j] += row[j] * y[i];
      for (int k = 0; k < m; ++k) ata[j * m + k] += row[j] * row[k];
    }
  }
  // invert the (at most 3x3) normal matrix by Gauss-Jordan
  std::vector<double> inv(m * m, 0.0);
  for (int j = 0; j < m; ++j) inv[j * m + j] = 1.0;
  std::vector<double> a = ata;
  for (int c = 0; c < m; ++c) {
    int piv = c;
    for (int r = c + 1; r < m; ++r)
      if (std::abs(a[r * m + c]) > std::abs(a[piv * m + c])) piv = r;
    if (a[piv * m + c] == 0.0) throw ParameterError("polyfit: degenerate design");
    for (int k = 0; k < m; ++k) {
      std::swap(a[c * m + k], a[piv * m + k]);
      std::swap(inv[c * m + k], inv[piv * m + k]);
    }
    const double d = a[c * m + c];
    for (int k = 0; k < m; ++k) {
      a[c * m + k] /= d;
      inv[c * m + k] /= d;
    }
    for (int r = 0; r < m; ++r) {
      if (r == c) continue;
      const double f = a[r * m + c];
      for (int k = 0; k < m; ++k) {
        a[r * m + k] -= f * a[c * m + k];
        inv[r * m + k] -= f * inv[c * m + k];
      }
    }
  }
  std::vector<double> beta(m, 0.0);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < m; ++k) beta[j] += inv[j * m + k] * aty[k];
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double pj = 1.0, yhat = 0.0;
    for (int j = 0; j < m; ++j) {
      yhat += beta[j] * pj;
      pj *= (x[i] - xm);
    }
    rss += (y[i] - yhat) * (y[i] - yhat);
  }
  const double s2 = rss / static_cast<double>(n - m);
  PolyFit out;
  out.n = n;
  out.rss = rss;
  out.stderr_.resize(m);
  for (int j = 0; j < m; ++j) out.stderr_[j] = std::sqrt(std::max(0.0, s2 * inv[j * m + j]));
  // undo centering for the linear model; the quadratic model keeps centered
  // coefficients (only its curvature term is consumed)
  out.coef = beta;
  if (degree == 1) out.coef[0] = beta[0] - beta[1] * xm;
  return out;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// SplitMix64 step; used to derive independent per-task seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t task) {
  std::uint64_t s = master ^ (0xD1B54A32D192ED03ULL * (task + 1));
  splitmix64(s);
  return splitmix64(s);
}

/// Uniform double in [0,1) from 53 random bits.
template <class Rng>
double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Runs fn(i) for i in [0, n) on `workers` threads. Tasks write to their own slots.
inline void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  const unsigned w = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  for (unsigned t = 0; t < w; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace palab
