#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "palab/numerics.hpp"
#include "palab/surface.hpp"

namespace palab {

// ---------------------------------------------------------------- fitting

struct LogLogFit {
  double slope = 0.0;
  double stderr_ = 0.0;
  double intercept = 0.0;
  double curvature = 0.0;    // quadratic coefficient in log-log
  double curvature_t = 0.0;  // its t statistic
  bool curvature_flag = false;
  std::size_t n = 0;
};

struct Window {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

/// Least squares on (log x, log y) over points with x in the window and y > 0.
/// The curvature flag needs a significant quadratic term (|t| > 3) that also bends the
/// local slope by more than 0.25 across the window.
inline LogLogFit fit_loglog(const std::vector<double>& xs, const std::vector<double>& ys, Window w = {}) {
  if (xs.size() != ys.size()) throw ParameterError("fit_loglog: size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] < w.lo || xs[i] > w.hi || !(xs[i] > 0.0) || !(ys[i] > 0.0)) continue;
    lx.push_back(std::log(xs[i]));
    ly.push_back(std::log(ys[i]));
  }
  if (lx.size() < 5) throw ParameterError("fit_loglog: fewer than 5 usable points");
  const auto [mn, mx] = std::minmax_element(lx.begin(), lx.end());
  if (*mx - *mn <= 0.0) throw ParameterError("fit_loglog: degenerate window");
  const PolyFit lin = polyfit(lx, ly, 1);
  const PolyFit quad = polyfit(lx, ly, 2);
  LogLogFit f;
  f.n = lx.size();
  f.slope = lin.coef[1];
  f.stderr_ = lin.stderr_[1];
  f.intercept = lin.coef[0];
  f.curvature = quad.coef[2];
  const double se = quad.stderr_[2];
  f.curvature_t = se > 0.0 ? quad.coef[2] / se : (quad.coef[2] == 0.0 ? 0.0 : std::copysign(INFINITY, quad.coef[2]));
  const double bend = std::abs(2.0 * quad.coef[2] * (*mx - *mn));
  f.curvature_flag = std::abs(f.curvature_t) > 3.0 && bend > 0.25;
  return f;
}

/// Spearman rank correlation (average ranks for ties).
inline double rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j);
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline std::vector<double> log_grid(double lo, double hi, int count) {
  std::vector<double> g;
  for (int i = 0; i < count; ++i) {
    const double v = std::round(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
    if (g.empty() || v > g.back()) g.push_back(v);
  }
  return g;
}

// ---------------------------------------------------------------- observables

struct Support {
  bool global = true;
  SurfacePoint center;
  double radius = 0.0;            // eigen-coordinate radius when not global
  double singular_clearance = 0;  // flat distance from the support to the nearest branch point
};

struct Observable {
  std::string name;
  std::function<double(const SurfacePoint&)> eval;
  double holder = 1.0;
  Support support;
  double lo = 0.0, hi = 0.0;  // range bounds
  double osc() const { return hi - lo; }
  double operator()(const SurfacePoint& p) const { return eval(p); }
};

namespace observables {

inline Observable constant(double c) {
  return {"constant", [c](const SurfacePoint&) { return c; }, 1.0, {}, c, c};
}

/// Smooth bump exp(1 - 1/(1 - d^2/R^2)) around center (eigen-coordinate distance d), on one sheet or both (sheet < 0).
inline Observable bump(const ReferenceModel& m, SurfacePoint center, double radius, int sheet = -1) {
  const ReferenceModel* mp = &m;
  auto f = [mp, center, radius, sheet](const SurfacePoint& p) {
    if (sheet >= 0 && p.sheet != sheet) return 0.0;
    double dx = p.x - center.x, dy = p.y - center.y;
    dx -= std::round(dx);
    dy -= std::round(dy);
    double best = INFINITY;
    for (int i = -1; i <= 1; ++i)
      for (int j = -1; j <= 1; ++j) best = std::min(best, std::abs(mp->to_eigen({dx + i, dy + j})));
    const double q = best / radius;
    if (q >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - q * q));
  };
  Support s{false, center, radius, m.singular_distance(center) - radius};
  return {"bump", f, 1.0, s, 0.0, 1.0};
}

/// cos(2 pi (kx x + ky y)), optionally with the sign flipped on sheet 1.
inline Observable trig(int kx, int ky, bool odd_in_sheet = false) {
  auto f = [kx, ky, odd_in_sheet](const SurfacePoint& p) {
    const double v = std::cos(2.0 * kPi * (kx * p.x + ky * p.y));
    return (odd_in_sheet && p.sheet == 1) ? -v : v;
  };
  return {"trig", f, 1.0, {}, -1.0, 1.0};
}

/// Smooth taper in the flat distance to the nearest branch point: 0 at the point, 1 beyond radius.
inline Observable singular_taper(const ReferenceModel& m, double radius) {
  const ReferenceModel* mp = &m;
  auto f = [mp, radius](const SurfacePoint& p) { return smooth_step(mp->singular_distance(p) / radius); };
  return {"taper", f, 1.0, {}, 0.0, 1.0};
}

/// h = v o g - v.
inline Observable coboundary(const ReferenceModel& m, Observable v) {
  const ReferenceModel* mp = &m;
  auto f = [mp, v](const SurfacePoint& p) { return v(mp->global_g(p, Direction::Forward)) - v(p); };
  return {"coboundary(" + v.name + ")", f, v.holder, {}, v.lo - v.hi, v.hi - v.lo};
}

}  // namespace observables

// ---------------------------------------------------------------- return sets

/// Axis-aligned rectangle in eigen-coordinates around a torus point, on one sheet.
struct RectSpec {
  SurfacePoint center;
  double half_u = 0.05;
  double half_s = 0.05;
  int sheet = 0;
};

inline bool rect_contains(const ReferenceModel& m, const RectSpec& r, const SurfacePoint& p) {
  if (p.sheet != r.sheet) return false;
  double dx = p.x - r.center.x, dy = p.y - r.center.y;
  dx -= std::round(dx);
  dy -= std::round(dy);
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j) {
      const Complex z = m.to_eigen({dx + i, dy + j});
      if (std::abs(z.real()) <= r.half_u && std::abs(z.imag()) <= r.half_s) return true;
    }
  return false;
}

/// Largest flat distance from the rectangle to a branch point.
inline double rect_clearance(const ReferenceModel& m, const RectSpec& r) {
  return m.singular_distance(r.center) - std::hypot(r.half_u, r.half_s);
}

/// Rectangle of side 0.1 centred at the grid point farthest from both branch points.
inline RectSpec default_return_rect(const ReferenceModel& m) {
  RectSpec best;
  double bd = -1.0;
  const int n = 64;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const SurfacePoint c{(i + 0.5) / n, (j + 0.5) / n, 0};
      const double d = m.singular_distance(c);
      if (d > bd) {
        bd = d;
        best.center = c;
      }
    }
  return best;
}

inline SurfacePoint sample_in_rect(const ReferenceModel& m, const RectSpec& r, std::mt19937_64& rng) {
  const double u = (2.0 * uniform01(rng) - 1.0) * r.half_u;
  const double s = (2.0 * uniform01(rng) - 1.0) * r.half_s;
  const Vec2 d = m.from_eigen({u, s});
  return {ReferenceModel::reduce(r.center.x + d[0]), ReferenceModel::reduce(r.center.y + d[1]), r.sheet};
}

// ---------------------------------------------------------------- tails

struct TailEstimate {
  std::vector<double> thresholds;
  std::vector<long> survivors;  // count with value > threshold
  long total = 0;
  long completed = 0;  // samples whose value was observed below the cap
  bool fit_available = false;
  LogLogFit fit;
  Window window;
  std::vector<long> histogram;  // histogram[v] = number of samples with value v; last bin = censored
};

inline TailEstimate tail_from_histogram(std::vector<long> hist, long cap, long min_count) {
  TailEstimate t;
  t.histogram = std::move(hist);
  t.total = std::accumulate(t.histogram.begin(), t.histogram.end(), 0L);
  t.completed = t.total - t.histogram.back();
  t.thresholds = log_grid(1.0, static_cast<double>(cap), 60);
  // survivors(n) = #{value > n}; censored samples exceed every threshold
  std::vector<long> above(t.histogram.size() + 1, 0);
  for (long v = static_cast<long>(t.histogram.size()) - 1; v >= 0; --v) above[v] = above[v + 1] + t.histogram[v];
  std::vector<double> xs, ys;
  for (double n : t.thresholds) {
    const long s = above[static_cast<std::size_t>(n) + 1];
    t.survivors.push_back(s);
    if (s >= min_count) {
      xs.push_back(n);
      ys.push_back(static_cast<double>(s) / static_cast<double>(t.total));
    }
  }
  if (xs.size() >= 5) {
    t.window = {xs.front(), xs.back()};
    t.fit = fit_loglog(xs, ys, t.window);
    t.fit_available = true;
  }
  return t;
}

/// Refit a tail on a window shifted by the factor (e.g. 1.2 moves both ends up by 20%).
inline std::optional<LogLogFit> refit_tail(const TailEstimate& t, double factor) {
  std::vector<double> xs, ys;
  const Window w{t.window.lo * factor, t.window.hi * factor};
  for (std::size_t i = 0; i < t.thresholds.size(); ++i) {
    if (t.thresholds[i] < w.lo || t.thresholds[i] > w.hi || t.survivors[i] <= 0) continue;
    xs.push_back(t.thresholds[i]);
    ys.push_back(static_cast<double>(t.survivors[i]) / static_cast<double>(t.total));
  }
  if (xs.size() < 5) return std::nullopt;
  return fit_loglog(xs, ys);
}

struct RunOptions {
  unsigned workers = 1;
  std::size_t chunk = 1000;  // samples per task; fixes the reduction order
};

/// First-return times of area-distributed points of rect, capped at n_max.
inline TailEstimate return_tail(const RectSpec& rect, long n_max, long n_samples, const ReferenceModel& m,
                                std::uint64_t seed, RunOptions opt = {}) {
  if (n_max < 1000) throw ParameterError("return_tail: n_max must be at least 1e3");
  if (rect_clearance(m, rect) <= std::sqrt(2.0) * m.params().a_tilde)
    throw ParameterError("return_tail: rectangle meets a singular neighbourhood");
  const std::size_t tasks = (static_cast<std::size_t>(n_samples) + opt.chunk - 1) / opt.chunk;
  std::vector<std::vector<long>> parts(tasks, std::vector<long>(n_max + 2, 0));
  parallel_for(tasks, opt.workers, [&](std::size_t t) {
    std::mt19937_64 rng(derive_seed(seed, t));
    const long lo = static_cast<long>(t * opt.chunk);
    const long hi = std::min<long>(n_samples, lo + static_cast<long>(opt.chunk));
    for (long i = lo; i < hi; ++i) {
      SurfacePoint p = sample_in_rect(m, rect, rng);
      long tau = n_max + 1;
      for (long n = 1; n <= n_max; ++n) {
        p = m.global_g(p, Direction::Forward);
        if (rect_contains(m, rect, p)) {
          tau = n;
          break;
        }
      }
      ++parts[t][tau];
    }
  });
  std::vector<long> hist(n_max + 2, 0);
  for (const auto& h : parts)
    for (std::size_t v = 0; v < h.size(); ++v) hist[v] += h[v];
  TailEstimate est = tail_from_histogram(std::move(hist), n_max, 100);
  if (est.completed < 1000) throw ToleranceError("return_tail: fewer than 1e3 completed returns");
  return est;
}

// ---------------------------------------------------------------- sojourns

struct SojournVisit {
  long length = 0;           // consecutive iterates inside U0, entry included
  double entry_w = 0.0;      // |w| at entry
  double depth_w = 0.0;      // smallest |w| during the visit
  long annulus_run = 0;      // longest consecutive run inside U0 \ U1
};

struct SojournReport {
  TailEstimate tail;
  long T0 = 0;  // longest annulus run over all visits
  double depth_rank_corr = 0.0;
  long capped = 0;
  std::vector<SojournVisit> visits;
};

/// Follows one visit to U0 = {|w| <= rho0} from pt until the orbit leaves U0.
inline SojournVisit follow_visit(const ReferenceModel& m, SurfacePoint p, long cap) {
  const auto& q = m.params();
  SojournVisit v;
  v.entry_w = std::sqrt(2.0 * m.singular_distance(p));
  v.depth_w = v.entry_w;
  long run = 0;
  while (v.length < cap) {
    const double r = m.singular_distance(p);
    if (r > q.r0) break;
    ++v.length;
    v.depth_w = std::min(v.depth_w, std::sqrt(2.0 * r));
    if (r > q.r1) {
      ++run;
      v.annulus_run = std::max(v.annulus_run, run);
    } else {
      run = 0;
    }
    p = m.global_g(p, Direction::Forward);
  }
  return v;
}

/// Entry points of U0 drawn from mu_1 restricted to U0, kept when their preimage lies outside U0.
inline SojournReport sojourn_tail(long n_samples, const ReferenceModel& m, std::uint64_t seed, long cap = 1000000,
                                  RunOptions opt = {}) {
  const auto& q = m.params();
  const MassPush& push = m.chart().mass_push();
  const double Jtop = push.J(q.r0 * q.r0);
  const std::size_t tasks = (static_cast<std::size_t>(n_samples) + opt.chunk - 1) / opt.chunk;
  std::vector<std::vector<SojournVisit>> parts(tasks);
  parallel_for(tasks, opt.workers, [&](std::size_t t) {
    std::mt19937_64 rng(derive_seed(seed, t));
    const long want = std::min<long>(n_samples - static_cast<long>(t * opt.chunk), static_cast<long>(opt.chunk));
    while (static_cast<long>(parts[t].size()) < want) {
      const double U = push.J_inv(uniform01(rng) * Jtop);
      const double ang = 2.0 * kPi * uniform01(rng);
      const int k = static_cast<int>(rng() >> 63);
      const int sheet = static_cast<int>((rng() >> 62) & 1);
      const Complex zeta = std::polar(std::sqrt(U), ang);
      Complex w = std::sqrt(2.0 * zeta);
      SurfacePoint p = m.from_cone(w, k);
      p.sheet ^= sheet;
      if (m.singular_distance(m.global_g(p, Direction::Backward)) <= q.r0) continue;
      parts[t].push_back(follow_visit(m, p, cap));
    }
  });
  SojournReport rep;
  std::vector<long> hist(cap + 2, 0);
  for (const auto& part : parts)
    for (const auto& v : part) {
      rep.visits.push_back(v);
      rep.T0 = std::max(rep.T0, v.annulus_run);
      if (v.length >= cap) {
        ++rep.capped;
        ++hist[cap + 1];
      } else {
        ++hist[v.length];
      }
    }
  rep.tail = tail_from_histogram(std::move(hist), cap, 100);
  std::vector<double> depth, len;
  for (const auto& v : rep.visits) {
    depth.push_back(-v.depth_w);
    len.push_back(static_cast<double>(v.length));
  }
  rep.depth_rank_corr = rank_correlation(depth, len);
  return rep;
}

// ---------------------------------------------------------------- orbit sampling

/// Orbit of length len after burn-in, started from a flat-area sample.
inline std::vector<SurfacePoint> orbit_points(const ReferenceModel& m, std::mt19937_64& rng, long burn, long len) {
  SurfacePoint p{uniform01(rng), uniform01(rng), static_cast<int>(rng() >> 63)};
  for (long i = 0; i < burn; ++i) p = m.global_g(p, Direction::Forward);
  std::vector<SurfacePoint> out(static_cast<std::size_t>(len));
  for (long i = 0; i < len; ++i) {
    out[static_cast<std::size_t>(i)] = p;
    p = m.global_g(p, Direction::Forward);
  }
  return out;
}

// ---------------------------------------------------------------- correlations

struct CorrSeries {
  std::vector<long> lags;
  std::vector<double> corr;
  std::vector<double> stderr_;
  std::vector<long> counts;
  bool fit_available = false;
  LogLogFit fit;
  Window window;
  long orbits = 0;
};

struct CorrOptions {
  long n_orbits = 8;
  long burn = 1000;
  unsigned workers = 1;
};

/// Birkhoff estimator of Cor_n(h1, h2) pooled over independent orbits, jackknifed over orbits.
inline CorrSeries correlations(const Observable& h1, const Observable& h2, long n_max, long orbit_len,
                               const ReferenceModel& m, std::uint64_t seed, CorrOptions opt = {}) {
  if (orbit_len < 100 * n_max) throw ParameterError("correlations: orbit_len must be at least 100 n_max");
  if (opt.n_orbits < 2) throw ParameterError("correlations: need at least 2 orbits");
  const std::size_t K = static_cast<std::size_t>(opt.n_orbits);
  struct Part {
    std::vector<double> lag_sum;
    double s1 = 0, s2 = 0;
  };
  std::vector<Part> parts(K);
  parallel_for(K, opt.workers, [&](std::size_t o) {
    std::mt19937_64 rng(derive_seed(seed, o));
    const auto pts = orbit_points(m, rng, opt.burn, orbit_len);
    std::vector<double> a(pts.size()), b(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      a[i] = h1(pts[i]);
      b[i] = h2(pts[i]);
    }
    Part& P = parts[o];
    P.lag_sum.assign(n_max + 1, 0.0);
    for (double v : a) P.s1 += v;
    for (double v : b) P.s2 += v;
    const std::size_t N = a.size();
    for (long n = 0; n <= n_max; ++n) {
      double s = 0.0;
      for (std::size_t i = 0; i + n < N; ++i) s += a[i + n] * b[i];
      P.lag_sum[n] = s;
    }
  });
  auto estimate = [&](long skip) {
    std::vector<double> c(n_max + 1, 0.0);
    double s1 = 0, s2 = 0, cnt = 0;
    for (std::size_t o = 0; o < K; ++o) {
      if (static_cast<long>(o) == skip) continue;
      s1 += parts[o].s1;
      s2 += parts[o].s2;
      cnt += static_cast<double>(orbit_len);
    }
    const double m1 = s1 / cnt, m2 = s2 / cnt;
    for (long n = 0; n <= n_max; ++n) {
      double s = 0, pairs = 0;
      for (std::size_t o = 0; o < K; ++o) {
        if (static_cast<long>(o) == skip) continue;
        s += parts[o].lag_sum[n];
        pairs += static_cast<double>(orbit_len - n);
      }
      c[n] = s / pairs - m1 * m2;
    }
    return c;
  };
  CorrSeries out;
  out.orbits = opt.n_orbits;
  const auto full = estimate(-1);
  std::vector<std::vector<double>> jack;
  for (std::size_t o = 0; o < K; ++o) jack.push_back(estimate(static_cast<long>(o)));
  for (long n = 0; n <= n_max; ++n) {
    double mean = 0;
    for (const auto& j : jack) mean += j[n];
    mean /= static_cast<double>(K);
    double var = 0;
    for (const auto& j : jack) var += (j[n] - mean) * (j[n] - mean);
    out.lags.push_back(n);
    out.corr.push_back(full[n]);
    out.stderr_.push_back(std::sqrt(var * static_cast<double>(K - 1) / static_cast<double>(K)));
    out.counts.push_back(static_cast<long>(K) * (orbit_len - n));
  }
  // significant window: lags from 1 while Cor_n > 2 stderr
  std::vector<double> xs, ys;
  for (long n = 1; n <= n_max; ++n) {
    if (!(out.corr[n] > 2.0 * out.stderr_[n])) break;
    xs.push_back(static_cast<double>(n));
    ys.push_back(out.corr[n]);
  }
  if (xs.size() >= 5) {
    out.window = {xs.front(), xs.back()};
    out.fit = fit_loglog(xs, ys);
    out.fit_available = true;
  }
  return out;
}

// ---------------------------------------------------------------- CLT

struct CltResult {
  double ks = 0.0;
  double ks_bootstrap_se = 0.0;
  double sigma_hat = 0.0;
  double sigma2 = 0.0;
  double cor0 = 0.0;
  double mean = 0.0;
  bool cohomology_suspect = false;
  double ks_point_mass = 0.0;
  std::vector<double> z;  // sorted normalized sums
};

struct CltOptions {
  long burn = 1000;
  long gk_lags = 50;
  long gk_orbits = 1000;  // orbits used for the Green-Kubo sum
  int bootstrap = 200;
  unsigned workers = 1;
  std::size_t chunk = 100;
};

/// Normalized Birkhoff sums over independent starts against N(0, sigma_hat^2).
inline CltResult clt_check(const Observable& h, long n, long n_samples, const ReferenceModel& m, std::uint64_t seed,
                           CltOptions opt = {}) {
  if (n < 1000 || n_samples < 1000) throw ParameterError("clt_check: need n >= 1e3 and n_samples >= 1e3");
  const long L = opt.gk_lags;
  const std::size_t tasks = (static_cast<std::size_t>(n_samples) + opt.chunk - 1) / opt.chunk;
  struct Part {
    std::vector<double> sums;
    double total = 0;
    std::vector<double> lag_sum;
    double gk_total = 0;
    long gk_count = 0;
  };
  std::vector<Part> parts(tasks);
  parallel_for(tasks, opt.workers, [&](std::size_t t) {
    std::mt19937_64 rng(derive_seed(seed, t));
    Part& P = parts[t];
    P.lag_sum.assign(L + 1, 0.0);
    const long lo = static_cast<long>(t * opt.chunk);
    const long hi = std::min<long>(n_samples, lo + static_cast<long>(opt.chunk));
    std::vector<double> vals(static_cast<std::size_t>(n));
    for (long s = lo; s < hi; ++s) {
      SurfacePoint p{uniform01(rng), uniform01(rng), static_cast<int>(rng() >> 63)};
      for (long i = 0; i < opt.burn; ++i) p = m.global_g(p, Direction::Forward);
      double acc = 0.0;
      for (long i = 0; i < n; ++i) {
        vals[i] = h(p);
        acc += vals[i];
        p = m.global_g(p, Direction::Forward);
      }
      P.sums.push_back(acc);
      P.total += acc;
      if (s < opt.gk_orbits) {
        P.gk_total += acc;
        P.gk_count += n;
        for (long k = 0; k <= L; ++k) {
          double q = 0.0;
          for (long i = 0; i + k < n; ++i) q += vals[i + k] * vals[i];
          P.lag_sum[k] += q;
        }
      }
    }
  });
  CltResult r;
  double total = 0, gk_total = 0;
  long gk_count = 0, gk_orbits = 0;
  std::vector<double> lag(L + 1, 0.0);
  std::vector<double> sums;
  for (const auto& P : parts) {
    total += P.total;
    gk_total += P.gk_total;
    gk_count += P.gk_count;
    for (long k = 0; k <= L; ++k) lag[k] += P.lag_sum[k];
    sums.insert(sums.end(), P.sums.begin(), P.sums.end());
  }
  gk_orbits = gk_count / n;
  r.mean = total / (static_cast<double>(n) * static_cast<double>(n_samples));
  const double gk_mean = gk_total / static_cast<double>(gk_count);
  auto cor = [&](long k) {
    return lag[k] / (static_cast<double>(gk_orbits) * static_cast<double>(n - k)) - gk_mean * gk_mean;
  };
  r.cor0 = cor(0);
  r.sigma2 = r.cor0;
  for (long k = 1; k <= L; ++k) r.sigma2 += 2.0 * cor(k);
  r.cohomology_suspect = !(r.sigma2 > 1e-3 * r.cor0);
  r.sigma_hat = r.sigma2 > 0.0 ? std::sqrt(r.sigma2) : 0.0;
  const double rn = std::sqrt(static_cast<double>(n));
  for (double s : sums) r.z.push_back((s - static_cast<double>(n) * r.mean) / rn);
  std::sort(r.z.begin(), r.z.end());
  auto ks_of = [&](const std::vector<double>& z) {
    const double N = static_cast<double>(z.size());
    double d = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double F = r.sigma_hat > 0.0 ? normal_cdf(z[i] / r.sigma_hat) : (z[i] >= 0.0 ? 1.0 : 0.0);
      d = std::max({d, std::abs(static_cast<double>(i + 1) / N - F), std::abs(F - static_cast<double>(i) / N)});
    }
    return d;
  };
  r.ks = ks_of(r.z);
  {
    const double N = static_cast<double>(r.z.size());
    const auto below = std::lower_bound(r.z.begin(), r.z.end(), 0.0) - r.z.begin();
    const auto at_or_below = std::upper_bound(r.z.begin(), r.z.end(), 0.0) - r.z.begin();
    r.ks_point_mass = std::max(static_cast<double>(below) / N, 1.0 - static_cast<double>(at_or_below) / N);
  }
  std::mt19937_64 rng(derive_seed(seed, 0xB007));
  double s1 = 0, s2 = 0;
  std::vector<double> bs(r.z.size());
  for (int b = 0; b < opt.bootstrap; ++b) {
    for (auto& v : bs) v = r.z[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(r.z.size()))];
    std::sort(bs.begin(), bs.end());
    const double k = ks_of(bs);
    s1 += k;
    s2 += k * k;
  }
  if (opt.bootstrap > 1) {
    const double mb = s1 / opt.bootstrap;
    r.ks_bootstrap_se = std::sqrt(std::max(0.0, s2 / opt.bootstrap - mb * mb));
  }
  return r;
}

// ---------------------------------------------------------------- large deviations

struct LdpResult {
  std::vector<double> n;
  std::vector<double> prob;
  std::vector<long> counts;
  long samples = 0;
  double mean = 0.0;
  bool all_zero = false;
  bool fit_available = false;
  LogLogFit fit;
  Window window;
};

struct LdpOptions {
  long burn = 1000;
  unsigned workers = 1;
  std::size_t chunk = 100;
};

/// P(|S_n/n - mean| > eps) over a grid of n, one orbit of length max(n_grid) per sample.
inline LdpResult large_deviations(const Observable& h, double eps, const std::vector<double>& n_grid, long n_samples,
                                  const ReferenceModel& m, std::uint64_t seed, LdpOptions opt = {}) {
  if (!(eps > 0.0)) throw ParameterError("large_deviations: eps must be positive");
  if (n_grid.size() < 2) throw ParameterError("large_deviations: grid too short");
  const auto [gmin, gmax] = std::minmax_element(n_grid.begin(), n_grid.end());
  if (*gmax < 10.0 * *gmin) throw ParameterError("large_deviations: n grid must span a decade");
  const long nmax = static_cast<long>(*gmax);
  const std::size_t tasks = (static_cast<std::size_t>(n_samples) + opt.chunk - 1) / opt.chunk;
  struct Part {
    std::vector<std::vector<double>> partial;  // per sample, S_n at grid points
    double total = 0;
  };
  std::vector<Part> parts(tasks);
  parallel_for(tasks, opt.workers, [&](std::size_t t) {
    std::mt19937_64 rng(derive_seed(seed, t));
    const long lo = static_cast<long>(t * opt.chunk);
    const long hi = std::min<long>(n_samples, lo + static_cast<long>(opt.chunk));
    for (long s = lo; s < hi; ++s) {
      SurfacePoint p{uniform01(rng), uniform01(rng), static_cast<int>(rng() >> 63)};
      for (long i = 0; i < opt.burn; ++i) p = m.global_g(p, Direction::Forward);
      std::vector<double> at(n_grid.size());
      double acc = 0.0;
      for (long i = 1; i <= nmax; ++i) {
        acc += h(p);
        p = m.global_g(p, Direction::Forward);
        for (std::size_t g = 0; g < n_grid.size(); ++g)
          if (static_cast<long>(n_grid[g]) == i) at[g] = acc;
      }
      parts[t].partial.push_back(std::move(at));
      parts[t].total += acc;
    }
  });
  LdpResult r;
  r.samples = n_samples;
  double total = 0;
  for (const auto& P : parts) total += P.total;
  r.mean = total / (static_cast<double>(nmax) * static_cast<double>(n_samples));
  r.n = n_grid;
  r.counts.assign(n_grid.size(), 0);
  for (const auto& P : parts)
    for (const auto& at : P.partial)
      for (std::size_t g = 0; g < n_grid.size(); ++g)
        if (std::abs(at[g] / n_grid[g] - r.mean) > eps) ++r.counts[g];
  std::vector<double> xs, ys;
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    r.prob.push_back(static_cast<double>(r.counts[g]) / static_cast<double>(n_samples));
    if (r.counts[g] >= 50) {
      xs.push_back(n_grid[g]);
      ys.push_back(r.prob.back());
    }
  }
  r.all_zero = std::all_of(r.counts.begin(), r.counts.end(), [](long c) { return c == 0; });
  if (xs.size() >= 5) {
    r.window = {xs.front(), xs.back()};
    r.fit = fit_loglog(xs, ys);
    r.fit_available = true;
  }
  return r;
}

}  // namespace palab
