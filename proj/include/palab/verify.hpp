#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "palab/charts.hpp"
#include "palab/numerics.hpp"
#include "palab/slowdown.hpp"

namespace palab {

// ---------------------------------------------------------------- crossings

struct CrossingRecord {
  PlanePoint entry;
  PlanePoint exit;
  double T = 0.0;
  double T1 = 0.0;
  std::vector<double> t;
  std::vector<PlanePoint> s;
  bool axis = false;  // s1 identically 0; no exit, T is a chosen horizon
};

inline constexpr double kSamplesPerUnitTime = 64.0;

namespace detail {

inline std::vector<double> time_grid(double T) {
  std::vector<double> g;
  const long n = static_cast<long>(std::floor(T * kSamplesPerUnitTime));
  for (long k = 0; k <= n; ++k) g.push_back(static_cast<double>(k) / kSamplesPerUnitTime);
  if (g.back() < T) g.push_back(T);
  return g;
}

inline void sample_trajectory(const Slowdown& sd, CrossingRecord& rec) {
  rec.t = time_grid(rec.T);
  rec.s.resize(rec.t.size());
  parallel_for(rec.t.size(), 1, [&](std::size_t i) { rec.s[i] = sd.flow(rec.entry, rec.t[i]); });
}

}  // namespace detail

/// Crossing of D_{r1} with s1 s2 = eps r1^2 / 2 in the quadrant (sign1, sign2).
inline CrossingRecord make_crossing(const Slowdown& sd, double eps, int sign1 = 1, int sign2 = 1) {
  if (!(eps > 0.0 && eps < 1.0)) throw ParameterError("crossing: eps must lie in (0,1)");
  const double r1 = sd.params().r1;
  const double th = 0.5 * std::asin(eps);
  CrossingRecord rec;
  rec.entry = {sign1 * r1 * std::sin(th), sign2 * r1 * std::cos(th)};
  rec.exit = {sign1 * r1 * std::cos(th), sign2 * r1 * std::sin(th)};
  rec.T = sd.transit_time(rec.entry, std::abs(rec.exit.s1));
  rec.T1 = 0.5 * rec.T;
  detail::sample_trajectory(sd, rec);
  const PlanePoint end = rec.s.back();
  if (std::abs(end.norm() - r1) > 1e-9 * r1) throw ToleranceError("crossing: exit radius off the circle");
  return rec;
}

inline CrossingRecord random_crossing(const Slowdown& sd, std::mt19937_64& rng) {
  const double eps = 1e-4 * std::pow(0.5 / 1e-4, uniform01(rng));
  const int s1 = (rng() >> 63) ? 1 : -1;
  const int s2 = (rng() >> 63) ? 1 : -1;
  return make_crossing(sd, eps, s1, s2);
}

/// Trajectory on the stable axis from (0, s2_0) over [0, horizon].
inline CrossingRecord axis_record(const Slowdown& sd, double s2_0, double horizon) {
  if (!(std::abs(s2_0) <= sd.params().r1)) throw ParameterError("axis record: start outside D_r1");
  CrossingRecord rec;
  rec.axis = true;
  rec.entry = {0.0, s2_0};
  rec.T = horizon;
  rec.T1 = horizon;
  detail::sample_trajectory(sd, rec);
  rec.exit = rec.s.back();
  return rec;
}

/// Swaps the roles of s1 and s2 and reverses time.
inline CrossingRecord mirror(const CrossingRecord& r) {
  if (r.axis) throw ParameterError("mirror: axis records have no exit");
  CrossingRecord m;
  m.entry = {r.exit.s2, r.exit.s1};
  m.exit = {r.entry.s2, r.entry.s1};
  m.T = r.T;
  m.T1 = r.T1;
  for (std::size_t i = r.t.size(); i-- > 0;) {
    m.t.push_back(r.T - r.t[i]);
    m.s.push_back({r.s[i].s2, r.s[i].s1});
  }
  return m;
}

/// Entry and exit on the circle, s2 dominating before T1 and s1 after.
inline bool crossing_invariants_hold(const CrossingRecord& r, double r1) {
  if (r.axis) return true;
  if (std::abs(r.entry.norm() - r1) > 1e-9 * r1 || std::abs(r.s.back().norm() - r1) > 1e-9 * r1) return false;
  for (std::size_t i = 0; i < r.t.size(); ++i) {
    const double a = std::abs(r.s[i].s1), b = std::abs(r.s[i].s2);
    if (r.t[i] < r.T1 && a > b * (1.0 + 1e-9)) return false;
    if (r.t[i] > r.T1 && b > a * (1.0 + 1e-9)) return false;
  }
  return true;
}

// ---------------------------------------------------------------- s1, s2 bounds

struct S1S2Report {
  // Worst relative margins over every grid pair, measured on |s_i|^{-2 alpha}.
  double margin_a = INFINITY;
  double margin_b = INFINITY;
  double margin_c = INFINITY;
  double margin_d = INFINITY;
  double max_b = -INFINITY;  // largest (b) margin among pairs with t > a
  double worst() const { return std::min({margin_a, margin_b, margin_c, margin_d}); }
  bool pass(double tol = 1e-9) const { return worst() >= -tol; }
};

/// Checks (a)-(d) on all grid pairs. Each inequality becomes linear in q = |s|^{-2 alpha},
/// so a running max/min over the anchor gives the worst pair in one pass.
inline S1S2Report verify_s1s2_bounds(const CrossingRecord& rec, const SlowdownParams& q) {
  if (!crossing_invariants_hold(rec, q.r1)) throw ParameterError("s1s2 bounds: record violates its invariants");
  const double a2 = 2.0 * q.alpha;
  const double C0 = a2 * q.log_lambda * q.psi_coeff;
  const double C0w = std::pow(2.0, q.alpha) * C0;
  const std::size_t N = rec.t.size();
  S1S2Report rep;
  std::vector<double> q2(N), q1(N);
  for (std::size_t i = 0; i < N; ++i) {
    q2[i] = std::pow(std::abs(rec.s[i].s2), -a2);
    q1[i] = std::pow(std::abs(rec.s[i].s1), -a2);
  }
  // (a) q2(t) <= q2(a) + C0w (t - a), 0 <= a <= t <= T1.  (b) q2(t) >= q2(a) + C0 (t - a), 0 <= a <= t <= T.
  double min_a = INFINITY, max_b = -INFINITY;
  for (std::size_t i = 0; i < N; ++i) {
    const double t = rec.t[i];
    if (t <= rec.T1) {
      min_a = std::min(min_a, q2[i] - C0w * t);
      rep.margin_a = std::min(rep.margin_a, (min_a - (q2[i] - C0w * t)) / q2[i]);
    }
    if (i > 0) rep.max_b = std::max(rep.max_b, ((q2[i] - C0 * t) - max_b) / q2[i]);
    max_b = std::max(max_b, q2[i] - C0 * t);
    rep.margin_b = std::min(rep.margin_b, ((q2[i] - C0 * t) - max_b) / q2[i]);
  }
  if (rec.axis) {
    rep.margin_c = rep.margin_d = 0.0;
    return rep;
  }
  // (c) q1(t) <= q1(b) + C0w (b - t), T1 <= t <= b <= T.  (d) q1(t) >= q1(b) + C0 (b - t), 0 <= t <= b <= T.
  double min_c = INFINITY, max_d = -INFINITY;
  for (std::size_t i = N; i-- > 0;) {
    const double t = rec.t[i];
    if (t >= rec.T1) {
      min_c = std::min(min_c, q1[i] + C0w * t);
      rep.margin_c = std::min(rep.margin_c, (min_c - (q1[i] + C0w * t)) / q1[i]);
    }
    max_d = std::max(max_d, q1[i] + C0 * t);
    rep.margin_d = std::min(rep.margin_d, ((q1[i] + C0 * t) - max_d) / q1[i]);
  }
  return rep;
}

struct S1S2Suite {
  long crossings = 0;
  long failures = 0;
  S1S2Report worst;
};

inline S1S2Suite s1s2_suite(const Slowdown& sd, long n, std::uint64_t seed, unsigned workers = 1) {
  std::vector<S1S2Report> reps(static_cast<std::size_t>(n));
  parallel_for(reps.size(), workers, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    reps[i] = verify_s1s2_bounds(random_crossing(sd, rng), sd.params());
  });
  S1S2Suite out;
  out.crossings = n;
  for (const auto& r : reps) {
    out.failures += r.pass() ? 0 : 1;
    out.worst.margin_a = std::min(out.worst.margin_a, r.margin_a);
    out.worst.margin_b = std::min(out.worst.margin_b, r.margin_b);
    out.worst.margin_c = std::min(out.worst.margin_c, r.margin_c);
    out.worst.margin_d = std::min(out.worst.margin_d, r.margin_d);
    out.worst.max_b = std::max(out.worst.max_b, r.max_b);
  }
  return out;
}

// ---------------------------------------------------------------- pairs

struct PairRecord {
  CrossingRecord s;
  std::vector<PlanePoint> s_tilde;  // on the grid of s
  bool stable_cone = false;         // hypothesis (1) on the whole grid
  bool small_offset = false;        // hypothesis (2)
  bool dominates = false;           // |s~2| > |s2| on the whole grid
  bool admissible() const { return stable_cone && small_offset && dominates; }
};

/// Hypothesis (2) alone, for a given mu.
inline bool offset_admissible(const PairRecord& pr, double mu) {
  return std::abs((pr.s_tilde[0].s2 - pr.s.s[0].s2) / pr.s.s[0].s2) <= (1.0 - mu) / 72.0;
}

/// Pair whose offset sits in the stable cone at the exit; flowing back keeps it there for a
/// linear-like field, and the offset scale is tuned so |ds2(0)/s2(0)| = slack (1-mu)/72.
inline PairRecord make_pair(const Slowdown& sd, const CrossingRecord& s, double mu, double u1, double slack = 0.5) {
  if (s.axis) throw ParameterError("pair: needs a crossing record");
  const double target = slack * (1.0 - mu) / 72.0;
  const double nrm = std::hypot(mu * u1, 1.0);
  const double sgn = s.exit.s2 >= 0.0 ? 1.0 : -1.0;  // offset away from the axis
  const PlanePoint dir{sgn * mu * u1 / nrm, sgn / nrm};
  const PlanePoint sT = s.s.back();
  double delta = target * std::abs(s.entry.s2) * std::abs(sT.s2 / s.entry.s2);
  PlanePoint start{};
  for (int it = 0; it < 6; ++it) {
    const PlanePoint end{sT.s1 + delta * dir.s1, sT.s2 + delta * dir.s2};
    start = sd.flow(end, -s.T);
    const double got = std::abs((start.s2 - s.entry.s2) / s.entry.s2);
    if (!(got > 0.0)) break;
    const double ratio = target / got;
    delta *= ratio;
    if (std::abs(ratio - 1.0) < 1e-3) break;
  }
  const PlanePoint end{sT.s1 + delta * dir.s1, sT.s2 + delta * dir.s2};
  start = sd.flow(end, -s.T);
  PairRecord pr;
  pr.s = s;
  pr.s_tilde.resize(s.t.size());
  for (std::size_t i = 0; i < s.t.size(); ++i) pr.s_tilde[i] = sd.flow(start, s.t[i]);
  pr.s_tilde.back() = end;
  pr.stable_cone = pr.dominates = true;
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    const double d1 = pr.s_tilde[i].s1 - s.s[i].s1;
    const double d2 = sgn * (pr.s_tilde[i].s2 - s.s[i].s2);
    if (!(d2 > 0.0) || std::abs(d1) > mu * d2 * (1.0 + 1e-9)) pr.stable_cone = false;
    if (!(std::abs(pr.s_tilde[i].s2) > std::abs(s.s[i].s2))) pr.dominates = false;
  }
  pr.small_offset = offset_admissible(pr, mu);
  return pr;
}

struct SpreadReport {
  double deviation_margin = 0.0;  // (rhs - lhs) / rhs of the deviation bound
  bool has_envelope = false;      // T1 >= 1
  double upper = 0.0;             // sup_{[1,T1]} |ds2(t)| t^{gamma'} / |ds2(0)|
  double lower = 0.0;             // inf_{[1,T1]} |ds2(t)| t^{gamma} / |ds2(0)|
  double t_ratio = 0.0;           // ds2(T) / ds2(T1)
};

inline SpreadReport verify_spread(const PairRecord& pr, const SlowdownParams& q, double mu) {
  if (!pr.admissible()) throw ParameterError("spread: pair hypotheses fail");
  const GammaExponents g = gamma_exponents(q.alpha, mu);
  const auto& s = pr.s;
  auto d = [&](std::size_t i) {
    return PlanePoint{pr.s_tilde[i].s1 - s.s[i].s1, pr.s_tilde[i].s2 - s.s[i].s2};
  };
  SpreadReport r;
  const std::size_t last = s.t.size() - 1;
  const double rhs = std::sqrt(1.0 + mu * mu) * std::abs(s.s[last].s1 / s.s[0].s2) * d(0).norm();
  r.deviation_margin = (rhs - d(last).norm()) / rhs;
  const double d0 = std::abs(d(0).s2);
  double hi = 0.0, lo = INFINITY;
  std::size_t i1 = 0;
  for (std::size_t i = 0; i <= last; ++i) {
    const double t = s.t[i];
    if (t <= s.T1) i1 = i;
    if (t < 1.0 || t > s.T1) continue;
    const double v = std::abs(d(i).s2) / d0;
    hi = std::max(hi, v * std::pow(t, g.gamma_prime));
    lo = std::min(lo, v * std::pow(t, g.gamma));
    r.has_envelope = true;
  }
  r.upper = hi;
  r.lower = lo;
  r.t_ratio = d(last).s2 / d(i1).s2;
  return r;
}

struct SpreadSuite {
  long pairs = 0;
  long admissible = 0;
  long skipped = 0;
  double worst_deviation_margin = INFINITY;
  long with_envelope = 0;
  double upper = 0.0;     // population C1 estimate
  double lower = INFINITY;  // population C2 estimate
  double ratio_min = INFINITY, ratio_max = 0.0;  // C4, C3
};

inline SpreadSuite spread_suite(const Slowdown& sd, double mu, long n, std::uint64_t seed, unsigned workers = 1) {
  struct Item {
    bool ok = false;
    SpreadReport rep;
  };
  std::vector<Item> items(static_cast<std::size_t>(n));
  parallel_for(items.size(), workers, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    const double eps = 1e-4 * std::pow(0.5 / 1e-4, uniform01(rng));
    const double u1 = 2.0 * uniform01(rng) - 1.0;
    const PairRecord pr = make_pair(sd, make_crossing(sd, eps), mu, u1);
    if (!pr.admissible()) return;
    items[i] = {true, verify_spread(pr, sd.params(), mu)};
  });
  SpreadSuite out;
  out.pairs = n;
  for (const auto& it : items) {
    if (!it.ok) {
      ++out.skipped;
      continue;
    }
    ++out.admissible;
    out.worst_deviation_margin = std::min(out.worst_deviation_margin, it.rep.deviation_margin);
    out.ratio_min = std::min(out.ratio_min, it.rep.t_ratio);
    out.ratio_max = std::max(out.ratio_max, it.rep.t_ratio);
    if (!it.rep.has_envelope) continue;
    ++out.with_envelope;
    out.upper = std::max(out.upper, it.rep.upper);
    out.lower = std::min(out.lower, it.rep.lower);
  }
  return out;
}

// ---------------------------------------------------------------- length ratio

struct LengthRecord {
  long n = 0;  // first step meeting D_r1
  long m = 0;  // first later step with the whole curve outside D_r1
  double ratio = 0.0;
};

struct LengthReport {
  std::vector<LengthRecord> records;
  long failed = 0;  // did not exit within the cap
  double lower = 0.0;  // min ratio (m-n)^gamma
  double upper = 0.0;  // max ratio (m-n)^gamma'
  double lower_long = 0.0, lower_short = 0.0;
  double upper_long = 0.0, upper_short = 0.0;
  bool polynomial = false;  // both envelopes stable between short and long transits (factor 3)
};

namespace detail {

inline double polyline_length(const std::vector<PlanePoint>& c) {
  double L = 0.0;
  for (std::size_t i = 1; i < c.size(); ++i) L += std::hypot(c[i].s1 - c[i - 1].s1, c[i].s2 - c[i - 1].s2);
  return L;
}

inline double min_radius(const std::vector<PlanePoint>& c) {
  double r = INFINITY;
  for (const auto& p : c) r = std::min(r, p.norm());
  return r;
}

}  // namespace detail

/// Stable curve of g through the point one and a half time units before the crossing with
/// s1 s2 = eps r1^2 / 2 enters D_r1. Vertices lie on nearby orbits, each flowed back by the same
/// time from the vertical (F-stable) segment at |s1| = r0, so the curve is an isochron and stays
/// a stable curve. Plane length at the start is rel_len r1.
inline std::optional<LengthRecord> length_transit(const LocalChart& chart, double eps, double rel_len, long cap = 100000,
                                                  int vertices = 17) {
  const auto& q = chart.params();
  const Slowdown& sd = chart.slowdown();
  const double th = 0.5 * std::asin(eps);
  const PlanePoint entry{q.r1 * std::sin(th), q.r1 * std::cos(th)};
  const PlanePoint x = sd.flow(entry, -1.5);
  const double R = q.r0;
  const double tau = sd.transit_time(x, R);
  const double h = x.s1 * x.s2;
  auto build = [&](double delta) {
    std::vector<PlanePoint> c(static_cast<std::size_t>(vertices));
    for (int k = 0; k < vertices; ++k) {
      const double hk = h * (1.0 + delta * (static_cast<double>(k) / (vertices - 1) - 0.5));
      c[k] = sd.flow({R, hk / R}, -tau);
    }
    return c;
  };
  const double target = rel_len * q.r1;
  double delta = 1e-3;
  for (int it = 0; it < 3; ++it) delta *= target / detail::polyline_length(build(delta));
  std::vector<PlanePoint> c = build(delta);
  LengthRecord rec;
  double Ln = 0.0;
  bool inside = false;
  for (long step = 0; step <= cap; ++step) {
    const double r = detail::min_radius(c);
    if (!inside && r < q.r1) {
      inside = true;
      rec.n = step;
      Ln = detail::polyline_length(c);
    } else if (inside && r >= q.r1) {
      rec.m = step;
      rec.ratio = detail::polyline_length(c) / Ln;
      return rec;
    }
    for (auto& p : c) p = chart.plane_step(p, Direction::Forward);
  }
  return std::nullopt;
}

inline LengthReport verify_length_ratio(long n_segments, const LocalChart& chart, double mu, std::uint64_t seed,
                                        double rel_len = 1e-2, unsigned workers = 1) {
  if (n_segments < 100) throw ParameterError("length ratio: need at least 1e2 segments");
  const GammaExponents g = gamma_exponents(chart.params().alpha, mu);
  std::vector<std::optional<LengthRecord>> out(static_cast<std::size_t>(n_segments));
  parallel_for(out.size(), workers, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    const double eps = 1e-4 * std::pow(0.5 / 1e-4, uniform01(rng));
    out[i] = length_transit(chart, eps, rel_len);
  });
  LengthReport rep;
  for (const auto& o : out) {
    if (o) rep.records.push_back(*o);
    else ++rep.failed;
  }
  if (rep.records.size() < 10) throw ToleranceError("length ratio: too few completed transits");
  std::vector<long> durations;
  for (const auto& r : rep.records) durations.push_back(r.m - r.n);
  std::nth_element(durations.begin(), durations.begin() + durations.size() / 2, durations.end());
  const long median = durations[durations.size() / 2];
  rep.lower = rep.lower_long = rep.lower_short = INFINITY;
  for (const auto& r : rep.records) {
    const double k = static_cast<double>(r.m - r.n);
    const double lo = r.ratio * std::pow(k, g.gamma);
    const double hi = r.ratio * std::pow(k, g.gamma_prime);
    rep.lower = std::min(rep.lower, lo);
    rep.upper = std::max(rep.upper, hi);
    if (r.m - r.n > median) {
      rep.lower_long = std::min(rep.lower_long, lo);
      rep.upper_long = std::max(rep.upper_long, hi);
    } else {
      rep.lower_short = std::min(rep.lower_short, lo);
      rep.upper_short = std::max(rep.upper_short, hi);
    }
  }
  rep.polynomial = std::isfinite(rep.lower_long) && rep.lower > 0.0 && rep.upper < INFINITY &&
                   rep.lower_long >= rep.lower_short / 3.0 && rep.upper_long <= 3.0 * rep.upper_short;
  return rep;
}

}  // namespace palab
