#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "palab/charts.hpp"

namespace palab {

struct SurfacePoint {
  double x = 0.0;
  double y = 0.0;
  int sheet = 0;
};

struct Rational {
  long num = 0;
  long den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

  static Rational parse(const std::string& text) {
    Rational r;
    const auto slash = text.find('/');
    try {
      std::size_t used = 0;
      if (slash == std::string::npos) {
        r.num = std::stol(text, &used);
        if (used != text.size()) throw ParameterError("bad rational: " + text);
        r.den = 1;
      } else {
        const std::string a = text.substr(0, slash), b = text.substr(slash + 1);
        r.num = std::stol(a, &used);
        if (used != a.size()) throw ParameterError("bad rational: " + text);
        r.den = std::stol(b, &used);
        if (used != b.size()) throw ParameterError("bad rational: " + text);
      }
    } catch (const std::logic_error&) {
      throw ParameterError("bad rational: " + text);
    }
    if (r.den <= 0) throw ParameterError("rational denominator must be positive: " + text);
    return r;
  }
};

using Vec2 = std::array<double, 2>;

/// Row-major 2x2 real matrix.
struct Mat2 {
  double a = 1, b = 0, c = 0, d = 1;
  Vec2 operator*(const Vec2& v) const { return {a * v[0] + b * v[1], c * v[0] + d * v[1]}; }
  Mat2 operator*(const Mat2& m) const {
    return {a * m.a + b * m.c, a * m.b + b * m.d, c * m.a + d * m.c, c * m.b + d * m.d};
  }
  double det() const { return a * d - b * c; }
  Mat2 inverse() const {
    const double D = det();
    return {d / D, -b / D, -c / D, a / D};
  }
  double norm() const { return std::sqrt(a * a + b * b + c * c + d * d); }
};

/// Serializable description of the reference surface.
struct SurfaceSpec {
  std::array<long, 4> matrix{1, 1, 3, 4};
  std::array<Rational, 2> branch1{Rational{0, 1}, Rational{0, 1}};
  std::array<Rational, 2> branch2{Rational{2, 3}, Rational{0, 1}};
  std::array<Rational, 2> cut{Rational{2, 3}, Rational{0, 1}};  // cut = [branch1, branch1 + cut)
  double alpha = 0.2;
  double mu = 0.25;
  double rho0 = 0.05;
  double rho1 = 0.0;
  double a_star = 0.15;
  bool slowdown = true;
  std::uint64_t seed = 1;
};

struct SingularChart {
  int k = 0;
  int p = 4;
  SurfacePoint center;
  Mat2 eigenbasis;  // columns: unit unstable, unit stable eigenvectors
  double eigen_det = 0.0;
  double rho0 = 0.0, rho1 = 0.0, a_k = 0.0;
  int sector_count = 4;
  double cut_angle = 0.0;  // direction in which the cut leaves the branch point, eigen-coordinates
};

/// Position of a surface point relative to its nearest branch point, in eigen-coordinates.
struct ConeLocation {
  int k = 0;
  Complex zeta;
};

struct LyapunovResult {
  double exponent = 0.0;
  int restarts = 0;
};

class ReferenceModel {
 public:
  explicit ReferenceModel(const SurfaceSpec& spec) : spec_(spec) { build(); }

  const SurfaceSpec& spec() const { return spec_; }
  const LocalChart& chart() const { return *chart_; }
  const SlowdownParams& params() const { return chart_->params(); }
  const std::array<SingularChart, 2>& charts() const { return charts_; }
  int iterate() const { return iterate_; }
  std::array<long, 4> matrix() const { return mat_; }
  double lambda() const { return lambda_; }
  int lift_constant() const { return c0_; }
  const Mat2& eigenbasis() const { return E_; }
  const Mat2& eigenbasis_inv() const { return Einv_; }

  Complex to_eigen(const Vec2& dx) const {
    const Vec2 z = Einv_ * dx;
    return {z[0], z[1]};
  }
  Vec2 from_eigen(Complex z) const { return E_ * Vec2{z.real(), z.imag()}; }

  static double reduce(double v) {
    double r = v - std::floor(v);
    if (r >= 1.0) r = 0.0;
    return r;
  }

  ConeLocation nearest_branch(const SurfacePoint& pt) const {
    ConeLocation best;
    double bd = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 2; ++k) {
      double dx = pt.x - bx_[k], dy = pt.y - by_[k];
      dx -= std::round(dx);
      dy -= std::round(dy);
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
          const Complex z = to_eigen({dx + i, dy + j});
          const double d = std::abs(z);
          if (d < bd) {
            bd = d;
            best = {k, z};
          }
        }
    }
    return best;
  }

  /// Flat distance (eigen-coordinates) to the closest branch point.
  double singular_distance(const SurfacePoint& pt) const { return std::abs(nearest_branch(pt).zeta); }

  /// Cone coordinate w with zeta = w^2/2; the two sheets give w and -w.
  Complex cone_w(Complex zeta, int sheet, int k) const {
    const double r = std::abs(zeta);
    if (r == 0.0) return {0.0, 0.0};
    const double psi = charts_[k].cut_angle;
    double theta = std::arg(zeta) - psi;
    theta -= 2.0 * kPi * std::floor(theta / (2.0 * kPi));
    const Complex w = std::polar(std::sqrt(2.0 * r), 0.5 * (psi + theta));
    return sheet == 0 ? w : -w;
  }

  SurfacePoint from_cone(Complex w, int k) const {
    if (w == Complex(0.0, 0.0)) return {bx_[k], by_[k], 0};
    const Complex zeta = 0.5 * w * w;
    const Vec2 d = from_eigen(zeta);
    SurfacePoint out{reduce(bx_[k] + d[0]), reduce(by_[k] + d[1]), 0};
    const Complex w0 = cone_w(zeta, 0, k);
    out.sheet = (w.real() * w0.real() + w.imag() * w0.imag()) >= 0.0 ? 0 : 1;
    return out;
  }

  /// Lift of the linear automorphism to the branched cover.
  SurfacePoint cover_step(const SurfacePoint& pt, Direction d) const {
    check_point(pt);
    if (is_branch_point(pt)) return canonical_branch(pt);
    if (d == Direction::Forward) {
      const Vec2 y = apply_matrix({pt.x, pt.y});
      const int flip = parity(base_, {pt.x, pt.y}) ^ parity(base_img_, y) ^ c0_;
      return {reduce(y[0]), reduce(y[1]), pt.sheet ^ flip};
    }
    const Vec2 pre = apply_inverse({pt.x, pt.y});
    const Vec2 x{reduce(pre[0]), reduce(pre[1])};
    const Vec2 y = apply_matrix(x);
    const int flip = parity(base_, x) ^ parity(base_img_, y) ^ c0_;
    return {x[0], x[1], pt.sheet ^ flip};
  }

  bool in_pipeline(const ConeLocation& loc) const {
    return params().enabled && std::abs(loc.zeta) < chart_->pipeline_radius();
  }

  /// The slowed map: cone-chart pipeline near the branch points, cover_step elsewhere.
  SurfacePoint global_g(const SurfacePoint& pt, Direction d) const {
    check_point(pt);
    const ConeLocation loc = nearest_branch(pt);
    if (std::abs(loc.zeta) == 0.0) return canonical_branch(pt);
    if (!in_pipeline(loc)) return cover_step(pt, d);
    const Complex w = cone_w(loc.zeta, pt.sheet, loc.k);
    return from_cone(chart_->flat_step(w, d), loc.k);
  }

  /// Differential of global_g (or of its inverse) in eigen-coordinates.
  Mat2 differential(const SurfacePoint& pt, Direction d = Direction::Forward) const {
    const ConeLocation loc = nearest_branch(pt);
    if (std::abs(loc.zeta) < 1e-9) throw ParameterError("differential: point at a branch point");
    const double l = d == Direction::Forward ? lambda_ : 1.0 / lambda_;
    if (!in_pipeline(loc)) return {l, 0.0, 0.0, 1.0 / l};
    return plane_jacobian(loc.zeta, d);
  }

  /// Central-difference Jacobian of the plane map at zeta.
  Mat2 plane_jacobian(Complex zeta, Direction d) const {
    const double h = 1e-5 * std::abs(zeta);
    auto G = [&](double u, double v) { return chart_->plane_step({u, v}, d); };
    const PlanePoint xp = G(zeta.real() + h, zeta.imag()), xm = G(zeta.real() - h, zeta.imag());
    const PlanePoint yp = G(zeta.real(), zeta.imag() + h), ym = G(zeta.real(), zeta.imag() - h);
    return {(xp.s1 - xm.s1) / (2 * h), (yp.s1 - ym.s1) / (2 * h), (xp.s2 - xm.s2) / (2 * h), (yp.s2 - ym.s2) / (2 * h)};
  }

  /// Invariant density of mu_1 relative to flat area.
  double flat_density(const SurfacePoint& pt) const {
    const ConeLocation loc = nearest_branch(pt);
    if (!in_pipeline(loc)) return 1.0;
    const double r = std::abs(loc.zeta);
    return 1.0 / chart_->slowdown().psi(r * r);
  }

  std::vector<SurfacePoint> sample_area(std::uint64_t seed, std::size_t n) const {
    if (n < 1) throw ParameterError("sample_area: n must be positive");
    std::mt19937_64 rng(seed);
    std::vector<SurfacePoint> out(n);
    for (auto& p : out) {
      p.x = uniform01(rng);
      p.y = uniform01(rng);
      p.sheet = static_cast<int>(rng() >> 63);
    }
    return out;
  }

  LyapunovResult lyapunov_exponent(SurfacePoint pt, long n_steps, Direction d = Direction::Forward) const {
    if (n_steps < 10000) throw ParameterError("lyapunov: need at least 1e4 steps");
    LyapunovResult res;
    Vec2 v{0.8, 0.6};
    double acc = 0.0;
    std::uint64_t jitter = 0x5bd1e995ULL;
    for (long i = 0; i < n_steps; ++i) {
      while (singular_distance(pt) < 1e-12) {
        ++res.restarts;
        pt.x = reduce(pt.x + 1e-6 * (uniform01_from(jitter) - 0.5));
        pt.y = reduce(pt.y + 1e-6 * (uniform01_from(jitter) - 0.5));
      }
      v = differential(pt, d) * v;
      const double n = std::hypot(v[0], v[1]);
      acc += std::log(n);
      v = {v[0] / n, v[1] / n};
      pt = global_g(pt, d);
    }
    res.exponent = acc / static_cast<double>(n_steps);
    if (d == Direction::Backward) res.exponent = -res.exponent;
    return res;
  }

  bool is_branch_point(const SurfacePoint& pt) const {
    for (int k = 0; k < 2; ++k)
      if (pt.x == bx_[k] && pt.y == by_[k]) return true;
    return false;
  }

  SurfacePoint branch_point(int k) const { return {bx_[k], by_[k], 0}; }

  /// Crossing parity of the segment P->Q with the lattice translates of the half-open cut.
  int parity(const Vec2& P, const Vec2& Q) const {
    if (cut_horizontal_) return parity_horizontal(P, Q);
    int par = 0;
    const double lox = std::min(P[0], Q[0]) - std::max(0.0, cvx_) - bx_[0];
    const double hix = std::max(P[0], Q[0]) - std::min(0.0, cvx_) - bx_[0];
    const double loy = std::min(P[1], Q[1]) - std::max(0.0, cvy_) - by_[0];
    const double hiy = std::max(P[1], Q[1]) - std::min(0.0, cvy_) - by_[0];
    for (long i = static_cast<long>(std::floor(lox)); i <= static_cast<long>(std::ceil(hix)); ++i)
      for (long j = static_cast<long>(std::floor(loy)); j <= static_cast<long>(std::ceil(hiy)); ++j)
        par ^= crosses(P, Q, {bx_[0] + i, by_[0] + j});
    return par;
  }

 private:
  static double uniform01_from(std::uint64_t& s) { return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53; }

  void check_point(const SurfacePoint& pt) const {
    require_finite(pt.x, "surface point");
    require_finite(pt.y, "surface point");
    if (pt.x < 0.0 || pt.x >= 1.0 || pt.y < 0.0 || pt.y >= 1.0 || (pt.sheet != 0 && pt.sheet != 1))
      throw ParameterError("surface point out of range");
  }

  SurfacePoint canonical_branch(const SurfacePoint& pt) const { return {pt.x, pt.y, 0}; }

  Vec2 apply_matrix(const Vec2& v) const {
    return {mat_[0] * v[0] + mat_[1] * v[1], mat_[2] * v[0] + mat_[3] * v[1]};
  }
  Vec2 apply_inverse(const Vec2& v) const {
    return {mat_[3] * v[0] - mat_[1] * v[1], -mat_[2] * v[0] + mat_[0] * v[1]};
  }

  int crosses(const Vec2& P, const Vec2& Q, const Vec2& c) const {
    auto cross = [](double ax, double ay, double bx, double by) { return ax * by - ay * bx; };
    const double d1 = cross(cvx_, cvy_, P[0] - c[0], P[1] - c[1]);
    const double d2 = cross(cvx_, cvy_, Q[0] - c[0], Q[1] - c[1]);
    if ((d1 > 0.0) == (d2 > 0.0)) return 0;
    const double ex = Q[0] - P[0], ey = Q[1] - P[1];
    const double den = cross(cvx_, cvy_, ex, ey);
    if (den == 0.0) return 0;
    const double s = cross(P[0] - c[0], P[1] - c[1], ex, ey) / den;
    return (s >= 0.0 && s < 1.0) ? 1 : 0;
  }

  int parity_horizontal(const Vec2& P, const Vec2& Q) const {
    // lines y = by + m; the side convention matches crosses(): "above" is strict
    const double py = P[1] - by_[0], qy = Q[1] - by_[0];
    const long m_lo = static_cast<long>(std::floor(std::min(py, qy)));
    const long m_hi = static_cast<long>(std::ceil(std::max(py, qy)));
    int par = 0;
    for (long m = m_lo; m <= m_hi; ++m) {
      const double yl = static_cast<double>(m);
      if ((py > yl) == (qy > yl)) continue;
      const double x = P[0] + (yl - py) * (Q[0] - P[0]) / (qy - py) - bx_[0];
      long cnt;
      if (cvx_ > 0.0) cnt = static_cast<long>(std::floor(x) - std::floor(x - cvx_));
      else cnt = static_cast<long>(std::ceil(x - cvx_) - std::ceil(x));
      par ^= static_cast<int>(cnt & 1);
    }
    return par;
  }

  static long gcd(long a, long b) { return std::gcd(std::abs(a), std::abs(b)); }

  static std::array<long, 4> mat_mul(const std::array<long, 4>& x, const std::array<long, 4>& y) {
    return {x[0] * y[0] + x[1] * y[2], x[0] * y[1] + x[1] * y[3], x[2] * y[0] + x[3] * y[2], x[2] * y[1] + x[3] * y[3]};
  }

  // (M - I) r is integral (mult = 1) or even (mult = 2), r rational
  static bool maps_into_lattice(const std::array<long, 4>& M, const std::array<Rational, 2>& r, long mult, bool subtract) {
    const long D = std::lcm(r[0].den, r[1].den);
    const long X = r[0].num * (D / r[0].den), Y = r[1].num * (D / r[1].den);
    const long s = subtract ? 1 : 0;
    const long u = (M[0] - s) * X + M[1] * Y;
    const long v = M[2] * X + (M[3] - s) * Y;
    return u % (D * mult) == 0 && v % (D * mult) == 0;
  }

  bool prongs_fixed(int c0) const;

  void validate_geometry() const {
    const double reach = chart_->params().a_tilde;
    // chart disks pairwise disjoint
    const SurfacePoint b2{bx_[1], by_[1], 0};
    double dx = bx_[1] - bx_[0], dy = by_[1] - by_[0];
    for (int i = -2; i <= 2; ++i)
      for (int j = -2; j <= 2; ++j)
        if (std::abs(to_eigen({dx + i, dy + j})) <= 2.0 * reach) throw ParameterError("singular neighbourhoods overlap");
    // the cut stays away from every branch translate other than its endpoints
    for (int k = 0; k < 2; ++k)
      for (int i = -3; i <= 3; ++i)
        for (int j = -3; j <= 3; ++j) {
          const Vec2 q{bx_[k] + i, by_[k] + j};
          const Complex a = to_eigen({q[0] - bx_[0], q[1] - by_[0]});
          const Complex v = to_eigen({cvx_, cvy_});
          const double t = std::clamp((a.real() * v.real() + a.imag() * v.imag()) / std::norm(v), 0.0, 1.0);
          const double dist = std::abs(a - t * v);
          const bool endpoint = std::abs(a) < 1e-12 || std::abs(a - v) < 1e-12;
          if (!endpoint && dist <= reach) throw ParameterError("cut passes through a singular neighbourhood");
        }
    (void)b2;
  }

  void build();

  SurfaceSpec spec_;
  std::array<long, 4> mat_{};
  int iterate_ = 1;
  double lambda_ = 0.0;
  Mat2 E_, Einv_;
  double bx_[2] = {0, 0}, by_[2] = {0, 0};
  double cvx_ = 0, cvy_ = 0;
  bool cut_horizontal_ = false;
  Vec2 base_{0.5, 0.5}, base_img_{0, 0};
  int c0_ = 0;
  std::shared_ptr<const LocalChart> chart_;
  std::array<SingularChart, 2> charts_;
};

inline bool ReferenceModel::prongs_fixed(int c0) const {
  // a point on the central ray of each sector must come back into the same sector
  ReferenceModel probe = *this;
  probe.c0_ = c0;
  const double eps = 1e-3 * std::sqrt(2.0 * chart_->params().r1);
  for (int k = 0; k < 2; ++k) {
    for (int j = 0; j < 4; ++j) {
      const Complex w = std::polar(eps, 2.0 * kPi * j / 4.0 + 0.1);
      const SurfacePoint pt = probe.from_cone(w, k);
      const SurfacePoint im = probe.cover_step(pt, Direction::Forward);
      const ConeLocation loc = probe.nearest_branch(im);
      if (loc.k != k) return false;
      const Complex w2 = probe.cone_w(loc.zeta, im.sheet, k);
      if (sector_of(w2, 4) != j) return false;
    }
  }
  return true;
}

inline void ReferenceModel::build() {
  const auto& m = spec_.matrix;
  if (m[0] * m[3] - m[1] * m[2] != 1) throw ParameterError("matrix must have determinant 1");
  if (m[0] + m[3] <= 2) throw ParameterError("matrix trace must exceed 2");
  for (const auto* r : {&spec_.branch1, &spec_.branch2})
    if (!maps_into_lattice(m, *r, 1, true)) throw ParameterError("branch point is not fixed by the matrix");
  {
    // branch1 + cut must be a translate of branch2
    const double ex = spec_.branch1[0].value() + spec_.cut[0].value() - spec_.branch2[0].value();
    const double ey = spec_.branch1[1].value() + spec_.cut[1].value() - spec_.branch2[1].value();
    if (std::abs(ex - std::round(ex)) > 1e-12 || std::abs(ey - std::round(ey)) > 1e-12)
      throw ParameterError("cut must join the two branch points");
  }
  bx_[0] = spec_.branch1[0].value();
  by_[0] = spec_.branch1[1].value();
  bx_[1] = spec_.branch2[0].value();
  by_[1] = spec_.branch2[1].value();
  for (int k = 0; k < 2; ++k) {
    bx_[k] = reduce(bx_[k]);
    by_[k] = reduce(by_[k]);
  }
  cvx_ = spec_.cut[0].value();
  cvy_ = spec_.cut[1].value();
  cut_horizontal_ = spec_.cut[1].num == 0 && spec_.cut[0].num != 0;
  if (std::abs(bx_[0] - bx_[1]) < 1e-15 && std::abs(by_[0] - by_[1]) < 1e-15) throw ParameterError("branch points coincide");

  std::array<long, 4> M = m;
  for (int k = 1; k <= 4; ++k) {
    iterate_ = k;
    mat_ = M;
    const double tr = static_cast<double>(M[0] + M[3]);
    lambda_ = 0.5 * (tr + std::sqrt(tr * tr - 4.0));
    const double ls = 1.0 / lambda_;
    auto eig = [&](double l) {
      Vec2 v = (M[1] != 0) ? Vec2{static_cast<double>(M[1]), l - M[0]} : Vec2{l - M[3], static_cast<double>(M[2])};
      const double n = std::hypot(v[0], v[1]);
      v = {v[0] / n, v[1] / n};
      if (v[0] < 0.0 || (v[0] == 0.0 && v[1] < 0.0)) v = {-v[0], -v[1]};
      return v;
    };
    Vec2 eu = eig(lambda_), es = eig(ls);
    if (eu[0] * es[1] - eu[1] * es[0] < 0.0) es = {-es[0], -es[1]};
    E_ = {eu[0], es[0], eu[1], es[1]};
    Einv_ = E_.inverse();

    SlowdownInputs in;
    in.p = 4;
    in.alpha = spec_.alpha;
    in.mu = spec_.mu;
    in.lambda = lambda_;
    in.rho0 = spec_.rho0;
    in.rho1 = spec_.rho1;
    in.a_star = spec_.a_star;
    in.enabled = spec_.slowdown;
    chart_ = std::make_shared<const LocalChart>(SlowdownParams::create(in));

    for (int b = 0; b < 2; ++b) {
      SingularChart& sc = charts_[b];
      sc.k = b;
      sc.p = 4;
      sc.center = {bx_[b], by_[b], 0};
      sc.eigenbasis = E_;
      sc.eigen_det = E_.det();
      sc.rho0 = chart_->params().rho0;
      sc.rho1 = chart_->params().rho1;
      sc.a_k = chart_->params().a_star;
      sc.sector_count = 4;
      const Complex v = to_eigen({cvx_, cvy_});
      sc.cut_angle = std::arg(b == 0 ? v : -v);
    }

    // base point off every cut translate
    base_ = {0.5 + 0.0123456789, 0.5 + 0.0213456789};
    base_img_ = apply_matrix(base_);

    const bool liftable = maps_into_lattice(M, spec_.cut, 2, true);
    if (liftable) {
      for (int c0 : {0, 1}) {
        if (prongs_fixed(c0)) {
          c0_ = c0;
          validate_geometry();
          return;
        }
      }
    }
    M = mat_mul(M, m);
  }
  throw ParameterError("no iterate up to 4 lifts to the branched cover with fixed prongs");
}

}  // namespace palab
