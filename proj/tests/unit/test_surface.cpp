#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "palab/surface.hpp"

using namespace palab;

namespace {

const ReferenceModel& model() {
  static const ReferenceModel m{SurfaceSpec{}};
  return m;
}

double torus_gap(const SurfacePoint& a, const SurfacePoint& b) {
  double dx = a.x - b.x, dy = a.y - b.y;
  dx -= std::round(dx);
  dy -= std::round(dy);
  return std::hypot(dx, dy);
}

}  // namespace

TEST(Rational, ParseAndPrint) {
  const Rational r = Rational::parse("2/3");
  EXPECT_EQ(r.num, 2);
  EXPECT_EQ(r.den, 3);
  EXPECT_EQ(r.str(), "2/3");
  EXPECT_EQ(Rational::parse("5").den, 1);
  EXPECT_THROW(Rational::parse("1/0"), ParameterError);
  EXPECT_THROW(Rational::parse("x"), ParameterError);
}

TEST(Model, ReferenceEigenvalue) {
  const auto& m = model();
  EXPECT_EQ(m.iterate(), 1);
  EXPECT_NEAR(m.lambda(), 0.5 * (5.0 + std::sqrt(21.0)), 1e-14);
  EXPECT_EQ(m.params().lambda, m.lambda());
  const Mat2& E = m.eigenbasis();
  EXPECT_GT(E.a * E.d - E.b * E.c, 0.0);
}

TEST(Model, RejectsBadMatrices) {
  SurfaceSpec s;
  s.matrix = {2, 1, 1, 2};
  EXPECT_THROW(ReferenceModel{s}, ParameterError);
  s.matrix = {1, 0, 0, 1};
  EXPECT_THROW(ReferenceModel{s}, ParameterError);
}

TEST(Model, AlternateMatrixFailsContainment) {
  SurfaceSpec s;
  s.matrix = {3, 2, 1, 1};
  s.branch2 = {Rational{0, 1}, Rational{1, 2}};
  s.cut = {Rational{0, 1}, Rational{1, 2}};
  EXPECT_THROW(ReferenceModel{s}, ParameterError);
}

TEST(Model, BranchPointsFixedByMatrix) {
  const auto& m = model();
  for (int k = 0; k < 2; ++k) {
    const SurfacePoint b = m.branch_point(k);
    const auto M = m.matrix();
    const double x = M[0] * b.x + M[1] * b.y, y = M[2] * b.x + M[3] * b.y;
    EXPECT_NEAR(x - std::round(x - b.x), b.x, 1e-14);
    EXPECT_NEAR(y - std::round(y - b.y), b.y, 1e-14);
    EXPECT_TRUE(m.is_branch_point(b));
    const SurfacePoint img = m.cover_step(b, Direction::Forward);
    EXPECT_LT(torus_gap(img, b), 1e-14);
  }
}

TEST(Model, ParityAroundBranchPoint) {
  const auto& m = model();
  const SurfacePoint b = m.branch_point(1);
  auto loop_parity = [&](Vec2 c, double r) {
    int par = 0;
    const int n = 64;
    for (int i = 0; i < n; ++i) {
      const double a0 = 2 * kPi * i / n + 0.013, a1 = 2 * kPi * (i + 1) / n + 0.013;
      par ^= m.parity({c[0] + r * std::cos(a0), c[1] + r * std::sin(a0)}, {c[0] + r * std::cos(a1), c[1] + r * std::sin(a1)});
    }
    return par;
  };
  EXPECT_EQ(loop_parity({b.x, b.y}, 0.05), 1);
  EXPECT_EQ(loop_parity({0.3, 0.3}, 0.05), 0);
  EXPECT_EQ(loop_parity({0.01, 0.02}, 0.05), 1);
}

TEST(Model, ForwardBackwardRoundTrip) {
  const auto& m = model();
  for (const auto& p : m.sample_area(5, 20000)) {
    const SurfacePoint q = m.global_g(m.global_g(p, Direction::Forward), Direction::Backward);
    ASSERT_LT(torus_gap(p, q), 1e-12);
    ASSERT_EQ(p.sheet, q.sheet);
  }
}

TEST(Model, SeamMatchesCoverStep) {
  const auto& m = model();
  const auto& P = m.params();
  std::mt19937_64 rng(2);
  int tested = 0;
  for (int i = 0; i < 4000; ++i) {
    const double r = P.r0 * (1.0 + (P.lambda - 1.0) * uniform01(rng));
    const double th = 2 * kPi * uniform01(rng);
    const Complex w = std::polar(std::sqrt(2.0 * r), 0.5 * th);
    const Complex z = 0.5 * w * w;
    // forward orbit segment must stay clear of D_r0
    if (std::sqrt(2.0 * std::abs(z.real() * z.imag())) < P.r0 * 1.001) continue;
    double lo = INFINITY;
    for (int q = 0; q <= 200; ++q) {
      const double t = q / 200.0;
      lo = std::min(lo, std::hypot(z.real() * std::exp(P.log_lambda * t), z.imag() * std::exp(-P.log_lambda * t)));
    }
    if (lo < P.r0 * 1.001) continue;
    const SurfacePoint pt = m.from_cone(w, i % 2);
    const SurfacePoint a = m.global_g(pt, Direction::Forward), b = m.cover_step(pt, Direction::Forward);
    ++tested;
    ASSERT_EQ(a.sheet, b.sheet);
    ASSERT_LT(torus_gap(a, b), 1e-12);
  }
  EXPECT_GT(tested, 1000);
}

TEST(Model, DeckInvolutionCommutes) {
  const auto& m = model();
  for (const auto& p : m.sample_area(9, 5000)) {
    SurfacePoint q = p;
    q.sheet ^= 1;
    const SurfacePoint a = m.global_g(p, Direction::Forward), b = m.global_g(q, Direction::Forward);
    ASSERT_LT(torus_gap(a, b), 1e-12);
    ASSERT_NE(a.sheet, b.sheet);
  }
}

TEST(Model, ProngsFixed) {
  const auto& m = model();
  const double eps = 1e-3 * std::sqrt(2.0 * m.params().r1);
  for (int k = 0; k < 2; ++k)
    for (int j = 0; j < 4; ++j) {
      const SurfacePoint pt = m.from_cone(std::polar(eps, kPi * j / 2.0 + 0.1), k);
      const SurfacePoint im = m.global_g(pt, Direction::Forward);
      const ConeLocation loc = m.nearest_branch(im);
      EXPECT_EQ(loc.k, k);
      EXPECT_EQ(sector_of(m.cone_w(loc.zeta, im.sheet, k), 4), j);
    }
}

TEST(Model, ConeRoundTrip) {
  const auto& m = model();
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5000; ++i) {
    const Complex w = std::polar(0.1 * uniform01(rng), 2 * kPi * uniform01(rng));
    const int k = i % 2;
    const SurfacePoint pt = m.from_cone(w, k);
    const ConeLocation loc = m.nearest_branch(pt);
    ASSERT_EQ(loc.k, k);
    // torus coordinates carry absolute rounding, which grows relative to w near the cone point
    ASSERT_LT(std::abs(m.cone_w(loc.zeta, pt.sheet, k) - w), 1e-12 + 1e-15 / std::abs(w));
  }
}

TEST(Model, DifferentialRegularAndNearSingularity) {
  const auto& m = model();
  const Mat2 D = m.differential({0.3, 0.3, 0});
  EXPECT_NEAR(D.a, m.lambda(), 1e-14);
  EXPECT_NEAR(D.d, 1.0 / m.lambda(), 1e-14);
  EXPECT_EQ(D.b, 0.0);
  const SurfacePoint near = m.from_cone(std::polar(1e-4, 0.3), 0);
  const Mat2 N = m.differential(near);
  EXPECT_NEAR(N.a, 1.0, 1e-2);
  EXPECT_NEAR(N.d, 1.0, 1e-2);
  EXPECT_THROW(m.differential(m.branch_point(0)), ParameterError);
}

TEST(Model, JacobianBalancesDensity) {
  const auto& m = model();
  const auto& P = m.params();
  std::mt19937_64 rng(6);
  for (int i = 0; i < 2000; ++i) {
    const double r = m.chart().pipeline_radius() * 0.99 * std::sqrt(uniform01(rng));
    const Complex z = std::polar(r, 2 * kPi * uniform01(rng));
    const PlanePoint g = m.chart().plane_step({z.real(), z.imag()}, Direction::Forward);
    const Mat2 J = m.plane_jacobian(z, Direction::Forward);
    const double det = J.a * J.d - J.b * J.c;
    const auto& sd = m.chart().slowdown();
    const double ratio = det * sd.psi(z.real() * z.real() + z.imag() * z.imag()) / sd.psi(g.norm2());
    ASSERT_NEAR(ratio, 1.0, 1e-6) << r / P.r0;
  }
}

TEST(Model, SampleAreaDeterministic) {
  const auto& m = model();
  const auto a = m.sample_area(11, 1000), b = m.sample_area(11, 1000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].sheet, b[i].sheet);
  }
  double mean = 0;
  int sheet1 = 0;
  for (const auto& p : m.sample_area(12, 100000)) {
    mean += p.x;
    sheet1 += p.sheet;
  }
  EXPECT_NEAR(mean / 1e5, 0.5, 0.005);
  EXPECT_NEAR(sheet1 / 1e5, 0.5, 0.005);
  EXPECT_THROW(m.sample_area(1, 0), ParameterError);
}

TEST(Model, RejectsPointsOutsideFundamentalDomain) {
  const auto& m = model();
  EXPECT_THROW(m.global_g({1.0, 0.2, 0}, Direction::Forward), ParameterError);
  EXPECT_THROW(m.global_g({0.2, 0.2, 2}, Direction::Forward), ParameterError);
  EXPECT_THROW(m.global_g({NAN, 0.2, 0}, Direction::Forward), ParameterError);
}

TEST(Model, AreaPreservedWeightedByDensity) {
  // mu_1 mass of a box equals the mass of its preimage, counted by weighted Monte Carlo
  const auto& m = model();
  const double cx = 0.3, cy = 0.6, h = 0.1;
  auto in_box = [&](const SurfacePoint& p) { return std::abs(p.x - cx) < h && std::abs(p.y - cy) < h && p.sheet == 0; };
  const auto pts = m.sample_area(21, 400000);
  double before = 0, after = 0, sq = 0;
  for (const auto& p : pts) {
    const double w = m.flat_density(p);
    const double a = in_box(p) ? w : 0.0, b = in_box(m.global_g(p, Direction::Forward)) ? w : 0.0;
    before += a;
    after += b;
    sq += (a - b) * (a - b);
  }
  const double n = static_cast<double>(pts.size());
  const double se = std::sqrt(sq / n) / std::sqrt(n);
  EXPECT_LT(std::abs(before - after) / n, 4.0 * se + 1e-12);
}

TEST(Lyapunov, DisabledMatchesLinearRate) {
  SurfaceSpec s;
  s.slowdown = false;
  const ReferenceModel m(s);
  EXPECT_NEAR(m.lyapunov_exponent({0.31, 0.42, 0}, 20000).exponent, std::log(m.lambda()), 1e-3);
  EXPECT_THROW(m.lyapunov_exponent({0.31, 0.42, 0}, 100), ParameterError);
}

TEST(Lyapunov, EnabledPositiveAndSymmetric) {
  const auto& m = model();
  const double fwd = m.lyapunov_exponent({0.31, 0.42, 0}, 100000).exponent;
  const double bwd = m.lyapunov_exponent({0.31, 0.42, 0}, 100000, Direction::Backward).exponent;
  EXPECT_GT(fwd, 0.0);
  EXPECT_LT(fwd, std::log(m.lambda()) + 1e-3);
  EXPECT_NEAR(fwd + bwd, 0.0, 2e-3);
}
