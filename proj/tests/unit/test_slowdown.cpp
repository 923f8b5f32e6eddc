#include <gtest/gtest.h>

#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <random>

#include "palab/smoothness.hpp"
#include "palab/slowdown.hpp"

using namespace palab;

namespace {

SlowdownParams wide_params() {
  // r1^2 >= 0.01 so that u = 0.01 sits in the pure-power region
  SlowdownInputs in;
  in.rho0 = 0.87;
  in.a_star = 1.7;
  return SlowdownParams::create(in);
}

PlanePoint random_in_disk(std::mt19937_64& rng, double r) {
  const double rr = r * std::sqrt(uniform01(rng));
  const double th = 2.0 * kPi * uniform01(rng);
  return {rr * std::cos(th), rr * std::sin(th)};
}

// Independent integrator with a fixed small step (classic RK4), used only as an oracle.
PlanePoint rk4_oracle(const SlowdownParams& q, const Slowdown& sd, PlanePoint s, double t, int steps) {
  using State = std::array<double, 2>;
  State x{s.s1, s.s2};
  auto rhs = [&](const State& y, State& dy, double) {
    const double ps = sd.psi(y[0] * y[0] + y[1] * y[1]);
    dy[0] = q.log_lambda * y[0] * ps;
    dy[1] = -q.log_lambda * y[1] * ps;
  };
  boost::numeric::odeint::integrate_const(boost::numeric::odeint::runge_kutta4<State>(), rhs, x, 0.0, t, t / steps);
  return {x[0], x[1]};
}

}  // namespace

TEST(Params, DerivedRadii) {
  const auto q = SlowdownParams::defaults();
  EXPECT_NEAR(q.r0, 0.5 * 0.05 * 0.05, 1e-18);
  EXPECT_NEAR(q.r1, q.r0 / (2.0 + std::sqrt(3.0)), 1e-18);
  EXPECT_NEAR(q.r1, SlowdownParams::plane_radius(4, q.rho1), 1e-17);
  EXPECT_NEAR(q.a_tilde, 0.5 * 0.15 * 0.15, 1e-18);
  EXPECT_NEAR(q.A_coeff, std::pow(0.8 * std::pow(2.0, 0.4), 1.0), 1e-15);
  EXPECT_NEAR(q.eps_smooth, 0.5, 1e-15);
  EXPECT_LT(q.rho1, q.rho0);
}

TEST(Params, RejectsBadInputs) {
  SlowdownInputs in;
  in.alpha = 1.0;
  EXPECT_THROW(SlowdownParams::create(in), ParameterError);
  in = {};
  in.lambda = 1.0;
  EXPECT_THROW(SlowdownParams::create(in), ParameterError);
  in = {};
  in.mu = 0.5;
  EXPECT_THROW(SlowdownParams::create(in), ParameterError);
  in = {};
  in.rho0 = 0.2;
  EXPECT_THROW(SlowdownParams::create(in), ParameterError);
  in = {};
  in.a_star = 0.06;  // lambda r0 no longer fits in D_a~
  EXPECT_THROW(SlowdownParams::create(in), ParameterError);
  in = {};
  in.rho1 = 0.049;  // D_r1 not inside F(D_r0)
  EXPECT_THROW(SlowdownParams::create(in), ParameterError);
}

TEST(Psi, EndpointsAndExample) {
  const auto q = SlowdownParams::defaults();
  const Slowdown sd(q);
  EXPECT_EQ(sd.psi(q.r0 * q.r0), 1.0);
  EXPECT_EQ(sd.psi(0.0), 0.0);
  EXPECT_EQ(sd.psi(1.0), 1.0);
  EXPECT_NEAR(sd.psi(0.5 * q.r1 * q.r1), q.psi_coeff * std::pow(0.5 * q.r1 * q.r1, 0.2), 1e-16);
  const Slowdown wide(wide_params());
  EXPECT_NEAR(wide.psi(0.01), 0.5253055608807534, 1e-15);
  EXPECT_NEAR(wide.psi(0.01), std::pow(2.0, 0.4) * std::pow(0.01, 0.2), 1e-15);
}

TEST(Psi, RejectsBadArgument) {
  const Slowdown sd(SlowdownParams::defaults());
  EXPECT_THROW(sd.psi(-1e-20), ParameterError);
  EXPECT_THROW(sd.psi(NAN), ParameterError);
}

TEST(Psi, MonotoneOnGrid) {
  const auto q = SlowdownParams::defaults();
  const Slowdown sd(q);
  double prev = 0.0;
  for (int i = 0; i <= 10000; ++i) {
    const double u = 1.2 * q.r0 * q.r0 * i / 10000.0;
    const double v = sd.psi(u);
    EXPECT_GE(v - prev, -1e-12);
    prev = v;
  }
}

TEST(Psi, DisabledIsOne) {
  SlowdownInputs in;
  in.enabled = false;
  const Slowdown sd(SlowdownParams::create(in));
  EXPECT_EQ(sd.psi(0.0), 1.0);
  EXPECT_EQ(sd.psi(1e-9), 1.0);
}

TEST(Hamiltonian, Values) {
  const Slowdown sd(SlowdownParams::defaults());
  EXPECT_EQ(sd.hamiltonian({0.0, 0.7}), 0.0);
  EXPECT_NEAR(sd.hamiltonian({1.0, 1.0}), 1.3169579, 1e-7);
  EXPECT_THROW(sd.hamiltonian({INFINITY, 1.0}), ParameterError);
}

TEST(Gamma, FrozenValues) {
  const auto g = gamma_exponents(0.2, 0.25);
  EXPECT_NEAR(g.gamma, 3.34294, 5e-6);
  EXPECT_NEAR(g.gamma_prime, 2.66323, 5e-6);
  EXPECT_NEAR(g.beta, 0.75 / std::pow(2.0, 2.2), 1e-15);
  EXPECT_NEAR(g.gamma, 2.5 + g.beta1, 1e-15);
}

TEST(Gamma, OrderingInRegime) {
  for (double a = 0.02; a < 0.25; a += 0.02)
    for (double m = 0.02; m < 0.5; m += 0.04) {
      const auto g = gamma_exponents(a, m);
      EXPECT_GT(g.gamma, g.gamma_prime);
      EXPECT_GT(g.gamma_prime, 2.0);
    }
}

TEST(Gamma, LimitMuToOne) {
  const double a = 0.2;
  const auto g = gamma_exponents(a, 1.0 - 1e-12);
  EXPECT_NEAR(g.gamma - g.gamma_prime, std::pow(2.0, a - 1.0) * 2.0, 1e-10);
}

TEST(Gamma, RejectsOutOfRange) {
  EXPECT_THROW(gamma_exponents(0.0, 0.25), ParameterError);
  EXPECT_THROW(gamma_exponents(0.2, 1.0), ParameterError);
}

TEST(Flow, FixedPointAndZeroTime) {
  const Slowdown sd(SlowdownParams::defaults());
  const PlanePoint o = sd.flow({0.0, 0.0}, 3.0);
  EXPECT_EQ(o.s1, 0.0);
  EXPECT_EQ(o.s2, 0.0);
  const PlanePoint s{1e-4, 2e-4};
  EXPECT_EQ(sd.flow(s, 0.0).s1, s.s1);
  EXPECT_THROW(sd.flow({NAN, 0.0}, 1.0), ParameterError);
}

TEST(Flow, LinearOutsideSlowRegion) {
  const auto q = SlowdownParams::defaults();
  const Slowdown sd(q);
  std::mt19937_64 rng(11);
  int tested = 0;
  while (tested < 2000) {
    const PlanePoint s = random_in_disk(rng, q.a_tilde);
    if (s.norm() <= q.r0 || std::sqrt(2.0 * std::abs(s.s1 * s.s2)) <= q.r0) continue;
    ++tested;
    const PlanePoint g = sd.flow(s, 1.0);
    const PlanePoint f = sd.linear(s, 1.0);
    EXPECT_NEAR(g.s1, f.s1, 1e-12 * f.norm());
    EXPECT_NEAR(g.s2, f.s2, 1e-12 * f.norm());
  }
}

TEST(Flow, AxisClosedForm) {
  const auto q = SlowdownParams::defaults();
  const Slowdown sd(q);
  const double C0 = 2.0 * q.alpha * q.log_lambda * q.psi_coeff;
  for (double s20 : {1e-8, 1e-6, 1e-4, 0.9 * q.r1})
    for (double t : {0.25, 1.0, 7.5, 100.0}) {
      const PlanePoint out = sd.flow({0.0, s20}, t);
      const double expect = s20 * std::pow(1.0 + C0 * std::pow(s20, 2.0 * q.alpha) * t, -1.0 / (2.0 * q.alpha));
      EXPECT_EQ(out.s1, 0.0);
      EXPECT_NEAR(out.s2 / expect, 1.0, 1e-12);
    }
}

TEST(Flow, ConservesHamiltonian) {
  const auto q = SlowdownParams::defaults();
  const Slowdown sd(q);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10000; ++i) {
    const PlanePoint s = random_in_disk(rng, q.r0);
    const double t = 5.0 * uniform01(rng);
    const PlanePoint o = sd.flow(s, t);
    const double h = s.s1 * s.s2;
    ASSERT_LE(std::abs(o.s1 * o.s2 - h), 1e-10 * std::max(1.0, std::abs(h)));
  }
}

TEST(Flow, GroupProperty) {
  const auto q = SlowdownParams::defaults();
  const Slowdown sd(q);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 2000; ++i) {
    const PlanePoint s = random_in_disk(rng, q.r0);
    const PlanePoint a = sd.flow(sd.flow(s, 0.5), 0.5);
    const PlanePoint b = sd.flow(s, 1.0);
    ASSERT_LE(std::hypot(a.s1 - b.s1, a.s2 - b.s2), 1e-9 * std::max(b.norm(), 1e-300));
  }
}

TEST(Flow, BackwardInvertsForward) {
  const auto q = SlowdownParams::defaults();
  const Slowdown sd(q);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    const PlanePoint s = random_in_disk(rng, q.r0 * q.lambda);
    const PlanePoint b = sd.flow(sd.flow(s, 1.0), -1.0);
    ASSERT_LE(std::hypot(b.s1 - s.s1, b.s2 - s.s2), 1e-12 * s.norm());
  }
}

TEST(Flow, MatchesAdaptiveRk) {
  const auto q = SlowdownParams::defaults();
  const Slowdown sd(q);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    const PlanePoint s = random_in_disk(rng, 1.2 * q.r0);
    const double t = 5.0 * uniform01(rng);
    const PlanePoint a = sd.flow(s, t);
    const PlanePoint b = sd.flow_rk(s, t, 1e-12);
    ASSERT_LE(std::hypot(a.s1 - b.s1, a.s2 - b.s2), 1e-9 * b.norm()) << i;
  }
}

TEST(Flow, MatchesFixedStepRk4) {
  const auto q = SlowdownParams::defaults();
  const Slowdown sd(q);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    const PlanePoint s = random_in_disk(rng, q.r0);
    const PlanePoint a = sd.flow(s, 1.0);
    const PlanePoint b = rk4_oracle(q, sd, s, 1.0, 4000);
    EXPECT_LE(std::hypot(a.s1 - b.s1, a.s2 - b.s2), 1e-10 * b.norm());
  }
}

TEST(Flow, JacobianMatchesPsiRatio) {
  const auto q = SlowdownParams::defaults();
  const Slowdown sd(q);
  std::mt19937_64 rng(10);
  for (int i = 0; i < 1000; ++i) {
    const PlanePoint s = random_in_disk(rng, q.r0);
    const double h = 1e-6 * s.norm();
    const PlanePoint xp = sd.flow({s.s1 + h, s.s2}, 1.0), xm = sd.flow({s.s1 - h, s.s2}, 1.0);
    const PlanePoint yp = sd.flow({s.s1, s.s2 + h}, 1.0), ym = sd.flow({s.s1, s.s2 - h}, 1.0);
    const double det = ((xp.s1 - xm.s1) * (yp.s2 - ym.s2) - (yp.s1 - ym.s1) * (xp.s2 - xm.s2)) / (4.0 * h * h);
    const PlanePoint g = sd.flow(s, 1.0);
    const double expect = sd.psi(g.norm2()) / sd.psi(s.norm2());
    ASSERT_NEAR(std::abs(det) / expect, 1.0, 1e-7);
  }
}

TEST(Flow, TransitTimeMatchesFlow) {
  const auto q = SlowdownParams::defaults();
  const Slowdown sd(q);
  const PlanePoint s{1e-6, 2e-4};
  const double T = sd.transit_time(s, 1e-4);
  const PlanePoint out = sd.flow(s, T);
  EXPECT_NEAR(out.s1, 1e-4, 1e-15);
}

TEST(Smoothness, ExponentMatchesFormula) {
  for (double a : {0.1, 0.2, 0.5}) {
    SlowdownInputs in;
    in.alpha = a;
    const LocalChart chart(SlowdownParams::create(in));
    std::vector<double> radii;
    for (int i = 0; i < 10; ++i) radii.push_back(0.9 * chart.pure_power_radius() * std::pow(10.0, -2.0 * i / 9.0));
    const ScalingFit f = hp_second_derivative_scaling(chart, radii);
    const ScalingFit h = hp_second_derivative_scaling(chart, radii, 5e-4);
    EXPECT_NEAR(f.slope, 2.0 / (1.0 - a) - 2.0, 0.05) << "alpha " << a;
    EXPECT_LT(std::abs(f.slope - h.slope), 0.02);
  }
}

TEST(Smoothness, RejectsBadRadii) {
  const LocalChart chart(SlowdownParams::defaults());
  const double r = chart.pure_power_radius();
  EXPECT_THROW(hp_second_derivative_scaling(chart, {r, r / 2, r / 4}), ParameterError);
  std::vector<double> narrow;
  for (int i = 0; i < 8; ++i) narrow.push_back(r * (1.0 - 0.01 * i));
  EXPECT_THROW(hp_second_derivative_scaling(chart, narrow), ParameterError);
}
