#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "palab/verify.hpp"

using namespace palab;

namespace {

const Slowdown& slowed() {
  static const Slowdown sd(SlowdownParams::defaults());
  return sd;
}

}  // namespace

TEST(Crossing, InvariantsAndGrid) {
  const auto& sd = slowed();
  const CrossingRecord r = make_crossing(sd, 0.01);
  EXPECT_TRUE(crossing_invariants_hold(r, sd.params().r1));
  EXPECT_EQ(r.t.front(), 0.0);
  EXPECT_EQ(r.t.back(), r.T);
  EXPECT_NEAR(r.entry.s1 * r.entry.s2, 0.005 * sd.params().r1 * sd.params().r1, 1e-20);
  EXPECT_THROW(make_crossing(sd, 0.0), ParameterError);
  EXPECT_THROW(make_crossing(sd, 1.0), ParameterError);
}

TEST(Crossing, LongerForSmallerEps) {
  const auto& sd = slowed();
  EXPECT_GT(make_crossing(sd, 1e-4).T, make_crossing(sd, 1e-2).T);
  SlowdownInputs in;
  in.enabled = false;
  const Slowdown lin(SlowdownParams::create(in));
  const CrossingRecord r = make_crossing(lin, 0.01);
  const double th = 0.5 * std::asin(0.01);
  EXPECT_NEAR(r.T, std::log(1.0 / std::tan(th)) / lin.params().log_lambda, 1e-12);
}

TEST(Crossing, MirrorSymmetry) {
  const auto& sd = slowed();
  const CrossingRecord r = make_crossing(sd, 0.03);
  const CrossingRecord m = mirror(r);
  ASSERT_EQ(m.t.size(), r.t.size());
  // the reflected trajectory solves the backward flow: flowing it back from its exit recovers the start
  for (std::size_t i = 0; i < m.t.size(); i += 7) {
    const PlanePoint back = sd.flow(m.s[i], -m.t[i]);
    EXPECT_NEAR(back.s1, r.exit.s2, 1e-12 * sd.params().r1);
    EXPECT_NEAR(back.s2, r.exit.s1, 1e-12 * sd.params().r1);
  }
  EXPECT_THROW(mirror(axis_record(sd, 0.5 * sd.params().r1, 10.0)), ParameterError);
}

TEST(S1S2, AxisRecordSaturatesB) {
  const auto& sd = slowed();
  const S1S2Report rep = verify_s1s2_bounds(axis_record(sd, sd.params().r1, 20.0), sd.params());
  EXPECT_LE(std::abs(rep.margin_b), 1e-10);
  EXPECT_TRUE(rep.pass());
}

TEST(S1S2, RandomCrossingsPass) {
  const auto& sd = slowed();
  const S1S2Suite s = s1s2_suite(sd, 20, 17);
  EXPECT_EQ(s.failures, 0);
  EXPECT_GE(s.worst.worst(), -1e-9);
}

TEST(S1S2, RejectsBrokenRecord) {
  const auto& sd = slowed();
  CrossingRecord r = make_crossing(sd, 0.1);
  r.s.back().s1 *= 2.0;
  EXPECT_THROW(verify_s1s2_bounds(r, sd.params()), ParameterError);
}

TEST(Pairs, NearAxisPairSatisfiesDeviationBound) {
  const auto& sd = slowed();
  const double mu = sd.params().mu;
  const PairRecord pr = make_pair(sd, make_crossing(sd, 1e-3), mu, 0.0);
  ASSERT_TRUE(pr.admissible());
  const SpreadReport rep = verify_spread(pr, sd.params(), mu);
  EXPECT_GE(rep.deviation_margin, 0.0);
  EXPECT_TRUE(rep.has_envelope);
  EXPECT_GT(rep.lower, 0.0);
}

TEST(Pairs, OffsetAdmissibilityMonotoneInMu) {
  const auto& sd = slowed();
  std::vector<PairRecord> pop;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 12; ++i) {
    const double eps = 1e-3 * std::pow(100.0, uniform01(rng));
    // offsets spread around the bound for mu = 0.25
    pop.push_back(make_pair(sd, make_crossing(sd, eps), 0.25, 2.0 * uniform01(rng) - 1.0, 0.5 + 1.0 * uniform01(rng)));
  }
  long prev = static_cast<long>(pop.size()) + 1;
  for (double mu : {0.05, 0.15, 0.25, 0.35, 0.45}) {
    long ok = 0;
    for (const auto& p : pop) ok += offset_admissible(p, mu) ? 1 : 0;
    EXPECT_LE(ok, prev);
    prev = ok;
  }
}

TEST(Pairs, SpreadRejectsInadmissiblePair) {
  const auto& sd = slowed();
  PairRecord pr = make_pair(sd, make_crossing(sd, 0.01), 0.25, 0.0);
  pr.small_offset = false;
  EXPECT_THROW(verify_spread(pr, sd.params(), 0.25), ParameterError);
}

TEST(Length, LinearControlContractsAtLambda) {
  SlowdownInputs in;
  in.enabled = false;
  const LocalChart chart(SlowdownParams::create(in));
  for (double eps : {1e-3, 0.05, 0.3}) {
    const auto rec = length_transit(chart, eps, 1e-2);
    ASSERT_TRUE(rec.has_value());
    EXPECT_NEAR(rec->ratio / std::pow(chart.params().lambda, -static_cast<double>(rec->m - rec->n)), 1.0, 1e-9);
  }
}

TEST(Length, InsensitiveToCurveLength) {
  const LocalChart chart(SlowdownParams::defaults());
  const auto a = length_transit(chart, 0.01, 1e-2);
  const auto b = length_transit(chart, 0.01, 5e-3);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->m - a->n, b->m - b->n);
  EXPECT_NEAR(b->ratio / a->ratio, 1.0, 0.05);
}

TEST(Length, SlowedTransitsAreLongerAndContractLess) {
  const LocalChart chart(SlowdownParams::defaults());
  SlowdownInputs in;
  in.enabled = false;
  const LocalChart lin(SlowdownParams::create(in));
  const auto s = length_transit(chart, 1e-3, 1e-2);
  const auto l = length_transit(lin, 1e-3, 1e-2);
  ASSERT_TRUE(s && l);
  EXPECT_GT(s->m - s->n, l->m - l->n);
  EXPECT_GT(s->ratio, std::pow(chart.params().lambda, -static_cast<double>(s->m - s->n)));
  EXPECT_LT(s->ratio, 1.0);
  EXPECT_THROW(verify_length_ratio(50, chart, 0.25, 1), ParameterError);
}
