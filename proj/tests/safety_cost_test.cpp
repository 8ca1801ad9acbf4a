#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ttcshield/error.hpp"
#include "ttcshield/safety_cost.hpp"

namespace ttcshield::safety {
namespace {

using sim::StaticObstacle;
using sim::Vec2;
using sim::VehicleState;

VehicleState at(Vec2 p, Vec2 v = {}) {
  VehicleState s;
  s.position = p;
  s.velocity = v;
  return s;
}

TtcParams params(double d_s = 5.0) {
  TtcParams p;
  p.d_s = d_s;
  return p;
}

TEST(TtcPair, HeadOnStationaryTarget) {
  EXPECT_NEAR(ttc_pair(at({0, 0}, {10, 0}), at({50, 0}), params()), 4.5, 1e-12);
}

TEST(TtcPair, RecedingIsInfinite) {
  EXPECT_EQ(ttc_pair(at({0, 0}, {10, 0}), at({50, 0}, {12, 0}), params()), kInfinity);
}

TEST(TtcPair, EqualVelocitiesAreInfinite) {
  EXPECT_EQ(ttc_pair(at({0, 0}, {10, 3}), at({20, 7}, {10, 3}), params()), kInfinity);
}

TEST(TtcPair, InsideEnvelopeGivesFloor) {
  const TtcParams p = params();
  EXPECT_EQ(ttc_pair(at({0, 0}, {10, 0}), at({3, 0}), p), p.ttc_floor);
  EXPECT_EQ(ttc_pair(at({1, 1}), at({1, 1}), p), p.ttc_floor);
}

TEST(TtcPair, ClampedBelowByFloor) {
  const TtcParams p = params();
  EXPECT_EQ(ttc_pair(at({0, 0}, {1000, 0}), at({5.01, 0}), p), p.ttc_floor);
}

TEST(TtcStatic, ObstacleAhead) {
  EXPECT_NEAR(ttc_static(at({0, 0}, {10, 0}), StaticObstacle{{25, 0}, 0.0}, params()), 2.0, 1e-12);
}

TEST(TtcStatic, ObstacleBehindIsInfinite) {
  EXPECT_EQ(ttc_static(at({0, 0}, {10, 0}), StaticObstacle{{-25, 0}, 0.0}, params()), kInfinity);
}

TEST(TtcOracle, TangentialFlybyNeverReachesEnvelope) {
  EXPECT_EQ(ttc_quadratic_oracle(at({0, 0}), at({0, 8}, {10, 0}), params()), kInfinity);
}

TEST(TtcOracle, ConstantSeparationNeverReachesEnvelope) {
  EXPECT_EQ(ttc_quadratic_oracle(at({0, 0}, {3, 1}), at({30, 9}, {3, 1}), params()), kInfinity);
}

TEST(TtcOracle, AgreesWithClosedFormOnCollinearClosing) {
  Rng rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  std::uniform_real_distribution<double> extra(0.01, 80.0);
  std::uniform_real_distribution<double> closing(0.1, 40.0);
  const TtcParams p = params();
  for (int i = 0; i < 1000; ++i) {
    const double a = angle(rng);
    const Vec2 dir{std::cos(a), std::sin(a)};
    const Vec2 ego_p{u(rng), u(rng)};
    const Vec2 ego_v{u(rng) * 0.5, u(rng) * 0.5};
    const double dist = p.d_s + extra(rng);
    const VehicleState ego = at(ego_p, ego_v);
    const VehicleState other = at(ego_p + dir * dist, ego_v - dir * closing(rng));
    const double closed = ttc_pair(ego, other, p);
    // The contract clamps every TTC at ttc_floor; the root itself is unclamped.
    const double oracle = std::max(ttc_quadratic_oracle(ego, other, p), p.ttc_floor);
    ASSERT_TRUE(std::isfinite(oracle));
    ASSERT_LT(std::abs(closed - oracle), 1e-9) << "trial " << i;
  }
}

TEST(TtcOracle, ClosedFormNeverLaterThanOracleOffAxis) {
  // Separation is convex in time, so the linearised contact time is a lower bound.
  Rng rng(12);
  std::uniform_real_distribution<double> u(-40.0, 40.0);
  const TtcParams p = params();
  int compared = 0;
  for (int i = 0; i < 5000; ++i) {
    const VehicleState ego = at({u(rng), u(rng)}, {u(rng) * 0.5, u(rng) * 0.5});
    const VehicleState other = at({u(rng), u(rng)}, {u(rng) * 0.5, u(rng) * 0.5});
    if (norm(other.position - ego.position) <= p.d_s) continue;
    const double closed = ttc_pair(ego, other, p);
    const double oracle = ttc_quadratic_oracle(ego, other, p);
    if (closed == p.ttc_floor) continue;
    ASSERT_LE(closed, oracle * (1.0 + 1e-12));
    ++compared;
  }
  EXPECT_GT(compared, 1000);
}

TEST(TtcPair, MonotoneInClosingSpeed) {
  const TtcParams p = params();
  double previous = kInfinity;
  for (double v = 0.5; v < 60.0; v += 0.5) {
    const double t = ttc_pair(at({0, 0}, {v, 0}), at({80, 0}), p);
    ASSERT_LT(t, previous);
    previous = t;
  }
}

TEST(Threshold, KeepsAtOrBelowTsafe) {
  EXPECT_EQ(threshold_ttc(2.0, 5.0), 2.0);
  EXPECT_EQ(threshold_ttc(7.0, 5.0), kInfinity);
  EXPECT_EQ(threshold_ttc(5.0, 5.0), 5.0);
  EXPECT_EQ(threshold_ttc(kInfinity, 5.0), kInfinity);
}

TEST(StateCost, NoThreatsCostNothing) {
  const std::vector<VehicleState> hdvs{at({-30, 0}, {5, 0}), at({0, 40}, {10, 0})};
  const std::vector<StaticObstacle> statics{{{-20, 0}, 0.0}};
  EXPECT_EQ(state_cost(at({0, 0}, {10, 0}), hdvs, statics, params()), 0.0);
}

TEST(StateCost, SingleHdv) {
  const std::vector<VehicleState> hdvs{at({50, 0})};
  EXPECT_NEAR(state_cost(at({0, 0}, {10, 0}), hdvs, std::vector<StaticObstacle>{}, params()),
              1.0 / 4.5, 1e-12);
}

TEST(StateCost, HdvPlusWeightedStatic) {
  const std::vector<VehicleState> hdvs{at({25, 0})};
  const std::vector<StaticObstacle> statics{{{45, 0}, 0.0}};
  TtcParams p = params();
  p.lambda = 0.5;
  EXPECT_NEAR(state_cost(at({0, 0}, {10, 0}), hdvs, statics, p), 0.625, 1e-12);
}

TEST(StateCost, EnvelopeViolationAddsPenalty) {
  const TtcParams p = params();
  const std::vector<VehicleState> hdvs{at({2, 0})};
  const double c = state_cost(at({0, 0}, {10, 0}), hdvs, std::vector<StaticObstacle>{}, p);
  EXPECT_NEAR(c, 1.0 / p.ttc_floor + p.overlap_penalty, 1e-9);

  const std::vector<StaticObstacle> statics{{{0, 3}, 0.0}};
  const double s = state_cost(at({0, 0}, {10, 0}), {}, statics, p);
  EXPECT_NEAR(s, p.lambda / p.ttc_floor + p.overlap_penalty, 1e-9);
}

TEST(StateCost, TallyCountsEveryTerm) {
  const std::vector<VehicleState> hdvs{at({50, 0}), at({60, 3}), at({-10, 0})};
  std::vector<StaticObstacle> statics;
  for (int i = 0; i < 37; ++i) statics.push_back({{2.0 * i, 7.0}, 0.0});
  const ObstacleField field(statics);
  CostTally tally;
  state_cost(at({0, 0}, {10, 0}), hdvs, field, params(), &tally);
  EXPECT_EQ(tally.aggregates, 1u);
  EXPECT_EQ(tally.pair_terms, 3u);
  EXPECT_EQ(tally.static_terms, 37u);
  EXPECT_EQ(tally.total(), 41u);
}

struct RandomScene {
  VehicleState ego;
  std::vector<VehicleState> hdvs;
  std::vector<StaticObstacle> statics;
};

RandomScene random_scene(Rng& rng) {
  std::uniform_real_distribution<double> pos(-30.0, 30.0);
  std::uniform_real_distribution<double> vel(-15.0, 15.0);
  RandomScene s;
  s.ego = at({pos(rng), pos(rng)}, {vel(rng), vel(rng)});
  std::uniform_int_distribution<int> count(0, 6);
  for (int i = count(rng); i > 0; --i) s.hdvs.push_back(at({pos(rng), pos(rng)}, {vel(rng), vel(rng)}));
  for (int i = count(rng) * 3; i > 0; --i) s.statics.push_back({{pos(rng), pos(rng)}, 0.0});
  return s;
}

TEST(StateCostProperties, NonNegativeAndAdditive) {
  Rng rng(21);
  TtcParams p = params();
  for (int trial = 0; trial < 300; ++trial) {
    const RandomScene s = random_scene(rng);
    const double total = state_cost(s.ego, s.hdvs, s.statics, p);
    ASSERT_GE(total, 0.0);
    double sum = 0.0;
    for (const VehicleState& h : s.hdvs) {
      sum += state_cost(s.ego, std::vector<VehicleState>{h}, std::vector<StaticObstacle>{}, p);
    }
    for (const StaticObstacle& o : s.statics) {
      sum += state_cost(s.ego, {}, std::vector<StaticObstacle>{o}, p);
    }
    ASSERT_NEAR(total, sum, 1e-9 * std::max(1.0, total));
    if (!s.hdvs.empty()) {
      std::vector<VehicleState> fewer(s.hdvs.begin() + 1, s.hdvs.end());
      ASSERT_LE(state_cost(s.ego, fewer, s.statics, p), total * (1.0 + 1e-12));
    }
    if (!s.statics.empty()) {
      std::vector<StaticObstacle> fewer(s.statics.begin() + 1, s.statics.end());
      ASSERT_LE(state_cost(s.ego, s.hdvs, fewer, p), total * (1.0 + 1e-12));
    }
  }
}

Vec2 rotate(Vec2 v, double a) {
  return {std::cos(a) * v.x - std::sin(a) * v.y, std::sin(a) * v.x + std::cos(a) * v.y};
}

TEST(StateCostProperties, RigidMotionInvariant) {
  Rng rng(22);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  std::uniform_real_distribution<double> shift(-1000.0, 1000.0);
  const TtcParams p = params();
  for (int trial = 0; trial < 300; ++trial) {
    RandomScene s = random_scene(rng);
    const double before = state_cost(s.ego, s.hdvs, s.statics, p);
    const double a = angle(rng);
    const Vec2 t{shift(rng), shift(rng)};
    auto move = [&](VehicleState& v) {
      v.position = rotate(v.position, a) + t;
      v.velocity = rotate(v.velocity, a);
    };
    move(s.ego);
    for (VehicleState& h : s.hdvs) move(h);
    for (StaticObstacle& o : s.statics) o.position = rotate(o.position, a) + t;
    const double after = state_cost(s.ego, s.hdvs, s.statics, p);
    // Entities exactly on the envelope or threshold boundary can flip; skip those draws.
    if (std::abs(after - before) > 1e-6 * std::max(1.0, before)) {
      bool boundary = false;
      for (const VehicleState& h : s.hdvs) {
        const double d = norm(h.position - s.ego.position);
        boundary |= std::abs(d - p.d_s) < 1e-6;
      }
      ASSERT_TRUE(boundary) << "trial " << trial << " " << before << " vs " << after;
    }
  }
}

TEST(StateCostProperties, BeyondTsafeContributesZero) {
  Rng rng(23);
  std::uniform_real_distribution<double> speed(1.0, 20.0);
  const TtcParams p = params();
  for (int trial = 0; trial < 200; ++trial) {
    const double v = speed(rng);
    const double gap = p.d_s + v * (p.T_safe + 0.01 + trial * 0.01);
    const std::vector<VehicleState> hdvs{at({gap, 0})};
    ASSERT_EQ(state_cost(at({0, 0}, {v, 0}), hdvs, std::vector<StaticObstacle>{}, p), 0.0);
  }
}

TEST(TtcParamsValidation, RejectsBrokenInvariants) {
  auto expect_invalid = [](auto mutate) {
    TtcParams p;
    mutate(p);
    EXPECT_THROW(p.validate(), ValidationError);
  };
  expect_invalid([](TtcParams& p) { p.d_s = 0.0; });
  expect_invalid([](TtcParams& p) { p.T_safe = 0.0; });
  expect_invalid([](TtcParams& p) { p.lambda = -0.1; });
  expect_invalid([](TtcParams& p) { p.ttc_floor = 0.0; });
  expect_invalid([](TtcParams& p) { p.ttc_floor = 6.0; });
  EXPECT_NO_THROW(TtcParams{}.validate());
}

}  // namespace
}  // namespace ttcshield::safety
