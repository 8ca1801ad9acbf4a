#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ttcshield/kernels.hpp"
#include "ttcshield/rng.hpp"

namespace ttcshield::kernels {
namespace {

std::vector<const KernelTable*> simd_tables() {
  std::vector<const KernelTable*> tables;
  if (const KernelTable* t = avx2_table()) tables.push_back(t);
  if (const KernelTable* t = neon_table()) tables.push_back(t);
  return tables;
}

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

struct Field {
  std::vector<double> xs;
  std::vector<double> ys;
};

Field random_field(Rng& rng, std::size_t n, const EgoMotion& ego, double d_s) {
  std::uniform_real_distribution<double> u(-60.0, 60.0);
  std::uniform_int_distribution<int> special(0, 9);
  Field f;
  for (std::size_t i = 0; i < n; ++i) {
    double x = ego.x + u(rng);
    double y = ego.y + u(rng) * 0.2;
    switch (special(rng)) {
      case 0:  // exactly on the envelope
        x = ego.x + d_s;
        y = ego.y;
        break;
      case 1:  // coincident
        x = ego.x;
        y = ego.y;
        break;
      case 2:  // inside the envelope
        x = ego.x + 0.5 * d_s;
        break;
      default:
        break;
    }
    f.xs.push_back(x);
    f.ys.push_back(y);
  }
  return f;
}

StaticCostSum reference(const Field& f, const EgoMotion& ego, const StaticTtcParams& p) {
  StaticCostSum s;
  for (std::size_t i = 0; i < f.xs.size(); ++i) {
    bool overlap = false;
    const double t = static_ttc(f.xs[i], f.ys[i], ego, p.safety_distance, p.ttc_floor, overlap);
    if (overlap) ++s.overlaps;
    if (t <= p.t_safe) s.inverse_ttc += 1.0 / t;
  }
  return s;
}

TEST(Kernels, ScalarStaticCostMatchesElementwiseReference) {
  Rng rng(1);
  std::uniform_real_distribution<double> v(-30.0, 30.0);
  const StaticTtcParams p;
  for (int trial = 0; trial < 200; ++trial) {
    const EgoMotion ego{v(rng), v(rng), v(rng), v(rng) * 0.2};
    const Field f = random_field(rng, static_cast<std::size_t>(trial % 41), ego, p.safety_distance);
    const StaticCostSum a = scalar_table().static_cost(f.xs.data(), f.ys.data(), f.xs.size(), ego, p);
    const StaticCostSum b = reference(f, ego, p);
    ASSERT_TRUE(same_bits(a.inverse_ttc, b.inverse_ttc));
    ASSERT_EQ(a.overlaps, b.overlaps);
  }
}

TEST(Kernels, SimdStaticCostBitIdenticalToScalar) {
  const auto tables = simd_tables();
  if (tables.empty()) GTEST_SKIP() << "no SIMD variant on this machine";
  Rng rng(2);
  std::uniform_real_distribution<double> v(-30.0, 30.0);
  std::uniform_real_distribution<double> ds(0.5, 8.0);
  for (const KernelTable* table : tables) {
    for (int trial = 0; trial < 2000; ++trial) {
      StaticTtcParams p;
      p.safety_distance = ds(rng);
      p.t_safe = 1.0 + ds(rng);
      EgoMotion ego{v(rng), v(rng), v(rng), v(rng) * 0.3};
      if (trial % 50 == 0) ego.vx = ego.vy = 0.0;
      const Field f = random_field(rng, static_cast<std::size_t>(trial % 67), ego, p.safety_distance);
      const StaticCostSum a = scalar_table().static_cost(f.xs.data(), f.ys.data(), f.xs.size(), ego, p);
      const StaticCostSum b = table->static_cost(f.xs.data(), f.ys.data(), f.xs.size(), ego, p);
      ASSERT_TRUE(same_bits(a.inverse_ttc, b.inverse_ttc))
          << table->name << " trial " << trial << ": " << a.inverse_ttc << " vs " << b.inverse_ttc;
      ASSERT_EQ(a.overlaps, b.overlaps) << table->name;
    }
  }
}

TEST(Kernels, SimdAffineBitIdenticalToScalar) {
  const auto tables = simd_tables();
  if (tables.empty()) GTEST_SKIP() << "no SIMD variant on this machine";
  Rng rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_int_distribution<std::size_t> dim(1, 70);
  for (const KernelTable* table : tables) {
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t in = dim(rng);
      const std::size_t out = dim(rng);
      std::vector<double> x(in), w(in * out), b(out), ya(out), yb(out);
      for (double& e : x) e = u(rng);
      for (double& e : w) e = u(rng);
      for (double& e : b) e = u(rng);
      scalar_table().affine(x.data(), in, w.data(), b.data(), out, ya.data());
      table->affine(x.data(), in, w.data(), b.data(), out, yb.data());
      for (std::size_t j = 0; j < out; ++j) {
        ASSERT_TRUE(same_bits(ya[j], yb[j])) << table->name << " in=" << in << " out=" << out;
      }
    }
  }
}

TEST(Kernels, ScalarAffineAccumulatesInInputOrder) {
  const double x[3] = {1e16, 1.0, -1e16};
  const double w[3] = {1.0, 1.0, 1.0};
  const double b[1] = {0.0};
  double y[1];
  scalar_table().affine(x, 3, w, b, 1, y);
  EXPECT_EQ(y[0], ((0.0 + 1e16) + 1.0) - 1e16);
}

TEST(Kernels, ActiveTableIsUsable) {
  const KernelTable& t = active();
  EXPECT_NE(t.name, nullptr);
  EXPECT_NE(t.static_cost, nullptr);
  EXPECT_NE(t.affine, nullptr);
  const double xs[1] = {20.0};
  const double ys[1] = {0.0};
  const StaticCostSum s = t.static_cost(xs, ys, 1, EgoMotion{0, 0, 10, 0}, StaticTtcParams{5.0, 5.0, 0.05});
  EXPECT_NEAR(s.inverse_ttc, 1.0 / 1.5, 1e-15);
  EXPECT_EQ(s.overlaps, 0u);
}

}  // namespace
}  // namespace ttcshield::kernels
