#pragma once

// Data-parallel inner loops of the planner: the static-obstacle TTC sum and the
// dense affine map used by the predictors. Each kernel has a scalar reference and
// optional SIMD variants. Variants produce bit-identical results: per-lane
// arithmetic is the same sequence of correctly rounded IEEE operations and every
// reduction runs in ascending element order.

#include <cmath>
#include <cstddef>
#include <limits>

namespace ttcshield::kernels {

struct EgoMotion {
  double x = 0.0;
  double y = 0.0;
  double vx = 0.0;
  double vy = 0.0;
};

struct StaticTtcParams {
  double safety_distance = 3.0;
  double t_safe = 5.0;
  double ttc_floor = 0.05;
};

// Static-object TTC with the ego velocity projected on the line of sight.
// Inside the safety envelope the result is the floor and `overlap` is raised.
inline double static_ttc(double ox, double oy, const EgoMotion& ego, double safety_distance,
                         double ttc_floor, bool& overlap) {
  overlap = false;
  const double dx = ox - ego.x;
  const double dy = oy - ego.y;
  const double dist = std::sqrt(dx * dx + dy * dy);
  if (dist <= safety_distance) {
    overlap = true;
    return ttc_floor;
  }
  const double proj = (ego.vx * dx + ego.vy * dy) / dist;
  if (!(proj > 0.0)) return std::numeric_limits<double>::infinity();
  const double ttc = (dist - safety_distance) / proj;
  return ttc < ttc_floor ? ttc_floor : ttc;
}

struct StaticCostSum {
  double inverse_ttc = 0.0;  // sum of 1/TTC over obstacles with TTC <= t_safe
  std::size_t overlaps = 0;  // obstacles inside the safety envelope
};

using StaticCostFn = StaticCostSum (*)(const double* xs, const double* ys, std::size_t count,
                                       const EgoMotion& ego, const StaticTtcParams& params);

// y = bias + x * W with W row-major [in x out]; each output accumulates in
// ascending input order starting from its bias.
using AffineFn = void (*)(const double* x, std::size_t in, const double* weights,
                          const double* bias, std::size_t out, double* y);

struct KernelTable {
  const char* name;
  StaticCostFn static_cost;
  AffineFn affine;
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Best available table, chosen once per process. TTCSHIELD_KERNELS=scalar|avx2|neon
// forces a choice when that variant is available.
const KernelTable& active();

}  // namespace ttcshield::kernels
