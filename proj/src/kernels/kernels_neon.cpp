#include <arm_neon.h>

#include "ttcshield/kernels.hpp"

namespace ttcshield::kernels {
namespace {

StaticCostSum static_cost_neon(const double* xs, const double* ys, std::size_t count,
                               const EgoMotion& ego, const StaticTtcParams& params) {
  const float64x2_t ex = vdupq_n_f64(ego.x);
  const float64x2_t ey = vdupq_n_f64(ego.y);
  const float64x2_t vx = vdupq_n_f64(ego.vx);
  const float64x2_t vy = vdupq_n_f64(ego.vy);
  const float64x2_t ds = vdupq_n_f64(params.safety_distance);
  const float64x2_t floor = vdupq_n_f64(params.ttc_floor);
  const float64x2_t tsafe = vdupq_n_f64(params.t_safe);
  const float64x2_t one = vdupq_n_f64(1.0);
  const float64x2_t zero = vdupq_n_f64(0.0);
  const double inside_term = params.ttc_floor <= params.t_safe ? 1.0 / params.ttc_floor : 0.0;
  const float64x2_t inside_vec = vdupq_n_f64(inside_term);

  StaticCostSum sum;
  std::size_t i = 0;
  for (; i + 2 <= count; i += 2) {
    const float64x2_t dx = vsubq_f64(vld1q_f64(xs + i), ex);
    const float64x2_t dy = vsubq_f64(vld1q_f64(ys + i), ey);
    // Separate multiply and add: vfmaq would round differently from the scalar path.
    const float64x2_t dist = vsqrtq_f64(vaddq_f64(vmulq_f64(dx, dx), vmulq_f64(dy, dy)));
    const uint64x2_t inside = vcleq_f64(dist, ds);
    const float64x2_t dot = vaddq_f64(vmulq_f64(vx, dx), vmulq_f64(vy, dy));
    const float64x2_t proj = vdivq_f64(dot, dist);
    const uint64x2_t closing = vcgtq_f64(proj, zero);
    float64x2_t ttc = vdivq_f64(vsubq_f64(dist, ds), proj);
    ttc = vbslq_f64(vcltq_f64(ttc, floor), floor, ttc);
    const uint64x2_t keep = vandq_u64(closing, vcleq_f64(ttc, tsafe));
    float64x2_t term = vbslq_f64(keep, vdivq_f64(one, ttc), zero);
    term = vbslq_f64(inside, inside_vec, term);
    sum.inverse_ttc += vgetq_lane_f64(term, 0);
    sum.inverse_ttc += vgetq_lane_f64(term, 1);
    sum.overlaps += (vgetq_lane_u64(inside, 0) ? 1 : 0) + (vgetq_lane_u64(inside, 1) ? 1 : 0);
  }
  for (; i < count; ++i) {
    bool overlap = false;
    const double ttc =
        static_ttc(xs[i], ys[i], ego, params.safety_distance, params.ttc_floor, overlap);
    sum.inverse_ttc += ttc <= params.t_safe ? 1.0 / ttc : 0.0;
    sum.overlaps += overlap ? 1 : 0;
  }
  return sum;
}

void affine_neon(const double* x, std::size_t in, const double* weights, const double* bias,
                 std::size_t out, double* y) {
  const std::size_t vec_end = out - out % 2;
  for (std::size_t i = 0; i < out; ++i) y[i] = bias[i];
  for (std::size_t j = 0; j < in; ++j) {
    const float64x2_t xj = vdupq_n_f64(x[j]);
    const double* row = weights + j * out;
    std::size_t i = 0;
    for (; i < vec_end; i += 2) {
      vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(xj, vld1q_f64(row + i))));
    }
    for (; i < out; ++i) y[i] += x[j] * row[i];
  }
}

}  // namespace

const KernelTable* neon_table() {
  static const KernelTable table{"neon", &static_cost_neon, &affine_neon};
  return &table;
}

}  // namespace ttcshield::kernels
