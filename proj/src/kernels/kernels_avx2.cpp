#include <immintrin.h>

#include "ttcshield/kernels.hpp"

namespace ttcshield::kernels {
namespace {

// This file is compiled with -mavx2 and must not emit out-of-line copies of
// shared inlines, so the remainder loop uses its own copy of static_ttc.
double tail_static_ttc(double ox, double oy, const EgoMotion& ego, double safety_distance,
                       double ttc_floor, bool& overlap) {
  overlap = false;
  const double dx = ox - ego.x;
  const double dy = oy - ego.y;
  const double dist = __builtin_sqrt(dx * dx + dy * dy);
  if (dist <= safety_distance) {
    overlap = true;
    return ttc_floor;
  }
  const double proj = (ego.vx * dx + ego.vy * dy) / dist;
  if (!(proj > 0.0)) return __builtin_inf();
  const double ttc = (dist - safety_distance) / proj;
  return ttc < ttc_floor ? ttc_floor : ttc;
}

StaticCostSum static_cost_avx2(const double* xs, const double* ys, std::size_t count,
                               const EgoMotion& ego, const StaticTtcParams& params) {
  const __m256d ex = _mm256_set1_pd(ego.x);
  const __m256d ey = _mm256_set1_pd(ego.y);
  const __m256d vx = _mm256_set1_pd(ego.vx);
  const __m256d vy = _mm256_set1_pd(ego.vy);
  const __m256d ds = _mm256_set1_pd(params.safety_distance);
  const __m256d floor = _mm256_set1_pd(params.ttc_floor);
  const __m256d tsafe = _mm256_set1_pd(params.t_safe);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  const double inside_term = params.ttc_floor <= params.t_safe ? 1.0 / params.ttc_floor : 0.0;
  const __m256d inside_vec = _mm256_set1_pd(inside_term);

  StaticCostSum sum;
  alignas(32) double terms[4];
  std::size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), ex);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), ey);
    const __m256d dist = _mm256_sqrt_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)));
    const __m256d inside = _mm256_cmp_pd(dist, ds, _CMP_LE_OQ);
    const __m256d dot = _mm256_add_pd(_mm256_mul_pd(vx, dx), _mm256_mul_pd(vy, dy));
    const __m256d proj = _mm256_div_pd(dot, dist);
    const __m256d closing = _mm256_cmp_pd(proj, zero, _CMP_GT_OQ);
    const __m256d ttc = _mm256_max_pd(_mm256_div_pd(_mm256_sub_pd(dist, ds), proj), floor);
    const __m256d keep = _mm256_and_pd(closing, _mm256_cmp_pd(ttc, tsafe, _CMP_LE_OQ));
    __m256d term = _mm256_and_pd(_mm256_div_pd(one, ttc), keep);
    term = _mm256_blendv_pd(term, inside_vec, inside);
    _mm256_store_pd(terms, term);
    // In-order accumulation keeps the sum identical to the scalar reference.
    sum.inverse_ttc += terms[0];
    sum.inverse_ttc += terms[1];
    sum.inverse_ttc += terms[2];
    sum.inverse_ttc += terms[3];
    sum.overlaps += static_cast<std::size_t>(
        __builtin_popcount(static_cast<unsigned>(_mm256_movemask_pd(inside))));
  }
  for (; i < count; ++i) {
    bool overlap = false;
    const double ttc =
        tail_static_ttc(xs[i], ys[i], ego, params.safety_distance, params.ttc_floor, overlap);
    sum.inverse_ttc += ttc <= params.t_safe ? 1.0 / ttc : 0.0;
    sum.overlaps += overlap ? 1 : 0;
  }
  return sum;
}

void affine_avx2(const double* x, std::size_t in, const double* weights, const double* bias,
                 std::size_t out, double* y) {
  const std::size_t vec_end = out - out % 4;
  for (std::size_t i = 0; i < out; ++i) y[i] = bias[i];
  for (std::size_t j = 0; j < in; ++j) {
    const __m256d xj = _mm256_set1_pd(x[j]);
    const double* row = weights + j * out;
    std::size_t i = 0;
    for (; i < vec_end; i += 4) {
      const __m256d acc = _mm256_loadu_pd(y + i);
      _mm256_storeu_pd(y + i, _mm256_add_pd(acc, _mm256_mul_pd(xj, _mm256_loadu_pd(row + i))));
    }
    for (; i < out; ++i) y[i] += x[j] * row[i];
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{"avx2", &static_cost_avx2, &affine_avx2};
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &table : nullptr;
}

}  // namespace ttcshield::kernels
