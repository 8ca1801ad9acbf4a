#include "ttcshield/kernels.hpp"

namespace ttcshield::kernels {
namespace {

StaticCostSum static_cost_scalar(const double* xs, const double* ys, std::size_t count,
                                 const EgoMotion& ego, const StaticTtcParams& params) {
  StaticCostSum sum;
  for (std::size_t i = 0; i < count; ++i) {
    bool overlap = false;
    const double ttc =
        static_ttc(xs[i], ys[i], ego, params.safety_distance, params.ttc_floor, overlap);
    const double term = ttc <= params.t_safe ? 1.0 / ttc : 0.0;
    sum.inverse_ttc += term;
    sum.overlaps += overlap ? 1 : 0;
  }
  return sum;
}

void affine_scalar(const double* x, std::size_t in, const double* weights, const double* bias,
                   std::size_t out, double* y) {
  for (std::size_t i = 0; i < out; ++i) y[i] = bias[i];
  for (std::size_t j = 0; j < in; ++j) {
    const double xj = x[j];
    const double* row = weights + j * out;
    for (std::size_t i = 0; i < out; ++i) y[i] += xj * row[i];
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", &static_cost_scalar, &affine_scalar};
  return table;
}

}  // namespace ttcshield::kernels
