#include <cstdlib>
#include <string_view>

#include "ttcshield/kernels.hpp"

namespace ttcshield::kernels {

#if !defined(TTCSHIELD_HAVE_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif

#if !defined(TTCSHIELD_HAVE_NEON)
const KernelTable* neon_table() { return nullptr; }
#endif

namespace {

const KernelTable& select() {
  const KernelTable* best = avx2_table();
  if (best == nullptr) best = neon_table();
  if (best == nullptr) best = &scalar_table();

  const char* forced = std::getenv("TTCSHIELD_KERNELS");
  if (forced == nullptr) return *best;
  const std::string_view choice(forced);
  if (choice == "scalar") return scalar_table();
  if (choice == "avx2" && avx2_table() != nullptr) return *avx2_table();
  if (choice == "neon" && neon_table() != nullptr) return *neon_table();
  return *best;
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

}  // namespace ttcshield::kernels
