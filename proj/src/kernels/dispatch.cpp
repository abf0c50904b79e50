#include <atomic>
#include <cstdlib>
#include <string>

#include "mmf/error.hpp"
#include "mmf/kernels.hpp"

namespace mmf::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(MMF_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable& resolve_auto() {
  if (const char* env = std::getenv("MMF_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return scalar_table();
    if (want == "avx2") return table(Backend::Avx2);
    if (!want.empty() && want != "auto") throw Error("MMF_KERNELS: unknown backend '" + want + "'");
  }
  return cpu_has_avx2() ? table(Backend::Avx2) : scalar_table();
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

const KernelTable& table(Backend backend) {
  switch (backend) {
    case Backend::Auto:
      return resolve_auto();
    case Backend::Scalar:
      return scalar_table();
    case Backend::Avx2:
#if defined(MMF_HAVE_AVX2)
      if (cpu_has_avx2()) return avx2_table();
#endif
      throw Error("avx2 kernels are not available on this build or CPU");
  }
  return scalar_table();
}

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (t == nullptr) {
    t = &resolve_auto();
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

void select(Backend backend) { g_active.store(&table(backend), std::memory_order_release); }

std::vector<Backend> available() {
  std::vector<Backend> out{Backend::Scalar};
  if (cpu_has_avx2()) out.push_back(Backend::Avx2);
  return out;
}

}  // namespace mmf::kernels
